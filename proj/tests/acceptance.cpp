// Acceptance suite: one pass/fail line per criterion. Trains the three
// models it needs (mixed, structured-only, mixed+structured) unless
// GRIDFILL_ACCEPT_CACHE points at a directory with reusable checkpoints.
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "gridfill/checkpoint.hpp"
#include "gridfill/evalkit.hpp"
#include "gridfill/gradcheck.hpp"
#include "gridfill/prompting.hpp"
#include "gridfill/trainer.hpp"

using namespace gridfill;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string &what, const std::string &detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) g_failures++;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char *f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

struct TrainedModel {
    Model model;
    TrainStats stats;
    double wall_seconds = 0.0;
};

// Trains (or restores from the cache) one 5000-step model on the given
// corpus mode. Stats are only populated for fresh runs.
TrainedModel train_model(CorpusMode mode, const std::string &tag) {
    const char *cache = std::getenv("GRIDFILL_ACCEPT_CACHE");
    const std::string dir =
        (cache ? std::string(cache) : std::string("acceptance_runs")) + "/" + tag;
    const std::string ckpt_path = dir + "/ckpt_final.bin";

    TrainConfig tc;  // spec defaults: 5000 steps, batch 32, lr 2e-4
    tc.seed = 1;
    if (cache && std::filesystem::exists(ckpt_path)) {
        std::printf("  [cache] %s\n", ckpt_path.c_str());
        return {Checkpoint::load(ckpt_path).restore_model(), TrainStats{}, 0.0};
    }
    ModelConfig mc;
    Model model(mc, tc.seed);
    Corpus corpus = Corpus::synthetic({tc.seed, 4096, mode});
    Trainer trainer(model, tc, corpus);
    auto t0 = Clock::now();
    trainer.run(dir);
    double wall = seconds_since(t0);
    std::printf("  [train] %s: %.1f min, final loss %.3f\n", tag.c_str(), wall / 60.0,
                trainer.stats().last_loss);
    std::fflush(stdout);
    return {std::move(model), trainer.stats(), wall};
}

double mean(const std::vector<double> &v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

int main() {
    const std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

    // ---- criterion 1: finite-difference gradient suite ----
    {
        auto t0 = Clock::now();
        auto checks = run_gradcheck_suite(10);
        const double wall = seconds_since(t0);
        bool ok = gradcheck_ok(checks);
        double worst = 0;
        std::string worst_name;
        for (const auto &c : checks)
            if (c.max_rel_err > worst) {
                worst = c.max_rel_err;
                worst_name = c.name;
            }
        report(1, ok && wall < 120.0, "gradient suite, 10 seeds per op, h=1e-3, 64-bit",
               fmt("worst %s rel err %.2e, %.1f s", worst_name.c_str(), worst, wall));
    }

    // ---- criterion 9 first: metric oracles need no model ----
    {
        Rng rng(99);
        bool ok = true;
        for (int trial = 0; trial < 100 && ok; trial++) {
            const int h = 4 + static_cast<int>(rng.uniform_int(10));
            const int w = 4 + static_cast<int>(rng.uniform_int(10));
            BinaryMask p, g;
            p.h = g.h = h;
            p.w = g.w = w;
            for (int i = 0; i < h * w; i++) {
                p.fg.push_back(rng.bernoulli(0.35));
                g.fg.push_back(rng.bernoulli(0.35));
            }
            long long inter = 0, uni = 0;
            for (int i = 0; i < h * w; i++) {
                inter += (p.fg[static_cast<size_t>(i)] && g.fg[static_cast<size_t>(i)]) ? 1 : 0;
                uni += (p.fg[static_cast<size_t>(i)] || g.fg[static_cast<size_t>(i)]) ? 1 : 0;
            }
            const double want = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
            ok = ok && miou({p}, {g}) == want;

            Image a(h, w), b(h, w);
            for (auto &v : a.data()) v = static_cast<float>(rng.uniform());
            for (auto &v : b.data()) v = static_cast<float>(rng.uniform());
            double acc = 0;
            for (size_t i = 0; i < a.data().size(); i++) {
                const double d = static_cast<double>(a.data()[i]) - b.data()[i];
                acc += d * d;
            }
            ok = ok && mse(a, b) == acc / static_cast<double>(a.data().size());
        }
        report(9, ok, "miou/mse equal brute-force pixel recomputation on 100 random pairs",
               ok ? "exact" : "mismatch");
    }

    // ---- criterion 2: structural invariants ----
    {
        bool rows_ok = true;
        {
            Model m(ModelConfig{}, 5);
            Image img(64, 64);
            Rng rng(7);
            for (auto &v : img.data()) v = static_cast<float>(rng.uniform());
            std::vector<bool> mask(64, false);
            for (int i = 0; i < 48; i++) mask[static_cast<size_t>(i)] = true;
            AttnTrace trace;
            NoGradGuard ng;
            m.forward(img, mask, m.text().tokenize("black and white segmentation of a red circle"),
                      &trace);
            for (const auto &mat : trace.mats)
                for (int i = 0; i < mat.rows; i++) {
                    double sum = 0;
                    for (int j = 0; j < mat.cols; j++)
                        sum += mat.probs[static_cast<size_t>(i) * mat.cols + j];
                    rows_ok = rows_ok && std::abs(sum - 1.0) < 1e-5;
                }
        }

        bool empty_text_ok = true;
        {
            ModelConfig on, off;
            off.cross_attn = CrossAttn::off;
            Model m_on(on, 42), m_off(off, 42);
            Image img(64, 64);
            Rng rng(11);
            for (auto &v : img.data()) v = static_cast<float>(rng.uniform());
            std::vector<bool> mask(64, false);
            for (int i = 0; i < 48; i++) mask[static_cast<size_t>(2 * i % 64 + (i >= 32))] = true;
            NoGradGuard ng;
            auto a = m_on.forward(img, mask, TextPrompt{}).to_vector();
            auto b = m_off.forward(img, mask, TextPrompt{}).to_vector();
            empty_text_ok = a == b;
        }

        bool codebook_ok = true;
        {
            Codebook cb;
            TokenGrid grid(1, 216);
            for (int t = 0; t < 216; t++) grid.token(0, t) = t;
            TokenGrid back = cb.encode_image(cb.decode_tokens(grid));
            codebook_ok = back.tokens == grid.tokens;
        }

        bool ckpt_ok = true;
        {
            Model m(ModelConfig{}, 17);
            TrainConfig tc;
            const std::string path =
                (std::filesystem::temp_directory_path() / "accept_ckpt_rt.bin").string();
            Checkpoint::capture(m, tc, 123).save(path);
            Model restored = Checkpoint::load(path).restore_model();
            Rng rng(19);
            NoGradGuard ng;
            for (int trial = 0; trial < 10 && ckpt_ok; trial++) {
                Image img(64, 64);
                for (auto &v : img.data()) v = static_cast<float>(rng.uniform());
                std::vector<bool> mask = sample_mask(64, 0.75, rng);
                TextPrompt p = m.text().tokenize(trial % 2 ? "a red circle" : "");
                ckpt_ok = m.forward(img, mask, p).to_vector() ==
                          restored.forward(img, mask, p).to_vector();
            }
        }

        report(2, rows_ok && empty_text_ok && codebook_ok && ckpt_ok,
               "attention rows sum to 1; empty-text == cross-disabled; codebook identity; "
               "checkpoint round trip",
               fmt("rows %d, empty-text %d, codebook %d, checkpoint %d", rows_ok, empty_text_ok,
                   codebook_ok, ckpt_ok));
    }

    // ---- criterion 3: training sanity on the mixed model ----
    TrainedModel mixed = train_model(CorpusMode::mixed, "mixed");
    {
        bool mask_exact = true, drop_ok = true;
        std::string stats_note = "cached run: stats from a fresh 10k-record probe";
        if (mixed.stats.records_seen > 0) {
            mask_exact = mixed.stats.mask_count_min == 48 && mixed.stats.mask_count_max == 48;
            const double rate = static_cast<double>(mixed.stats.empty_text_records) /
                                static_cast<double>(mixed.stats.records_seen);
            drop_ok = std::abs(rate - 0.10) < 0.01;
            stats_note = fmt("masked [%lld,%lld], text-drop %.4f over %lld records",
                             mixed.stats.mask_count_min, mixed.stats.mask_count_max, rate,
                             mixed.stats.records_seen);
        } else {
            ModelConfig mc;
            mc.d_model = 16;
            mc.n_heads = 2;
            mc.enc_depth = 1;
            mc.dec_depth = 1;
            Model probe(mc, 3);
            TrainConfig tc;
            tc.total_steps = 20000;
            tc.batch = 1;
            tc.threads = 1;
            Corpus corpus = Corpus::synthetic({3, 64, CorpusMode::mixed});
            Trainer trainer(probe, tc, corpus);
            for (int i = 0; i < 10000; i++) trainer.step();
            mask_exact = trainer.stats().mask_count_min == 48 && trainer.stats().mask_count_max == 48;
            const double rate = static_cast<double>(trainer.stats().empty_text_records) / 10000.0;
            drop_ok = std::abs(rate - 0.10) < 0.01;
            stats_note = fmt("probe: text-drop %.4f over 10000 records", rate);
        }

        bool overfit_ok = false;
        double overfit_loss = 1e9;
        {
            Model m(ModelConfig{}, 9);
            TrainConfig tc;
            tc.batch = 1;
            tc.total_steps = 600;
            tc.warmup_steps = 50;
            tc.lr_peak = 1e-3;
            tc.threads = 1;
            Corpus corpus = Corpus::synthetic({9, 16, CorpusMode::mixed});
            Trainer trainer(m, tc, corpus);
            TrainRecord rec = corpus.record(4);
            for (int i = 0; i < 500; i++) {
                overfit_loss = trainer.train_step(rec);
                if (overfit_loss < 0.05) break;
            }
            overfit_ok = overfit_loss < 0.05;
        }

        double heldout = 0.0;
        {
            std::vector<double> accs;
            for (uint64_t s : seeds) accs.push_back(heldout_token_accuracy(mixed.model,
                                                                           Task::segmentation, 40, s));
            heldout = mean(accs);
        }
        const bool time_ok = mixed.wall_seconds == 0.0 || mixed.wall_seconds < 15 * 60;
        report(3, mask_exact && drop_ok && overfit_ok && time_ok && heldout >= 0.90,
               "mask count exact, text-drop 0.10±0.01, overfit<0.05@500, train<15min, heldout "
               "acc>=0.90",
               fmt("%s; overfit %.3f; wall %.1f min; heldout token acc %.3f", stats_note.c_str(),
                   overfit_loss, mixed.wall_seconds / 60.0, heldout));
    }

    // ---- criterion 4: text helps under random-different-class prompts ----
    {
        EvalOptions opts;
        opts.queries_per_seed = 40;
        opts.seeds = seeds;
        CellResult with_text =
            eval_cell(mixed.model, VisualStrategy::random_different_class,
                      TextLevel::task_location_class, opts);
        CellResult no_text =
            eval_cell(mixed.model, VisualStrategy::random_different_class, TextLevel::none, opts);
        const double gain = with_text.mean - no_text.mean;
        report(4, gain >= 0.03, "full text improves random-different-class mIoU by >= +0.03",
               fmt("with %.4f vs without %.4f, gain %+.4f over %zu seeds", with_text.mean,
                   no_text.mean, gain, seeds.size()));
    }

    // ---- criterion 5: text compensates for weaker visual prompts ----
    {
        EvalOptions opts;
        opts.queries_per_seed = 40;
        opts.seeds = seeds;
        CellResult same_text = eval_cell(mixed.model, VisualStrategy::random_same_class,
                                         TextLevel::task_location, opts);
        CellResult nn_silent =
            eval_cell(mixed.model, VisualStrategy::nearest_neighbor, TextLevel::none, opts);
        report(5, same_text.mean >= nn_silent.mean - 0.02,
               "mIoU(same-class visual + text) >= mIoU(NN visual, no text) - 0.02",
               fmt("same+text %.4f vs nn+none %.4f", same_text.mean, nn_silent.mean));
    }

    // ---- criterion 6: zero-shot disambiguation ----
    {
        auto [with_text, without_text] = zero_shot_disambiguation(mixed.model, 20, seeds);
        const double margin = with_text - without_text;
        report(6, margin >= 0.20,
               "zero-example inversion/outline: correct text beats no text by >= 0.20",
               fmt("with %.4f vs without %.4f, margin %+.4f", with_text, without_text, margin));
    }

    // ---- criterion 7: grid-size directions ----
    {
        std::vector<double> g44_3, g44_1, g22_1;
        for (uint64_t s : seeds) {
            g44_3.push_back(grid_layout_miou(mixed.model, 4, 4, 3, 24, s));
            g44_1.push_back(grid_layout_miou(mixed.model, 4, 4, 1, 24, s));
            g22_1.push_back(grid_layout_miou(mixed.model, 2, 2, 1, 24, s));
        }
        const bool more_examples = mean(g44_3) > mean(g44_1);
        const bool smaller_hurts = mean(g22_1) > mean(g44_1);
        report(7, more_examples && smaller_hurts,
               "4x4: 3 examples beat 1; 2x2 with 1 example beats 4x4 with 1",
               fmt("4x4/3ex %.4f, 4x4/1ex %.4f, 2x2/1ex %.4f", mean(g44_3), mean(g44_1),
                   mean(g22_1)));
    }

    // ---- criterion 8: structured-data directions ----
    {
        TrainedModel structured_only = train_model(CorpusMode::structured_only, "structured_only");
        TrainedModel mixed_structured = train_model(CorpusMode::mixed_structured, "mixed_structured");

        std::vector<double> thr_struct, thr_mixed;
        for (uint64_t s : seeds) {
            thr_struct.push_back(heldout_miou(structured_only.model, Task::threshold, 24, s));
            thr_mixed.push_back(heldout_miou(mixed.model, Task::threshold, 24, s));
        }

        EvalOptions opts;
        opts.queries_per_seed = 16;
        opts.seeds = seeds;
        auto average_cells = [&](const Model &m) {
            auto cells = run_ablation(m, opts, "");
            double s = 0;
            for (const auto &c : cells) s += c.mean;
            return s / static_cast<double>(cells.size());
        };
        const double avg_mixed = average_cells(mixed.model);
        const double avg_plus = average_cells(mixed_structured.model);

        const bool heldout_dir = mean(thr_struct) < mean(thr_mixed);
        const bool indist_dir = avg_plus >= avg_mixed;
        report(8, heldout_dir && indist_dir,
               "structured-only worse on held-out threshold; mixed+structured >= mixed in "
               "distribution",
               fmt("threshold: struct %.4f vs mixed %.4f; ablation avg: +struct %.4f vs mixed %.4f",
                   mean(thr_struct), mean(thr_mixed), avg_plus, avg_mixed));
    }

    std::printf("%d of 9 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
