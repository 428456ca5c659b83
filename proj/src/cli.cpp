#include "gridfill/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>

#include "gridfill/checkpoint.hpp"
#include "gridfill/errors.hpp"
#include "gridfill/evalkit.hpp"
#include "gridfill/gradcheck.hpp"
#include "gridfill/prompting.hpp"
#include "gridfill/runconfig.hpp"

namespace gridfill {

namespace {

int run_guarded(const std::function<int()> &fn) {
    try {
        return fn();
    } catch (const config_error &e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const io_error &e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const ingestion_error &e) {
        std::fprintf(stderr, "ingestion error: %s\n", e.what());
        return kExitIo;
    } catch (const data_error &e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

Model load_model(const std::string &checkpoint_path) {
    return Checkpoint::load(checkpoint_path).restore_model();
}

bool parse_visual(const std::string &name, VisualStrategy &out) {
    for (VisualStrategy v : {VisualStrategy::none, VisualStrategy::random_different_class,
                             VisualStrategy::random_same_class, VisualStrategy::nearest_neighbor})
        if (name == visual_strategy_name(v)) {
            out = v;
            return true;
        }
    return false;
}

bool parse_text_level(const std::string &name, TextLevel &out) {
    for (TextLevel t : {TextLevel::none, TextLevel::task, TextLevel::task_location,
                        TextLevel::task_location_class})
        if (name == text_level_name(t)) {
            out = t;
            return true;
        }
    return false;
}

}  // namespace

uint64_t effective_seed(bool flag_set, uint64_t flag_value, bool config_set, uint64_t config_value,
                        uint64_t fallback) {
    if (flag_set) return flag_value;
    if (config_set) return config_value;
    if (const char *env = std::getenv("IMPROV_SEED")) return std::strtoull(env, nullptr, 10);
    return fallback;
}

int cmd_train(const std::string &config_path, const std::string &resume_checkpoint, bool seed_set,
              uint64_t seed) {
    return run_guarded([&]() {
        RunConfig cfg = RunConfig::from_file(config_path);
        cfg.train.seed = effective_seed(seed_set, seed, cfg.seed_explicit, cfg.train.seed,
                                        cfg.train.seed);
        cfg.train.validate();
        cfg.model.validate();

        std::filesystem::create_directories(cfg.out_dir);
        {
            std::ofstream echo(cfg.out_dir + "/config.effective");
            if (!echo) throw io_error("cannot open for writing: " + cfg.out_dir + "/config.effective");
            echo << cfg.to_text();
        }

        Corpus corpus = cfg.corpus_dir.empty()
                            ? Corpus::synthetic({cfg.train.seed, cfg.corpus_size, cfg.corpus_mode})
                            : Corpus::from_manifest(cfg.corpus_dir);

        if (!resume_checkpoint.empty()) {
            Checkpoint ckpt = Checkpoint::load(resume_checkpoint);
            Model model(ckpt.model_cfg, 0);
            Trainer trainer(model, ckpt.train_cfg, corpus);
            Rng rng;
            ckpt.apply(model, &trainer.optimizer(), &rng);
            trainer.restore(static_cast<int>(ckpt.step), rng, ckpt.adam_t);
            trainer.run(cfg.out_dir);
            std::printf("resumed at step %llu, finished %d steps\n",
                        static_cast<unsigned long long>(ckpt.step), trainer.current_step());
            return kExitOk;
        }

        Model model(cfg.model, cfg.train.seed);
        Trainer trainer(model, cfg.train, corpus);
        trainer.run(cfg.out_dir);
        std::printf("finished %d steps, final loss %.4f\n", trainer.current_step(),
                    trainer.stats().last_loss);
        return kExitOk;
    });
}

int cmd_infer(const std::string &checkpoint, const std::string &examples_dir,
              const std::string &query_path, const std::string &text, const std::string &out_dir) {
    return run_guarded([&]() {
        Model model = load_model(checkpoint);
        ExampleSet s;
        if (!examples_dir.empty()) {
            for (int i = 0;; i++) {
                std::string base = examples_dir + "/" + std::to_string(i);
                std::string in_path, out_path;
                for (const char *ext : {".ppm", ".png"}) {
                    if (std::filesystem::exists(base + "_input" + ext)) in_path = base + "_input" + ext;
                    if (std::filesystem::exists(base + "_output" + ext))
                        out_path = base + "_output" + ext;
                }
                if (in_path.empty() || out_path.empty()) break;
                s.pairs.emplace_back(read_image(in_path), read_image(out_path));
            }
        }
        s.query = read_image(query_path);
        PromptBundle bundle = arrange_grid(s, model.config().image_side, model.config().patch_side);
        attach_text(bundle, text, model.text());

        Image full = inpaint(model, bundle);
        Image answer = crop(full, bundle.answer_y0, bundle.answer_x0, bundle.answer_h,
                            bundle.answer_w);
        std::filesystem::create_directories(out_dir);
        write_ppm(full, out_dir + "/full.ppm");
        write_ppm(answer, out_dir + "/answer.ppm");
        std::printf("wrote %s/full.ppm and %s/answer.ppm (%d examples)\n", out_dir.c_str(),
                    out_dir.c_str(), static_cast<int>(s.pairs.size()));
        return kExitOk;
    });
}

int cmd_eval(const std::string &checkpoint, const std::string &task_name_s,
             const std::string &visual, const std::string &text_level, int queries,
             const std::vector<uint64_t> &seeds, bool zero_shot) {
    return run_guarded([&]() {
        Model model = load_model(checkpoint);
        if (zero_shot) {
            auto [with_text, without_text] = zero_shot_disambiguation(model, queries, seeds);
            std::printf("zero_shot with_text=%.4f without_text=%.4f margin=%.4f\n", with_text,
                        without_text, with_text - without_text);
            return kExitOk;
        }
        EvalOptions opts;
        if (!parse_task(task_name_s, opts.task)) throw config_error("unknown task: " + task_name_s);
        opts.queries_per_seed = queries;
        opts.seeds = seeds;
        VisualStrategy v;
        TextLevel t;
        if (!parse_visual(visual, v)) throw config_error("unknown visual strategy: " + visual);
        if (!parse_text_level(text_level, t)) throw config_error("unknown text level: " + text_level);
        CellResult r = eval_cell(model, v, t, opts);
        std::printf("%s %s/%s %s mean=%.4f std=%.4f n=%d\n", task_name_s.c_str(),
                    visual_strategy_name(v), text_level_name(t), r.metric.c_str(), r.mean, r.stddev,
                    r.n);
        return kExitOk;
    });
}

int cmd_ablate(const std::string &checkpoint, const std::string &out_dir, const std::string &task_s,
               int queries, const std::vector<uint64_t> &seeds) {
    return run_guarded([&]() {
        Model model = load_model(checkpoint);
        EvalOptions opts;
        if (!parse_task(task_s, opts.task)) throw config_error("unknown task: " + task_s);
        opts.queries_per_seed = queries;
        opts.seeds = seeds;
        auto cells = run_ablation(model, opts, out_dir);
        for (const auto &c : cells)
            std::printf("%-24s %-20s %s mean=%.4f std=%.4f\n", visual_strategy_name(c.visual),
                        text_level_name(c.text), c.metric.c_str(), c.mean, c.stddev);
        std::printf("wrote %s/ablation.csv\n", out_dir.c_str());
        return kExitOk;
    });
}

int cmd_gradcheck(int n_seeds) {
    return run_guarded([&]() {
        auto checks = run_gradcheck_suite(n_seeds);
        bool ok = true;
        for (const auto &c : checks) {
            std::printf("%-22s max_rel_err=%.3e tol=%.0e %s\n", c.name.c_str(), c.max_rel_err,
                        c.tolerance, c.pass ? "ok" : "FAIL");
            ok = ok && c.pass;
        }
        return ok ? kExitOk : kExitNumeric;
    });
}

int cmd_gridgen(const std::string &out_dir, int n, uint64_t seed, const std::string &mode) {
    return run_guarded([&]() {
        CorpusSpec spec;
        spec.seed = seed;
        spec.size = n;
        if (!parse_corpus_mode(mode, spec.mode)) throw config_error("unknown corpus mode: " + mode);
        export_corpus(spec, out_dir);
        std::printf("wrote %d records to %s\n", n, out_dir.c_str());
        return kExitOk;
    });
}

int cmd_vocab(const std::string &out_path) {
    return run_guarded([&]() {
        TextEncoder enc;
        enc.vocab().dump(out_path);
        std::printf("wrote %d words to %s\n", enc.vocab().size(), out_path.c_str());
        return kExitOk;
    });
}

}  // namespace gridfill
