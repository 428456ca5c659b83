#include "gridfill/evalkit.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gridfill/errors.hpp"

namespace gridfill {

BinaryMask binarize(const Image &img) {
    BinaryMask m;
    m.h = img.height();
    m.w = img.width();
    m.fg.resize(static_cast<size_t>(m.h) * m.w);
    for (int y = 0; y < m.h; y++)
        for (int x = 0; x < m.w; x++)
            m.fg[static_cast<size_t>(y) * m.w + x] = luminance(img, y, x) >= 0.5f;
    return m;
}

double miou(const std::vector<BinaryMask> &preds, const std::vector<BinaryMask> &gts) {
    if (preds.size() != gts.size())
        throw dimension_error("miou: " + std::to_string(preds.size()) + " predictions vs " +
                              std::to_string(gts.size()) + " ground truths");
    if (preds.empty()) throw dimension_error("miou: empty query list");
    double total = 0.0;
    for (size_t q = 0; q < preds.size(); q++) {
        const BinaryMask &p = preds[q], &g = gts[q];
        if (p.h != g.h || p.w != g.w)
            throw dimension_error("miou: mask " + std::to_string(p.h) + "x" + std::to_string(p.w) +
                                  " vs " + std::to_string(g.h) + "x" + std::to_string(g.w));
        long long inter = 0, uni = 0;
        for (size_t i = 0; i < p.fg.size(); i++) {
            const bool a = p.fg[i], b = g.fg[i];
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
        }
        total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return total / static_cast<double>(preds.size());
}

double mse(const Image &pred, const Image &gt) {
    if (!pred.same_shape(gt))
        throw dimension_error("mse: " + std::to_string(pred.height()) + "x" +
                              std::to_string(pred.width()) + " vs " + std::to_string(gt.height()) +
                              "x" + std::to_string(gt.width()));
    double acc = 0.0;
    for (size_t i = 0; i < pred.data().size(); i++) {
        const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(gt.data()[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.data().size());
}

const char *visual_strategy_name(VisualStrategy v) {
    switch (v) {
        case VisualStrategy::none: return "none";
        case VisualStrategy::random_different_class: return "random_different_class";
        case VisualStrategy::random_same_class: return "random_same_class";
        case VisualStrategy::nearest_neighbor: return "nearest_neighbor";
    }
    return "?";
}

const char *text_level_name(TextLevel t) {
    switch (t) {
        case TextLevel::none: return "none";
        case TextLevel::task: return "task";
        case TextLevel::task_location: return "task_location";
        case TextLevel::task_location_class: return "task_location_class";
    }
    return "?";
}

TaskDescriptor descriptor_for(Task task, TextLevel level, const std::string &class_name) {
    TaskDescriptor d;
    if (level == TextLevel::none) return d;
    d.task = task_name(task);
    if (level == TextLevel::task) return d;
    d.location = "left/right";
    if (level == TextLevel::task_location_class) d.class_name = class_name;
    return d;
}

PromptBundle build_eval_bundle(const TaskSample &query, VisualStrategy visual, TextLevel text,
                               const std::vector<TaskSample> &pool, const TextEncoder &enc,
                               Rng &rng) {
    ExampleSet s;
    s.query = query.input;
    if (visual != VisualStrategy::none) {
        Retrieval strategy;
        switch (visual) {
            case VisualStrategy::random_different_class:
                strategy = Retrieval::random_different_class;
                break;
            case VisualStrategy::random_same_class:
                strategy = Retrieval::random_same_class;
                break;
            default:
                strategy = Retrieval::nearest_neighbor;
                break;
        }
        const TaskSample &ex = retrieve_example(pool, query, strategy, rng);
        s.pairs.emplace_back(ex.input, ex.output);
    }
    PromptBundle bundle = arrange_grid(s);
    attach_text(bundle, render_text(descriptor_for(query.task, text, query.class_name)), enc);
    return bundle;
}

double bundle_token_accuracy(const Model &model, const PromptBundle &bundle, const Image &gt_output) {
    NoGradGuard ng;
    Tensor logits = model.forward(bundle.x_vp, bundle.mask, bundle.text);
    const std::vector<int> preds = predict_tokens(logits);

    Image truth = bundle.x_vp;
    paste(truth, resample(gt_output, bundle.answer_h, bundle.answer_w), bundle.answer_y0,
          bundle.answer_x0);
    TokenGrid gt_tokens = model.codebook().encode_image(truth);

    size_t k = 0;
    long long correct = 0, total = 0;
    for (size_t i = 0; i < bundle.mask.size(); i++) {
        if (!bundle.mask[i]) continue;
        if (preds[k++] == gt_tokens.tokens[i]) correct++;
        total++;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

bool mask_like(Task t) {
    return t == Task::segmentation || t == Task::outline || t == Task::threshold;
}

// eval queries live in a seed range far above training indices
TaskSample eval_query(Task task, uint64_t seed, int index) {
    const uint64_t sample_seed = kEvalSeedBase + 0x4000000000ull + seed * 0x100000ull +
                                 static_cast<uint64_t>(index);
    Rng rng = Rng::fork(sample_seed, 0x9e1);
    const int color = static_cast<int>(rng.uniform_int(kNumShapeColors));
    const int shape = static_cast<int>(rng.uniform_int(kNumShapeKinds));
    return gen_task_pair(task, color, shape, rng, sample_seed);
}

}  // namespace

double score_answer_cell(const Image &inpainted, const PromptBundle &bundle, const TaskSample &query) {
    Image cell = crop(inpainted, bundle.answer_y0, bundle.answer_x0, bundle.answer_h, bundle.answer_w);
    Image gt = resample(query.output, bundle.answer_h, bundle.answer_w);
    if (mask_like(query.task)) return miou({binarize(cell)}, {binarize(gt)});
    return mse(cell, gt);
}

CellResult eval_cell(const Model &model, VisualStrategy visual, TextLevel text,
                     const EvalOptions &opts) {
    CellResult out;
    out.visual = visual;
    out.text = text;
    out.metric = mask_like(opts.task) ? "miou" : "mse";
    for (uint64_t seed : opts.seeds) {
        auto pool = make_eval_pool(opts.task, opts.pool_size, seed);
        Rng rng = Rng::fork(seed, 0xab1a);
        std::vector<BinaryMask> preds, gts;
        double mse_acc = 0.0;
        for (int q = 0; q < opts.queries_per_seed; q++) {
            TaskSample query = eval_query(opts.task, seed, q);
            PromptBundle bundle = build_eval_bundle(query, visual, text, pool, model.text(), rng);
            Image out_img = inpaint(model, bundle);
            Image cell = crop(out_img, bundle.answer_y0, bundle.answer_x0, bundle.answer_h,
                              bundle.answer_w);
            Image gt = resample(query.output, bundle.answer_h, bundle.answer_w);
            if (mask_like(opts.task)) {
                preds.push_back(binarize(cell));
                gts.push_back(binarize(gt));
            } else {
                mse_acc += mse(cell, gt);
            }
        }
        out.per_seed.push_back(mask_like(opts.task) ? miou(preds, gts)
                                                    : mse_acc / opts.queries_per_seed);
        out.n += opts.queries_per_seed;
    }
    double mean = 0.0;
    for (double v : out.per_seed) mean += v;
    mean /= static_cast<double>(out.per_seed.size());
    double var = 0.0;
    for (double v : out.per_seed) var += (v - mean) * (v - mean);
    out.mean = mean;
    out.stddev = std::sqrt(var / static_cast<double>(out.per_seed.size()));
    return out;
}

std::vector<std::string> monotonicity_audit(const std::vector<CellResult> &cells) {
    const VisualStrategy order[] = {VisualStrategy::none, VisualStrategy::random_different_class,
                                    VisualStrategy::random_same_class,
                                    VisualStrategy::nearest_neighbor};
    std::vector<std::string> flags;
    for (TextLevel t : {TextLevel::none, TextLevel::task, TextLevel::task_location,
                        TextLevel::task_location_class}) {
        std::vector<const CellResult *> col;
        for (VisualStrategy v : order)
            for (const auto &c : cells)
                if (c.visual == v && c.text == t) col.push_back(&c);
        for (size_t i = 1; i < col.size(); i++) {
            const bool higher_better = col[i]->metric == "miou";
            const double prev = col[i - 1]->mean, cur = col[i]->mean;
            if (higher_better ? cur < prev : cur > prev) {
                flags.push_back(std::string(text_level_name(t)) + ": " +
                                visual_strategy_name(col[i]->visual) + " " + std::to_string(cur) +
                                " regresses from " + visual_strategy_name(col[i - 1]->visual) + " " +
                                std::to_string(prev));
            }
        }
    }
    return flags;
}

std::vector<CellResult> run_ablation(const Model &model, const EvalOptions &opts,
                                     const std::string &out_dir) {
    const VisualStrategy visuals[] = {VisualStrategy::none, VisualStrategy::random_different_class,
                                      VisualStrategy::random_same_class,
                                      VisualStrategy::nearest_neighbor};
    const TextLevel texts[] = {TextLevel::none, TextLevel::task_location,
                               TextLevel::task_location_class};

    std::vector<CellResult> cells;
    nlohmann::json jsonl = nlohmann::json::array();
    for (VisualStrategy v : visuals)
        for (TextLevel t : texts) {
            if (v == VisualStrategy::none && t == TextLevel::none) continue;  // undefined cell
            cells.push_back(eval_cell(model, v, t, opts));
            const CellResult &c = cells.back();
            for (size_t si = 0; si < c.per_seed.size(); si++) {
                nlohmann::json row;
                row["visual"] = visual_strategy_name(v);
                row["text_level"] = text_level_name(t);
                row["seed"] = opts.seeds[si];
                row["metric"] = c.metric;
                row["value"] = c.per_seed[si];
                row["n_queries"] = opts.queries_per_seed;
                jsonl.push_back(row);
            }
        }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream csv(out_dir + "/ablation.csv");
        if (!csv) throw io_error("cannot open for writing: " + out_dir + "/ablation.csv");
        csv << "visual_strategy,text_level,metric,mean,std,n\n";
        for (const auto &c : cells)
            csv << visual_strategy_name(c.visual) << "," << text_level_name(c.text) << "," << c.metric
                << "," << c.mean << "," << c.stddev << "," << c.n << "\n";

        std::ofstream jf(out_dir + "/queries.jsonl");
        for (const auto &row : jsonl) jf << row.dump() << "\n";

        std::ofstream audit(out_dir + "/audit.txt");
        auto flags = monotonicity_audit(cells);
        if (flags.empty())
            audit << "monotone in visual prompt quality for every text level\n";
        else
            for (const auto &f : flags) audit << f << "\n";

        // one example inpainting per cell, visual strategies as rows
        std::vector<Image> tiles;
        Rng rng = Rng::fork(opts.seeds.empty() ? 1 : opts.seeds[0], 0xf16);
        auto pool = make_eval_pool(opts.task, opts.pool_size, opts.seeds.empty() ? 1 : opts.seeds[0]);
        for (VisualStrategy v : visuals)
            for (TextLevel t : texts) {
                if (v == VisualStrategy::none && t == TextLevel::none) {
                    tiles.emplace_back();
                    continue;
                }
                TaskSample query = eval_query(opts.task, opts.seeds.empty() ? 1 : opts.seeds[0], 0);
                PromptBundle bundle = build_eval_bundle(query, v, t, pool, model.text(), rng);
                tiles.push_back(inpaint(model, bundle));
            }
        const int side = model.config().image_side;
        write_ppm(compose_cells(tiles, 4, 3, side, side), out_dir + "/figure.ppm");
    }
    return cells;
}

std::pair<double, double> zero_shot_disambiguation(const Model &model, int queries_per_task,
                                                   const std::vector<uint64_t> &seeds) {
    const std::vector<TaskSample> no_pool;
    double with_text = 0.0, without_text = 0.0;
    long long n = 0;
    for (uint64_t seed : seeds) {
        Rng rng = Rng::fork(seed, 0x25d);
        for (Task task : {Task::inversion, Task::outline}) {
            for (int q = 0; q < queries_per_task; q++) {
                TaskSample query = eval_query(task, seed, q);
                PromptBundle bundle =
                    build_eval_bundle(query, VisualStrategy::none, TextLevel::task, no_pool,
                                      model.text(), rng);
                with_text += bundle_token_accuracy(model, bundle, query.output);
                attach_text(bundle, "", model.text());
                without_text += bundle_token_accuracy(model, bundle, query.output);
                n++;
            }
        }
    }
    return {with_text / static_cast<double>(n), without_text / static_cast<double>(n)};
}

double grid_layout_miou(const Model &model, int rows, int cols, int n_examples, int queries,
                        uint64_t seed) {
    std::vector<BinaryMask> preds, gts;
    for (int q = 0; q < queries; q++) {
        TaskSample query = eval_query(Task::segmentation, seed, q);
        Rng rng = Rng::fork(kEvalSeedBase + seed * 0x200000ull + static_cast<uint64_t>(q), 0x6a1d);
        ExampleSet s;
        s.query = query.input;
        for (int i = 0; i < n_examples; i++) {
            TaskSample ex = gen_task_pair(Task::segmentation, query.color_idx, query.shape_idx, rng);
            s.pairs.emplace_back(ex.input, ex.output);
        }
        PromptBundle bundle = arrange_grid_layout(s, rows, cols);
        attach_text(bundle,
                    render_text(descriptor_for(Task::segmentation, TextLevel::task_location,
                                               query.class_name)),
                    model.text());
        Image out = inpaint(model, bundle);
        Image cell = crop(out, bundle.answer_y0, bundle.answer_x0, bundle.answer_h, bundle.answer_w);
        preds.push_back(binarize(cell));
        gts.push_back(binarize(resample(query.output, bundle.answer_h, bundle.answer_w)));
    }
    return miou(preds, gts);
}

double heldout_token_accuracy(const Model &model, Task task, int queries, uint64_t seed) {
    auto pool = make_eval_pool(task, 64, seed);
    Rng rng = Rng::fork(seed, 0x77a);
    double acc = 0.0;
    for (int q = 0; q < queries; q++) {
        TaskSample query = eval_query(task, seed, q);
        PromptBundle bundle = build_eval_bundle(query, VisualStrategy::random_same_class,
                                                TextLevel::task_location_class, pool, model.text(),
                                                rng);
        acc += bundle_token_accuracy(model, bundle, query.output);
    }
    return acc / queries;
}

double heldout_miou(const Model &model, Task task, int queries, uint64_t seed) {
    auto pool = make_eval_pool(task, 64, seed);
    Rng rng = Rng::fork(seed, 0x77b);
    std::vector<BinaryMask> preds, gts;
    for (int q = 0; q < queries; q++) {
        TaskSample query = eval_query(task, seed, q);
        PromptBundle bundle = build_eval_bundle(query, VisualStrategy::random_same_class,
                                                TextLevel::task_location_class, pool, model.text(),
                                                rng);
        Image out = inpaint(model, bundle);
        Image cell = crop(out, bundle.answer_y0, bundle.answer_x0, bundle.answer_h, bundle.answer_w);
        preds.push_back(binarize(cell));
        gts.push_back(binarize(resample(query.output, bundle.answer_h, bundle.answer_w)));
    }
    return miou(preds, gts);
}

}  // namespace gridfill
