#include "gridfill/taskgen.hpp"

#include <algorithm>
#include <cmath>

#include "gridfill/errors.hpp"
#include "gridfill/prompting.hpp"

namespace gridfill {

namespace {

struct NamedColor {
    const char *name;
    float rgb[3];
};

// All lattice points of the 6-level codebook, so flat fills quantize exactly.
const NamedColor kColors[kNumShapeColors] = {
    {"red", {1.0f, 0.0f, 0.0f}},    {"green", {0.0f, 1.0f, 0.0f}},
    {"blue", {0.0f, 0.0f, 1.0f}},   {"yellow", {1.0f, 1.0f, 0.0f}},
    {"cyan", {0.0f, 1.0f, 1.0f}},   {"magenta", {1.0f, 0.0f, 1.0f}},
    {"orange", {1.0f, 0.6f, 0.2f}}, {"purple", {0.6f, 0.2f, 0.8f}},
};

const char *kShapes[kNumShapeKinds] = {"circle", "square", "triangle"};

}  // namespace

const char *color_name(int color_idx) { return kColors[color_idx].name; }
const char *shape_name(int shape_idx) { return kShapes[shape_idx]; }

std::array<float, 3> color_rgb(int color_idx) {
    const auto &c = kColors[color_idx];
    return {c.rgb[0], c.rgb[1], c.rgb[2]};
}

namespace {

// Small fixed background palette, dark three times as often as bright so
// brightness-rule tasks stay distinct from object-mask tasks.
const float kDarkBg[3][3] = {{0.10f, 0.10f, 0.15f}, {0.20f, 0.15f, 0.10f}, {0.10f, 0.20f, 0.15f}};
const float kBrightBg[1][3] = {{0.90f, 0.90f, 0.85f}};

}  // namespace

SceneSpec random_scene_spec(int size, int color_idx, int shape_idx, Rng &rng) {
    SceneSpec spec;
    spec.size = size;
    spec.color = color_idx;
    spec.shape = shape_idx;
    const double scale = size / 32.0;
    // coarse geometry lattice: positions and radii repeat across samples so
    // token-level shape patterns recur at desk scale
    static const double kRadii[] = {8.0, 11.0};
    static const double kCenters[] = {12.0, 20.0};
    spec.radius = kRadii[rng.uniform_int(2)] * scale;
    spec.cx = kCenters[rng.uniform_int(2)] * scale;
    spec.cy = kCenters[rng.uniform_int(2)] * scale;
    const float *bg = rng.bernoulli(0.75) ? kDarkBg[rng.uniform_int(3)] : kBrightBg[0];
    for (int c = 0; c < 3; c++) spec.background[static_cast<size_t>(c)] = bg[c];
    spec.noise_seed = rng.next_u64();
    return spec;
}

bool inside_shape(const SceneSpec &spec, double px, double py) {
    const double dx = px - spec.cx, dy = py - spec.cy, r = spec.radius;
    switch (spec.shape) {
        case 0:
            return dx * dx + dy * dy <= r * r;
        case 1: {
            const double h = r * 0.886;  // half-side matching the circle area
            return std::abs(dx) <= h && std::abs(dy) <= h;
        }
        default: {
            // up-pointing triangle inscribed in the radius-r circle
            const double x0 = spec.cx, y0 = spec.cy - r;
            const double x1 = spec.cx - r * 0.8660254037844386, y1 = spec.cy + r * 0.5;
            const double x2 = spec.cx + r * 0.8660254037844386, y2 = spec.cy + r * 0.5;
            auto side = [&](double ax, double ay, double bx, double by) {
                return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
            };
            const double s0 = side(x0, y0, x1, y1), s1 = side(x1, y1, x2, y2), s2 = side(x2, y2, x0, y0);
            return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
        }
    }
}

std::vector<bool> shape_mask(const SceneSpec &spec) {
    std::vector<bool> mask(static_cast<size_t>(spec.size) * spec.size, false);
    for (int y = 0; y < spec.size; y++)
        for (int x = 0; x < spec.size; x++)
            mask[static_cast<size_t>(y) * spec.size + x] = inside_shape(spec, x + 0.5, y + 0.5);
    return mask;
}

Image render_scene(const SceneSpec &spec) {
    Image img(spec.size, spec.size);
    auto mask = shape_mask(spec);
    auto rgb = color_rgb(spec.color);
    Rng noise(spec.noise_seed);
    for (int y = 0; y < spec.size; y++)
        for (int x = 0; x < spec.size; x++) {
            const float n = static_cast<float>((noise.uniform() - 0.5) * 0.04);
            if (mask[static_cast<size_t>(y) * spec.size + x]) {
                img.set_pixel(y, x, rgb[0], rgb[1], rgb[2]);
            } else {
                img.set_pixel(y, x, std::clamp(spec.background[0] + n * 0.75f, 0.0f, 1.0f),
                              std::clamp(spec.background[1] + n * 0.75f, 0.0f, 1.0f),
                              std::clamp(spec.background[2] + n * 0.75f, 0.0f, 1.0f));
            }
        }
    return img;
}

Image apply_task(Task task, const Image &scene, const std::vector<bool> &mask) {
    const int size = scene.height();
    Image out(size, size);
    switch (task) {
        case Task::segmentation:
            for (int y = 0; y < size; y++)
                for (int x = 0; x < size; x++) {
                    const float v = mask[static_cast<size_t>(y) * size + x] ? 1.0f : 0.0f;
                    out.set_pixel(y, x, v, v, v);
                }
            break;
        case Task::colorization:
            out = scene;
            break;
        case Task::inversion:
            for (int y = 0; y < size; y++)
                for (int x = 0; x < size; x++)
                    for (int c = 0; c < 3; c++) out.at(y, x, c) = 1.0f - scene.at(y, x, c);
            break;
        case Task::outline:
            for (int y = 0; y < size; y++)
                for (int x = 0; x < size; x++) {
                    bool in = mask[static_cast<size_t>(y) * size + x];
                    bool edge = false;
                    if (in) {
                        auto at = [&](int yy, int xx) {
                            return yy >= 0 && yy < size && xx >= 0 && xx < size &&
                                   mask[static_cast<size_t>(yy) * size + xx];
                        };
                        edge = !at(y - 1, x) || !at(y + 1, x) || !at(y, x - 1) || !at(y, x + 1);
                    }
                    const float v = edge ? 1.0f : 0.0f;
                    out.set_pixel(y, x, v, v, v);
                }
            break;
        case Task::identity:
            out = scene;
            break;
        case Task::threshold:
            for (int y = 0; y < size; y++)
                for (int x = 0; x < size; x++) {
                    const float v = luminance(scene, y, x) >= 0.5f ? 1.0f : 0.0f;
                    out.set_pixel(y, x, v, v, v);
                }
            break;
    }
    return out;
}

TaskSample gen_task_pair(Task task, int color_idx, int shape_idx, Rng &rng, uint64_t seed_tag) {
    SceneSpec spec = random_scene_spec(kCellSide, color_idx, shape_idx, rng);
    Image scene = render_scene(spec);
    TaskSample s;
    s.task = task;
    s.color_idx = color_idx;
    s.shape_idx = shape_idx;
    s.class_name = std::string(color_name(color_idx)) + " " + shape_name(shape_idx);
    s.seed = seed_tag;
    s.output = apply_task(task, scene, shape_mask(spec));
    s.input = task == Task::colorization ? grayscale(scene) : scene;
    return s;
}

TaskSample gen_task_pair(Task task, const std::string &class_name, uint64_t seed) {
    int color_idx = -1, shape_idx = -1;
    for (int i = 0; i < kNumShapeColors; i++)
        if (class_name.rfind(kColors[i].name, 0) == 0) color_idx = i;
    for (int i = 0; i < kNumShapeKinds; i++) {
        const std::string suffix = kShapes[i];
        if (class_name.size() >= suffix.size() &&
            class_name.compare(class_name.size() - suffix.size(), suffix.size(), suffix) == 0)
            shape_idx = i;
    }
    if (color_idx < 0 || shape_idx < 0)
        throw template_error("unknown class name: " + class_name);
    Rng rng = Rng::fork(seed, 0x9a1f);
    return gen_task_pair(task, color_idx, shape_idx, rng, seed);
}

const char *origin_name(RecordOrigin o) {
    switch (o) {
        case RecordOrigin::figure: return "figure";
        case RecordOrigin::plain: return "plain";
        case RecordOrigin::structured: return "structured";
    }
    return "?";
}

bool parse_origin(const std::string &name, RecordOrigin &out) {
    for (RecordOrigin o : {RecordOrigin::figure, RecordOrigin::plain, RecordOrigin::structured})
        if (name == origin_name(o)) {
            out = o;
            return true;
        }
    return false;
}

namespace {

Task random_train_task(Rng &rng) {
    return kTrainTasks[rng.uniform_int(static_cast<uint64_t>(std::size(kTrainTasks)))];
}

std::string caption_for(Task task, const std::string &class_name, int detail, Rng &rng) {
    TaskDescriptor d;
    d.task = task_name(task);
    if (detail >= 1) d.location = "left/right";
    if (detail >= 2) d.class_name = class_name;
    (void)rng;
    return render_text(d);
}

// Task pairs on a white page: grid at a random cell scale, patch-aligned
// placement, cropped back to 64x64.
TrainRecord figure_record(Rng &rng) {
    TrainRecord rec;
    rec.origin = RecordOrigin::figure;
    const Task task = random_train_task(rng);

    const bool one_by_two = rng.bernoulli(0.35);
    // the evaluation layouts use 32px cells at offset 0, so that geometry
    // dominates; 16/24px cells keep larger grids in distribution
    static const int kScales[] = {16, 24, 32, 40};
    static const double kScaleW[] = {0.15, 0.10, 0.60, 0.15};
    double u = rng.uniform(), acc = 0.0;
    int s = 32;
    for (int i = 0; i < 4; i++) {
        acc += kScaleW[i];
        if (u < acc) {
            s = kScales[i];
            break;
        }
    }

    // pairs share one class half the time (curated-figure analog), classes
    // draw independently otherwise (mismatched example pairs stay familiar)
    const bool shared_class = rng.bernoulli(0.5);
    const int n_pairs = one_by_two ? 1 : 2;
    int color = static_cast<int>(rng.uniform_int(kNumShapeColors));
    int shape = static_cast<int>(rng.uniform_int(kNumShapeKinds));
    std::vector<Image> cells;
    for (int i = 0; i < n_pairs; i++) {
        if (i > 0 && !shared_class) {
            color = static_cast<int>(rng.uniform_int(kNumShapeColors));
            shape = static_cast<int>(rng.uniform_int(kNumShapeKinds));
        }
        TaskSample pair = gen_task_pair(task, color, shape, rng);
        cells.push_back(pair.input);
        cells.push_back(pair.output);
    }
    // caption class follows the last pair, like a query-side description
    const std::string class_name = std::string(color_name(color)) + " " + shape_name(shape);
    const int grid_side = 2 * s;
    Image grid = one_by_two ? compose_cells(cells, 1, 2, grid_side, s)
                            : compose_cells(cells, 2, 2, s, s);

    if (grid_side <= 64) {
        rec.image = Image(64, 64, 1.0f);  // white page
        const int oy = 8 * static_cast<int>(rng.uniform_int(static_cast<uint64_t>((64 - grid_side) / 8 + 1)));
        const int ox = 8 * static_cast<int>(rng.uniform_int(static_cast<uint64_t>((64 - grid_side) / 8 + 1)));
        paste(rec.image, grid, oy, ox);
    } else {
        const int oy = 8 * static_cast<int>(rng.uniform_int(static_cast<uint64_t>((grid_side - 64) / 8 + 1)));
        const int ox = 8 * static_cast<int>(rng.uniform_int(static_cast<uint64_t>((grid_side - 64) / 8 + 1)));
        rec.image = crop(grid, oy, ox, 64, 64);
    }
    if (rng.bernoulli(0.5)) rec.image = hflip(rec.image);

    const int detail = static_cast<int>(rng.uniform_int(3));
    rec.caption = caption_for(task, class_name, detail, rng);
    return rec;
}

TrainRecord plain_record(Rng &rng) {
    TrainRecord rec;
    rec.origin = RecordOrigin::plain;
    const int color = static_cast<int>(rng.uniform_int(kNumShapeColors));
    const int shape = static_cast<int>(rng.uniform_int(kNumShapeKinds));
    SceneSpec spec = random_scene_spec(64, color, shape, rng);
    rec.image = render_scene(spec);
    rec.caption = std::string("a ") + color_name(color) + " " + shape_name(shape);
    return rec;
}

}  // namespace

TrainRecord make_train_record(Rng &rng) {
    return rng.bernoulli(0.5) ? figure_record(rng) : plain_record(rng);
}

TrainRecord make_structured_record(Rng &rng) {
    TrainRecord rec;
    rec.origin = RecordOrigin::structured;
    const Task task = random_train_task(rng);
    const int color = static_cast<int>(rng.uniform_int(kNumShapeColors));
    const int shape = static_cast<int>(rng.uniform_int(kNumShapeKinds));
    const std::string class_name = std::string(color_name(color)) + " " + shape_name(shape);
    const bool one_by_two = rng.bernoulli(0.5);
    const int n_pairs = one_by_two ? 1 : 2;
    std::vector<Image> cells;
    for (int i = 0; i < n_pairs; i++) {
        TaskSample pair = gen_task_pair(task, color, shape, rng);
        cells.push_back(pair.input);
        cells.push_back(pair.output);
    }
    rec.image = one_by_two ? compose_cells(cells, 1, 2, 64, 32) : compose_cells(cells, 2, 2, 32, 32);
    rec.caption = caption_for(task, class_name, 2, rng);
    return rec;
}

const char *corpus_mode_name(CorpusMode m) {
    switch (m) {
        case CorpusMode::mixed: return "mixed";
        case CorpusMode::structured_only: return "structured_only";
        case CorpusMode::mixed_structured: return "mixed_structured";
    }
    return "?";
}

bool parse_corpus_mode(const std::string &name, CorpusMode &out) {
    for (CorpusMode m : {CorpusMode::mixed, CorpusMode::structured_only, CorpusMode::mixed_structured})
        if (name == corpus_mode_name(m)) {
            out = m;
            return true;
        }
    return false;
}

TrainRecord corpus_record(const CorpusSpec &spec, int index) {
    Rng rng = Rng::fork(spec.seed, static_cast<uint64_t>(index));
    TrainRecord rec;
    switch (spec.mode) {
        case CorpusMode::mixed:
            rec = make_train_record(rng);
            break;
        case CorpusMode::structured_only:
            rec = make_structured_record(rng);
            break;
        case CorpusMode::mixed_structured:
            rec = rng.bernoulli(0.25) ? make_structured_record(rng) : make_train_record(rng);
            break;
    }
    rec.seed = spec.seed ^ static_cast<uint64_t>(index);
    return rec;
}

const char *retrieval_name(Retrieval r) {
    switch (r) {
        case Retrieval::random_different_class: return "random_different_class";
        case Retrieval::random_same_class: return "random_same_class";
        case Retrieval::nearest_neighbor: return "nearest_neighbor";
    }
    return "?";
}

std::array<double, 12> retrieval_feature(const Image &img) {
    std::array<double, 12> f{};
    const int hh = img.height() / 2, hw = img.width() / 2;
    for (int q = 0; q < 4; q++) {
        const int y0 = (q / 2) * hh, x0 = (q % 2) * hw;
        double acc[3] = {0, 0, 0};
        for (int y = y0; y < y0 + hh; y++)
            for (int x = x0; x < x0 + hw; x++)
                for (int c = 0; c < 3; c++) acc[c] += img.at(y, x, c);
        const double inv = 1.0 / (static_cast<double>(hh) * hw);
        for (int c = 0; c < 3; c++) f[static_cast<size_t>(q) * 3 + c] = acc[c] * inv;
    }
    return f;
}

const TaskSample &retrieve_example(const std::vector<TaskSample> &pool, const TaskSample &query,
                                   Retrieval strategy, Rng &rng) {
    if (pool.empty()) throw retrieval_error("retrieve_example: empty pool");
    std::vector<size_t> eligible;
    for (size_t i = 0; i < pool.size(); i++) {
        const bool same = pool[i].class_name == query.class_name;
        if (strategy == Retrieval::random_different_class ? !same : same) eligible.push_back(i);
    }
    if (eligible.empty())
        throw retrieval_error(std::string("retrieve_example: no ") +
                              (strategy == Retrieval::random_different_class ? "different" : "same") +
                              "-class entries for " + query.class_name);
    if (strategy != Retrieval::nearest_neighbor)
        return pool[eligible[rng.uniform_int(eligible.size())]];

    const auto qf = retrieval_feature(query.input);
    size_t best = eligible[0];
    double best_d = 1e300;
    for (size_t i : eligible) {
        const auto f = retrieval_feature(pool[i].input);
        double d = 0.0;
        for (int k = 0; k < 12; k++) d += (f[k] - qf[k]) * (f[k] - qf[k]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return pool[best];
}

std::vector<TaskSample> make_eval_pool(Task task, int n, uint64_t seed) {
    std::vector<TaskSample> pool;
    pool.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; i++) {
        const uint64_t sample_seed = kEvalSeedBase + seed * 0x100000ull + static_cast<uint64_t>(i);
        Rng rng = Rng::fork(sample_seed, 0xe7a1);
        // round-robin over all classes so any pool of >= 24 entries can
        // serve same-class retrieval for every query
        const int class_id = i % (kNumShapeColors * kNumShapeKinds);
        pool.push_back(gen_task_pair(task, class_id % kNumShapeColors, class_id / kNumShapeColors,
                                     rng, sample_seed));
    }
    return pool;
}

}  // namespace gridfill
