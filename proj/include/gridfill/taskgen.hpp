#pragma once

#include <array>
#include <string>
#include <vector>

#include "gridfill/image.hpp"
#include "gridfill/rng.hpp"
#include "gridfill/task.hpp"

namespace gridfill {

constexpr int kNumShapeColors = 8;
constexpr int kNumShapeKinds = 3;

const char *color_name(int color_idx);
const char *shape_name(int shape_idx);
std::array<float, 3> color_rgb(int color_idx);

// Procedural scene: one colored shape on a lightly textured background.
// Backgrounds are dark with p=0.7 and bright otherwise, so brightness-rule
// tasks stay distinct from object-mask tasks.
struct SceneSpec {
    int size = 32;
    int shape = 0;  // 0 circle, 1 square, 2 triangle
    int color = 0;
    double cx = 16, cy = 16, radius = 8;
    std::array<float, 3> background{};
    uint64_t noise_seed = 0;
};

SceneSpec random_scene_spec(int size, int color_idx, int shape_idx, Rng &rng);
bool inside_shape(const SceneSpec &spec, double px, double py);
std::vector<bool> shape_mask(const SceneSpec &spec);
Image render_scene(const SceneSpec &spec);

// One supervised example: output is a fixed deterministic transform of the
// input. Colorization inputs are the grayscale rendering.
struct TaskSample {
    Image input, output;  // kCellSide each
    Task task = Task::segmentation;
    std::string class_name;  // "red circle"
    int color_idx = 0, shape_idx = 0;
    uint64_t seed = 0;
};

Image apply_task(Task task, const Image &scene, const std::vector<bool> &mask);

TaskSample gen_task_pair(Task task, const std::string &class_name, uint64_t seed);
TaskSample gen_task_pair(Task task, int color_idx, int shape_idx, Rng &rng, uint64_t seed_tag = 0);

enum class RecordOrigin { figure, plain, structured };
const char *origin_name(RecordOrigin o);
bool parse_origin(const std::string &name, RecordOrigin &out);

// One training image with its caption.
struct TrainRecord {
    Image image;  // 64x64
    std::string caption;
    RecordOrigin origin = RecordOrigin::figure;
    uint64_t seed = 0;
};

// p=0.5 a figure-like grid composite (task pairs at a random cell scale on
// a white page, cropped back to 64x64, flipped with p=0.5), else a plain
// captioned scene.
TrainRecord make_train_record(Rng &rng);

// Clean uncropped 1x2 / 2x2 supervised grid with a full caption.
TrainRecord make_structured_record(Rng &rng);

enum class CorpusMode { mixed, structured_only, mixed_structured };
const char *corpus_mode_name(CorpusMode m);
bool parse_corpus_mode(const std::string &name, CorpusMode &out);

// Lazy corpus: record i is a pure function of (seed, i).
struct CorpusSpec {
    uint64_t seed = 1;
    int size = 4096;
    CorpusMode mode = CorpusMode::mixed;
};

TrainRecord corpus_record(const CorpusSpec &spec, int index);

// ---- example retrieval ----

enum class Retrieval { random_different_class, random_same_class, nearest_neighbor };
const char *retrieval_name(Retrieval r);

// Mean color of the four image quadrants: the 12-dim retrieval feature.
std::array<double, 12> retrieval_feature(const Image &img);

const TaskSample &retrieve_example(const std::vector<TaskSample> &pool, const TaskSample &query,
                                   Retrieval strategy, Rng &rng);

// Evaluation pools draw from a seed range far above any training index.
constexpr uint64_t kEvalSeedBase = 1ull << 40;
std::vector<TaskSample> make_eval_pool(Task task, int n, uint64_t seed);

}  // namespace gridfill
