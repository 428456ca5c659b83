#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gridfill/model.hpp"
#include "gridfill/prompting.hpp"
#include "gridfill/taskgen.hpp"

namespace gridfill {

// Per-pixel foreground decision at luminance threshold 0.5.
struct BinaryMask {
    int h = 0, w = 0;
    std::vector<bool> fg;

    bool at(int y, int x) const { return fg[static_cast<size_t>(y) * w + x]; }
};

BinaryMask binarize(const Image &img);

// Mean foreground IoU over query pairs; an empty union counts as IoU 1.
double miou(const std::vector<BinaryMask> &preds, const std::vector<BinaryMask> &gts);

double mse(const Image &pred, const Image &gt);

enum class VisualStrategy { none, random_different_class, random_same_class, nearest_neighbor };
enum class TextLevel { none, task, task_location, task_location_class };

const char *visual_strategy_name(VisualStrategy v);
const char *text_level_name(TextLevel t);

TaskDescriptor descriptor_for(Task task, TextLevel level, const std::string &class_name);

// Composes the evaluation prompt for one query: zero examples for
// VisualStrategy::none, otherwise one retrieved example pair.
PromptBundle build_eval_bundle(const TaskSample &query, VisualStrategy visual, TextLevel text,
                               const std::vector<TaskSample> &pool, const TextEncoder &enc,
                               Rng &rng);

// Fraction of masked tokens predicted exactly; ground truth tokens come from
// re-encoding the bundle with the true answer pasted in.
double bundle_token_accuracy(const Model &model, const PromptBundle &bundle, const Image &gt_output);

// Answer-cell metric for one query: IoU for mask-like tasks, MSE otherwise.
double score_answer_cell(const Image &inpainted, const PromptBundle &bundle, const TaskSample &query);

struct EvalOptions {
    Task task = Task::segmentation;
    int queries_per_seed = 32;
    int pool_size = 64;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct CellResult {
    VisualStrategy visual{};
    TextLevel text{};
    std::string metric;  // "miou" or "mse"
    double mean = 0.0, stddev = 0.0;
    int n = 0;
    std::vector<double> per_seed;
};

// The visual-strategy x text-level matrix. Writes ablation.csv, queries.jsonl,
// figure.ppm, and audit.txt under out_dir when non-empty. (visual none, text
// none) is excluded: no prompt at all is undefined.
std::vector<CellResult> run_ablation(const Model &model, const EvalOptions &opts,
                                     const std::string &out_dir);

// Columns whose metric fails to increase with visual prompt quality.
std::vector<std::string> monotonicity_audit(const std::vector<CellResult> &cells);

// Mean metric for one (visual, text) cell.
CellResult eval_cell(const Model &model, VisualStrategy visual, TextLevel text,
                     const EvalOptions &opts);

// Token accuracy of zero-example prompts on the ambiguous inversion/outline
// pair, with correct task text vs no text.
std::pair<double, double> zero_shot_disambiguation(const Model &model, int queries_per_task,
                                                   const std::vector<uint64_t> &seeds);

// mIoU with n same-class examples in a pinned rows x cols layout.
double grid_layout_miou(const Model &model, int rows, int cols, int n_examples, int queries,
                        uint64_t seed);

// Criterion-style held-out accuracy: token accuracy with one same-class
// example on the given task.
double heldout_token_accuracy(const Model &model, Task task, int queries, uint64_t seed);

// Held-out answer-cell mIoU with one same-class example on the given task.
double heldout_miou(const Model &model, Task task, int queries, uint64_t seed);

}  // namespace gridfill
