#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gridfill/image.hpp"
#include "gridfill/model.hpp"
#include "gridfill/task.hpp"
#include "gridfill/textenc.hpp"

namespace gridfill {

constexpr int kCellSide = 32;     // native resolution of example/query images
constexpr int kMaxExamples = 7;   // a 4x4 grid holds 7 pairs plus the query

// Input-output example pairs plus the query image, all at kCellSide.
struct ExampleSet {
    std::vector<std::pair<Image, Image>> pairs;
    Image query;
};

// Composed visual prompt: canvas at model input size, token-resolution mask
// over the answer cell, and the attached textual prompt.
struct PromptBundle {
    Image x_vp;
    std::vector<bool> mask;  // row-major token grid, true = to predict
    int token_h = 0, token_w = 0;
    std::string text_string;
    TextPrompt text;
    int grid_rows = 0, grid_cols = 0;
    int answer_y0 = 0, answer_x0 = 0, answer_h = 0, answer_w = 0;  // answer cell rect, pixels
    std::vector<std::pair<int, int>> discarded_cells;              // white filler cells (row, col)
};

// Textual prompt attributes: task name, location phrase, class name. Empty
// task renders the empty prompt; a class name implies the location detail.
struct TaskDescriptor {
    std::string task;
    std::string location;    // "" or a phrase such as "left/right"
    std::string class_name;  // "" when absent
};

std::string render_text(const TaskDescriptor &d);

// Grid layout: n=0 -> 1x2, n=1 -> 2x2, n=2 -> 3x3, n in [3,7] -> 4x4.
// Pairs fill left/right slots row-major, the query pair comes last, unused
// cells stay white and are recorded as discarded. Cell boundaries snap to
// the patch grid. column_major_slots flips the slot fill order.
PromptBundle arrange_grid(const ExampleSet &s, int image_side = 64, int patch_side = 8,
                          bool column_major_slots = false);

// Same composition with the grid shape pinned, e.g. one example inside a
// 4x4 layout for grid-size sweeps.
PromptBundle arrange_grid_layout(const ExampleSet &s, int rows, int cols, int image_side = 64,
                                 int patch_side = 8, bool column_major_slots = false);

void attach_text(PromptBundle &bundle, const std::string &text, const TextEncoder &enc);

// Runs the model over the bundle and pastes decoded predictions into the
// masked cell; every unmasked pixel is returned bit-identical.
Image inpaint(const Model &model, const PromptBundle &bundle);

// Uniform grid composition used by the corpus generator; an empty Image
// paints a white cell.
Image compose_cells(const std::vector<Image> &cells, int rows, int cols, int cell_h, int cell_w);

// Pixel boundaries of `cells` cells over `span` pixels, snapped to align.
std::vector<int> cell_boundaries(int span, int cells, int align);

// Directory serialization: x_vp.ppm + mask.rle + text.txt.
void save_bundle(const PromptBundle &bundle, const std::string &dir);
PromptBundle load_bundle(const std::string &dir, const TextEncoder &enc);

}  // namespace gridfill
