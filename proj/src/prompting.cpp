#include "gridfill/prompting.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gridfill/errors.hpp"

namespace gridfill {

const char *task_name(Task t) {
    switch (t) {
        case Task::segmentation: return "segmentation";
        case Task::colorization: return "colorization";
        case Task::inversion: return "inversion";
        case Task::outline: return "outline";
        case Task::identity: return "identity";
        case Task::threshold: return "threshold";
    }
    return "?";
}

bool parse_task(const std::string &name, Task &out) {
    for (Task t : kAllTasks)
        if (name == task_name(t)) {
            out = t;
            return true;
        }
    return false;
}

namespace {

// Mid-sentence task phrase for the location-bearing template.
std::string location_phrase(Task t) {
    switch (t) {
        case Task::segmentation: return "Black and white foreground background segmentation";
        case Task::inversion: return "Color inverted image";
        case Task::outline: return "White outline of the shape";
        case Task::identity: return "Identical copy of the input image";
        case Task::threshold: return "Black and white brightness threshold";
        case Task::colorization: break;  // colorization has its own template
    }
    return "";
}

std::string task_title(Task t) {
    std::string name = task_name(t);
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    return "Image " + name;
}

}  // namespace

std::string render_text(const TaskDescriptor &d) {
    if (d.task.empty()) return "";
    Task t;
    if (!parse_task(d.task, t)) throw template_error("unknown task name: " + d.task);
    const bool with_loc = !d.location.empty() || !d.class_name.empty();
    if (!with_loc) return task_title(t);
    if (t == Task::colorization) {
        std::string s = "Colorization results: Left - input image, Right - Colorized image";
        if (!d.class_name.empty()) s += " of " + d.class_name;
        return s;
    }
    std::string s = "Left - input image, right: " + location_phrase(t);
    if (!d.class_name.empty()) s += " of a " + d.class_name;
    return s;
}

std::vector<int> cell_boundaries(int span, int cells, int align) {
    std::vector<int> b(static_cast<size_t>(cells) + 1);
    for (int i = 0; i <= cells; i++) {
        double ideal = static_cast<double>(i) * span / cells;
        b[static_cast<size_t>(i)] = static_cast<int>(std::lround(ideal / align)) * align;
    }
    b[0] = 0;
    b[static_cast<size_t>(cells)] = span;
    for (int i = 0; i < cells; i++)
        if (b[static_cast<size_t>(i + 1)] <= b[static_cast<size_t>(i)])
            throw dimension_error("cell_boundaries: " + std::to_string(cells) + " cells over " +
                                  std::to_string(span) + "px cannot align to " + std::to_string(align));
    return b;
}

PromptBundle arrange_grid(const ExampleSet &s, int image_side, int patch_side,
                          bool column_major_slots) {
    const int n = static_cast<int>(s.pairs.size());
    int rows, cols;
    if (n == 0) {
        rows = 1, cols = 2;
    } else if (n == 1) {
        rows = 2, cols = 2;
    } else if (n == 2) {
        rows = 3, cols = 3;
    } else {
        rows = 4, cols = 4;
    }
    return arrange_grid_layout(s, rows, cols, image_side, patch_side, column_major_slots);
}

PromptBundle arrange_grid_layout(const ExampleSet &s, int rows, int cols, int image_side,
                                 int patch_side, bool column_major_slots) {
    const int n = static_cast<int>(s.pairs.size());
    const int capacity = rows * (cols / 2) - 1;
    if (n > kMaxExamples || n > capacity)
        throw capacity_error("arrange_grid: " + std::to_string(n) + " examples exceed capacity " +
                             std::to_string(std::min(capacity, kMaxExamples)) + " of a " +
                             std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    auto check_cell = [](const Image &img, const char *what) {
        if (img.height() != kCellSide || img.width() != kCellSide)
            throw dimension_error(std::string("arrange_grid: ") + what + " is " +
                                  std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                                  ", want " + std::to_string(kCellSide) + "x" +
                                  std::to_string(kCellSide));
    };
    for (const auto &[x, y] : s.pairs) {
        check_cell(x, "example input");
        check_cell(y, "example output");
    }
    check_cell(s.query, "query");

    const auto by = cell_boundaries(image_side, rows, patch_side);
    const auto bx = cell_boundaries(image_side, cols, patch_side);
    const int slots_per_row = cols / 2;

    auto slot_cell = [&](int k) {  // -> (row, left column) of pair slot k
        if (column_major_slots) return std::pair<int, int>{k % rows, (k / rows) * 2};
        return std::pair<int, int>{k / slots_per_row, (k % slots_per_row) * 2};
    };

    PromptBundle out;
    out.grid_rows = rows;
    out.grid_cols = cols;
    out.x_vp = Image(image_side, image_side, 1.0f);  // white canvas
    out.token_h = image_side / patch_side;
    out.token_w = image_side / patch_side;
    out.mask.assign(static_cast<size_t>(out.token_h) * out.token_w, false);

    std::vector<bool> cell_used(static_cast<size_t>(rows) * cols, false);
    auto paint_cell = [&](int row, int col, const Image &img) {
        const int y0 = by[static_cast<size_t>(row)], y1 = by[static_cast<size_t>(row) + 1];
        const int x0 = bx[static_cast<size_t>(col)], x1 = bx[static_cast<size_t>(col) + 1];
        paste(out.x_vp, resample(img, y1 - y0, x1 - x0), y0, x0);
        cell_used[static_cast<size_t>(row) * cols + col] = true;
    };

    for (int k = 0; k < n; k++) {
        auto [row, col] = slot_cell(k);
        paint_cell(row, col, s.pairs[static_cast<size_t>(k)].first);
        paint_cell(row, col + 1, s.pairs[static_cast<size_t>(k)].second);
    }
    auto [qrow, qcol] = slot_cell(n);
    paint_cell(qrow, qcol, s.query);
    cell_used[static_cast<size_t>(qrow) * cols + qcol + 1] = true;  // answer cell

    out.answer_y0 = by[static_cast<size_t>(qrow)];
    out.answer_h = by[static_cast<size_t>(qrow) + 1] - out.answer_y0;
    out.answer_x0 = bx[static_cast<size_t>(qcol) + 1];
    out.answer_w = bx[static_cast<size_t>(qcol) + 2] - out.answer_x0;

    for (int r = 0; r < rows; r++)
        for (int c = 0; c < cols; c++)
            if (!cell_used[static_cast<size_t>(r) * cols + c]) out.discarded_cells.emplace_back(r, c);

    // every patch fully inside the answer cell is masked; boundaries are
    // patch-aligned so this is exactly the cell
    for (int ty = 0; ty < out.token_h; ty++)
        for (int tx = 0; tx < out.token_w; tx++) {
            const int py = ty * patch_side, px = tx * patch_side;
            if (py >= out.answer_y0 && py + patch_side <= out.answer_y0 + out.answer_h &&
                px >= out.answer_x0 && px + patch_side <= out.answer_x0 + out.answer_w)
                out.mask[static_cast<size_t>(ty) * out.token_w + tx] = true;
        }
    return out;
}

void attach_text(PromptBundle &bundle, const std::string &text, const TextEncoder &enc) {
    bundle.text_string = text;
    bundle.text = enc.tokenize(text);
}

Image inpaint(const Model &model, const PromptBundle &bundle) {
    NoGradGuard ng;
    Tensor logits = model.forward(bundle.x_vp, bundle.mask, bundle.text);
    std::vector<int> preds = predict_tokens(logits);
    const Codebook &cb = model.codebook();
    const int patch = model.config().patch_side;
    Image out = bundle.x_vp;
    size_t k = 0;
    for (int ty = 0; ty < bundle.token_h; ty++)
        for (int tx = 0; tx < bundle.token_w; tx++) {
            if (!bundle.mask[static_cast<size_t>(ty) * bundle.token_w + tx]) continue;
            int q[3];
            cb.unpack(preds[k++], q[0], q[1], q[2]);
            for (int py = 0; py < patch; py++)
                for (int px = 0; px < patch; px++)
                    out.set_pixel(ty * patch + py, tx * patch + px, cb.level_value(q[0]),
                                  cb.level_value(q[1]), cb.level_value(q[2]));
        }
    return out;
}

Image compose_cells(const std::vector<Image> &cells, int rows, int cols, int cell_h, int cell_w) {
    if (cells.size() != static_cast<size_t>(rows) * cols)
        throw dimension_error("compose_cells: " + std::to_string(cells.size()) + " cells for " +
                              std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    Image out(rows * cell_h, cols * cell_w, 1.0f);
    for (int r = 0; r < rows; r++)
        for (int c = 0; c < cols; c++) {
            const Image &cell = cells[static_cast<size_t>(r) * cols + c];
            if (cell.height() == 0) continue;  // white filler
            paste(out, resample(cell, cell_h, cell_w), r * cell_h, c * cell_w);
        }
    return out;
}

void save_bundle(const PromptBundle &bundle, const std::string &dir) {
    std::filesystem::create_directories(dir);
    write_ppm(bundle.x_vp, dir + "/x_vp.ppm");
    std::ofstream mf(dir + "/mask.rle");
    if (!mf) throw io_error("cannot open for writing: " + dir + "/mask.rle");
    mf << bundle.token_h << " " << bundle.token_w << " " << bundle.grid_rows << " "
       << bundle.grid_cols << "\n";
    // run lengths alternate starting with the false runs
    bool cur = false;
    int run = 0;
    bool first = true;
    for (size_t i = 0; i <= bundle.mask.size(); i++) {
        if (i < bundle.mask.size() && bundle.mask[i] == cur) {
            run++;
            continue;
        }
        mf << (first ? "" : " ") << run;
        first = false;
        cur = !cur;
        run = 1;
    }
    mf << "\n";
    std::ofstream tf(dir + "/text.txt");
    if (!tf) throw io_error("cannot open for writing: " + dir + "/text.txt");
    tf << bundle.text_string;
}

PromptBundle load_bundle(const std::string &dir, const TextEncoder &enc) {
    PromptBundle b;
    b.x_vp = read_ppm(dir + "/x_vp.ppm");
    std::ifstream mf(dir + "/mask.rle");
    if (!mf) throw io_error("cannot open: " + dir + "/mask.rle");
    if (!(mf >> b.token_h >> b.token_w >> b.grid_rows >> b.grid_cols))
        throw data_error("malformed mask header in " + dir + "/mask.rle", 0);
    const size_t total = static_cast<size_t>(b.token_h) * b.token_w;
    b.mask.assign(total, false);
    size_t pos = 0;
    bool cur = false;
    int run;
    while (mf >> run) {
        if (run < 0 || pos + static_cast<size_t>(run) > total)
            throw data_error("mask runs overflow grid in " + dir + "/mask.rle", pos);
        for (int i = 0; i < run; i++) b.mask[pos++] = cur;
        cur = !cur;
    }
    if (pos != total) throw data_error("mask runs underflow grid in " + dir + "/mask.rle", pos);
    std::ifstream tf(dir + "/text.txt");
    if (!tf) throw io_error("cannot open: " + dir + "/text.txt");
    std::stringstream ss;
    ss << tf.rdbuf();
    attach_text(b, ss.str(), enc);

    // answer rect from the mask bounding box
    const int patch = b.x_vp.height() / std::max(b.token_h, 1);
    int ty0 = b.token_h, tx0 = b.token_w, ty1 = -1, tx1 = -1;
    for (int ty = 0; ty < b.token_h; ty++)
        for (int tx = 0; tx < b.token_w; tx++)
            if (b.mask[static_cast<size_t>(ty) * b.token_w + tx]) {
                ty0 = std::min(ty0, ty);
                tx0 = std::min(tx0, tx);
                ty1 = std::max(ty1, ty);
                tx1 = std::max(tx1, tx);
            }
    if (ty1 >= 0) {
        b.answer_y0 = ty0 * patch;
        b.answer_x0 = tx0 * patch;
        b.answer_h = (ty1 - ty0 + 1) * patch;
        b.answer_w = (tx1 - tx0 + 1) * patch;
    }
    return b;
}

}  // namespace gridfill
