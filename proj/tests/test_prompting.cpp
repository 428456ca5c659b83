#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "gridfill/errors.hpp"
#include "gridfill/evalkit.hpp"
#include "gridfill/prompting.hpp"
#include "gridfill/taskgen.hpp"
#include "gridfill/trainer.hpp"

using namespace gridfill;

namespace {

Image cell_image(uint64_t seed) {
    Rng rng(seed);
    Image img(kCellSide, kCellSide);
    for (auto &v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

ExampleSet set_with(int n, uint64_t seed = 100) {
    ExampleSet s;
    for (int i = 0; i < n; i++)
        s.pairs.emplace_back(cell_image(seed + 2 * static_cast<uint64_t>(i)),
                             cell_image(seed + 2 * static_cast<uint64_t>(i) + 1));
    s.query = cell_image(seed + 99);
    return s;
}

}  // namespace

TEST_CASE("text templates render the pinned strings") {
    CHECK(render_text({}) == "");
    CHECK(render_text({"segmentation", "", ""}) == "Image Segmentation");
    CHECK(render_text({"segmentation", "left/right", ""}) ==
          "Left - input image, right: Black and white foreground background segmentation");
    CHECK(render_text({"segmentation", "left/right", "horse"}) ==
          "Left - input image, right: Black and white foreground background segmentation of a horse");
    CHECK(render_text({"colorization", "left/right", "red circle"}) ==
          "Colorization results: Left - input image, Right - Colorized image of red circle");
    CHECK_THROWS_AS(render_text({"sharpening", "", ""}), template_error);
}

TEST_CASE("g2 output round-trips through tokenize without UNK") {
    TextEncoder enc;
    for (Task task : kAllTasks)
        for (int detail = 0; detail < 3; detail++)
            for (int color = 0; color < kNumShapeColors; color++)
                for (int shape = 0; shape < kNumShapeKinds; shape++) {
                    TaskDescriptor d;
                    d.task = task_name(task);
                    if (detail >= 1) d.location = "left/right";
                    if (detail >= 2)
                        d.class_name = std::string(color_name(color)) + " " + shape_name(shape);
                    TextPrompt p = enc.tokenize(render_text(d));
                    for (int i = 0; i < p.length; i++)
                        CHECK(p.token_ids[static_cast<size_t>(i)] != kUnkId);
                }
}

TEST_CASE("one example gives the 2x2 grid with 16 of 64 tokens masked") {
    PromptBundle b = arrange_grid(set_with(1));
    CHECK(b.grid_rows == 2);
    CHECK(b.grid_cols == 2);
    CHECK(b.x_vp.height() == 64);
    CHECK(b.token_h * b.token_w == 64);
    int masked = 0;
    for (bool v : b.mask) masked += v ? 1 : 0;
    CHECK(masked == 16);
    // bottom-right quarter
    for (int ty = 0; ty < 8; ty++)
        for (int tx = 0; tx < 8; tx++)
            CHECK(b.mask[static_cast<size_t>(ty) * 8 + tx] == (ty >= 4 && tx >= 4));
    CHECK(b.discarded_cells.empty());
    CHECK(masked == (b.answer_h / 8) * (b.answer_w / 8));
}

TEST_CASE("zero examples give the 1x2 layout with the right half masked") {
    PromptBundle b = arrange_grid(set_with(0));
    CHECK(b.grid_rows == 1);
    CHECK(b.grid_cols == 2);
    int masked = 0;
    for (int ty = 0; ty < 8; ty++)
        for (int tx = 0; tx < 8; tx++) {
            bool m = b.mask[static_cast<size_t>(ty) * 8 + tx];
            CHECK(m == (tx >= 4));
            masked += m ? 1 : 0;
        }
    CHECK(masked == 32);
}

TEST_CASE("three examples give a 4x4 grid with 8 used and 8 white cells") {
    PromptBundle b = arrange_grid(set_with(3));
    CHECK(b.grid_rows == 4);
    CHECK(b.grid_cols == 4);
    CHECK(b.discarded_cells.size() == 8);
    int masked = 0;
    for (bool v : b.mask) masked += v ? 1 : 0;
    CHECK(masked == 4);  // 16px cell -> 2x2 tokens
    // discarded cells render white
    for (auto [r, c] : b.discarded_cells) {
        const int y = r * 16 + 8, x = c * 16 + 8;
        CHECK(b.x_vp.at(y, x, 0) == 1.0f);
        CHECK(b.x_vp.at(y, x, 1) == 1.0f);
        CHECK(b.x_vp.at(y, x, 2) == 1.0f);
    }
}

TEST_CASE("two examples give the 3x3 grid with the mask on exactly one cell") {
    PromptBundle b = arrange_grid(set_with(2));
    CHECK(b.grid_rows == 3);
    CHECK(b.grid_cols == 3);
    // patch-snapped boundaries: rows 0/24/40/64
    CHECK(b.answer_y0 == 40);
    CHECK(b.answer_x0 == 24);
    CHECK(b.answer_h == 24);
    CHECK(b.answer_w == 16);
    int masked = 0;
    for (int ty = 0; ty < 8; ty++)
        for (int tx = 0; tx < 8; tx++) {
            bool inside = ty * 8 >= b.answer_y0 && (ty + 1) * 8 <= b.answer_y0 + b.answer_h &&
                          tx * 8 >= b.answer_x0 && (tx + 1) * 8 <= b.answer_x0 + b.answer_w;
            CHECK(b.mask[static_cast<size_t>(ty) * 8 + tx] == inside);
            masked += inside ? 1 : 0;
        }
    CHECK(masked == 6);
    CHECK(b.discarded_cells.size() == 3);  // third column is never paired
}

TEST_CASE("more than seven examples overflow capacity") {
    CHECK_THROWS_AS(arrange_grid(set_with(8)), capacity_error);
    CHECK_THROWS_AS(arrange_grid_layout(set_with(2), 2, 2), capacity_error);
}

TEST_CASE("non-cell-sized images are rejected") {
    ExampleSet s = set_with(1);
    s.query = Image(16, 16);
    CHECK_THROWS_AS(arrange_grid(s), dimension_error);
}

TEST_CASE("cell extraction is lossless for non-discarded cells") {
    ExampleSet s = set_with(1);
    PromptBundle b = arrange_grid(s);
    CHECK(crop(b.x_vp, 0, 0, 32, 32) == s.pairs[0].first);
    CHECK(crop(b.x_vp, 0, 32, 32, 32) == s.pairs[0].second);
    CHECK(crop(b.x_vp, 32, 0, 32, 32) == s.query);
}

TEST_CASE("forced 4x4 layout with one example keeps the query pair second") {
    PromptBundle b = arrange_grid_layout(set_with(1), 4, 4);
    CHECK(b.grid_rows == 4);
    CHECK(b.discarded_cells.size() == 12);
    CHECK(b.answer_y0 == 0);
    CHECK(b.answer_x0 == 48);  // slot 1 answer cell: row 0, col 3
}

TEST_CASE("column-major slot order transposes the fill") {
    PromptBundle row_major = arrange_grid_layout(set_with(3), 4, 4);
    PromptBundle col_major = arrange_grid_layout(set_with(3), 4, 4, 64, 8, true);
    // row-major query slot 3 -> row 1, cols 2-3; column-major -> row 3, cols 0-1
    CHECK(row_major.answer_y0 == 16);
    CHECK(row_major.answer_x0 == 48);
    CHECK(col_major.answer_y0 == 48);
    CHECK(col_major.answer_x0 == 16);
}

TEST_CASE("inpaint pastes predictions only into the masked cell") {
    Model model(ModelConfig{}, 77);  // untrained is fine for the paste contract
    ExampleSet s = set_with(1, 500);
    PromptBundle b = arrange_grid(s);
    attach_text(b, "Image Segmentation", model.text());
    Image out = inpaint(model, b);
    REQUIRE(out.same_shape(b.x_vp));
    for (int y = 0; y < 64; y++)
        for (int x = 0; x < 64; x++) {
            const bool in_answer = y >= b.answer_y0 && y < b.answer_y0 + b.answer_h &&
                                   x >= b.answer_x0 && x < b.answer_x0 + b.answer_w;
            if (!in_answer)
                for (int c = 0; c < 3; c++) CHECK(out.at(y, x, c) == b.x_vp.at(y, x, c));
        }
    // masked cell pixels are codebook lattice colors
    const Codebook &cb = model.codebook();
    for (int y = b.answer_y0; y < b.answer_y0 + b.answer_h; y++)
        for (int x = b.answer_x0; x < b.answer_x0 + b.answer_w; x++)
            for (int c = 0; c < 3; c++) {
                float v = out.at(y, x, c);
                CHECK(v == cb.level_value(cb.quantize_channel(v)));
            }
}

TEST_CASE("bundle directory serialization round trips") {
    TextEncoder enc;
    PromptBundle b = arrange_grid(set_with(2));
    attach_text(b, "Left - input image, right: Black and white foreground background segmentation",
                enc);
    // quantize the canvas so the PPM byte round trip is exact
    for (auto &v : b.x_vp.data())
        v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    auto dir = (std::filesystem::temp_directory_path() / "gridfill_bundle_test").string();
    save_bundle(b, dir);
    PromptBundle back = load_bundle(dir, enc);
    CHECK(back.x_vp == b.x_vp);
    CHECK(back.mask == b.mask);
    CHECK(back.text_string == b.text_string);
    CHECK(back.grid_rows == b.grid_rows);
    CHECK(back.grid_cols == b.grid_cols);
    CHECK(back.answer_y0 == b.answer_y0);
    CHECK(back.answer_x0 == b.answer_x0);
    CHECK(back.answer_h == b.answer_h);
    CHECK(back.answer_w == b.answer_w);
}

TEST_CASE("overfit model reproduces the quantized truth in the answer cell") {
    // Memorize one fixed record, then inpaint its grid: the answer cell must
    // equal the quantized ground truth.
    ModelConfig mc = micro_config();
    mc.image_side = 64;
    mc.patch_side = 8;
    mc.d_model = 32;
    mc.n_heads = 4;
    Model model(mc, 7);

    TaskSample pair = gen_task_pair(Task::segmentation, "red circle", 1234);
    TaskSample pair2 = gen_task_pair(Task::segmentation, "red circle", 1235);
    ExampleSet s;
    s.pairs.emplace_back(pair.input, pair.output);
    s.query = pair2.input;
    PromptBundle bundle = arrange_grid(s);
    Image completed = bundle.x_vp;
    paste(completed, resample(pair2.output, bundle.answer_h, bundle.answer_w), bundle.answer_y0,
          bundle.answer_x0);

    TrainRecord rec;
    rec.image = completed;
    rec.caption = "Left - input image, right: Black and white foreground background segmentation";
    rec.origin = RecordOrigin::figure;

    TrainConfig tc;
    tc.total_steps = 700;
    tc.warmup_steps = 30;
    tc.batch = 1;
    tc.lr_peak = 2e-3;
    tc.text_drop = 0.0;
    tc.threads = 1;
    Corpus corpus = Corpus::synthetic({1, 4, CorpusMode::mixed});
    Trainer trainer(model, tc, corpus);
    double loss = 1e9;
    for (int i = 0; i < 650 && loss > 0.01; i++) loss = trainer.train_step(rec);
    REQUIRE(loss < 0.05);

    attach_text(bundle, rec.caption, model.text());
    Image out = inpaint(model, bundle);
    Image got_cell = crop(out, bundle.answer_y0, bundle.answer_x0, bundle.answer_h, bundle.answer_w);
    Image want_cell = model.codebook().quantize_image(
        crop(completed, bundle.answer_y0, bundle.answer_x0, bundle.answer_h, bundle.answer_w));
    // quantized truth per token: compare through the codebook
    TokenGrid want = model.codebook().encode_image(
        crop(completed, bundle.answer_y0, bundle.answer_x0, bundle.answer_h, bundle.answer_w));
    TokenGrid got = model.codebook().encode_image(got_cell);
    int agree = 0;
    for (size_t i = 0; i < want.tokens.size(); i++) agree += want.tokens[i] == got.tokens[i] ? 1 : 0;
    CHECK(agree == static_cast<int>(want.tokens.size()));
    (void)want_cell;
}
