#include <CLI11.hpp>

#include <string>
#include <vector>

#include "gridfill/cli.hpp"

int main(int argc, char **argv) {
    CLI::App app{"gridfill: text-conditioned grid-prompt inpainting"};
    app.require_subcommand(1);

    uint64_t seed = 1;

    auto *train = app.add_subcommand("train", "train a model from a run config");
    std::string config_path, resume;
    train->add_option("--config", config_path, "key=value run config file")->required();
    train->add_option("--resume", resume, "checkpoint to continue from");
    auto *train_seed = train->add_option("--seed", seed, "seed override");

    auto *infer = app.add_subcommand("infer", "inpaint a prompt grid");
    std::string ckpt, examples_dir, query, text, out_dir = "infer_out";
    infer->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    infer->add_option("--examples", examples_dir, "directory of <i>_input/<i>_output images");
    infer->add_option("--query", query, "query image (cell-sized)")->required();
    infer->add_option("--text", text, "textual prompt, may be empty");
    infer->add_option("--out", out_dir, "output directory");

    auto *eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string task = "segmentation", visual = "random_same_class", text_level = "task_location";
    int queries = 32;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    bool zero_shot = false;
    eval->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    eval->add_option("--task", task, "task name");
    eval->add_option("--visual", visual, "visual prompt strategy");
    eval->add_option("--text-level", text_level, "text prompt level");
    eval->add_option("--queries", queries, "queries per seed");
    eval->add_option("--seeds", seeds, "evaluation seeds");
    eval->add_flag("--zero-shot", zero_shot, "run the zero-example disambiguation eval");

    auto *ablate = app.add_subcommand("ablate", "visual x text ablation matrix");
    std::string ablate_out = "ablation_out";
    ablate->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    ablate->add_option("--out", ablate_out, "output directory");
    ablate->add_option("--task", task, "task name");
    ablate->add_option("--queries", queries, "queries per seed");
    ablate->add_option("--seeds", seeds, "evaluation seeds");

    auto *gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    int gc_seeds = 10;
    gradcheck->add_option("--seeds", gc_seeds, "seeds per operation");

    auto *gridgen = app.add_subcommand("gridgen", "export a synthetic corpus");
    std::string gen_out = "corpus";
    int gen_n = 1000;
    std::string gen_mode = "mixed";
    gridgen->add_option("--out", gen_out, "output directory");
    gridgen->add_option("--n", gen_n, "number of records");
    auto *gen_seed = gridgen->add_option("--seed", seed, "corpus seed");
    gridgen->add_option("--mode", gen_mode, "mixed | structured_only | mixed_structured");

    auto *vocab = app.add_subcommand("vocab", "dump the text vocabulary");
    std::string vocab_out = "vocab.tsv";
    vocab->add_option("--out", vocab_out, "output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return gridfill::kExitConfig;
    }

    if (train->parsed())
        return gridfill::cmd_train(config_path, resume, !train_seed->empty(), seed);
    if (infer->parsed()) return gridfill::cmd_infer(ckpt, examples_dir, query, text, out_dir);
    if (eval->parsed())
        return gridfill::cmd_eval(ckpt, task, visual, text_level, queries, seeds, zero_shot);
    if (ablate->parsed()) return gridfill::cmd_ablate(ckpt, ablate_out, task, queries, seeds);
    if (gradcheck->parsed()) return gridfill::cmd_gradcheck(gc_seeds);
    if (gridgen->parsed())
        return gridfill::cmd_gridgen(
            gen_out, gen_n,
            gridfill::effective_seed(!gen_seed->empty(), seed, false, 0, 7), gen_mode);
    if (vocab->parsed()) return gridfill::cmd_vocab(vocab_out);
    return gridfill::kExitConfig;
}
