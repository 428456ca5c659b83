#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gridfill {

// Exit codes: 0 ok, 2 config, 3 I/O, 4 data, 5 numeric-check failure.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitNumeric = 5;

// Explicit seed > config-file seed > IMPROV_SEED env > built-in default.
uint64_t effective_seed(bool flag_set, uint64_t flag_value, bool config_set, uint64_t config_value,
                        uint64_t fallback);

int cmd_train(const std::string &config_path, const std::string &resume_checkpoint, bool seed_set,
              uint64_t seed);
int cmd_infer(const std::string &checkpoint, const std::string &examples_dir,
              const std::string &query_path, const std::string &text, const std::string &out_dir);
int cmd_eval(const std::string &checkpoint, const std::string &task, const std::string &visual,
             const std::string &text_level, int queries, const std::vector<uint64_t> &seeds,
             bool zero_shot);
int cmd_ablate(const std::string &checkpoint, const std::string &out_dir, const std::string &task,
               int queries, const std::vector<uint64_t> &seeds);
int cmd_gradcheck(int n_seeds);
int cmd_gridgen(const std::string &out_dir, int n, uint64_t seed, const std::string &mode);
int cmd_vocab(const std::string &out_path);

}  // namespace gridfill
