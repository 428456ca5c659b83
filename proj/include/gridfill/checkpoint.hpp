#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridfill/model.hpp"
#include "gridfill/trainer.hpp"

namespace gridfill {

// Versioned binary snapshot of model parameters and training state.
// Layout (all little-endian): magic "IMPV", u32 version, model config,
// train config, u64 step, named f32 parameter blobs with explicit shapes,
// optional optimizer moments, RNG state.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    ModelConfig model_cfg;
    TrainConfig train_cfg;
    uint64_t step = 0;

    std::vector<std::string> param_names;
    std::vector<std::vector<int>> param_shapes;
    std::vector<std::vector<float>> param_data;

    bool has_optimizer = false;
    uint64_t adam_t = 0;
    std::vector<std::vector<float>> m_data, v_data;

    uint64_t rng_state[4] = {};
    bool rng_has_spare = false;
    double rng_spare = 0.0;

    void save(const std::string &path) const;
    static Checkpoint load(const std::string &path);  // data_error on malformed input

    static Checkpoint capture(const Model &model, const TrainConfig &train_cfg, uint64_t step,
                              AdamW *opt = nullptr, const Rng *rng = nullptr);
    // Copies parameters (and optimizer state when present) into live objects;
    // shapes must match the model's configuration.
    void apply(Model &model, AdamW *opt = nullptr, Rng *rng = nullptr) const;

    // Builds a model from the stored config and parameters.
    Model restore_model() const;
};

}  // namespace gridfill
