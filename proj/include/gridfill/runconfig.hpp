#pragma once

#include <string>

#include "gridfill/model.hpp"
#include "gridfill/taskgen.hpp"
#include "gridfill/trainer.hpp"

namespace gridfill {

// Flat key=value run configuration. Every field has a default; unknown keys
// are errors. The effective configuration is echoed into the output
// directory before training.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    int corpus_size = 4096;
    CorpusMode corpus_mode = CorpusMode::mixed;
    std::string corpus_dir;  // empty: synthesize records on the fly
    std::string out_dir = "out";
    bool seed_explicit = false;

    // config_error on unknown keys or unparsable values
    void set(const std::string &key, const std::string &value);
    static RunConfig from_file(const std::string &path);
    static RunConfig from_text(const std::string &text);
    std::string to_text() const;
};

}  // namespace gridfill
