#pragma once

#include <stdexcept>
#include <string>

namespace gridfill {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes
// (config 2, io 3, data 4, numeric 5); everything else is a plain logic error.

struct dimension_error : std::runtime_error {
    explicit dimension_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct index_error : std::runtime_error {
    explicit index_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct contract_error : std::runtime_error {
    explicit contract_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct capacity_error : std::runtime_error {
    explicit capacity_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct template_error : std::runtime_error {
    explicit template_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct retrieval_error : std::runtime_error {
    explicit retrieval_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct config_error : std::runtime_error {
    explicit config_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string &msg) : std::runtime_error(msg) {}
};

// Malformed input bytes (images, checkpoints, manifests). Carries the byte
// offset where parsing gave up.
struct data_error : std::runtime_error {
    size_t offset = 0;
    data_error(const std::string &msg, size_t at)
        : std::runtime_error(msg + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
    explicit data_error(const std::string &msg) : std::runtime_error(msg) {}
};

struct ingestion_error : std::runtime_error {
    explicit ingestion_error(const std::string &msg) : std::runtime_error(msg) {}
};

}  // namespace gridfill
