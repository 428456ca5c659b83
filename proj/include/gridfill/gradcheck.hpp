#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gridfill/tensor.hpp"

namespace gridfill {

// RAII switch for the global scalar mode.
struct PrecisionGuard {
    explicit PrecisionGuard(Precision p) : prev_(default_precision()) { set_default_precision(p); }
    ~PrecisionGuard() { set_default_precision(prev_); }
    PrecisionGuard(const PrecisionGuard &) = delete;
    PrecisionGuard &operator=(const PrecisionGuard &) = delete;

  private:
    Precision prev_;
};

// Compares reverse-mode gradients of every leaf against central finite
// differences of the rebuilt forward value. The oracle touches only forward
// evaluations, so it is independent of the backward implementation.
// Relative error uses max(|analytic|, |numeric|, floor) as denominator.
double max_grad_rel_error(const std::function<Tensor()> &make_loss, const std::vector<Tensor> &leaves,
                          double h = 1e-3, double floor = 1e-3);

struct OpCheck {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Finite-difference suite over every differentiable operation plus the full
// micro model, n_seeds seeds each, in 64-bit mode.
std::vector<OpCheck> run_gradcheck_suite(int n_seeds = 10);

bool gradcheck_ok(const std::vector<OpCheck> &checks);

}  // namespace gridfill
