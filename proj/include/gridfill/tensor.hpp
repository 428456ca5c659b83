#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gridfill/rng.hpp"

namespace gridfill {

// Global scalar precision. Training runs in f32; gradient checks flip the
// whole stack to f64 for finite-difference fidelity. A graph must be built
// and consumed under a single mode.
enum class Precision { f32, f64 };

Precision default_precision();
void set_default_precision(Precision p);

// Flat storage tagged with the precision it was created under.
class Buffer {
  public:
    Buffer() = default;
    Buffer(size_t n, Precision p);

    size_t size() const { return size_; }
    Precision precision() const { return prec_; }

    double get(size_t i) const { return prec_ == Precision::f32 ? static_cast<double>(f32_[i]) : f64_[i]; }
    void set(size_t i, double v) {
        if (prec_ == Precision::f32)
            f32_[i] = static_cast<float>(v);
        else
            f64_[i] = v;
    }
    void fill(double v);

    float *f32() { return f32_.data(); }
    const float *f32() const { return f32_.data(); }
    double *f64() { return f64_.data(); }
    const double *f64() const { return f64_.data(); }

  private:
    Precision prec_ = Precision::f32;
    size_t size_ = 0;
    std::vector<float> f32_;
    std::vector<double> f64_;
};

struct TensorNode {
    std::vector<int> shape;
    Buffer value;
    Buffer grad;  // lazily allocated, same shape as value
    bool requires_grad = false;
    bool grad_alloc = false;
    uint64_t seq = 0;  // creation order; parents always precede children
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop;  // accumulates this node's grad into parents

    size_t numel() const { return value.size(); }
    Buffer &grad_buffer();  // allocates zeros on first touch
};

// Value-semantics handle over a shared graph node.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(const std::vector<int> &shape, bool requires_grad = false);
    static Tensor full(const std::vector<int> &shape, double v, bool requires_grad = false);
    static Tensor from_vector(const std::vector<int> &shape, const std::vector<double> &data,
                              bool requires_grad = false);
    static Tensor randn(const std::vector<int> &shape, Rng &rng, double stddev,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int> &shape() const { return node_->shape; }
    size_t numel() const { return node_->numel(); }
    int rows() const { return node_->shape[0]; }
    int cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

    double get(size_t i) const { return node_->value.get(i); }
    void set(size_t i, double v) { node_->value.set(i, v); }
    std::vector<double> to_vector() const;

    bool requires_grad() const { return node_->requires_grad; }
    Buffer &values() { return node_->value; }
    const Buffer &values() const { return node_->value; }
    Buffer &grad() { return node_->grad_buffer(); }
    double grad_at(size_t i) const;
    void zero_grad();

    TensorNode *node() const { return node_.get(); }
    std::shared_ptr<TensorNode> shared_node() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

// Disables tape recording for pure inference in the enclosing scope.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard &operator=(const NoGradGuard &) = delete;

  private:
    bool prev_;
};
bool grad_enabled();

// The recorded computation reaching a root, in topological order (every
// operation after all of its inputs). backward() walks it once, back to
// front, accumulating gradients.
struct Tape {
    std::vector<TensorNode *> order;
    static Tape from(TensorNode *root);
};

// ---- operations ----

Tensor matmul(const Tensor &a, const Tensor &b);                     // [MxK]·[KxN]
Tensor transpose(const Tensor &x);                                   // 2-D
Tensor add(const Tensor &a, const Tensor &b);                        // same shape
Tensor add_rowvec(const Tensor &m, const Tensor &row);               // [MxN] + [N]
Tensor mul(const Tensor &a, const Tensor &b);                        // elementwise
Tensor scale(const Tensor &x, double c);
Tensor softmax(const Tensor &x, int axis);                           // 1-D or 2-D
// Adds bias[j] to column j of every row before the row softmax; used for
// attention masks. The bias is a constant, not a differentiable input.
Tensor softmax_rows_biased(const Tensor &x, const std::vector<double> &col_bias);
Tensor cross_entropy_logits(const Tensor &logits, const std::vector<int> &targets);  // scalar
Tensor layer_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta, double eps = 1e-5);
Tensor gelu(const Tensor &x);  // tanh approximation
Tensor gather_rows(const Tensor &x, const std::vector<int> &ids);
inline Tensor embedding_lookup(const Tensor &table, const std::vector<int> &ids) {
    return gather_rows(table, ids);
}
Tensor concat_rows(const Tensor &a, const Tensor &b);
Tensor slice_cols(const Tensor &x, int c0, int c1);
Tensor concat_cols(const std::vector<Tensor> &parts);
Tensor sum_all(const Tensor &x);  // scalar

// Reverse-mode sweep from a scalar loss. Gradients accumulate; calling twice
// without zeroing doubles them.
void backward(const Tensor &loss);

std::string shape_str(const std::vector<int> &shape);

}  // namespace gridfill
