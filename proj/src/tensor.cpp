#include "gridfill/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gridfill/errors.hpp"

namespace gridfill {

namespace {

Precision g_precision = Precision::f32;
thread_local bool g_grad_enabled = true;
thread_local uint64_t g_seq = 0;

template <typename T>
T *buf_ptr(Buffer &b);
template <>
float *buf_ptr<float>(Buffer &b) {
    return b.f32();
}
template <>
double *buf_ptr<double>(Buffer &b) {
    return b.f64();
}

template <typename T>
const T *buf_cptr(const Buffer &b);
template <>
const float *buf_cptr<float>(const Buffer &b) {
    return b.f32();
}
template <>
const double *buf_cptr<double>(const Buffer &b) {
    return b.f64();
}

template <class Fn>
void with_prec(Precision p, Fn &&fn) {
    if (p == Precision::f32)
        fn(float{});
    else
        fn(double{});
}

size_t shape_numel(const std::vector<int> &shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw dimension_error("non-positive extent in shape " + shape_str(shape));
        n *= static_cast<size_t>(d);
    }
    return n;
}

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, Precision prec) {
    auto n = std::make_shared<TensorNode>();
    size_t total = shape_numel(shape);
    n->shape = std::move(shape);
    n->value = Buffer(total, prec);
    n->seq = ++g_seq;
    return n;
}

// Marks the output differentiable and wires parents if the tape is live.
void attach(const std::shared_ptr<TensorNode> &out,
            std::initializer_list<std::shared_ptr<TensorNode>> parents, std::function<void()> fn) {
    if (!g_grad_enabled) return;
    bool any = false;
    for (const auto &p : parents) any = any || p->requires_grad;
    if (!any) return;
    out->requires_grad = true;
    out->parents.assign(parents.begin(), parents.end());
    out->backprop = std::move(fn);
}

void check_same_precision(const Tensor &a, const Tensor &b, const char *op) {
    if (a.values().precision() != b.values().precision())
        throw contract_error(std::string(op) + ": operands built under different precision modes");
}

// C += A·B with A [MxK], B [KxN]; caller zeroes C when a plain product is
// wanted. Four k-steps share one pass over each C row so the j loop does
// four FMAs per load/store pair.
template <typename T>
void matmul_acc(const T *__restrict a, const T *__restrict b, T *__restrict c, int m, int k, int n) {
    for (int i = 0; i < m; i++) {
        const T *arow = a + static_cast<size_t>(i) * k;
        T *crow = c + static_cast<size_t>(i) * n;
        int kk = 0;
        for (; kk + 4 <= k; kk += 4) {
            const T a0 = arow[kk], a1 = arow[kk + 1], a2 = arow[kk + 2], a3 = arow[kk + 3];
            const T *b0 = b + static_cast<size_t>(kk) * n;
            const T *b1 = b0 + n, *b2 = b1 + n, *b3 = b2 + n;
            for (int j = 0; j < n; j++)
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; kk < k; kk++) {
            const T av = arow[kk];
            const T *brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; j++) crow[j] += av * brow[j];
        }
    }
}

// C += Aᵀ·B with A [MxK] (used transposed), B [MxN], C [KxN]; the reduction
// index m is blocked the same way.
template <typename T>
void matmul_tn_acc(const T *__restrict a, const T *__restrict b, T *__restrict c, int m, int k, int n) {
    for (int kk = 0; kk < k; kk++) {
        T *crow = c + static_cast<size_t>(kk) * n;
        int i = 0;
        for (; i + 4 <= m; i += 4) {
            const T a0 = a[static_cast<size_t>(i) * k + kk];
            const T a1 = a[static_cast<size_t>(i + 1) * k + kk];
            const T a2 = a[static_cast<size_t>(i + 2) * k + kk];
            const T a3 = a[static_cast<size_t>(i + 3) * k + kk];
            const T *b0 = b + static_cast<size_t>(i) * n;
            const T *b1 = b0 + n, *b2 = b1 + n, *b3 = b2 + n;
            for (int j = 0; j < n; j++)
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; i < m; i++) {
            const T av = a[static_cast<size_t>(i) * k + kk];
            const T *brow = b + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; j++) crow[j] += av * brow[j];
        }
    }
}

// Scalar-mode transcendentals. The f32 lane uses branch-free rational
// approximations the compiler can vectorize; the f64 lane keeps libm so
// 64-bit gradient checks see the exact functions.
inline double op_tanh(double x) { return std::tanh(x); }
inline float op_tanh(float x) {
    // Padé 7/6 continued-fraction tanh, clamped where tanh saturates in f32
    float c = x < -4.97f ? -4.97f : (x > 4.97f ? 4.97f : x);
    float x2 = c * c;
    float num = c * (135135.0f + x2 * (17325.0f + x2 * (378.0f + x2)));
    float den = 135135.0f + x2 * (62370.0f + x2 * (3150.0f + x2 * 28.0f));
    return num / den;
}

inline double op_exp(double x) { return std::exp(x); }
inline float op_exp(float x) {
    // 2^(x/ln2) via exponent-bit assembly and a degree-5 polynomial for the
    // fraction; |rel err| < 3e-7. Underflows to exactly 0 like libm so
    // masked attention columns stay hard zeros.
    float t = x * 1.442695041f;
    t = t < -126.0f ? -126.0f : (t > 126.0f ? 126.0f : t);
    float fi = std::floor(t);
    float f = t - fi;
    float p = 1.0f +
              f * (0.69314718f +
                   f * (0.24022651f + f * (0.05550411f + f * (0.00898934f + f * 0.00187757f))));
    union {
        uint32_t u;
        float f32;
    } bits;
    bits.u = static_cast<uint32_t>(static_cast<int32_t>(fi) + 127) << 23;
    return x < -87.0f ? 0.0f : bits.f32 * p;
}

}  // namespace

Precision default_precision() { return g_precision; }
void set_default_precision(Precision p) { g_precision = p; }

Buffer::Buffer(size_t n, Precision p) : prec_(p), size_(n) {
    if (p == Precision::f32)
        f32_.assign(n, 0.0f);
    else
        f64_.assign(n, 0.0);
}

void Buffer::fill(double v) {
    if (prec_ == Precision::f32)
        std::fill(f32_.begin(), f32_.end(), static_cast<float>(v));
    else
        std::fill(f64_.begin(), f64_.end(), v);
}

Buffer &TensorNode::grad_buffer() {
    if (!grad_alloc) {
        grad = Buffer(value.size(), value.precision());
        grad_alloc = true;
    }
    return grad;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

std::string shape_str(const std::vector<int> &shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); i++) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(const std::vector<int> &shape, bool requires_grad) {
    auto n = make_node(shape, g_precision);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::full(const std::vector<int> &shape, double v, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    t.values().fill(v);
    return t;
}

Tensor Tensor::from_vector(const std::vector<int> &shape, const std::vector<double> &data,
                           bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw dimension_error("from_vector: shape " + shape_str(shape) + " wants " +
                              std::to_string(shape_numel(shape)) + " values, got " +
                              std::to_string(data.size()));
    Tensor t = zeros(shape, requires_grad);
    for (size_t i = 0; i < data.size(); i++) t.values().set(i, data[i]);
    return t;
}

Tensor Tensor::randn(const std::vector<int> &shape, Rng &rng, double stddev, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    for (size_t i = 0; i < t.numel(); i++) t.values().set(i, rng.normal() * stddev);
    return t;
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(numel());
    for (size_t i = 0; i < out.size(); i++) out[i] = get(i);
    return out;
}

double Tensor::grad_at(size_t i) const { return node_->grad_buffer().get(i); }

void Tensor::zero_grad() {
    if (node_->grad_alloc) node_->grad.fill(0.0);
}

Tape Tape::from(TensorNode *root) {
    Tape tape;
    std::unordered_set<TensorNode *> seen;
    std::vector<TensorNode *> stack{root};
    seen.insert(root);
    while (!stack.empty()) {
        TensorNode *n = stack.back();
        stack.pop_back();
        tape.order.push_back(n);
        for (const auto &p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(tape.order.begin(), tape.order.end(),
              [](const TensorNode *a, const TensorNode *b) { return a->seq < b->seq; });
    return tape;
}

void backward(const Tensor &loss) {
    if (loss.numel() != 1)
        throw contract_error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    TensorNode *root = loss.node();
    if (!root->requires_grad) return;
    Tape tape = Tape::from(root);
    // Leaf gradients persist (and therefore accumulate across calls);
    // interior gradients are per-sweep scratch.
    for (TensorNode *n : tape.order)
        if (n->backprop) n->grad_buffer().fill(0.0);
    root->grad_buffer().set(0, root->backprop ? 1.0 : root->grad_buffer().get(0) + 1.0);
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

// ---- operations ----

Tensor matmul(const Tensor &a, const Tensor &b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw dimension_error("matmul: need 2-D operands, got " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
    if (a.cols() != b.rows())
        throw dimension_error("matmul " + shape_str(a.shape()) + "·" + shape_str(b.shape()) +
                              ": inner extents disagree");
    check_same_precision(a, b, "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node({m, n}, a.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        matmul_acc<T>(buf_cptr<T>(a.values()), buf_cptr<T>(b.values()), buf_ptr<T>(out->value), m, k, n);
    });
    auto an = a.shared_node(), bn = b.shared_node();
    TensorNode *o = out.get();
    attach(out, {an, bn}, [an, bn, o, m, k, n]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *gout = buf_cptr<T>(o->grad);
            if (an->requires_grad) {
                // dA += dC·Bᵀ, via a transposed copy so the inner loop stays unit-stride
                const T *bval = buf_cptr<T>(bn->value);
                std::vector<T> bt(static_cast<size_t>(n) * k);
                for (int r = 0; r < k; r++)
                    for (int c = 0; c < n; c++)
                        bt[static_cast<size_t>(c) * k + r] = bval[static_cast<size_t>(r) * n + c];
                matmul_acc<T>(gout, bt.data(), buf_ptr<T>(an->grad_buffer()), m, n, k);
            }
            if (bn->requires_grad)
                matmul_tn_acc<T>(buf_cptr<T>(an->value), gout, buf_ptr<T>(bn->grad_buffer()), m, k, n);
        });
    });
    return Tensor(out);
}

Tensor transpose(const Tensor &x) {
    if (x.shape().size() != 2)
        throw dimension_error("transpose: need 2-D, got " + shape_str(x.shape()));
    const int m = x.rows(), n = x.cols();
    auto out = make_node({n, m}, x.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *src = buf_cptr<T>(x.values());
        T *dst = buf_ptr<T>(out->value);
        for (int i = 0; i < m; i++)
            for (int j = 0; j < n; j++)
                dst[static_cast<size_t>(j) * m + i] = src[static_cast<size_t>(i) * n + j];
    });
    auto xn = x.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn}, [xn, o, m, n]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *gout = buf_cptr<T>(o->grad);
            T *gx = buf_ptr<T>(xn->grad_buffer());
            for (int j = 0; j < n; j++)
                for (int i = 0; i < m; i++)
                    gx[static_cast<size_t>(i) * n + j] += gout[static_cast<size_t>(j) * m + i];
        });
    });
    return Tensor(out);
}

Tensor add(const Tensor &a, const Tensor &b) {
    if (a.shape() != b.shape())
        throw dimension_error("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
    check_same_precision(a, b, "add");
    auto out = make_node(a.shape(), a.values().precision());
    const size_t n = out->numel();
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *pa = buf_cptr<T>(a.values()), *pb = buf_cptr<T>(b.values());
        T *po = buf_ptr<T>(out->value);
        for (size_t i = 0; i < n; i++) po[i] = pa[i] + pb[i];
    });
    auto an = a.shared_node(), bn = b.shared_node();
    TensorNode *o = out.get();
    attach(out, {an, bn}, [an, bn, o, n]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            if (an->requires_grad) {
                T *ga = buf_ptr<T>(an->grad_buffer());
                for (size_t i = 0; i < n; i++) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                T *gb = buf_ptr<T>(bn->grad_buffer());
                for (size_t i = 0; i < n; i++) gb[i] += g[i];
            }
        });
    });
    return Tensor(out);
}

Tensor add_rowvec(const Tensor &m, const Tensor &row) {
    if (m.shape().size() != 2 || row.numel() != static_cast<size_t>(m.cols()))
        throw dimension_error("add_rowvec: " + shape_str(m.shape()) + " + " + shape_str(row.shape()));
    check_same_precision(m, row, "add_rowvec");
    const int r = m.rows(), c = m.cols();
    auto out = make_node(m.shape(), m.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *pm = buf_cptr<T>(m.values()), *pv = buf_cptr<T>(row.values());
        T *po = buf_ptr<T>(out->value);
        for (int i = 0; i < r; i++)
            for (int j = 0; j < c; j++)
                po[static_cast<size_t>(i) * c + j] = pm[static_cast<size_t>(i) * c + j] + pv[j];
    });
    auto mn = m.shared_node(), vn = row.shared_node();
    TensorNode *o = out.get();
    attach(out, {mn, vn}, [mn, vn, o, r, c]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            if (mn->requires_grad) {
                T *gm = buf_ptr<T>(mn->grad_buffer());
                const size_t n = static_cast<size_t>(r) * c;
                for (size_t i = 0; i < n; i++) gm[i] += g[i];
            }
            if (vn->requires_grad) {
                T *gv = buf_ptr<T>(vn->grad_buffer());
                for (int i = 0; i < r; i++)
                    for (int j = 0; j < c; j++) gv[j] += g[static_cast<size_t>(i) * c + j];
            }
        });
    });
    return Tensor(out);
}

Tensor mul(const Tensor &a, const Tensor &b) {
    if (a.shape() != b.shape())
        throw dimension_error("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
    check_same_precision(a, b, "mul");
    auto out = make_node(a.shape(), a.values().precision());
    const size_t n = out->numel();
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *pa = buf_cptr<T>(a.values()), *pb = buf_cptr<T>(b.values());
        T *po = buf_ptr<T>(out->value);
        for (size_t i = 0; i < n; i++) po[i] = pa[i] * pb[i];
    });
    auto an = a.shared_node(), bn = b.shared_node();
    TensorNode *o = out.get();
    attach(out, {an, bn}, [an, bn, o, n]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            const T *pa = buf_cptr<T>(an->value), *pb = buf_cptr<T>(bn->value);
            if (an->requires_grad) {
                T *ga = buf_ptr<T>(an->grad_buffer());
                for (size_t i = 0; i < n; i++) ga[i] += g[i] * pb[i];
            }
            if (bn->requires_grad) {
                T *gb = buf_ptr<T>(bn->grad_buffer());
                for (size_t i = 0; i < n; i++) gb[i] += g[i] * pa[i];
            }
        });
    });
    return Tensor(out);
}

Tensor scale(const Tensor &x, double c) {
    auto out = make_node(x.shape(), x.values().precision());
    const size_t n = out->numel();
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T k = static_cast<T>(c);
        const T *px = buf_cptr<T>(x.values());
        T *po = buf_ptr<T>(out->value);
        for (size_t i = 0; i < n; i++) po[i] = k * px[i];
    });
    auto xn = x.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn}, [xn, o, c, n]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T k = static_cast<T>(c);
            const T *g = buf_cptr<T>(o->grad);
            T *gx = buf_ptr<T>(xn->grad_buffer());
            for (size_t i = 0; i < n; i++) gx[i] += k * g[i];
        });
    });
    return Tensor(out);
}

namespace {

// Row softmax with an optional per-column additive bias; normalizer summed
// in double so each slice sums to 1 to ~1e-7 even in f32 mode.
Tensor softmax_rows_impl(const Tensor &x, const std::vector<double> *col_bias) {
    const int r = x.shape().size() == 2 ? x.rows() : 1;
    const int c = x.shape().size() == 2 ? x.cols() : static_cast<int>(x.numel());
    if (col_bias && col_bias->size() != static_cast<size_t>(c))
        throw dimension_error("softmax bias length " + std::to_string(col_bias->size()) +
                              " vs row width " + std::to_string(c));
    auto out = make_node(x.shape(), x.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *px = buf_cptr<T>(x.values());
        T *po = buf_ptr<T>(out->value);
        for (int i = 0; i < r; i++) {
            const T *row = px + static_cast<size_t>(i) * c;
            T *orow = po + static_cast<size_t>(i) * c;
            double mx = -1e300;
            for (int j = 0; j < c; j++) {
                double v = static_cast<double>(row[j]) + (col_bias ? (*col_bias)[j] : 0.0);
                mx = std::max(mx, v);
            }
            // exponentials in T, normalizer accumulated in double so every
            // slice sums to 1 within rounding of its entries
            double sum = 0.0;
            const T tmx = static_cast<T>(mx);
            for (int j = 0; j < c; j++) {
                T v = col_bias ? static_cast<T>(static_cast<double>(row[j]) + (*col_bias)[j]) : row[j];
                T e = op_exp(static_cast<T>(v - tmx));
                orow[j] = e;
                sum += static_cast<double>(e);
            }
            const double inv = 1.0 / sum;
            for (int j = 0; j < c; j++)
                orow[j] = static_cast<T>(static_cast<double>(orow[j]) * inv);
        }
    });
    auto xn = x.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn}, [xn, o, r, c]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            const T *p = buf_cptr<T>(o->value);
            T *gx = buf_ptr<T>(xn->grad_buffer());
            for (int i = 0; i < r; i++) {
                const T *grow = g + static_cast<size_t>(i) * c;
                const T *prow = p + static_cast<size_t>(i) * c;
                T *gxrow = gx + static_cast<size_t>(i) * c;
                double dot = 0.0;
                for (int j = 0; j < c; j++) dot += static_cast<double>(grow[j]) * prow[j];
                for (int j = 0; j < c; j++)
                    gxrow[j] += prow[j] * (grow[j] - static_cast<T>(dot));
            }
        });
    });
    return Tensor(out);
}

}  // namespace

Tensor softmax(const Tensor &x, int axis) {
    const int nd = static_cast<int>(x.shape().size());
    if (nd > 2) throw dimension_error("softmax: only 1-D/2-D supported, got " + shape_str(x.shape()));
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw dimension_error("softmax: axis out of range");
    if (nd <= 1 || axis == 1) return softmax_rows_impl(x, nullptr);
    // column softmax via transposes; rare path, clarity over speed
    return transpose(softmax_rows_impl(transpose(x), nullptr));
}

Tensor softmax_rows_biased(const Tensor &x, const std::vector<double> &col_bias) {
    return softmax_rows_impl(x, &col_bias);
}

Tensor cross_entropy_logits(const Tensor &logits, const std::vector<int> &targets) {
    if (logits.shape().size() != 2)
        throw dimension_error("cross_entropy_logits: need [BxV] logits, got " +
                              shape_str(logits.shape()));
    const int b = logits.rows(), v = logits.cols();
    if (targets.size() != static_cast<size_t>(b))
        throw dimension_error("cross_entropy_logits: " + std::to_string(targets.size()) +
                              " targets for " + std::to_string(b) + " rows");
    for (int t : targets)
        if (t < 0 || t >= v)
            throw index_error("cross_entropy_logits: target " + std::to_string(t) +
                              " outside [0, " + std::to_string(v) + ")");
    auto out = make_node({1}, logits.values().precision());
    // softmax probabilities cached for the backward pass
    auto probs = std::make_shared<Buffer>(static_cast<size_t>(b) * v, logits.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *pl = buf_cptr<T>(logits.values());
        T *pp = buf_ptr<T>(*probs);
        double total = 0.0;
        for (int i = 0; i < b; i++) {
            const T *row = pl + static_cast<size_t>(i) * v;
            T *prow = pp + static_cast<size_t>(i) * v;
            T mx = row[0];
            for (int j = 1; j < v; j++) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (int j = 0; j < v; j++) {
                T e = op_exp(static_cast<T>(row[j] - mx));
                prow[j] = e;
                sum += static_cast<double>(e);
            }
            const double inv = 1.0 / sum;
            for (int j = 0; j < v; j++)
                prow[j] = static_cast<T>(static_cast<double>(prow[j]) * inv);
            total += std::log(sum) + static_cast<double>(mx) - static_cast<double>(row[targets[i]]);
        }
        buf_ptr<T>(out->value)[0] = static_cast<T>(total / b);
    });
    auto ln = logits.shared_node();
    TensorNode *o = out.get();
    attach(out, {ln}, [ln, o, probs, targets, b, v]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T up = buf_cptr<T>(o->grad)[0];
            const T invb = static_cast<T>(1.0 / b);
            const T *pp = buf_cptr<T>(*probs);
            T *gl = buf_ptr<T>(ln->grad_buffer());
            for (int i = 0; i < b; i++) {
                const T *prow = pp + static_cast<size_t>(i) * v;
                T *grow = gl + static_cast<size_t>(i) * v;
                for (int j = 0; j < v; j++) grow[j] += up * invb * prow[j];
                grow[targets[i]] -= up * invb;
            }
        });
    });
    return Tensor(out);
}

Tensor layer_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta, double eps) {
    const int nd = static_cast<int>(x.shape().size());
    const int r = nd == 2 ? x.rows() : 1;
    const int c = nd == 2 ? x.cols() : static_cast<int>(x.numel());
    if (gamma.numel() != static_cast<size_t>(c) || beta.numel() != static_cast<size_t>(c))
        throw dimension_error("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                              shape_str(beta.shape()) + " vs width " + std::to_string(c));
    check_same_precision(x, gamma, "layer_norm");
    auto out = make_node(x.shape(), x.values().precision());
    // normalized activations and per-row 1/σ, cached for backward
    auto xhat = std::make_shared<Buffer>(static_cast<size_t>(r) * c, x.values().precision());
    auto inv_std = std::make_shared<std::vector<double>>(r);
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *px = buf_cptr<T>(x.values());
        const T *pg = buf_cptr<T>(gamma.values());
        const T *pb = buf_cptr<T>(beta.values());
        T *po = buf_ptr<T>(out->value);
        T *ph = buf_ptr<T>(*xhat);
        for (int i = 0; i < r; i++) {
            const T *row = px + static_cast<size_t>(i) * c;
            double mean = 0.0;
            for (int j = 0; j < c; j++) mean += row[j];
            mean /= c;
            double var = 0.0;
            for (int j = 0; j < c; j++) {
                double d = row[j] - mean;
                var += d * d;
            }
            var /= c;
            double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[i] = is;
            T *hrow = ph + static_cast<size_t>(i) * c;
            T *orow = po + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; j++) {
                hrow[j] = static_cast<T>((row[j] - mean) * is);
                orow[j] = hrow[j] * pg[j] + pb[j];
            }
        }
    });
    auto xn = x.shared_node(), gn = gamma.shared_node(), bn = beta.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn, gn, bn}, [xn, gn, bn, o, xhat, inv_std, r, c]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            const T *ph = buf_cptr<T>(*xhat);
            const T *pg = buf_cptr<T>(gn->value);
            for (int i = 0; i < r; i++) {
                const T *grow = g + static_cast<size_t>(i) * c;
                const T *hrow = ph + static_cast<size_t>(i) * c;
                if (gn->requires_grad) {
                    T *gg = buf_ptr<T>(gn->grad_buffer());
                    for (int j = 0; j < c; j++) gg[j] += grow[j] * hrow[j];
                }
                if (bn->requires_grad) {
                    T *gb = buf_ptr<T>(bn->grad_buffer());
                    for (int j = 0; j < c; j++) gb[j] += grow[j];
                }
                if (xn->requires_grad) {
                    double m1 = 0.0, m2 = 0.0;  // mean(dy·γ), mean(dy·γ·x̂)
                    for (int j = 0; j < c; j++) {
                        double dg = static_cast<double>(grow[j]) * pg[j];
                        m1 += dg;
                        m2 += dg * hrow[j];
                    }
                    m1 /= c;
                    m2 /= c;
                    T *gx = buf_ptr<T>(xn->grad_buffer());
                    T *gxrow = gx + static_cast<size_t>(i) * c;
                    const double is = (*inv_std)[i];
                    for (int j = 0; j < c; j++) {
                        double dg = static_cast<double>(grow[j]) * pg[j];
                        gxrow[j] += static_cast<T>(is * (dg - m1 - hrow[j] * m2));
                    }
                }
            }
        });
    });
    return Tensor(out);
}

Tensor gelu(const Tensor &x) {
    constexpr double kC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    auto out = make_node(x.shape(), x.values().precision());
    const size_t n = out->numel();
    auto tanh_u = std::make_shared<Buffer>(n, x.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *px = buf_cptr<T>(x.values());
        T *po = buf_ptr<T>(out->value);
        T *pt = buf_ptr<T>(*tanh_u);
        for (size_t i = 0; i < n; i++) {
            T v = px[i];
            T t = op_tanh(static_cast<T>(static_cast<T>(kC) * (v + static_cast<T>(kA) * v * v * v)));
            pt[i] = t;
            po[i] = static_cast<T>(0.5) * v * (static_cast<T>(1) + t);
        }
    });
    auto xn = x.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn}, [xn, o, tanh_u, n]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            const T *px = buf_cptr<T>(xn->value);
            const T *pt = buf_cptr<T>(*tanh_u);
            T *gx = buf_ptr<T>(xn->grad_buffer());
            for (size_t i = 0; i < n; i++) {
                T v = px[i], t = pt[i];
                T du = static_cast<T>(kC) * (static_cast<T>(1) + static_cast<T>(3.0 * kA) * v * v);
                T d = static_cast<T>(0.5) * (static_cast<T>(1) + t) +
                      static_cast<T>(0.5) * v * (static_cast<T>(1) - t * t) * du;
                gx[i] += g[i] * d;
            }
        });
    });
    return Tensor(out);
}

Tensor gather_rows(const Tensor &x, const std::vector<int> &ids) {
    if (x.shape().size() != 2)
        throw dimension_error("gather_rows: need 2-D table, got " + shape_str(x.shape()));
    const int r = x.rows(), c = x.cols();
    for (int id : ids)
        if (id < 0 || id >= r)
            throw index_error("gather_rows: row " + std::to_string(id) + " outside [0, " +
                              std::to_string(r) + ")");
    auto out = make_node({static_cast<int>(ids.size()), c}, x.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *px = buf_cptr<T>(x.values());
        T *po = buf_ptr<T>(out->value);
        for (size_t i = 0; i < ids.size(); i++)
            std::copy_n(px + static_cast<size_t>(ids[i]) * c, c, po + i * c);
    });
    auto xn = x.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn}, [xn, o, ids, c]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            T *gx = buf_ptr<T>(xn->grad_buffer());
            for (size_t i = 0; i < ids.size(); i++) {
                T *dst = gx + static_cast<size_t>(ids[i]) * c;
                const T *src = g + i * c;
                for (int j = 0; j < c; j++) dst[j] += src[j];
            }
        });
    });
    return Tensor(out);
}

Tensor concat_rows(const Tensor &a, const Tensor &b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.cols())
        throw dimension_error("concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    check_same_precision(a, b, "concat_rows");
    const int c = a.cols(), ra = a.rows(), rb = b.rows();
    auto out = make_node({ra + rb, c}, a.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        T *po = buf_ptr<T>(out->value);
        std::copy_n(buf_cptr<T>(a.values()), static_cast<size_t>(ra) * c, po);
        std::copy_n(buf_cptr<T>(b.values()), static_cast<size_t>(rb) * c, po + static_cast<size_t>(ra) * c);
    });
    auto an = a.shared_node(), bn = b.shared_node();
    TensorNode *o = out.get();
    attach(out, {an, bn}, [an, bn, o, ra, rb, c]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            if (an->requires_grad) {
                T *ga = buf_ptr<T>(an->grad_buffer());
                for (size_t i = 0; i < static_cast<size_t>(ra) * c; i++) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                T *gb = buf_ptr<T>(bn->grad_buffer());
                const T *gtail = g + static_cast<size_t>(ra) * c;
                for (size_t i = 0; i < static_cast<size_t>(rb) * c; i++) gb[i] += gtail[i];
            }
        });
    });
    return Tensor(out);
}

Tensor slice_cols(const Tensor &x, int c0, int c1) {
    if (x.shape().size() != 2 || c0 < 0 || c1 > x.cols() || c0 >= c1)
        throw dimension_error("slice_cols [" + std::to_string(c0) + ", " + std::to_string(c1) +
                              ") of " + shape_str(x.shape()));
    const int r = x.rows(), c = x.cols(), w = c1 - c0;
    auto out = make_node({r, w}, x.values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *px = buf_cptr<T>(x.values());
        T *po = buf_ptr<T>(out->value);
        for (int i = 0; i < r; i++)
            std::copy_n(px + static_cast<size_t>(i) * c + c0, w, po + static_cast<size_t>(i) * w);
    });
    auto xn = x.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn}, [xn, o, r, c, c0, w]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T *g = buf_cptr<T>(o->grad);
            T *gx = buf_ptr<T>(xn->grad_buffer());
            for (int i = 0; i < r; i++) {
                T *dst = gx + static_cast<size_t>(i) * c + c0;
                const T *src = g + static_cast<size_t>(i) * w;
                for (int j = 0; j < w; j++) dst[j] += src[j];
            }
        });
    });
    return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor> &parts) {
    if (parts.empty()) throw dimension_error("concat_cols: no parts");
    const int r = parts[0].rows();
    int total = 0;
    for (const auto &p : parts) {
        if (p.shape().size() != 2 || p.rows() != r)
            throw dimension_error("concat_cols: row mismatch at " + shape_str(p.shape()));
        total += p.cols();
    }
    auto out = make_node({r, total}, parts[0].values().precision());
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        T *po = buf_ptr<T>(out->value);
        int off = 0;
        for (const auto &p : parts) {
            const T *pp = buf_cptr<T>(p.values());
            const int w = p.cols();
            for (int i = 0; i < r; i++)
                std::copy_n(pp + static_cast<size_t>(i) * w, w,
                            po + static_cast<size_t>(i) * total + off);
            off += w;
        }
    });
    std::vector<std::shared_ptr<TensorNode>> pnodes;
    for (const auto &p : parts) pnodes.push_back(p.shared_node());
    bool any = false;
    for (const auto &p : pnodes) any = any || p->requires_grad;
    if (grad_enabled() && any) {
        out->requires_grad = true;
        out->parents = pnodes;
        TensorNode *o = out.get();
        out->backprop = [pnodes, o, r, total]() {
            with_prec(o->value.precision(), [&](auto tag) {
                using T = decltype(tag);
                const T *g = buf_cptr<T>(o->grad);
                int off = 0;
                for (const auto &p : pnodes) {
                    const int w = p->shape[1];
                    if (p->requires_grad) {
                        T *gp = buf_ptr<T>(p->grad_buffer());
                        for (int i = 0; i < r; i++) {
                            const T *src = g + static_cast<size_t>(i) * total + off;
                            T *dst = gp + static_cast<size_t>(i) * w;
                            for (int j = 0; j < w; j++) dst[j] += src[j];
                        }
                    }
                    off += w;
                }
            });
        };
    }
    return Tensor(out);
}

Tensor sum_all(const Tensor &x) {
    auto out = make_node({1}, x.values().precision());
    const size_t n = x.numel();
    with_prec(out->value.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T *px = buf_cptr<T>(x.values());
        double s = 0.0;
        for (size_t i = 0; i < n; i++) s += px[i];
        buf_ptr<T>(out->value)[0] = static_cast<T>(s);
    });
    auto xn = x.shared_node();
    TensorNode *o = out.get();
    attach(out, {xn}, [xn, o, n]() {
        with_prec(o->value.precision(), [&](auto tag) {
            using T = decltype(tag);
            const T g = buf_cptr<T>(o->grad)[0];
            T *gx = buf_ptr<T>(xn->grad_buffer());
            for (size_t i = 0; i < n; i++) gx[i] += g;
        });
    });
    return Tensor(out);
}

}  // namespace gridfill
