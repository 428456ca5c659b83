#include "gridfill/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gridfill/model.hpp"

namespace gridfill {

double max_grad_rel_error(const std::function<Tensor()> &make_loss, const std::vector<Tensor> &leaves,
                          double h, double floor) {
    for (auto leaf : leaves) leaf.zero_grad();
    Tensor loss = make_loss();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto &leaf : leaves) {
        std::vector<double> g(leaf.numel());
        for (size_t i = 0; i < g.size(); i++) g[i] = leaf.grad_at(i);
        analytic.push_back(std::move(g));
    }

    double worst = 0.0;
    NoGradGuard ng;
    for (size_t li = 0; li < leaves.size(); li++) {
        Tensor leaf = leaves[li];
        for (size_t i = 0; i < leaf.numel(); i++) {
            const double v = leaf.get(i);
            leaf.set(i, v + h);
            const double fp = make_loss().get(0);
            leaf.set(i, v - h);
            const double fm = make_loss().get(0);
            leaf.set(i, v);
            const double fd = (fp - fm) / (2.0 * h);
            const double a = analytic[li][i];
            const double denom = std::max({std::abs(a), std::abs(fd), floor});
            worst = std::max(worst, std::abs(a - fd) / denom);
        }
    }
    return worst;
}

namespace {

Tensor randt(const std::vector<int> &shape, Rng &rng, bool rq = true) {
    return Tensor::randn(shape, rng, 1.0, rq);
}

double check_matmul(uint64_t seed) {
    Rng rng(seed);
    Tensor a = randt({3, 4}, rng), b = randt({4, 2}, rng);
    return max_grad_rel_error([&]() { return sum_all(matmul(a, b)); }, {a, b});
}

double check_softmax(uint64_t seed) {
    Rng rng(seed);
    Tensor x = randt({4, 6}, rng);
    // fixed weights make every output element matter; frozen so repeated
    // forward evaluations compute the same function
    Tensor w = randt({4, 6}, rng, false);
    return max_grad_rel_error([&]() { return sum_all(mul(softmax(x, 1), w)); }, {x});
}

double check_cross_entropy(uint64_t seed) {
    Rng rng(seed);
    Tensor logits = randt({5, 7}, rng);
    std::vector<int> targets;
    for (int i = 0; i < 5; i++) targets.push_back(static_cast<int>(rng.uniform_int(7)));
    return max_grad_rel_error([&]() { return cross_entropy_logits(logits, targets); }, {logits});
}

double check_layer_norm(uint64_t seed) {
    Rng rng(seed);
    Tensor x = randt({3, 8}, rng);
    Tensor g = randt({8}, rng), b = randt({8}, rng);
    Tensor w = randt({3, 8}, rng, false);
    return max_grad_rel_error([&]() { return sum_all(mul(layer_norm(x, g, b), w)); }, {x, g, b});
}

double check_gelu(uint64_t seed) {
    Rng rng(seed);
    Tensor x = randt({4, 5}, rng);
    Tensor w = randt({4, 5}, rng, false);
    return max_grad_rel_error([&]() { return sum_all(mul(gelu(x), w)); }, {x});
}

double check_lookup(uint64_t seed) {
    Rng rng(seed);
    Tensor table = randt({6, 4}, rng);
    std::vector<int> ids = {1, 3, 1, 5, 0};  // repeats exercise accumulation
    Tensor w = randt({5, 4}, rng, false);
    return max_grad_rel_error([&]() { return sum_all(mul(embedding_lookup(table, ids), w)); },
                              {table});
}

double check_elementwise(uint64_t seed) {
    Rng rng(seed);
    Tensor a = randt({3, 5}, rng), b = randt({3, 5}, rng);
    Tensor w = randt({3, 5}, rng, false);
    return max_grad_rel_error([&]() { return sum_all(mul(add(mul(a, b), a), w)); }, {a, b});
}

double check_micro_model(uint64_t seed) {
    Model model(micro_config(), seed);
    Rng rng(seed ^ 0x77);
    // Re-randomize away from the init point: freshly initialized layers see
    // near-constant rows whose layer-norm 1/sigma curvature swamps h=1e-3
    // central differences. A generic random point conditions the check.
    for (auto &[name, p] : model.named_params()) {
        const bool is_ln_scale = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
        for (size_t i = 0; i < p.numel(); i++)
            p.set(i, is_ln_scale ? 1.0 + 0.2 * rng.normal() : 0.3 * rng.normal());
    }
    const auto &cfg = model.config();
    Image img(cfg.image_side, cfg.image_side);
    for (auto &v : img.data()) v = static_cast<float>(rng.uniform());
    std::vector<bool> mask(static_cast<size_t>(cfg.n_tokens()), false);
    mask[1] = mask[2] = true;
    TextPrompt prompt = model.text().tokenize("black and white segmentation of a red circle");
    TokenGrid targets = model.codebook().encode_image(img);
    return max_grad_rel_error([&]() { return model.loss(img, mask, prompt, targets); },
                              model.params());
}

}  // namespace

std::vector<OpCheck> run_gradcheck_suite(int n_seeds) {
    PrecisionGuard f64(Precision::f64);
    struct Entry {
        const char *name;
        double (*fn)(uint64_t);
        double tol;
    };
    const Entry entries[] = {
        {"matmul", check_matmul, 1e-6},
        {"softmax", check_softmax, 1e-3},
        {"cross_entropy_logits", check_cross_entropy, 1e-3},
        {"layer_norm", check_layer_norm, 1e-3},
        {"gelu", check_gelu, 1e-3},
        {"embedding_lookup", check_lookup, 1e-3},
        {"elementwise", check_elementwise, 1e-3},
        {"micro_model", check_micro_model, 1e-3},
    };
    std::vector<OpCheck> out;
    for (const auto &e : entries) {
        OpCheck c;
        c.name = e.name;
        c.tolerance = e.tol;
        for (int s = 0; s < n_seeds; s++)
            c.max_rel_err = std::max(c.max_rel_err, e.fn(1000 + static_cast<uint64_t>(s)));
        c.pass = c.max_rel_err < c.tolerance;
        out.push_back(std::move(c));
    }
    return out;
}

bool gradcheck_ok(const std::vector<OpCheck> &checks) {
    return std::all_of(checks.begin(), checks.end(), [](const OpCheck &c) { return c.pass; });
}

}  // namespace gridfill
