#include "gridfill/model.hpp"

#include <cmath>

#include "gridfill/errors.hpp"

namespace gridfill {

namespace {
constexpr double kAttnMaskBias = -1e30;
}

void ModelConfig::validate() const {
    if (d_model % n_heads != 0)
        throw contract_error("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                             std::to_string(n_heads));
    if (image_side % patch_side != 0)
        throw contract_error("image_side " + std::to_string(image_side) +
                             " not divisible by patch_side " + std::to_string(patch_side));
    if (enc_depth < 1 || dec_depth < 1) throw contract_error("need at least one block per stack");
    if (codebook_levels < 2) throw contract_error("codebook_levels must be >= 2");
}

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.enc_depth = 1;
    cfg.dec_depth = 1;
    cfg.patch_side = 4;
    cfg.image_side = 8;
    cfg.mlp_ratio = 4;
    cfg.codebook_levels = 2;  // vocab 8
    cfg.d_text = 8;
    return cfg;
}

Tensor patchify(const Image &img, int patch_side) {
    if (img.height() % patch_side != 0 || img.width() % patch_side != 0)
        throw dimension_error("patchify: " + std::to_string(img.height()) + "x" +
                              std::to_string(img.width()) + " not divisible by " +
                              std::to_string(patch_side));
    const int th = img.height() / patch_side, tw = img.width() / patch_side;
    const int pd = patch_side * patch_side * 3;
    Tensor out = Tensor::zeros({th * tw, pd});
    size_t idx = 0;
    for (int ty = 0; ty < th; ty++)
        for (int tx = 0; tx < tw; tx++)
            for (int py = 0; py < patch_side; py++)
                for (int px = 0; px < patch_side; px++)
                    for (int c = 0; c < 3; c++)
                        out.set(idx++, img.at(ty * patch_side + py, tx * patch_side + px, c));
    return out;
}

Model::Model(const ModelConfig &cfg, uint64_t seed)
    : cfg_(cfg), text_(cfg.d_text), codebook_(cfg.codebook_levels, cfg.patch_side) {
    cfg_.validate();
    Rng rng(seed);
    const int d = cfg_.d_model, pd = cfg_.patch_dim(), n = cfg_.n_tokens();
    const int hidden = d * cfg_.mlp_ratio, v = cfg_.vocab_size();
    const double std = 0.02;

    auto weight = [&](int r, int c) { return Tensor::randn({r, c}, rng, std, true); };
    auto bias = [&](int c) { return Tensor::zeros({c}, true); };
    auto ones = [&](int c) { return Tensor::full({c}, 1.0, true); };

    patch_embed_w_ = weight(pd, d);
    patch_embed_b_ = bias(d);
    enc_pos_ = weight(n, d);
    dec_pos_ = weight(n, d);
    mask_token_ = weight(1, d);
    text_proj_w_ = weight(cfg_.d_text, d);
    text_proj_b_ = bias(d);

    auto make_block = [&]() {
        BlockParams b;
        b.ln1_g = ones(d);
        b.ln1_b = bias(d);
        b.wq = weight(d, d);
        b.wk = weight(d, d);
        b.wv = weight(d, d);
        b.wo = weight(d, d);
        b.bq = bias(d);
        b.bk = bias(d);
        b.bv = bias(d);
        b.bo = bias(d);
        b.lnx_g = ones(d);
        b.lnx_b = bias(d);
        b.xq_w = weight(d, d);
        b.xq_b = bias(d);
        b.xk_w = weight(d, d);
        b.xk_b = bias(d);
        b.xv_w = weight(d, d);
        b.xv_b = bias(d);
        b.xo_w = weight(d, d);
        b.xo_b = bias(d);
        b.ln2_g = ones(d);
        b.ln2_b = bias(d);
        b.mlp_w1 = weight(d, hidden);
        b.mlp_b1 = bias(hidden);
        b.mlp_w2 = weight(hidden, d);
        b.mlp_b2 = bias(d);
        return b;
    };
    for (int i = 0; i < cfg_.enc_depth; i++) enc_blocks_.push_back(make_block());
    for (int i = 0; i < cfg_.dec_depth; i++) dec_blocks_.push_back(make_block());
    final_ln_g_ = ones(d);
    final_ln_b_ = bias(d);
    head_w_ = weight(d, v);
    head_b_ = bias(v);
}

namespace {

// q [Tq x d] attends over k/v [Tk x d]; col_bias masks padded key columns.
Tensor multihead_attention(const Tensor &q, const Tensor &k, const Tensor &v, int n_heads,
                           const std::vector<double> *col_bias, AttnTrace *trace, bool is_cross) {
    const int d = q.cols();
    const int dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; h++) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        Tensor probs = col_bias ? softmax_rows_biased(scores, *col_bias) : softmax(scores, 1);
        if (trace) {
            AttnTrace::Mat m;
            m.rows = probs.rows();
            m.cols = probs.cols();
            m.is_cross = is_cross;
            m.probs = probs.to_vector();
            trace->mats.push_back(std::move(m));
        }
        heads.push_back(matmul(probs, vh));
    }
    return concat_cols(heads);
}

}  // namespace

Tensor Model::attn_sublayer(const Tensor &x, const BlockParams &b) const {
    Tensor h = layer_norm(x, b.ln1_g, b.ln1_b);
    Tensor q = add_rowvec(matmul(h, b.wq), b.bq);
    Tensor k = add_rowvec(matmul(h, b.wk), b.bk);
    Tensor v = add_rowvec(matmul(h, b.wv), b.bv);
    Tensor o = multihead_attention(q, k, v, cfg_.n_heads, nullptr, trace_, false);
    return add(x, add_rowvec(matmul(o, b.wo), b.bo));
}

Tensor Model::cross_sublayer(const Tensor &x, const BlockParams &b, const Tensor &text_feats,
                             const std::vector<double> &text_bias) const {
    Tensor h = layer_norm(x, b.lnx_g, b.lnx_b);
    Tensor q = add_rowvec(matmul(h, b.xq_w), b.xq_b);
    Tensor k = add_rowvec(matmul(text_feats, b.xk_w), b.xk_b);
    Tensor v = add_rowvec(matmul(text_feats, b.xv_w), b.xv_b);
    Tensor o = multihead_attention(q, k, v, cfg_.n_heads, &text_bias, trace_, true);
    return add(x, add_rowvec(matmul(o, b.xo_w), b.xo_b));
}

Tensor Model::mlp_sublayer(const Tensor &x, const BlockParams &b) const {
    Tensor h = layer_norm(x, b.ln2_g, b.ln2_b);
    Tensor h1 = gelu(add_rowvec(matmul(h, b.mlp_w1), b.mlp_b1));
    return add(x, add_rowvec(matmul(h1, b.mlp_w2), b.mlp_b2));
}

Tensor Model::run_block(const Tensor &x, const BlockParams &b, const Tensor &text_feats,
                        const std::vector<double> &text_bias, bool use_cross) const {
    Tensor h = attn_sublayer(x, b);
    // With no text the cross sublayer is an exact identity: skip it so the
    // residual passes through bitwise.
    if (use_cross && text_feats.defined()) h = cross_sublayer(h, b, text_feats, text_bias);
    return mlp_sublayer(h, b);
}

Tensor Model::forward(const Image &img, const std::vector<bool> &mask, const TextPrompt &prompt,
                      AttnTrace *trace) const {
    if (img.height() != cfg_.image_side || img.width() != cfg_.image_side)
        throw dimension_error("forward: image " + std::to_string(img.height()) + "x" +
                              std::to_string(img.width()) + " vs configured side " +
                              std::to_string(cfg_.image_side));
    const int n = cfg_.n_tokens();
    if (static_cast<int>(mask.size()) != n)
        throw dimension_error("forward: mask has " + std::to_string(mask.size()) + " cells, want " +
                              std::to_string(n));
    std::vector<int> visible, masked;
    for (int i = 0; i < n; i++) (mask[static_cast<size_t>(i)] ? masked : visible).push_back(i);
    if (masked.empty()) throw contract_error("forward: mask selects no positions");
    if (visible.empty()) throw contract_error("forward: mask hides every position");

    trace_ = trace;

    Tensor text_feats;  // undefined when prompt is empty
    std::vector<double> text_bias;
    if (!prompt.empty) {
        text_feats = add_rowvec(matmul(text_.embed(prompt), text_proj_w_), text_proj_b_);
        // PAD keys are masked wherever they sit, not just as a suffix
        text_bias.assign(kTextLen, 0.0);
        for (int i = 0; i < kTextLen; i++)
            if (prompt.token_ids[static_cast<size_t>(i)] == kPadId)
                text_bias[static_cast<size_t>(i)] = kAttnMaskBias;
    }

    // encoder sees visible patches only
    Tensor patches = patchify(img, cfg_.patch_side);
    Tensor x = add_rowvec(matmul(gather_rows(patches, visible), patch_embed_w_), patch_embed_b_);
    x = add(x, gather_rows(enc_pos_, visible));
    const bool enc_cross = cfg_.cross_attn == CrossAttn::both;
    for (const auto &b : enc_blocks_) x = run_block(x, b, text_feats, text_bias, enc_cross);

    // decoder sees encoded visible tokens plus the mask token everywhere else
    Tensor cat = concat_rows(x, mask_token_);
    std::vector<int> source_row(static_cast<size_t>(n));
    for (size_t i = 0; i < visible.size(); i++) source_row[static_cast<size_t>(visible[i])] = static_cast<int>(i);
    for (int p : masked) source_row[static_cast<size_t>(p)] = static_cast<int>(visible.size());
    Tensor y = add(gather_rows(cat, source_row), dec_pos_);
    const bool dec_cross = cfg_.cross_attn != CrossAttn::off;
    for (const auto &b : dec_blocks_) y = run_block(y, b, text_feats, text_bias, dec_cross);

    y = layer_norm(y, final_ln_g_, final_ln_b_);
    Tensor logits = add_rowvec(matmul(gather_rows(y, masked), head_w_), head_b_);

    trace_ = nullptr;
    return logits;
}

Tensor Model::loss(const Image &img, const std::vector<bool> &mask, const TextPrompt &prompt,
                   const TokenGrid &targets) const {
    if (targets.h * targets.w != cfg_.n_tokens())
        throw dimension_error("loss: target grid " + std::to_string(targets.h) + "x" +
                              std::to_string(targets.w) + " vs " + std::to_string(cfg_.n_tokens()) +
                              " tokens");
    Tensor logits = forward(img, mask, prompt);
    std::vector<int> masked_targets;
    for (size_t i = 0; i < mask.size(); i++)
        if (mask[i]) masked_targets.push_back(targets.tokens[i]);
    return cross_entropy_logits(logits, masked_targets);
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("patch_embed.w", patch_embed_w_);
    out.emplace_back("patch_embed.b", patch_embed_b_);
    out.emplace_back("enc_pos", enc_pos_);
    out.emplace_back("dec_pos", dec_pos_);
    out.emplace_back("mask_token", mask_token_);
    out.emplace_back("text_proj.w", text_proj_w_);
    out.emplace_back("text_proj.b", text_proj_b_);
    auto add_block = [&out](const std::string &prefix, const BlockParams &b) {
        out.emplace_back(prefix + ".ln1.g", b.ln1_g);
        out.emplace_back(prefix + ".ln1.b", b.ln1_b);
        out.emplace_back(prefix + ".attn.wq", b.wq);
        out.emplace_back(prefix + ".attn.wk", b.wk);
        out.emplace_back(prefix + ".attn.wv", b.wv);
        out.emplace_back(prefix + ".attn.wo", b.wo);
        out.emplace_back(prefix + ".attn.bq", b.bq);
        out.emplace_back(prefix + ".attn.bk", b.bk);
        out.emplace_back(prefix + ".attn.bv", b.bv);
        out.emplace_back(prefix + ".attn.bo", b.bo);
        out.emplace_back(prefix + ".lnx.g", b.lnx_g);
        out.emplace_back(prefix + ".lnx.b", b.lnx_b);
        out.emplace_back(prefix + ".xattn.wq", b.xq_w);
        out.emplace_back(prefix + ".xattn.bq", b.xq_b);
        out.emplace_back(prefix + ".xattn.wk", b.xk_w);
        out.emplace_back(prefix + ".xattn.bk", b.xk_b);
        out.emplace_back(prefix + ".xattn.wv", b.xv_w);
        out.emplace_back(prefix + ".xattn.bv", b.xv_b);
        out.emplace_back(prefix + ".xattn.wo", b.xo_w);
        out.emplace_back(prefix + ".xattn.bo", b.xo_b);
        out.emplace_back(prefix + ".ln2.g", b.ln2_g);
        out.emplace_back(prefix + ".ln2.b", b.ln2_b);
        out.emplace_back(prefix + ".mlp.w1", b.mlp_w1);
        out.emplace_back(prefix + ".mlp.b1", b.mlp_b1);
        out.emplace_back(prefix + ".mlp.w2", b.mlp_w2);
        out.emplace_back(prefix + ".mlp.b2", b.mlp_b2);
    };
    for (size_t i = 0; i < enc_blocks_.size(); i++) add_block("enc" + std::to_string(i), enc_blocks_[i]);
    for (size_t i = 0; i < dec_blocks_.size(); i++) add_block("dec" + std::to_string(i), dec_blocks_[i]);
    out.emplace_back("final_ln.g", final_ln_g_);
    out.emplace_back("final_ln.b", final_ln_b_);
    out.emplace_back("head.w", head_w_);
    out.emplace_back("head.b", head_b_);
    return out;
}

std::vector<Tensor> Model::params() const {
    std::vector<Tensor> out;
    for (auto &[name, t] : named_params()) out.push_back(t);
    return out;
}

size_t Model::param_count() const {
    size_t n = 0;
    for (const auto &t : params()) n += t.numel();
    return n;
}

void Model::copy_params_from(const Model &other) {
    auto dst = params();
    auto src = other.params();
    if (dst.size() != src.size()) throw contract_error("copy_params_from: architecture mismatch");
    for (size_t i = 0; i < dst.size(); i++) {
        if (dst[i].shape() != src[i].shape())
            throw contract_error("copy_params_from: shape mismatch at parameter " + std::to_string(i));
        Buffer &d = dst[i].values();
        const Buffer &s = src[i].values();
        if (d.precision() == Precision::f32 && s.precision() == Precision::f32)
            std::copy_n(s.f32(), s.size(), d.f32());
        else
            for (size_t j = 0; j < s.size(); j++) d.set(j, s.get(j));
    }
}

std::vector<int> predict_tokens(const Tensor &logits) {
    const int r = logits.rows(), c = logits.cols();
    std::vector<int> out(static_cast<size_t>(r));
    for (int i = 0; i < r; i++) {
        int best = 0;
        double best_v = logits.get(static_cast<size_t>(i) * c);
        for (int j = 1; j < c; j++) {
            double v = logits.get(static_cast<size_t>(i) * c + j);
            if (v > best_v) {
                best_v = v;
                best = j;
            }
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

}  // namespace gridfill
