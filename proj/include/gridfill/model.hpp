#pragma once

#include <string>
#include <vector>

#include "gridfill/codebook.hpp"
#include "gridfill/image.hpp"
#include "gridfill/tensor.hpp"
#include "gridfill/textenc.hpp"

namespace gridfill {

// Where the text cross-attention sublayers are applied.
enum class CrossAttn { both, decoder_only, off };

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int enc_depth = 4;
    int dec_depth = 2;
    int patch_side = 8;
    int image_side = 64;
    int mlp_ratio = 4;
    int codebook_levels = 6;  // vocab = levels^3
    int d_text = 32;
    CrossAttn cross_attn = CrossAttn::both;

    int vocab_size() const { return codebook_levels * codebook_levels * codebook_levels; }
    int tokens_per_side() const { return image_side / patch_side; }
    int n_tokens() const { return tokens_per_side() * tokens_per_side(); }
    int patch_dim() const { return patch_side * patch_side * 3; }

    void validate() const;
};

// Tiny configuration used by the finite-difference model check.
ModelConfig micro_config();

// Attention probability rows captured during a forward pass, for structural
// checks (each row of each attention matrix must sum to 1).
struct AttnTrace {
    struct Mat {
        int rows = 0, cols = 0;
        bool is_cross = false;
        std::vector<double> probs;  // rows*cols
    };
    std::vector<Mat> mats;
};

// Per-block parameter bundle. Cross-attention weights always exist so the
// same checkpoint loads under any CrossAttn mode.
struct BlockParams {
    Tensor ln1_g, ln1_b;
    Tensor wq, wk, wv, wo, bq, bk, bv, bo;
    Tensor lnx_g, lnx_b;
    Tensor xq_w, xq_b, xk_w, xk_b, xv_w, xv_b, xo_w, xo_b;
    Tensor ln2_g, ln2_b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Masked grid inpainting transformer: ViT encoder over visible patches,
// decoder over the full token sequence with learned mask tokens, text
// tokens attended through per-block cross-attention, codebook logits at
// masked positions.
class Model {
  public:
    Model(const ModelConfig &cfg, uint64_t seed);

    const ModelConfig &config() const { return cfg_; }
    const TextEncoder &text() const { return text_; }
    const Codebook &codebook() const { return codebook_; }

    // Logits over the codebook for each masked position, in row-major mask
    // order: [n_masked x V].
    Tensor forward(const Image &img, const std::vector<bool> &mask, const TextPrompt &prompt,
                   AttnTrace *trace = nullptr) const;

    // Mean cross-entropy against the masked positions of the target grid.
    Tensor loss(const Image &img, const std::vector<bool> &mask, const TextPrompt &prompt,
                const TokenGrid &targets) const;

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> params() const;
    size_t param_count() const;

    // Overwrites parameter values with another instance's (same config).
    void copy_params_from(const Model &other);

  private:
    Tensor attn_sublayer(const Tensor &x, const BlockParams &b) const;
    Tensor cross_sublayer(const Tensor &x, const BlockParams &b, const Tensor &text_feats,
                          const std::vector<double> &text_bias) const;
    Tensor mlp_sublayer(const Tensor &x, const BlockParams &b) const;
    Tensor run_block(const Tensor &x, const BlockParams &b, const Tensor &text_feats,
                     const std::vector<double> &text_bias, bool use_cross) const;

    ModelConfig cfg_;
    TextEncoder text_;
    Codebook codebook_;

    Tensor patch_embed_w_, patch_embed_b_;
    Tensor enc_pos_, dec_pos_, mask_token_;
    Tensor text_proj_w_, text_proj_b_;
    std::vector<BlockParams> enc_blocks_, dec_blocks_;
    Tensor final_ln_g_, final_ln_b_;
    Tensor head_w_, head_b_;

    mutable AttnTrace *trace_ = nullptr;
};

// Per-row argmax over codebook logits; ties break toward the lower index.
std::vector<int> predict_tokens(const Tensor &logits);

// Flattened pixel patches, one row per token position: [n_tokens x patch_dim].
Tensor patchify(const Image &img, int patch_side);

}  // namespace gridfill
