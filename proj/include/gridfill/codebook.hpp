#pragma once

#include <vector>

#include "gridfill/image.hpp"

namespace gridfill {

// Token-resolution grid of codebook indices and the inpainting mask
// (true = masked / to-predict).
struct TokenGrid {
    int h = 0, w = 0;
    std::vector<int> tokens;         // h*w, row-major
    std::vector<bool> mask;          // h*w, row-major

    TokenGrid() = default;
    TokenGrid(int h_, int w_) : h(h_), w(w_), tokens(static_cast<size_t>(h_) * w_, 0),
                                mask(static_cast<size_t>(h_) * w_, false) {}

    int &token(int y, int x) { return tokens[static_cast<size_t>(y) * w + x]; }
    int token(int y, int x) const { return tokens[static_cast<size_t>(y) * w + x]; }
    void set_mask(int y, int x, bool v) { mask[static_cast<size_t>(y) * w + x] = v; }
    bool masked(int y, int x) const { return mask[static_cast<size_t>(y) * w + x]; }
    int count_masked() const;
};

// Frozen color-lattice tokenizer: each patch's mean color is quantized per
// channel to L levels, giving V = L^3 codes. Deterministic and exactly
// invertible on token space.
class Codebook {
  public:
    explicit Codebook(int levels_per_channel = 6, int patch_side = 8);

    int levels() const { return levels_; }
    int vocab_size() const { return levels_ * levels_ * levels_; }
    int patch_side() const { return patch_; }

    // channel value <-> lattice level; ties round down
    int quantize_channel(float v) const;
    float level_value(int level) const;

    int pack(int qr, int qg, int qb) const;
    void unpack(int token, int &qr, int &qg, int &qb) const;

    TokenGrid encode_image(const Image &img) const;
    Image decode_tokens(const TokenGrid &grid) const;

    // nearest-lattice color image at full resolution (per-pixel quantize)
    Image quantize_image(const Image &img) const;

  private:
    int levels_;
    int patch_;
};

}  // namespace gridfill
