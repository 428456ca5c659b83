#include "gridfill/codebook.hpp"

#include <cmath>
#include <string>

#include "gridfill/errors.hpp"

namespace gridfill {

int TokenGrid::count_masked() const {
    int n = 0;
    for (bool b : mask) n += b ? 1 : 0;
    return n;
}

Codebook::Codebook(int levels_per_channel, int patch_side)
    : levels_(levels_per_channel), patch_(patch_side) {
    if (levels_ < 2) throw contract_error("codebook needs at least 2 levels per channel");
    if (patch_ < 1) throw contract_error("codebook patch side must be positive");
}

int Codebook::quantize_channel(float v) const {
    // nearest of l/(L-1); exact midpoints round toward the lower level
    double scaled = static_cast<double>(v) * (levels_ - 1);
    int level = static_cast<int>(std::ceil(scaled - 0.5));
    if (level < 0) level = 0;
    if (level > levels_ - 1) level = levels_ - 1;
    return level;
}

float Codebook::level_value(int level) const {
    return static_cast<float>(level) / static_cast<float>(levels_ - 1);
}

int Codebook::pack(int qr, int qg, int qb) const { return (qr * levels_ + qg) * levels_ + qb; }

void Codebook::unpack(int token, int &qr, int &qg, int &qb) const {
    qb = token % levels_;
    qg = (token / levels_) % levels_;
    qr = token / (levels_ * levels_);
}

TokenGrid Codebook::encode_image(const Image &img) const {
    if (img.height() % patch_ != 0 || img.width() % patch_ != 0)
        throw dimension_error("encode_image: " + std::to_string(img.height()) + "x" +
                              std::to_string(img.width()) + " not divisible by patch side " +
                              std::to_string(patch_));
    const int h = img.height() / patch_, w = img.width() / patch_;
    TokenGrid grid(h, w);
    const double inv_area = 1.0 / (static_cast<double>(patch_) * patch_);
    for (int ty = 0; ty < h; ty++)
        for (int tx = 0; tx < w; tx++) {
            double mean[3] = {0, 0, 0};
            for (int py = 0; py < patch_; py++)
                for (int px = 0; px < patch_; px++)
                    for (int c = 0; c < 3; c++) mean[c] += img.at(ty * patch_ + py, tx * patch_ + px, c);
            int q[3];
            for (int c = 0; c < 3; c++) q[c] = quantize_channel(static_cast<float>(mean[c] * inv_area));
            grid.token(ty, tx) = pack(q[0], q[1], q[2]);
        }
    return grid;
}

Image Codebook::decode_tokens(const TokenGrid &grid) const {
    Image img(grid.h * patch_, grid.w * patch_);
    for (int ty = 0; ty < grid.h; ty++)
        for (int tx = 0; tx < grid.w; tx++) {
            int token = grid.token(ty, tx);
            if (token < 0 || token >= vocab_size())
                throw index_error("decode_tokens: token " + std::to_string(token) + " outside [0, " +
                                  std::to_string(vocab_size()) + ")");
            int q[3];
            unpack(token, q[0], q[1], q[2]);
            float rgb[3] = {level_value(q[0]), level_value(q[1]), level_value(q[2])};
            for (int py = 0; py < patch_; py++)
                for (int px = 0; px < patch_; px++)
                    img.set_pixel(ty * patch_ + py, tx * patch_ + px, rgb[0], rgb[1], rgb[2]);
        }
    return img;
}

Image Codebook::quantize_image(const Image &img) const {
    Image out(img.height(), img.width());
    for (int y = 0; y < img.height(); y++)
        for (int x = 0; x < img.width(); x++)
            for (int c = 0; c < 3; c++) out.at(y, x, c) = level_value(quantize_channel(img.at(y, x, c)));
    return out;
}

}  // namespace gridfill
