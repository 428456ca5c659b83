#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gridfill {

// H x W x 3 floats in [0, 1]; the unit of all visual data.
class Image {
  public:
    Image() = default;
    Image(int h, int w, float fill = 0.0f) : h_(h), w_(w), data_(static_cast<size_t>(h) * w * 3, fill) {}

    int height() const { return h_; }
    int width() const { return w_; }

    float &at(int y, int x, int c) { return data_[(static_cast<size_t>(y) * w_ + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data_[(static_cast<size_t>(y) * w_ + x) * 3 + c]; }

    void set_pixel(int y, int x, float r, float g, float b) {
        at(y, x, 0) = r;
        at(y, x, 1) = g;
        at(y, x, 2) = b;
    }

    const std::vector<float> &data() const { return data_; }
    std::vector<float> &data() { return data_; }

    bool same_shape(const Image &o) const { return h_ == o.h_ && w_ == o.w_; }
    bool operator==(const Image &o) const { return h_ == o.h_ && w_ == o.w_ && data_ == o.data_; }

  private:
    int h_ = 0, w_ = 0;
    std::vector<float> data_;
};

inline float luminance(const Image &img, int y, int x) {
    return (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0f;
}

// Box-filter resampling. Exact averaging for integer downscale factors,
// pixel replication for integer upscale factors, fractional-area weights
// otherwise. Deterministic everywhere.
Image resample(const Image &src, int out_h, int out_w);

Image crop(const Image &src, int y0, int x0, int h, int w);
void paste(Image &dst, const Image &src, int y0, int x0);
Image hflip(const Image &src);
Image grayscale(const Image &src);

// Binary PPM (P6, maxval 255), the canonical interchange format.
void write_ppm(const Image &img, const std::string &path);
Image read_ppm(const std::string &path);

// Minimal PNG reader: 8-bit gray/RGB/RGBA, non-interlaced.
Image read_png(const std::string &path);

// Dispatch on extension (.ppm / .png).
Image read_image(const std::string &path);

// Stable content hash for corpus-disjointness audits.
uint64_t image_hash(const Image &img);

}  // namespace gridfill
