#include "gridfill/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "gridfill/errors.hpp"

namespace gridfill {

Image resample(const Image &src, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw dimension_error("resample: non-positive target size");
    if (src.height() == out_h && src.width() == out_w) return src;
    Image dst(out_h, out_w);
    const double sy = static_cast<double>(src.height()) / out_h;
    const double sx = static_cast<double>(src.width()) / out_w;
    for (int oy = 0; oy < out_h; oy++) {
        double y0 = oy * sy, y1 = (oy + 1) * sy;
        for (int ox = 0; ox < out_w; ox++) {
            double x0 = ox * sx, x1 = (ox + 1) * sx;
            double acc[3] = {0, 0, 0};
            double area = 0;
            int iy0 = static_cast<int>(std::floor(y0));
            int iy1 = std::min(src.height(), static_cast<int>(std::ceil(y1)));
            int ix0 = static_cast<int>(std::floor(x0));
            int ix1 = std::min(src.width(), static_cast<int>(std::ceil(x1)));
            for (int iy = iy0; iy < iy1; iy++) {
                double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                if (wy <= 0) continue;
                for (int ix = ix0; ix < ix1; ix++) {
                    double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                    if (wx <= 0) continue;
                    double w = wy * wx;
                    area += w;
                    for (int c = 0; c < 3; c++) acc[c] += w * src.at(iy, ix, c);
                }
            }
            for (int c = 0; c < 3; c++) dst.at(oy, ox, c) = static_cast<float>(acc[c] / area);
        }
    }
    return dst;
}

Image crop(const Image &src, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > src.height() || x0 + w > src.width())
        throw dimension_error("crop: window " + std::to_string(h) + "x" + std::to_string(w) + "+" +
                              std::to_string(y0) + "+" + std::to_string(x0) + " outside " +
                              std::to_string(src.height()) + "x" + std::to_string(src.width()));
    Image dst(h, w);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++)
            for (int c = 0; c < 3; c++) dst.at(y, x, c) = src.at(y0 + y, x0 + x, c);
    return dst;
}

void paste(Image &dst, const Image &src, int y0, int x0) {
    if (y0 < 0 || x0 < 0 || y0 + src.height() > dst.height() || x0 + src.width() > dst.width())
        throw dimension_error("paste: source does not fit destination");
    for (int y = 0; y < src.height(); y++)
        for (int x = 0; x < src.width(); x++)
            for (int c = 0; c < 3; c++) dst.at(y0 + y, x0 + x, c) = src.at(y, x, c);
}

Image hflip(const Image &src) {
    Image dst(src.height(), src.width());
    for (int y = 0; y < src.height(); y++)
        for (int x = 0; x < src.width(); x++)
            for (int c = 0; c < 3; c++) dst.at(y, x, c) = src.at(y, src.width() - 1 - x, c);
    return dst;
}

Image grayscale(const Image &src) {
    Image dst(src.height(), src.width());
    for (int y = 0; y < src.height(); y++)
        for (int x = 0; x < src.width(); x++) {
            float g = luminance(src, y, x);
            dst.set_pixel(y, x, g, g, g);
        }
    return dst;
}

void write_ppm(const Image &img, const std::string &path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open for writing: " + path);
    f << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width()) * 3);
    for (int y = 0; y < img.height(); y++) {
        for (int x = 0; x < img.width(); x++)
            for (int c = 0; c < 3; c++) {
                float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        f.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw io_error("short write: " + path);
}

namespace {

std::vector<unsigned char> slurp(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {});
}

// Skips whitespace and '#' comments in a PPM header, tracking the offset.
int ppm_next_int(const std::vector<unsigned char> &b, size_t &pos, const std::string &path) {
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') pos++;
        } else if (std::isspace(b[pos])) {
            pos++;
        } else {
            break;
        }
    }
    if (pos >= b.size() || !std::isdigit(b[pos]))
        throw data_error("malformed PPM header in " + path, pos);
    int v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) v = v * 10 + (b[pos++] - '0');
    return v;
}

}  // namespace

Image read_ppm(const std::string &path) {
    auto bytes = slurp(path);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw data_error("not a P6 PPM: " + path, 0);
    size_t pos = 2;
    int w = ppm_next_int(bytes, pos, path);
    int h = ppm_next_int(bytes, pos, path);
    int maxval = ppm_next_int(bytes, pos, path);
    if (maxval != 255) throw data_error("unsupported PPM maxval in " + path, pos);
    pos++;  // single whitespace after maxval
    size_t need = static_cast<size_t>(w) * h * 3;
    if (bytes.size() - pos < need)
        throw data_error("truncated PPM pixel data in " + path, bytes.size());
    Image img(h, w);
    for (size_t i = 0; i < need; i++) img.data()[i] = bytes[pos + i] / 255.0f;
    return img;
}

namespace {

uint32_t be32(const unsigned char *p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

Image read_png(const std::string &path) {
    auto b = slurp(path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (b.size() < 8 || std::memcmp(b.data(), sig, 8) != 0)
        throw data_error("not a PNG: " + path, 0);

    size_t pos = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= b.size() && !saw_iend) {
        uint32_t len = be32(&b[pos]);
        if (pos + 12 + len > b.size()) throw data_error("truncated PNG chunk in " + path, pos);
        std::string type(reinterpret_cast<const char *>(&b[pos + 4]), 4);
        const unsigned char *payload = &b[pos + 8];
        if (type == "IHDR") {
            if (len != 13) throw data_error("bad IHDR in " + path, pos);
            w = static_cast<int>(be32(payload));
            h = static_cast<int>(be32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw data_error("interlaced PNG unsupported: " + path, pos + 8 + 12);
            if (bit_depth != 8 || (color_type != 0 && color_type != 2 && color_type != 6))
                throw data_error("unsupported PNG format (need 8-bit gray/RGB/RGBA): " + path, pos + 8 + 8);
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || idat.empty()) throw data_error("missing PNG image data in " + path, pos);

    int channels = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    size_t stride = static_cast<size_t>(w) * channels;
    std::vector<unsigned char> raw(static_cast<size_t>(h) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw data_error("PNG inflate failed in " + path, pos);

    // unfilter scanlines in place
    std::vector<unsigned char> pix(static_cast<size_t>(h) * stride);
    for (int y = 0; y < h; y++) {
        const unsigned char *src = &raw[static_cast<size_t>(y) * (stride + 1)];
        unsigned char filter = src[0];
        unsigned char *cur = &pix[static_cast<size_t>(y) * stride];
        const unsigned char *up = y > 0 ? &pix[static_cast<size_t>(y - 1) * stride] : nullptr;
        for (size_t i = 0; i < stride; i++) {
            int a = i >= static_cast<size_t>(channels) ? cur[i - channels] : 0;
            int u = up ? up[i] : 0;
            int c = (up && i >= static_cast<size_t>(channels)) ? up[i - channels] : 0;
            int x = src[1 + i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += u; break;
                case 3: x += (a + u) / 2; break;
                case 4: x += paeth(a, u, c); break;
                default:
                    throw data_error("bad PNG filter byte in " + path,
                                     static_cast<size_t>(y) * (stride + 1));
            }
            cur[i] = static_cast<unsigned char>(x & 0xff);
        }
    }

    Image img(h, w);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) {
            const unsigned char *p = &pix[(static_cast<size_t>(y) * w + x) * channels];
            if (channels == 1)
                img.set_pixel(y, x, p[0] / 255.0f, p[0] / 255.0f, p[0] / 255.0f);
            else
                img.set_pixel(y, x, p[0] / 255.0f, p[1] / 255.0f, p[2] / 255.0f);
        }
    return img;
}

Image read_image(const std::string &path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".png" || ext == ".PNG") return read_png(path);
    return read_ppm(path);
}

uint64_t image_hash(const Image &img) {
    // FNV-1a over the quantized byte representation
    uint64_t hash = 1469598103934665603ull;
    auto mix = [&hash](unsigned char byte) {
        hash ^= byte;
        hash *= 1099511628211ull;
    };
    mix(static_cast<unsigned char>(img.height() & 0xff));
    mix(static_cast<unsigned char>(img.width() & 0xff));
    for (float v : img.data()) {
        float cl = std::clamp(v, 0.0f, 1.0f);
        mix(static_cast<unsigned char>(std::lround(cl * 255.0f)));
    }
    return hash;
}

}  // namespace gridfill
