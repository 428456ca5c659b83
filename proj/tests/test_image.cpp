#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "gridfill/errors.hpp"
#include "gridfill/image.hpp"
#include "gridfill/rng.hpp"

using namespace gridfill;

namespace {

std::string tmp_path(const std::string &name) {
    auto dir = std::filesystem::temp_directory_path() / "gridfill_image_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

Image random_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w);
    for (auto &v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

// byte-quantized copy, so PPM round trips are exact
Image quantized(const Image &img) {
    Image out = img;
    for (auto &v : out.data())
        v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    return out;
}

void put_be32(std::vector<unsigned char> &v, uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

void put_chunk(std::vector<unsigned char> &out, const char type[4],
               const std::vector<unsigned char> &payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    std::vector<unsigned char> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put_be32(out, static_cast<uint32_t>(crc32(0, body.data(), static_cast<uInt>(body.size()))));
}

// minimal RGB8 PNG writer used only as a test fixture
void write_test_png(const Image &img, const std::string &path, unsigned char filter) {
    std::vector<unsigned char> raw;
    for (int y = 0; y < img.height(); y++) {
        raw.push_back(filter == 2 && y == 0 ? 0 : filter);
        int prev[3] = {0, 0, 0};
        for (int x = 0; x < img.width(); x++)
            for (int c = 0; c < 3; c++) {
                int v = static_cast<int>(std::lround(img.at(y, x, c) * 255.0f));
                int enc = v;
                if (filter == 1) {
                    enc = (v - prev[c]) & 0xff;
                    prev[c] = v;
                } else if (filter == 2 && y > 0) {
                    int up = static_cast<int>(std::lround(img.at(y - 1, x, c) * 255.0f));
                    enc = (v - up) & 0xff;
                }
                raw.push_back(static_cast<unsigned char>(enc));
            }
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    REQUIRE(compress(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size())) == Z_OK);
    comp.resize(comp_len);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width()));
    put_be32(ihdr, static_cast<uint32_t>(img.height()));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char *>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace

TEST_CASE("ppm round trip is exact on quantized images") {
    Image img = quantized(random_image(13, 7, 5));
    auto path = tmp_path("rt.ppm");
    write_ppm(img, path);
    Image back = read_ppm(path);
    CHECK(back == img);
}

TEST_CASE("ppm reader reports byte offsets on malformed input") {
    auto path = tmp_path("bad.ppm");
    std::ofstream(path) << "P6\n4 4\n255\nxx";  // truncated pixels
    try {
        read_ppm(path);
        FAIL("expected data_error");
    } catch (const data_error &e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }

    std::ofstream(path) << "P5\n4 4\n255\n";
    CHECK_THROWS_AS(read_ppm(path), data_error);
    CHECK_THROWS_AS(read_ppm(tmp_path("missing.ppm")), io_error);
}

TEST_CASE("png reader handles all standard filters") {
    Image img = quantized(random_image(9, 5, 17));
    for (unsigned char filter : {0, 1, 2}) {
        auto path = tmp_path("t" + std::to_string(filter) + ".png");
        write_test_png(img, path, filter);
        Image back = read_png(path);
        REQUIRE(back.same_shape(img));
        for (size_t i = 0; i < img.data().size(); i++)
            CHECK(back.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("png reader rejects garbage") {
    auto path = tmp_path("garbage.png");
    std::ofstream(path) << "not a png at all";
    CHECK_THROWS_AS(read_png(path), data_error);
}

TEST_CASE("resample integer downscale is exact block averaging") {
    Image img(4, 4);
    for (int y = 0; y < 4; y++)
        for (int x = 0; x < 4; x++) img.set_pixel(y, x, static_cast<float>(y * 4 + x) / 15.0f, 0, 0);
    Image small = resample(img, 2, 2);
    // top-left block mean of {0,1,4,5}/15
    CHECK(small.at(0, 0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0 / 15.0).epsilon(1e-6));
    CHECK(small.at(1, 1, 0) == doctest::Approx((10 + 11 + 14 + 15) / 4.0 / 15.0).epsilon(1e-6));
}

TEST_CASE("resample integer upscale replicates pixels") {
    Image img(2, 2);
    img.set_pixel(0, 0, 0.1f, 0.2f, 0.3f);
    img.set_pixel(0, 1, 0.4f, 0.5f, 0.6f);
    img.set_pixel(1, 0, 0.7f, 0.8f, 0.9f);
    img.set_pixel(1, 1, 1.0f, 0.0f, 0.5f);
    Image big = resample(img, 4, 4);
    for (int y = 0; y < 4; y++)
        for (int x = 0; x < 4; x++)
            for (int c = 0; c < 3; c++)
                CHECK(big.at(y, x, c) == doctest::Approx(img.at(y / 2, x / 2, c)).epsilon(1e-6));
}

TEST_CASE("crop, paste and hflip") {
    Image img = random_image(8, 8, 3);
    Image c = crop(img, 2, 3, 4, 5);
    CHECK(c.height() == 4);
    CHECK(c.width() == 5);
    CHECK(c.at(0, 0, 0) == img.at(2, 3, 0));
    CHECK_THROWS_AS(crop(img, 6, 6, 4, 4), dimension_error);

    Image dst(10, 10);
    paste(dst, c, 1, 1);
    CHECK(dst.at(1, 1, 0) == c.at(0, 0, 0));
    CHECK_THROWS_AS(paste(dst, img, 5, 5), dimension_error);

    Image f = hflip(img);
    CHECK(f.at(0, 0, 1) == img.at(0, 7, 1));
    CHECK(hflip(f) == img);
}

TEST_CASE("image hash is stable and content sensitive") {
    Image a = random_image(6, 6, 9);
    Image b = a;
    CHECK(image_hash(a) == image_hash(b));
    b.at(3, 3, 0) += 0.5f;
    CHECK(image_hash(a) != image_hash(b));
}
