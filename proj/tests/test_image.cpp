#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "tsdn/image.hpp"
#include "tsdn/rng.hpp"

using namespace tsdn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "tsdn_test_image";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Image quantized_random(int channels, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Image img(channels, h, w);
    for (float& v : img.pixels)
        v = static_cast<float>(rng.next_index(256)) / 255.0f;
    return img;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("pgm round-trip is pixel-identical") {
    const Image img = quantized_random(1, 13, 9, 1);
    const auto path = (temp_dir() / "rt.pgm").string();
    save_image(img, path);
    const Image back = load_image(path);
    REQUIRE(back.channels == 1);
    REQUIRE(back.height == 13);
    REQUIRE(back.width == 9);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
}

TEST_CASE("png round-trip for gray and color") {
    for (int channels : {1, 3}) {
        const Image img = quantized_random(channels, 17, 23, 40 + channels);
        const auto path = (temp_dir() / ("rt" + std::to_string(channels) + ".png")).string();
        save_image(img, path);
        const Image back = load_image(path);
        REQUIRE(back.channels == channels);
        REQUIRE(back.height == 17);
        REQUIRE(back.width == 23);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            CHECK(back.pixels[i] == img.pixels[i]);
    }
}

TEST_CASE("ppm round-trip") {
    const Image img = quantized_random(3, 6, 5, 77);
    const auto path = (temp_dir() / "rt.ppm").string();
    save_image(img, path);
    const Image back = load_image(path);
    REQUIRE(back.channels == 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
}

TEST_CASE("pgm byte scaling") {
    const auto path = temp_dir() / "bytes.pgm";
    std::string data = "P5\n2 2\n255\n";
    data.push_back(static_cast<char>(0));
    data.push_back(static_cast<char>(128));
    data.push_back(static_cast<char>(255));
    data.push_back(static_cast<char>(64));
    write_bytes(path, data);
    const Image img = load_image(path.string());
    CHECK(img.at(0, 0, 0) == 0.0f);
    CHECK(img.at(0, 0, 1) == doctest::Approx(128.0 / 255.0));
    CHECK(img.at(0, 1, 0) == 1.0f);
    CHECK(img.at(0, 1, 1) == doctest::Approx(64.0 / 255.0));
}

TEST_CASE("ascii pgm (P2) loads") {
    const auto path = temp_dir() / "ascii.pgm";
    write_bytes(path, "P2\n# a comment\n2 1\n255\n0 255\n");
    const Image img = load_image(path.string());
    CHECK(img.at(0, 0, 0) == 0.0f);
    CHECK(img.at(0, 0, 1) == 1.0f);
}

TEST_CASE("error kinds are distinct") {
    CHECK_THROWS_AS((void)load_image((temp_dir() / "missing.png").string()), IoError);

    const auto text = temp_dir() / "not_an_image.txt";
    write_bytes(text, "hello, definitely not pixels\n");
    try {
        (void)load_image(text.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::UnsupportedFormat);
    }

    const auto corrupt = temp_dir() / "corrupt.pgm";
    write_bytes(corrupt, "P5\nnonsense\n");
    try {
        (void)load_image(corrupt.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::CorruptHeader);
    }

    const auto truncated = temp_dir() / "short.pgm";
    write_bytes(truncated, "P5\n4 4\n255\nab");
    try {
        (void)load_image(truncated.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::Truncated);
    }

    const auto deep = temp_dir() / "deep.pgm";
    write_bytes(deep, "P5\n2 2\n65535\n\0\0\0\0\0\0\0\0");
    CHECK_THROWS_AS((void)load_image(deep.string()), FormatError);
}

TEST_CASE("save clamps out-of-range values") {
    Image img(1, 1, 2);
    img.at(0, 0, 0) = -0.5f;
    img.at(0, 0, 1) = 1.5f;
    const auto path = (temp_dir() / "clamp.pgm").string();
    save_image(img, path);
    const Image back = load_image(path);
    CHECK(back.at(0, 0, 0) == 0.0f);
    CHECK(back.at(0, 0, 1) == 1.0f);
}

TEST_CASE("grayscale conversion uses BT.601 luma") {
    Image white(3, 1, 1);
    white.pixels = {1.0f, 1.0f, 1.0f};
    CHECK(to_grayscale(white).at(0, 0, 0) == doctest::Approx(1.0));

    Image green(3, 1, 1);
    green.pixels = {0.0f, 1.0f, 0.0f};
    CHECK(to_grayscale(green).at(0, 0, 0) == doctest::Approx(0.587));

    Image equal(3, 1, 1);
    equal.pixels = {0.42f, 0.42f, 0.42f};
    CHECK(to_grayscale(equal).at(0, 0, 0) == doctest::Approx(0.42));

    Image gray(1, 1, 1);
    CHECK_THROWS_AS((void)to_grayscale(gray), ShapeError);
}
