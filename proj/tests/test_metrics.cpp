#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tsdn/data.hpp"
#include "tsdn/metrics.hpp"

using namespace tsdn;
namespace fs = std::filesystem;

namespace {

Image textured(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Image img(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at(0, y, x) = static_cast<float>(
                0.5 + 0.3 * std::sin(0.35 * x + 0.2 * y) + 0.1 * rng.next_uniform(-1, 1));
    return img;
}

// Direct windowed SSIM: explicit 11x11 weighted sums per position, no
// separable shortcut. Intentionally a different route than the library.
double ssim_direct(const Image& a, const Image& b) {
    const int win = 11;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03, sigma = 1.5;
    double g[11][11];
    double norm = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - 5.0, dx = j - 5.0;
            g[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            norm += g[i][j];
        }
    for (auto& row : g)
        for (double& v : row) v /= norm;

    double total = 0;
    int count = 0;
    for (int y = 0; y + win <= a.height; ++y) {
        for (int x = 0; x + win <= a.width; ++x) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double va = a.at(0, y + i, x + j);
                    const double vb = b.at(0, y + i, x + j);
                    mx += g[i][j] * va;
                    my += g[i][j] * vb;
                    sxx += g[i][j] * va * va;
                    syy += g[i][j] * vb * vb;
                    sxy += g[i][j] * va * vb;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / count;
}

}  // namespace

TEST_CASE("psnr basics") {
    const Image img = textured(32, 32, 1);
    CHECK(psnr(img, img) == kPsnrSentinel);

    // uniform error of exactly 1/255 -> 20*log10(255)
    Image off = img;
    for (float& v : off.pixels) v += 1.0f / 255.0f;
    CHECK(psnr(off, img) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-5));

    Image other(1, 16, 16);
    CHECK_THROWS_AS((void)psnr(img, other), ShapeError);
}

TEST_CASE("psnr matches the closed form for sigma 50 noise") {
    const Image clean = textured(256, 256, 2);
    Rng rng(50);
    const Image noisy = add_awgn(clean, 50.0, rng);
    const double expected = 10.0 * std::log10(255.0 * 255.0 / (50.0 * 50.0));  // 14.15
    CHECK(psnr(noisy, clean) == doctest::Approx(expected).epsilon(0.015));
}

TEST_CASE("psnr strictly decreases as sigma grows") {
    const Image clean = textured(128, 128, 3);
    double prev = 1e9;
    for (double sigma : {15.0, 25.0, 50.0}) {
        Rng rng(60);
        const double v = psnr(add_awgn(clean, sigma, rng), clean);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("ssim basics") {
    const Image img = textured(32, 32, 4);
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));

    Image small(1, 8, 8);
    CHECK_THROWS_AS((void)ssim(small, small), ShapeError);
}

TEST_CASE("ssim of constant images matches the degenerate closed form") {
    const double a = 0.25, b = 0.75;
    Image ia(1, 16, 16), ib(1, 16, 16);
    for (float& v : ia.pixels) v = static_cast<float>(a);
    for (float& v : ib.pixels) v = static_cast<float>(b);
    const double c1 = 1e-4;
    const double expected = (2 * a * b + c1) / (a * a + b * b + c1);
    CHECK(ssim(ia, ib) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("ssim is symmetric and below one for distinct images") {
    const Image x = textured(32, 32, 5);
    Rng rng(70);
    const Image y = add_awgn(x, 20.0, rng);
    CHECK(std::abs(ssim(x, y) - ssim(y, x)) < 1e-12);
    CHECK(ssim(x, y) < 1.0 - 1e-9);
}

TEST_CASE("ssim agrees with the direct-window oracle") {
    for (std::uint64_t seed : {10, 11, 12}) {
        const Image x = textured(32, 32, seed);
        Rng rng(seed * 7 + 1);
        const Image y = add_awgn(x, 15.0, rng);
        CHECK(ssim(x, y) == doctest::Approx(ssim_direct(x, y)).epsilon(1e-6));
    }
}

TEST_CASE("evaluate_dir pairs files and averages the columns") {
    const fs::path base = fs::temp_directory_path() / "tsdn_test_metrics";
    fs::remove_all(base);
    const fs::path da = base / "denoised";
    const fs::path db = base / "reference";
    fs::create_directories(da);
    fs::create_directories(db);
    for (int i = 0; i < 3; ++i) {
        const Image ref = textured(24, 24, 80 + i);
        Rng rng(90 + i);
        const Image noisy = add_awgn(ref, 10.0 + 5 * i, rng);
        save_image(noisy, (da / ("p" + std::to_string(i) + ".pgm")).string());
        save_image(ref, (db / ("p" + std::to_string(i) + ".pgm")).string());
    }

    const MetricReport report = evaluate_dir(da.string(), db.string());
    REQUIRE(report.entries.size() == 3);
    double psum = 0, ssum = 0;
    for (const auto& e : report.entries) {
        psum += e.psnr_db;
        ssum += e.ssim;
    }
    CHECK(report.avg_psnr == doctest::Approx(psum / 3).epsilon(1e-12));
    CHECK(report.avg_ssim == doctest::Approx(ssum / 3).epsilon(1e-12));

    // directory against itself: sentinel PSNR, unit SSIM
    const MetricReport self = evaluate_dir(db.string(), db.string());
    for (const auto& e : self.entries) {
        CHECK(e.psnr_db == kPsnrSentinel);
        CHECK(e.ssim == doctest::Approx(1.0).epsilon(1e-12));
    }

    // report format: one line per file plus the average row
    const fs::path report_path = base / "report.csv";
    write_report(report, report_path.string());
    std::ifstream in(report_path);
    std::string line, last;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        last = line;
    }
    CHECK(lines == 4);
    CHECK(last.rfind("average,", 0) == 0);

    // unpaired file is an error naming the file
    save_image(textured(24, 24, 99), (da / "extra.pgm").string());
    CHECK_THROWS_WITH_AS((void)evaluate_dir(da.string(), db.string()),
                         doctest::Contains("extra.pgm"), IoError);

    // per-pair shape mismatch propagates
    save_image(textured(16, 16, 98), (db / "extra.pgm").string());
    CHECK_THROWS_AS((void)evaluate_dir(da.string(), db.string()), ShapeError);
}
