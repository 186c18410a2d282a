#pragma once

#include <string>
#include <vector>

#include "tsdn/image.hpp"

namespace tsdn {

// Peak signal-to-noise ratio in dB on the [0,1] scale (MAX = 1). Identical
// inputs (mse < 1e-20) report the documented 200 dB sentinel.
double psnr(const Image& x, const Image& gt);

inline constexpr double kPsnrSentinel = 200.0;

// Mean structural similarity with the standard 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1. Channels averaged.
// Requires height and width >= 11.
double ssim(const Image& x, const Image& gt);

struct MetricReport {
    struct Entry {
        std::string name;
        double psnr_db = 0;
        double ssim = 0;
    };
    std::vector<Entry> entries;
    double avg_psnr = 0;
    double avg_ssim = 0;
};

// Pairs same-named files from the two directories (an unmatched file in
// either is an error) and evaluates PSNR/SSIM per pair plus averages.
MetricReport evaluate_dir(const std::string& denoised_dir, const std::string& reference_dir);

// CSV lines "name,psnr,ssim" with a final "average,..." row.
void write_report(const MetricReport& report, const std::string& path);
std::string format_report(const MetricReport& report);

}  // namespace tsdn
