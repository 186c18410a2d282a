#include "tsdn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace tsdn {

namespace {

void require_same_shape(const Image& x, const Image& gt, const char* what) {
    if (x.channels != gt.channels || x.height != gt.height || x.width != gt.width)
        throw ShapeError(std::string(what) + ": shape mismatch (" +
                         std::to_string(x.channels) + "," + std::to_string(x.height) + "," +
                         std::to_string(x.width) + ") vs (" + std::to_string(gt.channels) +
                         "," + std::to_string(gt.height) + "," + std::to_string(gt.width) +
                         ")");
}

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_window() {
    static const std::vector<double> g = [] {
        std::vector<double> w(kWin);
        const double sigma = 1.5;
        double sum = 0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
            sum += w[i];
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return g;
}

// Separable valid-mode Gaussian filter: rows first, then columns.
// Input h x w, output (h-10) x (w-10).
std::vector<double> gauss_filter(const std::vector<double>& in, int h, int w) {
    const auto& g = gaussian_window();
    const int wr = w - kWin + 1;
    const int hr = h - kWin + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * wr);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wr; ++x) {
            double acc = 0;
            for (int j = 0; j < kWin; ++j) acc += g[j] * in[static_cast<std::size_t>(y) * w + x + j];
            rows[static_cast<std::size_t>(y) * wr + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(hr) * wr);
    for (int y = 0; y < hr; ++y)
        for (int x = 0; x < wr; ++x) {
            double acc = 0;
            for (int i = 0; i < kWin; ++i) acc += g[i] * rows[static_cast<std::size_t>(y + i) * wr + x];
            out[static_cast<std::size_t>(y) * wr + x] = acc;
        }
    return out;
}

double ssim_channel(const std::vector<double>& x, const std::vector<double>& y, int h,
                    int w) {
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mu_x = gauss_filter(x, h, w);
    const auto mu_y = gauss_filter(y, h, w);
    const auto m_xx = gauss_filter(xx, h, w);
    const auto m_yy = gauss_filter(yy, h, w);
    const auto m_xy = gauss_filter(xy, h, w);
    double total = 0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
        const double var_x = m_xx[i] - mu_x[i] * mu_x[i];
        const double var_y = m_yy[i] - mu_y[i] * mu_y[i];
        const double cov = m_xy[i] - mu_x[i] * mu_y[i];
        total += ((2 * mu_x[i] * mu_y[i] + kC1) * (2 * cov + kC2)) /
                 ((mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + kC1) * (var_x + var_y + kC2));
    }
    return total / static_cast<double>(mu_x.size());
}

}  // namespace

double psnr(const Image& x, const Image& gt) {
    require_same_shape(x, gt, "psnr");
    double se = 0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        const double d = static_cast<double>(x.pixels[i]) - gt.pixels[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(x.pixels.size());
    if (mse < 1e-20) return kPsnrSentinel;
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& x, const Image& gt) {
    require_same_shape(x, gt, "ssim");
    if (x.height < kWin || x.width < kWin)
        throw ShapeError("ssim: image " + std::to_string(x.height) + "x" +
                         std::to_string(x.width) + " smaller than the 11x11 window");
    const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
    double total = 0;
    for (int c = 0; c < x.channels; ++c) {
        std::vector<double> a(plane), b(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            a[i] = x.pixels[c * plane + i];
            b[i] = gt.pixels[c * plane + i];
        }
        total += ssim_channel(a, b, x.height, x.width);
    }
    return total / x.channels;
}

MetricReport evaluate_dir(const std::string& denoised_dir,
                          const std::string& reference_dir) {
    namespace fs = std::filesystem;
    auto names_of = [](const std::string& dir) {
        if (!fs::exists(dir) || !fs::is_directory(dir))
            throw IoError("no such directory: " + dir);
        std::map<std::string, std::string> names;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) names[e.path().filename().string()] = e.path().string();
        return names;
    };
    const auto den = names_of(denoised_dir);
    const auto ref = names_of(reference_dir);
    for (const auto& [name, path] : den)
        if (!ref.count(name))
            throw IoError("evaluate: unpaired file " + path + " (no counterpart in " +
                          reference_dir + ")");
    for (const auto& [name, path] : ref)
        if (!den.count(name))
            throw IoError("evaluate: unpaired file " + path + " (no counterpart in " +
                          denoised_dir + ")");

    MetricReport report;
    double psum = 0, ssum = 0;
    for (const auto& [name, path] : den) {
        const Image a = load_image(path);
        const Image b = load_image(ref.at(name));
        MetricReport::Entry e;
        e.name = name;
        e.psnr_db = psnr(a, b);
        e.ssim = ssim(a, b);
        psum += e.psnr_db;
        ssum += e.ssim;
        report.entries.push_back(std::move(e));
    }
    if (!report.entries.empty()) {
        report.avg_psnr = psum / static_cast<double>(report.entries.size());
        report.avg_ssim = ssum / static_cast<double>(report.entries.size());
    }
    return report;
}

std::string format_report(const MetricReport& report) {
    std::ostringstream os;
    os.precision(6);
    for (const auto& e : report.entries)
        os << e.name << "," << e.psnr_db << "," << e.ssim << "\n";
    os << "average," << report.avg_psnr << "," << report.avg_ssim << "\n";
    return os.str();
}

void write_report(const MetricReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << format_report(report);
    if (!out) throw IoError("short write to " + path);
}

}  // namespace tsdn
