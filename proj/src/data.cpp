#include "tsdn/data.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>

namespace tsdn {

Image add_awgn(const Image& img, double sigma, Rng& rng) {
    if (sigma < 0) throw ShapeError("add_awgn: sigma must be >= 0");
    Image out = img;
    if (sigma == 0) return out;
    const double scale = sigma / 255.0;
    for (float& v : out.pixels)
        v = static_cast<float>(v + scale * rng.next_gaussian());
    return out;
}

std::vector<Image> extract_patches(const Image& img, int size, int count, Rng& rng) {
    if (size < 1) throw ShapeError("extract_patches: patch size must be >= 1");
    if (img.height < size || img.width < size)
        throw ShapeError("extract_patches: image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + " smaller than patch " +
                         std::to_string(size));
    std::vector<Image> patches;
    patches.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int k = 0; k < count; ++k) {
        const int top = static_cast<int>(rng.next_index(img.height - size + 1));
        const int left = static_cast<int>(rng.next_index(img.width - size + 1));
        Image p(img.channels, size, size);
        for (int c = 0; c < img.channels; ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) p.at(c, y, x) = img.at(c, top + y, left + x);
        p.source_path = img.source_path;
        patches.push_back(std::move(p));
    }
    return patches;
}

std::vector<std::string> list_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir) || !fs::is_directory(dir))
        throw IoError("no such directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

namespace {

// Stream constants keep the per-purpose child generators independent.
constexpr std::uint64_t kEpochStream = 0x45504f4348ULL;
constexpr std::uint64_t kItemStream = 0x4954454dULL;

Image match_channels(Image img, int channels) {
    if (channels == 1 && img.channels == 3) return to_grayscale(img);
    if (channels == 3 && img.channels == 1) return to_color(img);
    return img;
}

}  // namespace

TrainingStream::TrainingStream(const std::string& dir, const StreamConfig& cfg) : cfg_(cfg) {
    cfg_.noise.validate();
    if (cfg_.patch < 1 || cfg_.batch < 1)
        throw ShapeError("training stream: patch and batch must be >= 1");
    if (cfg_.channels != 1 && cfg_.channels != 3)
        throw ShapeError("training stream: channels must be 1 or 3");

    std::size_t unloadable = 0;
    for (const std::string& path : list_files(dir)) {
        try {
            Image img = match_channels(load_image(path), cfg_.channels);
            if (img.height < cfg_.patch || img.width < cfg_.patch) {
                std::cerr << "training stream: skipping " << path << " ("
                          << img.height << "x" << img.width << " < patch "
                          << cfg_.patch << ")\n";
                continue;
            }
            images_.push_back(std::move(img));
        } catch (const FormatError&) {
            ++unloadable;
        }
    }
    if (images_.empty()) {
        if (unloadable > 0)
            throw FormatError(FormatError::Kind::UnsupportedFormat,
                              "training stream: no loadable image in " + dir + " (" +
                                  std::to_string(unloadable) + " unreadable)");
        throw IoError("training stream: no usable image in " + dir);
    }
}

const std::vector<int>& TrainingStream::epoch_order(std::uint64_t epoch) {
    if (epoch == cached_epoch_) return cached_order_;
    cached_order_.resize(images_.size());
    for (std::size_t i = 0; i < images_.size(); ++i) cached_order_[i] = static_cast<int>(i);
    Rng rng = Rng(cfg_.seed).split(Rng::mix(kEpochStream, epoch));
    for (std::size_t i = images_.size(); i > 1; --i)
        std::swap(cached_order_[i - 1], cached_order_[rng.next_index(i)]);
    cached_epoch_ = epoch;
    return cached_order_;
}

TrainingStream::Batch TrainingStream::next() {
    const int b = cfg_.batch;
    const int p = cfg_.patch;
    Batch batch{Tensor<float>(Shape4{b, cfg_.channels, p, p}),
                Tensor<float>(Shape4{b, cfg_.channels, p, p})};
    const Index per = Index(cfg_.channels) * p * p;
    for (int j = 0; j < b; ++j) {
        const std::uint64_t item = iteration_ * static_cast<std::uint64_t>(b) + j;
        const std::uint64_t epoch = item / images_.size();
        const std::size_t pos = item % images_.size();
        const Image& src = images_[static_cast<std::size_t>(epoch_order(epoch)[pos])];

        Rng rng = Rng(cfg_.seed).split(Rng::mix(kItemStream, item));
        const int top = static_cast<int>(rng.next_index(src.height - p + 1));
        const int left = static_cast<int>(rng.next_index(src.width - p + 1));
        const double sigma = rng.next_uniform(cfg_.noise.sigma_min, cfg_.noise.sigma_max);
        const float noise_scale = static_cast<float>(sigma / 255.0);

        float* clean = batch.clean.data->data() + j * per;
        float* noisy = batch.noisy.data->data() + j * per;
        Index i = 0;
        for (int c = 0; c < cfg_.channels; ++c) {
            for (int y = 0; y < p; ++y) {
                for (int x = 0; x < p; ++x, ++i) {
                    const float v = src.at(c, top + y, left + x);
                    clean[i] = v;
                    noisy[i] = v + noise_scale * static_cast<float>(rng.next_gaussian());
                }
            }
        }
    }
    ++iteration_;
    return batch;
}

}  // namespace tsdn
