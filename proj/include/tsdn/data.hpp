#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsdn/image.hpp"
#include "tsdn/rng.hpp"
#include "tsdn/tensor.hpp"

namespace tsdn {

// Gaussian noise level range on the 0..255 intensity scale.
struct NoiseSpec {
    double sigma_min = 0.0;
    double sigma_max = 50.0;

    void validate() const {
        if (sigma_min < 0 || sigma_max < sigma_min || sigma_max > 100)
            throw ShapeError("noise spec: need 0 <= sigma_min <= sigma_max <= 100");
    }
};

// Adds i.i.d. zero-mean Gaussian noise with std sigma/255 per element.
// No clipping: training pairs keep the exact injected noise.
Image add_awgn(const Image& img, double sigma, Rng& rng);

// `count` patches of size x size at uniformly random valid corners.
std::vector<Image> extract_patches(const Image& img, int size, int count, Rng& rng);

// Image <-> tensor bridges. Tensors are (N,C,H,W).
template <typename S>
Tensor<S> to_tensor(const Image& img) {
    Tensor<S> t(Shape4{1, img.channels, img.height, img.width});
    for (Index i = 0; i < t.numel(); ++i)
        (*t.data)[i] = static_cast<S>(img.pixels[static_cast<std::size_t>(i)]);
    return t;
}

template <typename S>
Image from_tensor(const Tensor<S>& t, Index batch_index = 0) {
    if (batch_index < 0 || batch_index >= t.shape.n)
        throw ShapeError("from_tensor: batch index out of range for " + t.shape.str());
    Image img(static_cast<int>(t.shape.c), static_cast<int>(t.shape.h),
              static_cast<int>(t.shape.w));
    const Index per = t.shape.c * t.shape.hw();
    for (Index i = 0; i < per; ++i)
        img.pixels[static_cast<std::size_t>(i)] =
            static_cast<float>((*t.data)[batch_index * per + i]);
    return img;
}

struct StreamConfig {
    int patch = 128;
    int batch = 4;
    int channels = 1;  // 1 grayscale, 3 color
    NoiseSpec noise;
    std::uint64_t seed = 0;
};

// Streams (noisy, clean) float batches from a directory of images.
//
// Every draw is a pure function of (seed, global item index): file order is
// reshuffled per epoch from the seed, and each item gets its own child
// generator for crop corner, noise level, and noise. seek(iteration) is
// therefore exact, which is what makes checkpoint resume bit-reproducible.
class TrainingStream {
  public:
    struct Batch {
        Tensor<float> noisy;
        Tensor<float> clean;
    };

    TrainingStream(const std::string& dir, const StreamConfig& cfg);

    Batch next();
    void seek(std::uint64_t iteration) { iteration_ = iteration; }
    std::uint64_t iteration() const { return iteration_; }
    std::size_t file_count() const { return images_.size(); }
    const StreamConfig& config() const { return cfg_; }

  private:
    const std::vector<int>& epoch_order(std::uint64_t epoch);

    StreamConfig cfg_;
    std::vector<Image> images_;
    std::uint64_t iteration_ = 0;
    std::uint64_t cached_epoch_ = ~0ULL;
    std::vector<int> cached_order_;
};

// Sorted list of regular files under `dir` (recursive).
std::vector<std::string> list_files(const std::string& dir);

}  // namespace tsdn
