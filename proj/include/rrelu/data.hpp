#pragma once

// Dataset loading (MNIST IDX, CIFAR binary), synthetic data, standardization
// and train-time augmentation.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rrelu/tensor.hpp"

namespace rrelu {

struct Dataset {
    Tensorf images;  // [N, C, H, W], float
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
};

// IDX files as distributed (big-endian headers).  Pixel values scaled to
// [0, 1].  Throws ParseError on bad magic numbers or truncated payloads.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Convenience: <dir>/train-images-idx3-ubyte etc.
Dataset load_mnist(const std::string& dir, bool train);

// CIFAR-10/100 binary batches.  Pixel values scaled to [0, 1].
Dataset load_cifar10(const std::string& dir, bool train);
Dataset load_cifar100(const std::string& dir, bool train);

// Gaussian class blobs rendered as images: class c gets a mean image drawn
// once from N(0, separation^2), samples add unit noise.  Linearly separable
// for large separation; cheap and deterministic per seed.
Dataset synthetic_blobs(std::size_t n, std::size_t channels, std::size_t height,
                        std::size_t width, int num_classes, float separation,
                        std::uint64_t seed);

// Per-channel standardization fit on the training split only.
struct Standardizer {
    std::vector<float> mean, stdev;
    static Standardizer fit(const Dataset& train);
    void apply(Dataset& d) const;
};

// Random crop with 4-pixel zero padding plus horizontal flip (the standard
// CIFAR recipe).  Deterministic for a given rng.
Tensorf augment_pad_crop_flip(const Tensorf& batch, std::mt19937_64& rng);

// Row gather for minibatching.
std::pair<Tensorf, std::vector<int>> gather(const Dataset& d, const std::vector<std::size_t>& idx);

// Even/odd index halves (used to split a test set into selection and report
// halves).
std::pair<Dataset, Dataset> split_even_odd(const Dataset& d);

Dataset take(const Dataset& d, std::size_t n);

}  // namespace rrelu
