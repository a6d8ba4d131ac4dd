#include "rrelu/data.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "rrelu/error.hpp"

namespace rrelu {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw ParseError("cannot open " + path);
    const auto n = static_cast<std::size_t>(f.tellg());
    std::vector<unsigned char> buf(n);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!f) throw ParseError("short read from " + path);
    return buf;
}

std::uint32_t be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    if (img.size() < 16) throw ParseError(images_path + ": truncated IDX header");
    if (be32(img.data()) != 2051)
        throw ParseError(images_path + ": bad magic " + std::to_string(be32(img.data())) +
                         " (want 2051)");
    const std::size_t n = be32(img.data() + 4);
    const std::size_t h = be32(img.data() + 8);
    const std::size_t w = be32(img.data() + 12);
    if (img.size() != 16 + n * h * w)
        throw ParseError(images_path + ": payload size mismatch");

    const auto lbl = read_file(labels_path);
    if (lbl.size() < 8) throw ParseError(labels_path + ": truncated IDX header");
    if (be32(lbl.data()) != 2049)
        throw ParseError(labels_path + ": bad magic " + std::to_string(be32(lbl.data())) +
                         " (want 2049)");
    if (be32(lbl.data() + 4) != n)
        throw ParseError(labels_path + ": label count does not match image count");
    if (lbl.size() != 8 + n) throw ParseError(labels_path + ": payload size mismatch");

    Dataset d;
    d.images = Tensorf({n, 1, h, w});
    d.labels.resize(n);
    d.num_classes = 10;
    for (std::size_t i = 0; i < n * h * w; ++i)
        d.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
    for (std::size_t i = 0; i < n; ++i) {
        if (lbl[8 + i] > 9) throw ParseError(labels_path + ": label out of range");
        d.labels[i] = lbl[8 + i];
    }
    return d;
}

Dataset load_mnist(const std::string& dir, bool train) {
    const std::string img = train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
    const std::string lab = train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
    return load_mnist_idx((fs::path(dir) / img).string(), (fs::path(dir) / lab).string());
}

namespace {

// One CIFAR binary record: label byte(s) then 3072 pixel bytes (RGB planes).
Dataset load_cifar_files(const std::vector<std::string>& paths, std::size_t label_bytes,
                         std::size_t label_index, int num_classes) {
    constexpr std::size_t kPixels = 3 * 32 * 32;
    std::vector<unsigned char> all;
    for (const auto& p : paths) {
        auto buf = read_file(p);
        if (buf.size() % (label_bytes + kPixels) != 0)
            throw ParseError(p + ": size is not a whole number of CIFAR records");
        all.insert(all.end(), buf.begin(), buf.end());
    }
    const std::size_t rec = label_bytes + kPixels;
    const std::size_t n = all.size() / rec;
    if (n == 0) throw ParseError("CIFAR: no records found");
    Dataset d;
    d.images = Tensorf({n, 3, 32, 32});
    d.labels.resize(n);
    d.num_classes = num_classes;
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* r = all.data() + i * rec;
        const int label = r[label_index];
        if (label >= num_classes)
            throw ParseError("CIFAR: label " + std::to_string(label) + " out of range");
        d.labels[i] = label;
        float* out = d.images.ptr() + i * kPixels;
        for (std::size_t j = 0; j < kPixels; ++j)
            out[j] = static_cast<float>(r[label_bytes + j]) / 255.0f;
    }
    return d;
}

}  // namespace

Dataset load_cifar10(const std::string& dir, bool train) {
    std::vector<std::string> paths;
    if (train) {
        for (int b = 1; b <= 5; ++b)
            paths.push_back((fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string());
    } else {
        paths.push_back((fs::path(dir) / "test_batch.bin").string());
    }
    return load_cifar_files(paths, 1, 0, 10);
}

Dataset load_cifar100(const std::string& dir, bool train) {
    const std::string file = train ? "train.bin" : "test.bin";
    // Records carry coarse then fine label; we train on the fine one.
    return load_cifar_files({(fs::path(dir) / file).string()}, 2, 1, 100);
}

Dataset synthetic_blobs(std::size_t n, std::size_t channels, std::size_t height,
                        std::size_t width, int num_classes, float separation,
                        std::uint64_t seed) {
    if (n == 0 || num_classes <= 0) throw InputError("synthetic_blobs: empty request");
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> unit(0.0f, 1.0f);
    const std::size_t pix = channels * height * width;
    std::vector<float> means(static_cast<std::size_t>(num_classes) * pix);
    for (auto& v : means) v = separation * unit(rng);
    Dataset d;
    d.images = Tensorf({n, channels, height, width});
    d.labels.resize(n);
    d.num_classes = num_classes;
    std::normal_distribution<float> jitter(0.0f, 1.0f);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(num_classes));
        d.labels[i] = c;
        const float* mu = means.data() + static_cast<std::size_t>(c) * pix;
        float* out = d.images.ptr() + i * pix;
        for (std::size_t j = 0; j < pix; ++j) out[j] = mu[j] + jitter(rng);
    }
    return d;
}

Standardizer Standardizer::fit(const Dataset& train) {
    const std::size_t n = train.images.dim(0), c = train.images.dim(1),
                      hw = train.images.dim(2) * train.images.dim(3);
    if (n * hw == 0) throw InputError("standardizer: empty training set");
    Standardizer s;
    s.mean.assign(c, 0.0f);
    s.stdev.assign(c, 0.0f);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const float* p = train.images.ptr() + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) acc += p[j];
        }
        const double mu = acc / static_cast<double>(n * hw);
        double sq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const float* p = train.images.ptr() + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) sq += (p[j] - mu) * (p[j] - mu);
        }
        s.mean[ch] = static_cast<float>(mu);
        s.stdev[ch] = static_cast<float>(std::sqrt(sq / static_cast<double>(n * hw)));
        if (s.stdev[ch] < 1e-8f) s.stdev[ch] = 1.0f;  // constant channel
    }
    return s;
}

void Standardizer::apply(Dataset& d) const {
    const std::size_t n = d.images.dim(0), c = d.images.dim(1),
                      hw = d.images.dim(2) * d.images.dim(3);
    if (mean.size() != c)
        throw DimensionError("standardizer: fitted on " + std::to_string(mean.size()) +
                             " channels, applying to " + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            float* p = d.images.ptr() + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) p[j] = (p[j] - mean[ch]) / stdev[ch];
        }
}

Tensorf augment_pad_crop_flip(const Tensorf& batch, std::mt19937_64& rng) {
    if (batch.ndim() != 4) throw DimensionError("augment: expected [N,C,H,W]");
    const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    constexpr std::size_t kPad = 4;
    std::uniform_int_distribution<std::size_t> dy(0, 2 * kPad), dx(0, 2 * kPad);
    std::bernoulli_distribution flip(0.5);
    Tensorf out(batch.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t oy = dy(rng), ox = dx(rng);
        const bool fl = flip(rng);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const float* src = batch.ptr() + (i * c + ch) * h * w;
            float* dst = out.ptr() + (i * c + ch) * h * w;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    // position in the padded image the crop window reads from
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + oy) -
                                              static_cast<std::ptrdiff_t>(kPad);
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + ox) -
                                              static_cast<std::ptrdiff_t>(kPad);
                    float v = 0.0f;
                    if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                        sx < static_cast<std::ptrdiff_t>(w))
                        v = src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
                    dst[y * w + (fl ? w - 1 - x : x)] = v;
                }
        }
    }
    return out;
}

std::pair<Tensorf, std::vector<int>> gather(const Dataset& d,
                                            const std::vector<std::size_t>& idx) {
    const std::size_t pix = d.images.size() / std::max<std::size_t>(d.images.dim(0), 1);
    std::vector<std::size_t> shape = d.images.shape;
    shape[0] = idx.size();
    Tensorf images(shape);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= d.size()) throw InputError("gather: index out of range");
        std::memcpy(images.ptr() + i * pix, d.images.ptr() + idx[i] * pix, pix * sizeof(float));
        labels[i] = d.labels[idx[i]];
    }
    return {std::move(images), std::move(labels)};
}

std::pair<Dataset, Dataset> split_even_odd(const Dataset& d) {
    std::vector<std::size_t> even, odd;
    for (std::size_t i = 0; i < d.size(); ++i) (i % 2 == 0 ? even : odd).push_back(i);
    auto [ei, el] = gather(d, even);
    auto [oi, ol] = gather(d, odd);
    Dataset a{std::move(ei), std::move(el), d.num_classes};
    Dataset b{std::move(oi), std::move(ol), d.num_classes};
    return {std::move(a), std::move(b)};
}

Dataset take(const Dataset& d, std::size_t n) {
    n = std::min(n, d.size());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    auto [img, lab] = gather(d, idx);
    return Dataset{std::move(img), std::move(lab), d.num_classes};
}

}  // namespace rrelu
