#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "grevnet/ops.hpp"

namespace grevnet {

/// Affine map applied to raw pixel bytes: value = (raw + shift) * scale.
struct Normalization {
    double shift = 0.0;
    double scale = 1.0;
    std::size_t pad = 0;  // zero border added on each side

    double apply(double raw) const { return (raw + shift) * scale; }
    double invert(double value) const { return value / scale - shift; }
};

template <typename T>
struct Dataset {
    Tensor<T> images;         // n x C x H x W
    std::vector<int> labels;  // empty when unlabeled
    std::size_t num_classes = 0;
    Normalization norm;

    std::size_t size() const { return images.rank() ? images.dim(0) : 0; }
    bool labeled() const { return !labels.empty(); }
    Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

    /// Copies rows `idx` into a batch.
    Tensor<T> gather(const std::vector<std::size_t>& idx) const {
        const std::size_t per = images.size() / size();
        Shape s = images.shape();
        s[0] = idx.size();
        Tensor<T> out(s);
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy_n(images.data() + idx[i] * per, per, out.data() + i * per);
        return out;
    }
    std::vector<int> gather_labels(const std::vector<std::size_t>& idx) const {
        std::vector<int> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(labels.at(i));
        return out;
    }

    /// First n examples (or all of them).
    Dataset head(std::size_t n) const {
        n = std::min(n, size());
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        Dataset d;
        d.images = gather(idx);
        if (labeled()) d.labels.assign(labels.begin(), labels.begin() + long(n));
        d.num_classes = num_classes;
        d.norm = norm;
        return d;
    }

    void validate() const {
        if (!images.all_finite()) throw DataError("dataset: non-finite image values");
        if (labeled()) {
            if (labels.size() != size()) throw DataError("dataset: label count mismatch");
            for (int l : labels)
                if (l < 0 || std::size_t(l) >= num_classes) throw DataError("dataset: label out of range");
        }
    }
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
           std::uint32_t(b[off + 3]);
}

} // namespace detail

/// IDX image and label files. Images are scaled to [0, 1] and zero-padded by `pad` on every side.
template <typename T>
Dataset<T> parse_mnist_idx(const std::vector<unsigned char>& img, const std::vector<unsigned char>& lab,
                           std::size_t pad = 2, const std::string& what = "idx") {
    if (img.size() < 16) throw DataError(what + ": truncated image header");
    if (detail::be32(img, 0) != 0x00000803)
        throw DataError(what + ": bad image magic " + std::to_string(detail::be32(img, 0)));
    const std::size_t n = detail::be32(img, 4), h = detail::be32(img, 8), w = detail::be32(img, 12);
    if (n == 0 || h == 0 || w == 0) throw DataError(what + ": empty image file");
    if (img.size() < 16 + n * h * w) throw DataError(what + ": truncated image payload");
    if (lab.size() < 8) throw DataError(what + ": truncated label header");
    if (detail::be32(lab, 0) != 0x00000801)
        throw DataError(what + ": bad label magic " + std::to_string(detail::be32(lab, 0)));
    const std::size_t nl = detail::be32(lab, 4);
    if (nl != n) throw DataError(what + ": " + std::to_string(n) + " images but " + std::to_string(nl) + " labels");
    if (lab.size() < 8 + n) throw DataError(what + ": truncated label payload");

    Dataset<T> d;
    d.norm = Normalization{0.0, 1.0 / 255.0, pad};
    const std::size_t H = h + 2 * pad, W = w + 2 * pad;
    d.images = Tensor<T>({n, 1, H, W});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c)
                d.images(i, 0, r + pad, c + pad) = static_cast<T>(d.norm.apply(img[16 + (i * h + r) * w + c]));
    d.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        d.labels[i] = lab[8 + i];
        max_label = std::max(max_label, d.labels[i]);
    }
    d.num_classes = std::max<std::size_t>(10, std::size_t(max_label) + 1);
    d.validate();
    return d;
}

template <typename T>
Dataset<T> load_mnist_idx(const std::string& images_path, const std::string& labels_path, std::size_t pad = 2) {
    return parse_mnist_idx<T>(detail::read_file(images_path), detail::read_file(labels_path), pad, images_path);
}

inline std::vector<double> mixture_center(std::size_t c, std::size_t classes, std::size_t d, double radius = 4.0) {
    std::vector<double> m(d, 0.0);
    if (classes == 1) return m;
    const double a = 2.0 * std::numbers::pi * double(c) / double(classes);
    m[0] = radius * std::cos(a);
    if (d > 1) m[1] = radius * std::sin(a);
    return m;
}

/// Labeled draws from isotropic Gaussians (std `spread`) whose centers sit on a
/// circle of radius `radius` in the first two coordinates. Images have shape d x 1 x 1.
template <typename T>
Dataset<T> synth_gaussian_mixture(Rng& rng, std::size_t n, std::size_t classes, std::size_t d, double radius = 4.0,
                                  double spread = 0.5) {
    if (classes == 0 || d == 0 || n == 0) throw ValueError("synth_gaussian_mixture: empty request");
    Dataset<T> ds;
    ds.images = Tensor<T>({n, d, 1, 1});
    ds.labels.resize(n);
    ds.num_classes = classes;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        ds.labels[i] = int(c);
        const auto center = mixture_center(c, classes, d, radius);
        for (std::size_t j = 0; j < d; ++j) ds.images[i * d + j] = static_cast<T>(center[j] + spread * rng.normal());
    }
    return ds;
}

/// Index batches over one epoch. Non-stratified: a shuffled permutation cut into
/// consecutive batches. Stratified: each batch takes `batch / classes` examples
/// of every class, until the smallest class runs out.
class BatchIterator {
public:
    BatchIterator(std::size_t n, std::size_t batch, Rng rng) : n_(n), batch_(batch), rng_(rng) {
        if (batch == 0 || n == 0) throw ValueError("batch iterator: empty");
    }
    BatchIterator(const std::vector<int>& labels, std::size_t classes, std::size_t batch, Rng rng)
        : n_(labels.size()), batch_(batch), rng_(rng), stratified_(true), labels_(labels), classes_(classes) {
        if (labels.empty()) throw DataError("batch iterator: stratified batches need labels");
        if (batch < classes) throw ValueError("batch iterator: batch smaller than class count");
    }

    /// All batches of the epoch; consumes randomness from the iterator's stream.
    std::vector<std::vector<std::size_t>> epoch() {
        std::vector<std::vector<std::size_t>> out;
        if (!stratified_) {
            std::vector<std::size_t> idx(n_);
            std::iota(idx.begin(), idx.end(), 0);
            shuffle(idx.begin(), idx.end(), rng_);
            for (std::size_t s = 0; s < n_; s += batch_)
                out.emplace_back(idx.begin() + long(s), idx.begin() + long(std::min(n_, s + batch_)));
            return out;
        }
        std::vector<std::vector<std::size_t>> by_class(classes_);
        for (std::size_t i = 0; i < n_; ++i) by_class.at(std::size_t(labels_[i])).push_back(i);
        std::size_t smallest = n_;
        for (auto& v : by_class) {
            shuffle(v.begin(), v.end(), rng_);
            if (!v.empty()) smallest = std::min(smallest, v.size());
        }
        const std::size_t per = batch_ / classes_;
        for (std::size_t s = 0; s + per <= smallest; s += per) {
            std::vector<std::size_t> b;
            for (const auto& v : by_class)
                if (!v.empty()) b.insert(b.end(), v.begin() + long(s), v.begin() + long(s + per));
            out.push_back(std::move(b));
        }
        return out;
    }

    Rng& rng() { return rng_; }

private:
    std::size_t n_, batch_;
    Rng rng_;
    bool stratified_ = false;
    std::vector<int> labels_;
    std::size_t classes_ = 0;
};

} // namespace grevnet
