#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "grevnet/error.hpp"

namespace grevnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

// Live/peak byte counts of all tensor storage on this thread.
struct AllocationStats {
    std::size_t live = 0;
    std::size_t peak = 0;
};

inline AllocationStats& allocation_stats() {
    thread_local AllocationStats stats;
    return stats;
}

// Fixed alignment keeps vectorised reduction order independent of where a buffer lands.
inline constexpr std::size_t tensor_alignment = 64;

template <typename T>
struct CountingAllocator {
    using value_type = T;

    CountingAllocator() noexcept = default;
    template <typename U>
    CountingAllocator(const CountingAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        auto& s = allocation_stats();
        s.live += n * sizeof(T);
        s.peak = std::max(s.peak, s.live);
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(tensor_alignment)));
    }
    void deallocate(T* p, std::size_t n) noexcept {
        allocation_stats().live -= n * sizeof(T);
        ::operator delete(p, n * sizeof(T), std::align_val_t(tensor_alignment));
    }

    template <typename U>
    bool operator==(const CountingAllocator<U>&) const noexcept { return true; }
};

} // namespace detail

/// Measures the peak of live tensor bytes above the level at construction.
class AllocationScope {
public:
    AllocationScope() : base_(detail::allocation_stats().live) {
        saved_peak_ = detail::allocation_stats().peak;
        detail::allocation_stats().peak = base_;
    }
    ~AllocationScope() {
        auto& s = detail::allocation_stats();
        s.peak = std::max(s.peak, saved_peak_);
    }
    AllocationScope(const AllocationScope&) = delete;
    AllocationScope& operator=(const AllocationScope&) = delete;

    std::size_t peak_above_base() const { return detail::allocation_stats().peak - base_; }

private:
    std::size_t base_;
    std::size_t saved_peak_;
};

/// Dense row-major array. Images use the N x C x H x W convention.
template <typename T>
class Tensor {
public:
    using value_type = T;
    using Storage = std::vector<T, detail::CountingAllocator<T>>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_extents();
    }
    Tensor(Shape shape, std::initializer_list<T> values) : shape_(std::move(shape)), data_(values) {
        check_extents();
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " + shape_string(shape_));
    }
    Tensor(Shape shape, std::span<const T> values)
        : shape_(std::move(shape)), data_(values.begin(), values.end()) {
        check_extents();
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " + shape_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return {data_.data(), data_.size()}; }
    std::span<const T> values() const noexcept { return {data_.data(), data_.size()}; }
    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
    T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Reinterprets the buffer; element count must be preserved.
    void reshape(Shape shape) {
        if (shape_size(shape) != data_.size())
            throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
        shape_ = std::move(shape);
    }
    Tensor reshaped(Shape shape) const& {
        Tensor out = *this;
        out.reshape(std::move(shape));
        return out;
    }
    Tensor reshaped(Shape shape) && {
        reshape(std::move(shape));
        return std::move(*this);
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

private:
    void check_extents() const {
        for (auto e : shape_)
            if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_string(shape_));
    }

    Shape shape_;
    Storage data_;
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

} // namespace grevnet
