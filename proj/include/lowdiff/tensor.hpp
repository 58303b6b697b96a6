#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowdiff {

template <class T>
struct dtype_traits;

template <>
struct dtype_traits<float> {
    static constexpr const char* name = "f32";
    static constexpr std::uint32_t code = 0;
};

template <>
struct dtype_traits<double> {
    static constexpr const char* name = "f64";
    static constexpr std::uint32_t code = 1;
};

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// Dense N-dimensional array of reals, flat row-major storage.
template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(checked_numel(shape_)), T(0));
    }

    Tensor(std::vector<std::int64_t> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != static_cast<std::int64_t>(data_.size()))
            throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::int64_t> shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // rank-4 [B,C,H,W] accessors, the layout used throughout the image path
    T& at4(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at4(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

private:
    static std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (auto d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in shape " + shape_str(shape));
            n *= d;
        }
        return n;
    }

    std::vector<std::int64_t> shape_;
    std::vector<T> data_;
};

template <class T>
void require_shape(const Tensor<T>& t, const std::vector<std::int64_t>& shape, const char* what) {
    if (t.shape() != shape)
        throw std::invalid_argument(std::string(what) + ": expected shape " + shape_str(shape) + ", got " +
                                    shape_str(t.shape()));
}

template <class T>
void require_rank(const Tensor<T>& t, int rank, const char* what) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                    shape_str(t.shape()));
}

// NaN/Inf is an error state, not a value; arithmetic kernels call this on their outputs.
template <class T>
void assert_finite(const Tensor<T>& t, const char* what) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t[i]))
            throw std::runtime_error(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
}

}  // namespace lowdiff
