#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dida {

/// Dense row-major float32 tensor. Shape {1} is the scalar convention.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_count(shape_), 0.0f) {}
    Tensor(std::vector<int> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != checked_count(shape_))
            throw std::invalid_argument("tensor: data size " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(float v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Rows/cols view of a rank-2 tensor.
    int rows() const { require_rank(2); return shape_[0]; }
    int cols() const { require_rank(2); return shape_[1]; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ']';
        return os.str();
    }
    std::string shape_str() const { return shape_str(shape_); }

private:
    void require_rank(int r) const {
        if (rank() != r)
            throw std::logic_error("tensor: expected rank " + std::to_string(r) + ", got " + shape_str());
    }
    static int64_t checked_count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("tensor: negative dim in " + shape_str(shape));
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

inline int64_t element_count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

/// Bitwise equality of shape and every element.
inline bool same_values(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    const float* pa = a.data();
    const float* pb = b.data();
    for (int64_t i = 0; i < a.size(); ++i)
        if (pa[i] != pb[i]) return false;
    return true;
}

/// Stable stream derivation: one master seed fans out to named sub-streams
/// so that adding a consumer never perturbs the draws of another.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    uint64_t z = base + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag, int64_t index) {
    return derive_seed(derive_seed(base, tag) + static_cast<uint64_t>(index), "idx");
}

/// Seeded RNG wrapper; every random draw in the library flows through one of these.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    float uniform(float lo = 0.0f, float hi = 1.0f) {
        return std::uniform_real_distribution<float>(lo, hi)(gen_);
    }
    float normal(float mean = 0.0f, float stddev = 1.0f) {
        return std::normal_distribution<float>(mean, stddev)(gen_);
    }
    /// Normal(0, std) resampled until within 2 std — the init used for all weights.
    float truncated_normal(float stddev) {
        for (;;) {
            float v = normal(0.0f, stddev);
            if (std::abs(v) <= 2.0f * stddev) return v;
        }
    }
    /// Uniform integer in [0, n).
    int64_t index(int64_t n) {
        return std::uniform_int_distribution<int64_t>(0, n - 1)(gen_);
    }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<size_t>(index(static_cast<int64_t>(i)))]);
    }

    std::mt19937_64& engine() { return gen_; }

    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }
    void restore(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace dida
