#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "smmkit/errors.hpp"

namespace smm {

/// Dense n-dimensional array of doubles in row-major order.
///
/// Tensors are plain values: copyable, immutable once handed to an
/// operation (operations never mutate their inputs). 64-bit floats are
/// used throughout so finite-difference gradient checks stay tight.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape. Every dimension must be >= 1.
    explicit Tensor(std::vector<std::size_t> shape);

    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor identity(std::size_t n);
    /// Rank-1 tensor from values.
    static Tensor vector(std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double value);

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

/// c[i][j] = sum_k a[i][k] * b[k][j]. Throws DimensionError naming both
/// shapes when the inner dimensions disagree or an operand is not rank-2.
Tensor matmul(const Tensor& a, const Tensor& b);

/// w[m x n] * v[n] -> [m].
Tensor matvec(const Tensor& w, const Tensor& v);

enum class EwiseOp { add, sub, mul };

/// Elementwise combination of two same-shape tensors; mul is the Hadamard
/// product.
Tensor ewise(const Tensor& a, const Tensor& b, EwiseOp op);

/// Numerically stable logistic function; no overflow for |x| <= 700.
double sigmoid(double x);

Tensor map_sigmoid(const Tensor& a);
Tensor map_tanh(const Tensor& a);

/// Deterministic, portable random number generator (xoshiro256** state,
/// seeded via a splitmix64 stream). Identical seed => identical sequence;
/// the platform default generators are never used.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double();

    double uniform(double lo, double hi);

    /// N(mean, stddev^2) via Box-Muller; one spare deviate is cached.
    double normal(double mean, double stddev);

    /// Uniform index in [0, n) without modulo bias.
    std::size_t next_index(std::size_t n);

private:
    std::array<std::uint64_t, 4> state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stable per-task seed derivation from a master seed (splitmix64 mix),
/// so parallel workers draw from disjoint streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// In-place Fisher-Yates shuffle driven by the library Rng.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);

/// Tensor of N(mean, std^2) samples; std must be >= 0.
Tensor rand_normal(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev);

} // namespace smm
