#include "smmkit/tensor.hpp"

#include <cmath>
#include <sstream>

namespace smm {

namespace {

std::size_t checked_volume(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
        throw ArgumentError("tensor shape must have at least one dimension");
    }
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) {
            throw ArgumentError("tensor dimensions must be positive, got " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_volume(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_volume(shape_) != data_.size()) {
        throw DimensionError("value count " + std::to_string(data_.size()) +
                             " does not fill shape " + shape_str(shape_));
    }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul needs rank-2 operands, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                c.at(i, j) += av * b.at(p, j);
            }
        }
    }
    return c;
}

Tensor matvec(const Tensor& w, const Tensor& v) {
    if (w.rank() != 2 || v.rank() != 1 || w.dim(1) != v.dim(0)) {
        throw DimensionError("matvec shape mismatch: " + shape_str(w.shape()) + " vs " +
                             shape_str(v.shape()));
    }
    const std::size_t m = w.dim(0), n = w.dim(1);
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += w.at(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

Tensor ewise(const Tensor& a, const Tensor& b, EwiseOp op) {
    if (!a.same_shape(b)) {
        throw DimensionError("elementwise op on mismatched shapes " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t n = a.size();
    switch (op) {
    case EwiseOp::add:
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
        break;
    case EwiseOp::sub:
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
        break;
    case EwiseOp::mul:
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
        break;
    }
    return out;
}

double sigmoid(double x) {
    // Evaluate from the side that keeps exp() from overflowing.
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor map_sigmoid(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = sigmoid(a[i]);
    return out;
}

Tensor map_tanh(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

double Rng::normal(double mean, double stddev) {
    if (stddev < 0.0) {
        throw ArgumentError("normal() requires stddev >= 0, got " + std::to_string(stddev));
    }
    if (has_spare_) {
        has_spare_ = false;
        return mean + stddev * spare_;
    }
    const double u1 = 1.0 - next_double(); // (0, 1], keeps log() finite
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
}

std::size_t Rng::next_index(std::size_t n) {
    if (n == 0) {
        throw ArgumentError("next_index(0)");
    }
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t sm = master ^ (0xA24BAED4963EE407ULL * (stream + 1));
    std::uint64_t first = splitmix64(sm);
    return first ^ splitmix64(sm);
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = rng.next_index(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

Tensor rand_normal(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev) {
    if (stddev < 0.0) {
        throw ArgumentError("rand_normal requires std >= 0, got " + std::to_string(stddev));
    }
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = mean + stddev * rng.normal(0.0, 1.0);
    return t;
}

} // namespace smm
