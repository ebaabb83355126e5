#include "smmkit/layers.hpp"

#include <algorithm>
#include <cmath>

namespace smm {

// ---------------------------------------------------------------------------
// Conv1D

Conv1DLayer::Conv1DLayer(std::size_t filters_n, std::size_t channels_n, std::size_t length_n)
    : f_(filters_n), c_(channels_n), m_(length_n) {
    if (f_ < 1 || c_ < 1 || m_ < 1) {
        throw ArgumentError("conv1d needs filters, channels and length >= 1");
    }
    filters = Tensor({f_, c_, m_});
    bias = Tensor({f_});
    grad_filters_ = Tensor({f_, c_, m_});
    grad_bias_ = Tensor({f_});
}

void Conv1DLayer::init_normal(Rng& rng, double stddev) {
    filters = rand_normal(rng, {f_, c_, m_}, 0.0, stddev);
    bias.fill(0.0);
}

Tensor Conv1DLayer::forward(const Tensor& x) {
    if (x.rank() != 2 || x.dim(0) != c_) {
        throw DimensionError("conv1d expects " + std::to_string(c_) + " channels, got input " +
                             shape_str(x.shape()));
    }
    const std::size_t width = x.dim(1);
    // 0-based: output j gathers x[.][j + i - off] for tap i in [0, m).
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>((m_ + 1) / 2 - 1);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(m_);
    Tensor out({f_, width});
    for (std::size_t k = 0; k < f_; ++k) {
        for (std::ptrdiff_t j = 0; j < w; ++j) {
            const std::ptrdiff_t i_lo = std::max<std::ptrdiff_t>(0, off - j);
            const std::ptrdiff_t i_hi = std::min(m, w + off - j);
            double acc = bias[k];
            for (std::size_t ch = 0; ch < c_; ++ch) {
                const double* wrow = filters.data() + (k * c_ + ch) * m_;
                const double* xrow = x.data() + ch * width;
                for (std::ptrdiff_t i = i_lo; i < i_hi; ++i) acc += wrow[i] * xrow[j - off + i];
            }
            out.at(k, static_cast<std::size_t>(j)) = acc;
        }
    }
    cached_input_ = x;
    has_cache_ = true;
    return out;
}

Tensor Conv1DLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw StateError("conv1d backward called before forward");
    }
    const std::size_t width = cached_input_.dim(1);
    if (grad_out.rank() != 2 || grad_out.dim(0) != f_ || grad_out.dim(1) != width) {
        throw DimensionError("conv1d backward expects gradient " +
                             shape_str({f_, width}) + ", got " + shape_str(grad_out.shape()));
    }
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>((m_ + 1) / 2 - 1);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(m_);
    Tensor grad_in({c_, width});
    for (std::size_t k = 0; k < f_; ++k) {
        for (std::ptrdiff_t j = 0; j < w; ++j) {
            const double g = grad_out.at(k, static_cast<std::size_t>(j));
            if (g == 0.0) continue;
            grad_bias_[k] += g;
            const std::ptrdiff_t i_lo = std::max<std::ptrdiff_t>(0, off - j);
            const std::ptrdiff_t i_hi = std::min(m, w + off - j);
            for (std::size_t ch = 0; ch < c_; ++ch) {
                double* gw = grad_filters_.data() + (k * c_ + ch) * m_;
                const double* wrow = filters.data() + (k * c_ + ch) * m_;
                const double* xrow = cached_input_.data() + ch * width;
                double* girow = grad_in.data() + ch * width;
                for (std::ptrdiff_t i = i_lo; i < i_hi; ++i) {
                    gw[i] += g * xrow[j - off + i];
                    girow[j - off + i] += g * wrow[i];
                }
            }
        }
    }
    return grad_in;
}

void Conv1DLayer::bind_params(const std::string& prefix, std::vector<ParamBinding>& out) {
    out.push_back({prefix + ".filters", &filters, &grad_filters_});
    out.push_back({prefix + ".bias", &bias, &grad_bias_});
}

void Conv1DLayer::zero_grads() {
    grad_filters_.fill(0.0);
    grad_bias_.fill(0.0);
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReluLayer::forward(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    cached_input_ = x;
    has_cache_ = true;
    return out;
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw StateError("relu backward called before forward");
    }
    if (!grad_out.same_shape(cached_input_)) {
        throw DimensionError("relu backward gradient shape " + shape_str(grad_out.shape()) +
                             " does not match input " + shape_str(cached_input_.shape()));
    }
    Tensor grad_in(grad_out.shape());
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        grad_in[i] = cached_input_[i] > 0.0 ? grad_out[i] : 0.0;
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Pooling

PoolLayer::PoolLayer(std::size_t window_n, std::size_t stride_n, PoolMode mode_n)
    : p_(window_n), u_(stride_n), mode_(mode_n) {
    if (p_ < 1 || u_ < 1) {
        throw ArgumentError("pooling needs window and stride >= 1");
    }
}

std::size_t PoolLayer::output_length(std::size_t input_length, std::size_t window,
                                     std::size_t stride) {
    if (input_length < window) {
        throw DimensionError("pooling window " + std::to_string(window) +
                             " exceeds input length " + std::to_string(input_length));
    }
    return (input_length - window) / stride + 1;
}

Tensor PoolLayer::forward(const Tensor& x) {
    if (x.rank() != 2) {
        throw DimensionError("pooling expects a rank-2 feature map, got " + shape_str(x.shape()));
    }
    const std::size_t rows = x.dim(0);
    const std::size_t width = x.dim(1);
    const std::size_t out_len = output_length(width, p_, u_);
    Tensor out({rows, out_len});
    if (mode_ == PoolMode::max) {
        argmax_.assign(rows * out_len, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < out_len; ++j) {
                const std::size_t start = j * u_;
                std::size_t best = start;
                double best_v = x.at(r, start);
                for (std::size_t k = 1; k < p_; ++k) {
                    const double v = x.at(r, start + k);
                    if (v > best_v) { // strict: ties keep the earliest index
                        best_v = v;
                        best = start + k;
                    }
                }
                out.at(r, j) = best_v;
                argmax_[r * out_len + j] = best;
            }
        }
    } else {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < out_len; ++j) {
                const std::size_t start = j * u_;
                double acc = 0.0;
                for (std::size_t k = 0; k < p_; ++k) acc += x.at(r, start + k);
                out.at(r, j) = acc / static_cast<double>(p_);
            }
        }
    }
    cached_shape_ = x.shape();
    has_cache_ = true;
    return out;
}

Tensor PoolLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw StateError("pooling backward called before forward");
    }
    const std::size_t rows = cached_shape_[0];
    const std::size_t width = cached_shape_[1];
    const std::size_t out_len = output_length(width, p_, u_);
    if (grad_out.rank() != 2 || grad_out.dim(0) != rows || grad_out.dim(1) != out_len) {
        throw DimensionError("pooling backward expects gradient " + shape_str({rows, out_len}) +
                             ", got " + shape_str(grad_out.shape()));
    }
    Tensor grad_in({rows, width});
    if (mode_ == PoolMode::max) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < out_len; ++j) {
                grad_in.at(r, argmax_[r * out_len + j]) += grad_out.at(r, j);
            }
        }
    } else {
        const double inv_p = 1.0 / static_cast<double>(p_);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < out_len; ++j) {
                const double g = grad_out.at(r, j) * inv_p;
                const std::size_t start = j * u_;
                for (std::size_t k = 0; k < p_; ++k) grad_in.at(r, start + k) += g;
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Flatten

Tensor FlattenLayer::forward(const Tensor& x) {
    cached_shape_ = x.shape();
    has_cache_ = true;
    return Tensor({x.size()}, x.values());
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw StateError("flatten backward called before forward");
    }
    return Tensor(cached_shape_, grad_out.values());
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(std::size_t out_size, std::size_t in_size) {
    if (out_size < 1 || in_size < 1) {
        throw ArgumentError("dense layer needs positive sizes");
    }
    weights = Tensor({out_size, in_size});
    bias = Tensor({out_size});
    grad_weights_ = Tensor({out_size, in_size});
    grad_bias_ = Tensor({out_size});
}

void DenseLayer::init_normal(Rng& rng, double stddev) {
    weights = rand_normal(rng, weights.shape(), 0.0, stddev);
    bias.fill(0.0);
}

Tensor DenseLayer::forward(const Tensor& x) {
    if (x.rank() != 1 || x.dim(0) != weights.dim(1)) {
        throw DimensionError("dense expects input of length " + std::to_string(weights.dim(1)) +
                             ", got " + shape_str(x.shape()));
    }
    cached_input_ = x;
    has_cache_ = true;
    Tensor out = matvec(weights, x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i];
    return out;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw StateError("dense backward called before forward");
    }
    const std::size_t out_n = weights.dim(0);
    const std::size_t in_n = weights.dim(1);
    if (grad_out.rank() != 1 || grad_out.dim(0) != out_n) {
        throw DimensionError("dense backward expects gradient of length " + std::to_string(out_n) +
                             ", got " + shape_str(grad_out.shape()));
    }
    Tensor grad_in({in_n});
    for (std::size_t i = 0; i < out_n; ++i) {
        const double g = grad_out[i];
        grad_bias_[i] += g;
        for (std::size_t j = 0; j < in_n; ++j) {
            grad_weights_.at(i, j) += g * cached_input_[j];
            grad_in[j] += g * weights.at(i, j);
        }
    }
    return grad_in;
}

void DenseLayer::bind_params(const std::string& prefix, std::vector<ParamBinding>& out) {
    out.push_back({prefix + ".weights", &weights, &grad_weights_});
    out.push_back({prefix + ".bias", &bias, &grad_bias_});
}

void DenseLayer::zero_grads() {
    grad_weights_.fill(0.0);
    grad_bias_.fill(0.0);
}

// ---------------------------------------------------------------------------
// Dropout

DropoutLayer::DropoutLayer(double rate_n) : rate_(rate_n) {
    if (rate_ < 0.0 || rate_ >= 1.0) {
        throw ArgumentError("dropout rate must lie in [0, 1), got " + std::to_string(rate_));
    }
}

Tensor DropoutLayer::forward(const Tensor& x) {
    if (mode_ == Mode::infer || rate_ == 0.0) {
        cached_mask_ = Tensor::full(x.shape(), 1.0);
        has_cache_ = true;
        return x;
    }
    if (rng_ == nullptr) {
        throw StateError("dropout in train mode needs an rng");
    }
    const double keep_scale = 1.0 / (1.0 - rate_);
    cached_mask_ = Tensor(x.shape());
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double m = rng_->next_double() < rate_ ? 0.0 : keep_scale;
        cached_mask_[i] = m;
        out[i] = x[i] * m;
    }
    has_cache_ = true;
    return out;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw StateError("dropout backward called before forward");
    }
    return ewise(grad_out, cached_mask_, EwiseOp::mul);
}

// ---------------------------------------------------------------------------
// Softmax + cross-entropy

SoftmaxXent softmax_xent(const Tensor& z, std::size_t label) {
    if (z.rank() != 1 || z.dim(0) < 2) {
        throw ArgumentError("softmax_xent expects a logit vector of length >= 2");
    }
    const std::size_t k = z.dim(0);
    if (label >= k) {
        throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(k) + " classes");
    }
    double zmax = z[0];
    for (std::size_t i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
    Tensor probs({k});
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        probs[i] = std::exp(z[i] - zmax);
        denom += probs[i];
    }
    for (std::size_t i = 0; i < k; ++i) probs[i] /= denom;
    SoftmaxXent result;
    // -log(probs[label]) in a form that stays finite when the prob underflows.
    result.loss = std::log(denom) - (z[label] - zmax);
    result.grad_z = probs;
    result.grad_z[label] -= 1.0;
    result.probs = std::move(probs);
    return result;
}

} // namespace smm
