#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "smmkit/tensor.hpp"

namespace smm {

enum class Mode { train, infer };
enum class PoolMode { max, average };

/// Named live view onto one trainable tensor and its gradient accumulator.
struct ParamBinding {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

/// Common interface for the CNN building blocks. A layer caches whatever
/// its backward pass needs during forward; one layer instance serves one
/// forward/backward pair at a time.
class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x) = 0;

    /// Gradient of the loss w.r.t. the layer input; parameter gradients
    /// accumulate into the layer until zero_grads().
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual void bind_params(const std::string& prefix, std::vector<ParamBinding>& out) {
        (void)prefix;
        (void)out;
    }
    virtual void set_mode(Mode mode) { (void)mode; }
    virtual void set_rng(Rng* rng) { (void)rng; }
    virtual void zero_grads() {}
};

/// Same-length 1D convolution over a multi-channel window. The input is
/// zero-padded and the filter centered (offset = ceil(m/2)), so a [c x v]
/// input maps to an [f x v] feature map.
class Conv1DLayer : public Layer {
public:
    Conv1DLayer(std::size_t filters, std::size_t channels, std::size_t length);

    void init_normal(Rng& rng, double stddev);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void bind_params(const std::string& prefix, std::vector<ParamBinding>& out) override;
    void zero_grads() override;

    std::size_t filter_count() const { return f_; }
    std::size_t channels() const { return c_; }
    std::size_t filter_length() const { return m_; }

    Tensor filters; // [f x c x m]
    Tensor bias;    // [f]

    const Tensor& filters_grad() const { return grad_filters_; }
    const Tensor& bias_grad() const { return grad_bias_; }

private:
    std::size_t f_, c_, m_;
    Tensor grad_filters_;
    Tensor grad_bias_;
    Tensor cached_input_;
    bool has_cache_ = false;
};

class ReluLayer : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor cached_input_;
    bool has_cache_ = false;
};

/// Max or average pooling with window p and stride u.
/// Output length = floor((input_length - p) / u) + 1; incomplete trailing
/// windows are dropped. Max ties route the gradient to the earliest index.
class PoolLayer : public Layer {
public:
    PoolLayer(std::size_t window, std::size_t stride, PoolMode mode);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

    static std::size_t output_length(std::size_t input_length, std::size_t window,
                                     std::size_t stride);

    std::size_t window() const { return p_; }
    std::size_t stride() const { return u_; }
    PoolMode mode() const { return mode_; }

private:
    std::size_t p_, u_;
    PoolMode mode_;
    std::vector<std::size_t> cached_shape_;
    std::vector<std::size_t> argmax_;
    bool has_cache_ = false;
};

/// Collapses an [f x len] map row-major into a vector of f*len values.
class FlattenLayer : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    std::vector<std::size_t> cached_shape_;
    bool has_cache_ = false;
};

class DenseLayer : public Layer {
public:
    DenseLayer(std::size_t out_size, std::size_t in_size);

    void init_normal(Rng& rng, double stddev);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void bind_params(const std::string& prefix, std::vector<ParamBinding>& out) override;
    void zero_grads() override;

    Tensor weights; // [out x in]
    Tensor bias;    // [out]

    const Tensor& weights_grad() const { return grad_weights_; }
    const Tensor& bias_grad() const { return grad_bias_; }

private:
    Tensor grad_weights_;
    Tensor grad_bias_;
    Tensor cached_input_;
    bool has_cache_ = false;
};

/// Inverted dropout: units are zeroed with probability `rate` during
/// training and survivors scaled by 1/(1-rate); inference is the identity.
class DropoutLayer : public Layer {
public:
    explicit DropoutLayer(double rate);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void set_mode(Mode mode) override { mode_ = mode; }
    void set_rng(Rng* rng) override { rng_ = rng; }

    double rate() const { return rate_; }

private:
    double rate_;
    Mode mode_ = Mode::train;
    Rng* rng_ = nullptr;
    Tensor cached_mask_;
    bool has_cache_ = false;
};

/// Softmax probabilities, cross-entropy loss and its input gradient in one
/// pass. The exponent shift (subtract max) keeps large logits finite.
struct SoftmaxXent {
    double loss;
    Tensor probs;
    Tensor grad_z;
};

SoftmaxXent softmax_xent(const Tensor& z, std::size_t label);

} // namespace smm
