#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "smmkit/layers.hpp"
#include "smmkit/tensor.hpp"

namespace smm {

/// Cell state and output of the LSTM unit; h is the dynamic feature space.
struct LstmState {
    Tensor c; // [q]
    Tensor h; // [q]
};

/// One classification sequence: tau ordered static-feature vectors plus the
/// class of the final step.
struct SequenceBatch {
    std::vector<Tensor> inputs;
    int label = 0;
};

/// LSTM cell over the concatenation [h_{t-1}, x_t] with forget/input/output
/// gates and a tanh candidate state, unrolled over tau steps with exact
/// backpropagation through time from the final step.
class LstmCell {
public:
    LstmCell(std::size_t neurons, std::size_t input_size);

    /// Gate weights ~ N(0, stddev); all biases zero except the forget bias.
    void init_normal(Rng& rng, double stddev, double forget_bias = 1.0);

    std::size_t neurons() const { return q_; }
    std::size_t input_size() const { return d_; }

    LstmState zero_state() const;

    /// Single step: returns the next state without touching the BPTT cache.
    LstmState step(const LstmState& state, const Tensor& x) const;

    /// Unrolls the cell over the sequence from `init` (zero state by
    /// default), caching every intermediate for backward_sequence.
    /// Returns h of the final step.
    Tensor forward_sequence(const std::vector<Tensor>& inputs, const LstmState& init);
    Tensor forward_sequence(const std::vector<Tensor>& inputs);

    struct SequenceGrads {
        Tensor w_f, w_i, w_c, w_o;
        Tensor b_f, b_i, b_c, b_o;
        std::vector<Tensor> inputs;
    };

    /// Exact BPTT for the loss applied at the final step. The returned
    /// gradients are this call's contribution; the same values are also
    /// accumulated into the cell for batch training.
    SequenceGrads backward_sequence(const Tensor& grad_h_final);

    void bind_params(const std::string& prefix, std::vector<ParamBinding>& out);
    void zero_grads();

    Tensor w_f, w_i, w_c, w_o; // [q x (q+d)]
    Tensor b_f, b_i, b_c, b_o; // [q]

private:
    struct StepTrace {
        Tensor concat;   // [q+d], [h_{t-1}, x_t]
        Tensor f, i, o;  // gate activations
        Tensor cand;     // tanh candidate
        Tensor c;        // cell state after the step
        Tensor tanh_c;
        Tensor c_prev;
    };

    std::size_t q_, d_;
    Tensor gw_f_, gw_i_, gw_c_, gw_o_;
    Tensor gb_f_, gb_i_, gb_c_, gb_o_;
    std::vector<StepTrace> trace_;
    bool has_trace_ = false;

    StepTrace compute_step(const LstmState& state, const Tensor& x) const;
};

} // namespace smm
