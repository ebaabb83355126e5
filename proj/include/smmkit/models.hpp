#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "smmkit/dataio.hpp"
#include "smmkit/layers.hpp"
#include "smmkit/lstm.hpp"
#include "smmkit/optim.hpp"

namespace smm {

/// Three-layer CNN configuration: 4, 4, 8 filters of 9 samples, pooling
/// window 3 with stride 2, an 8-then-2 neuron fully-connected head with
/// dropout 0.5.
struct CnnOptions {
    std::array<std::size_t, 3> filters{4, 4, 8};
    std::size_t filter_length = 9;
    std::size_t pool_window = 3;
    std::size_t pool_stride = 2;
    PoolMode pool_mode = PoolMode::max;
    std::size_t fc_hidden = 8;
    double dropout = 0.5;
    /// Conv/dense weights draw from N(0, (init_scale/sqrt(fan_in))^2);
    /// fan-in scaling keeps activations alive through the three stages.
    double init_scale = 1.0;
};

struct LstmOptions {
    std::size_t head_hidden = 8;
    double head_dropout = 0.2;
    double gate_init_std = 0.1;
    double forget_bias = 1.0;
    bool freeze_cnn = true;
};

enum class TransferScope { all_layers, conv_only };

int classify(double p_smm); // 1 iff p >= 0.5

/// Ordered layer stack for either published architecture. The CNN maps a
/// [c x width] window to class logits; the CNN+LSTM variant extracts the
/// per-step static features with one shared CNN parameter set, feeds them
/// through an LSTM cell and classifies the final h_t.
class ModelGraph {
public:
    enum class Kind { cnn, cnn_lstm };

    /// The Fig.-2 stack for a c-channel window of `width` samples. The
    /// three pooling stages must stay nonempty, which needs width >= 27.
    static ModelGraph build_cnn(std::size_t channels, std::size_t width,
                                const CnnOptions& options = {});

    /// Wraps an already built (optionally trained) CNN with an LstmCell(q)
    /// over tau steps plus the dense/dropout(0.2)/dense(2) head.
    static ModelGraph build_cnn_lstm(ModelGraph cnn, std::size_t tau, std::size_t q,
                                     const LstmOptions& options = {});

    ModelGraph(ModelGraph&&) noexcept = default;
    ModelGraph& operator=(ModelGraph&&) noexcept = default;
    ModelGraph(const ModelGraph&) = delete;
    ModelGraph& operator=(const ModelGraph&) = delete;

    Kind kind() const { return kind_; }
    std::size_t channels() const { return channels_; }
    std::size_t width() const { return width_; }
    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t tau() const { return tau_; }
    std::size_t lstm_neurons() const { return q_; }
    const CnnOptions& cnn_options() const { return cnn_options_; }
    const LstmOptions& lstm_options() const { return lstm_options_; }

    void init_params(Rng& rng);
    /// Re-initializes only the recurrent part, keeping the (pre-trained)
    /// CNN parameters in place.
    void init_recurrent(Rng& rng);

    void set_mode(Mode mode);
    Mode mode() const { return mode_; }

    std::vector<ParamBinding> bindings();
    /// Excludes the CNN parameters when the CNN is frozen inside a
    /// CNN+LSTM model.
    std::vector<ParamBinding> trainable_bindings();
    ParamSet params();
    void set_params(const ParamSet& params);

    /// Pre-initialize from a source model's ParamSet (transfer learning).
    /// Scope conv_only restricts to the convolutional stack.
    void load_pretrained(const ParamSet& source, TransferScope scope);

    /// Fresh model with the same architecture and copied parameters.
    ModelGraph clone();

    /// x'_t: the flattened third-stage feature vector (dropout-free path).
    Tensor extract_features(const Tensor& window);

    double predict_window(const Tensor& window);
    double predict_feature_sequence(const std::vector<Tensor>& features);
    double predict_window_sequence(const std::vector<Tensor>& windows);

    /// Forward + backward for one example; gradients accumulate until
    /// zero_grads(). Returns the cross-entropy loss.
    double train_window(const Tensor& window, int label);
    double train_feature_sequence(const std::vector<Tensor>& features, int label);
    double train_window_sequence(const std::vector<Tensor>& windows, int label);

    void zero_grads();

    /// One pass over seeded shuffled mini-batches; returns the mean loss.
    double train_epoch(const Dataset& data, OptimizerState& opt, Rng& rng, std::size_t batch);
    double train_epoch(const std::vector<SequenceBatch>& sequences, OptimizerState& opt, Rng& rng,
                       std::size_t batch);
    /// Sequences index into a shared per-window feature pool.
    double train_epoch(const std::vector<Tensor>& feature_pool,
                       const std::vector<WindowSequence>& sequences, OptimizerState& opt, Rng& rng,
                       std::size_t batch);
    /// Joint fine-tuning path: backpropagates through the CNN as well.
    double train_epoch_joint(const Dataset& data, const SequenceDataset& sequences,
                             OptimizerState& opt, Rng& rng, std::size_t batch);

private:
    ModelGraph() = default;

    using NamedLayer = std::pair<std::string, std::unique_ptr<Layer>>;

    Tensor forward_features(const Tensor& window);
    Tensor backward_features(const Tensor& grad);
    Tensor forward_head(std::vector<NamedLayer>& head, const Tensor& x);
    Tensor backward_head(std::vector<NamedLayer>& head, const Tensor& grad);
    void set_rng_everywhere(Rng* rng);
    void require_mode(Mode expected, const char* what) const;

    Kind kind_ = Kind::cnn;
    std::size_t channels_ = 0;
    std::size_t width_ = 0;
    std::size_t feature_dim_ = 0;
    std::size_t tau_ = 0;
    std::size_t q_ = 0;
    CnnOptions cnn_options_;
    LstmOptions lstm_options_;
    Mode mode_ = Mode::train;

    std::vector<NamedLayer> feature_layers_; // conv/relu/pool x3 + flatten
    std::vector<NamedLayer> cnn_head_;       // fc1, dropout, fc2
    std::unique_ptr<LstmCell> cell_;
    std::vector<NamedLayer> lstm_head_;      // fc, dropout(0.2), fc(2)
};

/// Writes <prefix>.meta (architecture hyperparameters, plain text) and
/// <prefix>.params (the binary ParamSet file).
void save_model(ModelGraph& model, const std::string& prefix);
ModelGraph load_model(const std::string& prefix);

} // namespace smm
