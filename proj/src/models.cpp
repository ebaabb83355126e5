#include "smmkit/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace smm {

int classify(double p_smm) { return p_smm >= 0.5 ? 1 : 0; }

// ---------------------------------------------------------------------------
// Construction

ModelGraph ModelGraph::build_cnn(std::size_t channels, std::size_t width,
                                 const CnnOptions& options) {
    if (channels < 1) {
        throw ConfigError("cnn needs at least one input channel");
    }
    if (width < 27) {
        throw ConfigError("window width " + std::to_string(width) +
                          " too small: three pooling stages need width >= 27");
    }
    ModelGraph m;
    m.kind_ = Kind::cnn;
    m.channels_ = channels;
    m.width_ = width;
    m.cnn_options_ = options;

    std::size_t len = width;
    std::size_t in_ch = channels;
    for (std::size_t stage = 0; stage < 3; ++stage) {
        const std::string tag = std::to_string(stage + 1);
        m.feature_layers_.emplace_back(
            "conv" + tag,
            std::make_unique<Conv1DLayer>(options.filters[stage], in_ch, options.filter_length));
        m.feature_layers_.emplace_back("relu" + tag, std::make_unique<ReluLayer>());
        m.feature_layers_.emplace_back(
            "pool" + tag,
            std::make_unique<PoolLayer>(options.pool_window, options.pool_stride,
                                        options.pool_mode));
        len = PoolLayer::output_length(len, options.pool_window, options.pool_stride);
        in_ch = options.filters[stage];
    }
    m.feature_layers_.emplace_back("flatten", std::make_unique<FlattenLayer>());
    m.feature_dim_ = in_ch * len;

    m.cnn_head_.emplace_back("fc1",
                             std::make_unique<DenseLayer>(options.fc_hidden, m.feature_dim_));
    m.cnn_head_.emplace_back("drop1", std::make_unique<DropoutLayer>(options.dropout));
    m.cnn_head_.emplace_back("fc2", std::make_unique<DenseLayer>(2, options.fc_hidden));
    return m;
}

ModelGraph ModelGraph::build_cnn_lstm(ModelGraph cnn, std::size_t tau, std::size_t q,
                                      const LstmOptions& options) {
    if (cnn.kind_ != Kind::cnn) {
        throw ArgumentError("build_cnn_lstm needs a plain CNN as the feature extractor");
    }
    if (tau < 1 || q < 1) {
        throw ArgumentError("cnn_lstm needs tau >= 1 and q >= 1");
    }
    ModelGraph m = std::move(cnn);
    m.kind_ = Kind::cnn_lstm;
    m.tau_ = tau;
    m.q_ = q;
    m.lstm_options_ = options;
    m.cell_ = std::make_unique<LstmCell>(q, m.feature_dim_);
    m.lstm_head_.emplace_back("lstm_fc1", std::make_unique<DenseLayer>(options.head_hidden, q));
    m.lstm_head_.emplace_back("lstm_drop", std::make_unique<DropoutLayer>(options.head_dropout));
    m.lstm_head_.emplace_back("lstm_fc2", std::make_unique<DenseLayer>(2, options.head_hidden));
    return m;
}

void ModelGraph::init_params(Rng& rng) {
    for (auto& [name, layer] : feature_layers_) {
        if (auto* conv = dynamic_cast<Conv1DLayer*>(layer.get())) {
            const double fan_in =
                static_cast<double>(conv->channels() * conv->filter_length());
            conv->init_normal(rng, cnn_options_.init_scale / std::sqrt(fan_in));
        }
    }
    for (auto& [name, layer] : cnn_head_) {
        if (auto* dense = dynamic_cast<DenseLayer*>(layer.get())) {
            const double fan_in = static_cast<double>(dense->weights.dim(1));
            dense->init_normal(rng, cnn_options_.init_scale / std::sqrt(fan_in));
        }
    }
    if (kind_ == Kind::cnn_lstm) init_recurrent(rng);
}

void ModelGraph::init_recurrent(Rng& rng) {
    if (kind_ != Kind::cnn_lstm) {
        throw StateError("init_recurrent on a model without a recurrent part");
    }
    cell_->init_normal(rng, lstm_options_.gate_init_std, lstm_options_.forget_bias);
    for (auto& [name, layer] : lstm_head_) {
        if (auto* dense = dynamic_cast<DenseLayer*>(layer.get())) {
            const double fan_in = static_cast<double>(dense->weights.dim(1));
            dense->init_normal(rng, cnn_options_.init_scale / std::sqrt(fan_in));
        }
    }
}

void ModelGraph::set_mode(Mode mode) {
    mode_ = mode;
    for (auto& [name, layer] : feature_layers_) layer->set_mode(mode);
    for (auto& [name, layer] : cnn_head_) layer->set_mode(mode);
    for (auto& [name, layer] : lstm_head_) layer->set_mode(mode);
}

void ModelGraph::set_rng_everywhere(Rng* rng) {
    for (auto& [name, layer] : feature_layers_) layer->set_rng(rng);
    for (auto& [name, layer] : cnn_head_) layer->set_rng(rng);
    for (auto& [name, layer] : lstm_head_) layer->set_rng(rng);
}

std::vector<ParamBinding> ModelGraph::bindings() {
    std::vector<ParamBinding> out;
    for (auto& [name, layer] : feature_layers_) layer->bind_params(name, out);
    for (auto& [name, layer] : cnn_head_) layer->bind_params(name, out);
    if (cell_) cell_->bind_params("lstm", out);
    for (auto& [name, layer] : lstm_head_) layer->bind_params(name, out);
    return out;
}

std::vector<ParamBinding> ModelGraph::trainable_bindings() {
    if (kind_ == Kind::cnn) return bindings();
    std::vector<ParamBinding> out;
    if (!lstm_options_.freeze_cnn) {
        // The CNN head never feeds the recurrent path, so joint training
        // covers the feature stack only.
        for (auto& [name, layer] : feature_layers_) layer->bind_params(name, out);
    }
    cell_->bind_params("lstm", out);
    for (auto& [name, layer] : lstm_head_) layer->bind_params(name, out);
    return out;
}

ParamSet ModelGraph::params() { return snapshot(bindings()); }

void ModelGraph::set_params(const ParamSet& params) {
    auto binds = bindings();
    if (params.size() != binds.size()) {
        throw ArgumentError("parameter set has " + std::to_string(params.size()) +
                            " tensors, model expects " + std::to_string(binds.size()));
    }
    std::map<std::string, const Tensor*> by_name;
    for (const NamedTensor& p : params) by_name[p.name] = &p.value;
    for (ParamBinding& b : binds) {
        auto it = by_name.find(b.name);
        if (it == by_name.end()) {
            throw ArgumentError("parameter set is missing tensor " + b.name);
        }
        if (!it->second->same_shape(*b.value)) {
            throw DimensionError("tensor " + b.name + " has shape " +
                                 shape_str(it->second->shape()) + ", model expects " +
                                 shape_str(b.value->shape()));
        }
        *b.value = *it->second;
    }
}

void ModelGraph::load_pretrained(const ParamSet& source, TransferScope scope) {
    std::map<std::string, const Tensor*> by_name;
    for (const NamedTensor& p : source) by_name[p.name] = &p.value;
    for (ParamBinding& b : bindings()) {
        if (scope == TransferScope::conv_only && b.name.rfind("conv", 0) != 0) continue;
        if (kind_ == Kind::cnn_lstm && b.name.rfind("lstm", 0) == 0) continue;
        auto it = by_name.find(b.name);
        if (it == by_name.end()) {
            throw TransferError("source parameters are missing tensor " + b.name);
        }
        if (!it->second->same_shape(*b.value)) {
            throw TransferError("tensor " + b.name + " has source shape " +
                                shape_str(it->second->shape()) + " but target shape " +
                                shape_str(b.value->shape()));
        }
        *b.value = *it->second;
    }
}

ModelGraph ModelGraph::clone() {
    ModelGraph copy = kind_ == Kind::cnn
                          ? build_cnn(channels_, width_, cnn_options_)
                          : build_cnn_lstm(build_cnn(channels_, width_, cnn_options_), tau_, q_,
                                           lstm_options_);
    copy.set_params(params());
    copy.set_mode(mode_);
    return copy;
}

// ---------------------------------------------------------------------------
// Forward / backward plumbing

Tensor ModelGraph::forward_features(const Tensor& window) {
    Tensor x = window;
    for (auto& [name, layer] : feature_layers_) x = layer->forward(x);
    return x;
}

Tensor ModelGraph::backward_features(const Tensor& grad) {
    Tensor g = grad;
    for (auto it = feature_layers_.rbegin(); it != feature_layers_.rend(); ++it) {
        g = it->second->backward(g);
    }
    return g;
}

Tensor ModelGraph::forward_head(std::vector<NamedLayer>& head, const Tensor& x) {
    Tensor v = x;
    for (auto& [name, layer] : head) v = layer->forward(v);
    return v;
}

Tensor ModelGraph::backward_head(std::vector<NamedLayer>& head, const Tensor& grad) {
    Tensor g = grad;
    for (auto it = head.rbegin(); it != head.rend(); ++it) {
        g = it->second->backward(g);
    }
    return g;
}

void ModelGraph::require_mode(Mode expected, const char* what) const {
    if (mode_ != expected) {
        throw StateError(std::string(what) + " requires " +
                         (expected == Mode::infer ? "infer" : "train") + " mode");
    }
}

Tensor ModelGraph::extract_features(const Tensor& window) {
    return forward_features(window);
}

double ModelGraph::predict_window(const Tensor& window) {
    if (kind_ != Kind::cnn) {
        throw ArgumentError("predict_window is for CNN models; sequences go to the LSTM path");
    }
    require_mode(Mode::infer, "predict");
    const Tensor z = forward_head(cnn_head_, forward_features(window));
    return softmax_xent(z, 0).probs[1];
}

double ModelGraph::predict_feature_sequence(const std::vector<Tensor>& features) {
    if (kind_ != Kind::cnn_lstm) {
        throw ArgumentError("predict_feature_sequence needs a CNN+LSTM model");
    }
    require_mode(Mode::infer, "predict");
    const Tensor h = cell_->forward_sequence(features);
    const Tensor z = forward_head(lstm_head_, h);
    return softmax_xent(z, 0).probs[1];
}

double ModelGraph::predict_window_sequence(const std::vector<Tensor>& windows) {
    std::vector<Tensor> features;
    features.reserve(windows.size());
    for (const Tensor& w : windows) features.push_back(forward_features(w));
    return predict_feature_sequence(features);
}

double ModelGraph::train_window(const Tensor& window, int label) {
    if (kind_ != Kind::cnn) {
        throw ArgumentError("train_window is for CNN models");
    }
    require_mode(Mode::train, "train_window");
    const Tensor z = forward_head(cnn_head_, forward_features(window));
    SoftmaxXent sx = softmax_xent(z, static_cast<std::size_t>(label));
    backward_features(backward_head(cnn_head_, sx.grad_z));
    return sx.loss;
}

double ModelGraph::train_feature_sequence(const std::vector<Tensor>& features, int label) {
    if (kind_ != Kind::cnn_lstm) {
        throw ArgumentError("train_feature_sequence needs a CNN+LSTM model");
    }
    require_mode(Mode::train, "train_feature_sequence");
    const Tensor h = cell_->forward_sequence(features);
    const Tensor z = forward_head(lstm_head_, h);
    SoftmaxXent sx = softmax_xent(z, static_cast<std::size_t>(label));
    const Tensor grad_h = backward_head(lstm_head_, sx.grad_z);
    cell_->backward_sequence(grad_h);
    return sx.loss;
}

double ModelGraph::train_window_sequence(const std::vector<Tensor>& windows, int label) {
    if (kind_ != Kind::cnn_lstm) {
        throw ArgumentError("train_window_sequence needs a CNN+LSTM model");
    }
    require_mode(Mode::train, "train_window_sequence");
    std::vector<Tensor> features;
    features.reserve(windows.size());
    for (const Tensor& w : windows) features.push_back(forward_features(w));
    const Tensor h = cell_->forward_sequence(features);
    const Tensor z = forward_head(lstm_head_, h);
    SoftmaxXent sx = softmax_xent(z, static_cast<std::size_t>(label));
    const Tensor grad_h = backward_head(lstm_head_, sx.grad_z);
    LstmCell::SequenceGrads g = cell_->backward_sequence(grad_h);
    if (!lstm_options_.freeze_cnn) {
        // The shared CNN caches hold only the last step, so each step is
        // re-run right before its backward pass.
        for (std::size_t t = 0; t < windows.size(); ++t) {
            forward_features(windows[t]);
            backward_features(g.inputs[t]);
        }
    }
    return sx.loss;
}

void ModelGraph::zero_grads() {
    for (auto& [name, layer] : feature_layers_) layer->zero_grads();
    for (auto& [name, layer] : cnn_head_) layer->zero_grads();
    if (cell_) cell_->zero_grads();
    for (auto& [name, layer] : lstm_head_) layer->zero_grads();
}

// ---------------------------------------------------------------------------
// Epoch drivers

namespace {

double finish_epoch(double loss_sum, std::size_t count) {
    const double mean = loss_sum / static_cast<double>(count);
    if (!std::isfinite(mean)) {
        throw Error("training diverged: epoch loss is not finite");
    }
    return mean;
}

} // namespace

double ModelGraph::train_epoch(const Dataset& data, OptimizerState& opt, Rng& rng,
                               std::size_t batch) {
    if (data.windows.empty()) {
        throw ArgumentError("train_epoch on an empty dataset");
    }
    if (batch < 1) {
        throw ArgumentError("batch size must be >= 1");
    }
    require_mode(Mode::train, "train_epoch");
    set_rng_everywhere(&rng);
    std::vector<std::size_t> order(data.windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);

    double loss_sum = 0.0;
    const auto trainable = trainable_bindings();
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        zero_grads();
        for (std::size_t i = start; i < stop; ++i) {
            const Window& w = data.windows[order[i]];
            loss_sum += train_window(w.x, w.label);
        }
        apply_step(opt, trainable, 1.0 / static_cast<double>(stop - start));
    }
    return finish_epoch(loss_sum, order.size());
}

double ModelGraph::train_epoch(const std::vector<SequenceBatch>& sequences, OptimizerState& opt,
                               Rng& rng, std::size_t batch) {
    if (sequences.empty()) {
        throw ArgumentError("train_epoch on an empty sequence set");
    }
    if (batch < 1) {
        throw ArgumentError("batch size must be >= 1");
    }
    require_mode(Mode::train, "train_epoch");
    set_rng_everywhere(&rng);
    std::vector<std::size_t> order(sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);

    double loss_sum = 0.0;
    const auto trainable = trainable_bindings();
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        zero_grads();
        for (std::size_t i = start; i < stop; ++i) {
            const SequenceBatch& seq = sequences[order[i]];
            loss_sum += train_feature_sequence(seq.inputs, seq.label);
        }
        apply_step(opt, trainable, 1.0 / static_cast<double>(stop - start));
    }
    return finish_epoch(loss_sum, order.size());
}

double ModelGraph::train_epoch(const std::vector<Tensor>& feature_pool,
                               const std::vector<WindowSequence>& sequences, OptimizerState& opt,
                               Rng& rng, std::size_t batch) {
    if (sequences.empty()) {
        throw ArgumentError("train_epoch on an empty sequence set");
    }
    if (batch < 1) {
        throw ArgumentError("batch size must be >= 1");
    }
    require_mode(Mode::train, "train_epoch");
    set_rng_everywhere(&rng);
    std::vector<std::size_t> order(sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);

    double loss_sum = 0.0;
    const auto trainable = trainable_bindings();
    std::vector<Tensor> inputs;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        zero_grads();
        for (std::size_t i = start; i < stop; ++i) {
            const WindowSequence& seq = sequences[order[i]];
            inputs.clear();
            for (std::size_t idx : seq.window_indices) inputs.push_back(feature_pool[idx]);
            loss_sum += train_feature_sequence(inputs, seq.label);
        }
        apply_step(opt, trainable, 1.0 / static_cast<double>(stop - start));
    }
    return finish_epoch(loss_sum, order.size());
}

double ModelGraph::train_epoch_joint(const Dataset& data, const SequenceDataset& sequences,
                                     OptimizerState& opt, Rng& rng, std::size_t batch) {
    if (sequences.sequences.empty()) {
        throw ArgumentError("train_epoch_joint on an empty sequence set");
    }
    if (batch < 1) {
        throw ArgumentError("batch size must be >= 1");
    }
    require_mode(Mode::train, "train_epoch_joint");
    set_rng_everywhere(&rng);
    std::vector<std::size_t> order(sequences.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);

    double loss_sum = 0.0;
    const auto trainable = trainable_bindings();
    std::vector<Tensor> windows;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        zero_grads();
        for (std::size_t i = start; i < stop; ++i) {
            const WindowSequence& seq = sequences.sequences[order[i]];
            windows.clear();
            for (std::size_t idx : seq.window_indices) windows.push_back(data.windows[idx].x);
            loss_sum += train_window_sequence(windows, seq.label);
        }
        apply_step(opt, trainable, 1.0 / static_cast<double>(stop - start));
    }
    return finish_epoch(loss_sum, order.size());
}

// ---------------------------------------------------------------------------
// Save / load

namespace {

std::string pool_mode_name(PoolMode mode) {
    return mode == PoolMode::max ? "max" : "average";
}

PoolMode pool_mode_from(const std::string& name, const std::string& path) {
    if (name == "max") return PoolMode::max;
    if (name == "average") return PoolMode::average;
    throw FormatError(path + ": unknown pool mode " + name);
}

} // namespace

void save_model(ModelGraph& model, const std::string& prefix) {
    const std::string meta_path = prefix + ".meta";
    std::ofstream os(meta_path, std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + meta_path + " for writing");
    }
    const CnnOptions& c = model.cnn_options();
    os << "kind=" << (model.kind() == ModelGraph::Kind::cnn ? "cnn" : "cnn_lstm") << "\n";
    os << "channels=" << model.channels() << "\n";
    os << "width=" << model.width() << "\n";
    os << "filters=" << c.filters[0] << "," << c.filters[1] << "," << c.filters[2] << "\n";
    os << "filter_length=" << c.filter_length << "\n";
    os << "pool_window=" << c.pool_window << "\n";
    os << "pool_stride=" << c.pool_stride << "\n";
    os << "pool_mode=" << pool_mode_name(c.pool_mode) << "\n";
    os << "fc_hidden=" << c.fc_hidden << "\n";
    os << "dropout=" << c.dropout << "\n";
    if (model.kind() == ModelGraph::Kind::cnn_lstm) {
        const LstmOptions& l = model.lstm_options();
        os << "tau=" << model.tau() << "\n";
        os << "q=" << model.lstm_neurons() << "\n";
        os << "head_hidden=" << l.head_hidden << "\n";
        os << "head_dropout=" << l.head_dropout << "\n";
        os << "freeze_cnn=" << (l.freeze_cnn ? 1 : 0) << "\n";
    }
    if (!os) {
        throw IoError("write failed for " + meta_path);
    }
    os.close();
    save_params(model.params(), prefix + ".params");
}

ModelGraph load_model(const std::string& prefix) {
    const std::string meta_path = prefix + ".meta";
    std::ifstream is(meta_path);
    if (!is) {
        throw IoError("cannot open " + meta_path + " for reading");
    }
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(meta_path + ": malformed line '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw FormatError(meta_path + " is missing key " + key);
        }
        return it->second;
    };
    CnnOptions options;
    {
        std::istringstream fs(need("filters"));
        char comma;
        fs >> options.filters[0] >> comma >> options.filters[1] >> comma >> options.filters[2];
        if (!fs) {
            throw FormatError(meta_path + ": malformed filters spec");
        }
    }
    options.filter_length = std::stoul(need("filter_length"));
    options.pool_window = std::stoul(need("pool_window"));
    options.pool_stride = std::stoul(need("pool_stride"));
    options.pool_mode = pool_mode_from(need("pool_mode"), meta_path);
    options.fc_hidden = std::stoul(need("fc_hidden"));
    options.dropout = std::stod(need("dropout"));

    ModelGraph model = ModelGraph::build_cnn(std::stoul(need("channels")),
                                             std::stoul(need("width")), options);
    if (need("kind") == "cnn_lstm") {
        LstmOptions lstm;
        lstm.head_hidden = std::stoul(need("head_hidden"));
        lstm.head_dropout = std::stod(need("head_dropout"));
        lstm.freeze_cnn = need("freeze_cnn") != "0";
        model = ModelGraph::build_cnn_lstm(std::move(model), std::stoul(need("tau")),
                                           std::stoul(need("q")), lstm);
    } else if (need("kind") != "cnn") {
        throw FormatError(meta_path + ": unknown model kind " + need("kind"));
    }
    model.set_params(load_params(prefix + ".params"));
    return model;
}

} // namespace smm
