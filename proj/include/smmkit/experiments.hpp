#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "smmkit/dataio.hpp"
#include "smmkit/models.hpp"

namespace smm {

/// Confusion counts and the derived scores; the positive class is SMM = 1.
/// f1 is defined as 0 when tp == 0.
struct Metrics {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& truth);

/// Mean over dimensions of (mu1 - mu0)^2 / (var1 + var0 + 1e-12).
double fisher_score(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Linear hinge-loss baseline (stands in for the SVM of the raw/handcrafted
// comparisons; trained by L2-regularized subgradient descent).

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<double> feat_mean;
    std::vector<double> feat_scale;
};

LinearModel train_linear_hinge(const std::vector<std::vector<double>>& x,
                               const std::vector<int>& y, Rng& rng, std::size_t epochs = 30,
                               double lambda = 1e-4);
int linear_predict(const LinearModel& model, const std::vector<double>& x);

/// All channels of the window collapsed into one vector (length c*w).
std::vector<double> flatten_window(const Window& w);

/// Per channel: mean, std, zero-crossings, energy; then the pairwise
/// channel correlations; then per-channel DFT band powers in the
/// 0.1-1, 1-3, 3-5, 5-10, 10-20, 20-45 Hz bands (a bin exactly on a band
/// boundary belongs to the lower band).
std::vector<double> handcrafted_features(const Window& w, double rate);

Metrics raw_baseline(const Dataset& train, const Dataset& test, Rng& rng);
Metrics handcrafted_baseline(const Dataset& train, const Dataset& test, Rng& rng);

// ---------------------------------------------------------------------------
// Training drivers shared by the experiment runners and the CLI.

struct CnnTrainOptions {
    std::size_t epochs = 10;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch = 100;
    CnnOptions arch;
};

/// Seeded end-to-end CNN training on the given (already balanced or
/// deliberately unbalanced) window set. Per-epoch mean losses are appended
/// to *epoch_losses when provided.
ModelGraph train_cnn(const Dataset& train, const CnnTrainOptions& options, std::uint64_t seed,
                     std::vector<double>* epoch_losses = nullptr,
                     const ParamSet* pretrained = nullptr,
                     TransferScope scope = TransferScope::all_layers);

Metrics eval_cnn(ModelGraph& model, const Dataset& test);

struct LstmTrainOptions {
    std::size_t tau = 25;
    std::size_t q = 10;
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    std::size_t batch = 100;
    std::size_t head_hidden = 8;
    double head_dropout = 0.2;
};

/// CNN+LSTM on top of a trained (frozen) CNN: static features are
/// extracted once per window and the recurrent part is trained with
/// RMSProp on stride-1 sequences of tau windows.
ModelGraph train_cnn_lstm(ModelGraph& trained_cnn, const Dataset& train,
                          const LstmTrainOptions& options, std::uint64_t seed);

Metrics eval_cnn_lstm(ModelGraph& model, const Dataset& test);

// ---------------------------------------------------------------------------
// Experiment runners (leave-one-subject-out tables).

struct ExperimentConfig {
    bool balanced = true;
    std::size_t repeats = 10;
    CnnTrainOptions cnn;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct SubjectResult {
    std::string subject;
    double mean_f1 = 0.0;
    double std_f1 = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    std::vector<double> f1_runs;
};

/// Experiment-1 protocol: per LOSO fold, (optionally) balance the training
/// set and train the CNN `repeats` times with distinct seeds.
std::vector<SubjectResult> run_feature_learning(const Dataset& data,
                                                const ExperimentConfig& config);

/// Same protocol with the CNN pre-initialized from source parameters.
std::vector<SubjectResult> run_transfer(const ParamSet& source, TransferScope scope,
                                        const Dataset& data, const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Ensemble of the best base learners (majority voting over the best-b
// subset of an l-model pool, ranked and selected on training-set F1).

struct EnsembleOptions {
    std::size_t pool_size = 10; // l
    LstmTrainOptions lstm;
};

struct EnsembleSpec {
    std::vector<ModelGraph> members;
    std::vector<double> member_train_f1; // alpha per member
    std::vector<std::size_t> ranking;    // member indices, best first
    std::size_t b = 1;
};

/// Majority vote over {0,1}; an even split predicts SMM.
int majority_vote(const std::vector<int>& votes);

EnsembleSpec train_ensemble(ModelGraph& trained_cnn, const Dataset& train,
                            const EnsembleOptions& options, std::uint64_t seed);

Metrics eval_ensemble(EnsembleSpec& spec, const Dataset& test);

/// Run fn(0..count-1) across `jobs` worker threads; tasks must write to
/// disjoint slots.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

double mean_of(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

} // namespace smm
