#include "smmkit/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iterator>
#include <numeric>
#include <thread>

namespace smm {

// ---------------------------------------------------------------------------
// Metrics

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& truth) {
    if (predictions.empty() || truth.empty()) {
        throw ArgumentError("compute_metrics on empty inputs");
    }
    if (predictions.size() != truth.size()) {
        throw ArgumentError("predictions and truth differ in length: " +
                            std::to_string(predictions.size()) + " vs " +
                            std::to_string(truth.size()));
    }
    Metrics m;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i];
        const int t = truth[i];
        if ((p != 0 && p != 1) || (t != 0 && t != 1)) {
            throw ArgumentError("labels must be 0 or 1");
        }
        if (p == 1 && t == 1) ++m.tp;
        else if (p == 1 && t == 0) ++m.fp;
        else if (p == 0 && t == 1) ++m.fn;
        else ++m.tn;
    }
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = m.tp > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

double fisher_score(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels) {
    if (features.empty() || features.size() != labels.size()) {
        throw ArgumentError("fisher_score needs one label per feature vector");
    }
    const std::size_t dims = features[0].size();
    if (dims == 0) {
        throw ArgumentError("fisher_score on zero-dimensional features");
    }
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != dims) {
            throw ArgumentError("fisher_score feature vectors differ in length");
        }
        (labels[i] == 1 ? n1 : n0) += 1;
    }
    if (n0 == 0 || n1 == 0) {
        throw ArgumentError("fisher_score needs both classes present");
    }
    double total = 0.0;
    for (std::size_t d = 0; d < dims; ++d) {
        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            (labels[i] == 1 ? mean1 : mean0) += features[i][d];
        }
        mean0 /= static_cast<double>(n0);
        mean1 /= static_cast<double>(n1);
        double var0 = 0.0, var1 = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const double dev = features[i][d] - (labels[i] == 1 ? mean1 : mean0);
            (labels[i] == 1 ? var1 : var0) += dev * dev;
        }
        var0 /= static_cast<double>(n0);
        var1 /= static_cast<double>(n1);
        const double gap = mean1 - mean0;
        total += gap * gap / (var1 + var0 + 1e-12);
    }
    return total / static_cast<double>(dims);
}

// ---------------------------------------------------------------------------
// Linear hinge-loss classifier

LinearModel train_linear_hinge(const std::vector<std::vector<double>>& x,
                               const std::vector<int>& y, Rng& rng, std::size_t epochs,
                               double lambda) {
    if (x.empty() || x.size() != y.size()) {
        throw ArgumentError("linear training needs one label per sample");
    }
    const std::size_t dims = x[0].size();
    LinearModel m;
    m.weights.assign(dims, 0.0);
    m.feat_mean.assign(dims, 0.0);
    m.feat_scale.assign(dims, 1.0);
    for (const auto& row : x) {
        if (row.size() != dims) {
            throw ArgumentError("linear training samples differ in length");
        }
        for (std::size_t d = 0; d < dims; ++d) m.feat_mean[d] += row[d];
    }
    for (std::size_t d = 0; d < dims; ++d) m.feat_mean[d] /= static_cast<double>(x.size());
    std::vector<double> var(dims, 0.0);
    for (const auto& row : x) {
        for (std::size_t d = 0; d < dims; ++d) {
            const double dev = row[d] - m.feat_mean[d];
            var[d] += dev * dev;
        }
    }
    for (std::size_t d = 0; d < dims; ++d) {
        const double s = std::sqrt(var[d] / static_cast<double>(x.size()));
        m.feat_scale[d] = s > 1e-12 ? s : 1.0;
    }

    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> z(dims);
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        shuffle_indices(order, rng);
        for (std::size_t i : order) {
            ++t;
            // Pegasos-style decay, capped so the first steps cannot blow up
            // the unregularized bias.
            const double eta = std::min(1.0, 1.0 / (lambda * static_cast<double>(t)));
            for (std::size_t d = 0; d < dims; ++d) {
                z[d] = (x[i][d] - m.feat_mean[d]) / m.feat_scale[d];
            }
            const double label = y[i] == 1 ? 1.0 : -1.0;
            double margin = m.bias;
            for (std::size_t d = 0; d < dims; ++d) margin += m.weights[d] * z[d];
            margin *= label;
            const double shrink = 1.0 - eta * lambda;
            for (std::size_t d = 0; d < dims; ++d) m.weights[d] *= shrink;
            if (margin < 1.0) {
                for (std::size_t d = 0; d < dims; ++d) m.weights[d] += eta * label * z[d];
                m.bias += eta * label;
            }
        }
    }
    return m;
}

int linear_predict(const LinearModel& model, const std::vector<double>& x) {
    if (x.size() != model.weights.size()) {
        throw DimensionError("linear model expects " + std::to_string(model.weights.size()) +
                             " features, got " + std::to_string(x.size()));
    }
    double score = model.bias;
    for (std::size_t d = 0; d < x.size(); ++d) {
        score += model.weights[d] * (x[d] - model.feat_mean[d]) / model.feat_scale[d];
    }
    return score >= 0.0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Feature extraction for the baselines

std::vector<double> flatten_window(const Window& w) {
    return w.x.values();
}

namespace {

struct BandEdges {
    double lo, hi;
};

constexpr BandEdges kBands[] = {{0.1, 1.0}, {1.0, 3.0},  {3.0, 5.0},
                                {5.0, 10.0}, {10.0, 20.0}, {20.0, 45.0}};

} // namespace

std::vector<double> handcrafted_features(const Window& w, double rate) {
    if (rate <= 0.0) {
        throw ArgumentError("handcrafted_features needs a positive sampling rate");
    }
    const std::size_t c = w.x.dim(0);
    const std::size_t n = w.x.dim(1);
    std::vector<double> out;
    out.reserve(c * 10 + c * (c - 1) / 2);

    std::vector<double> means(c), stds(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += w.x.at(ch, i);
        mean /= static_cast<double>(n);
        double var = 0.0;
        std::size_t crossings = 0;
        double energy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = w.x.at(ch, i);
            var += (v - mean) * (v - mean);
            energy += v * v;
            if (i > 0) {
                const bool was_neg = w.x.at(ch, i - 1) < 0.0;
                const bool is_neg = v < 0.0;
                if (was_neg != is_neg) ++crossings;
            }
        }
        var /= static_cast<double>(n);
        means[ch] = mean;
        stds[ch] = std::sqrt(var);
        out.push_back(mean);
        out.push_back(stds[ch]);
        out.push_back(static_cast<double>(crossings));
        out.push_back(energy);
    }

    // Pairwise Pearson correlations.
    for (std::size_t a = 0; a < c; ++a) {
        for (std::size_t b = a + 1; b < c; ++b) {
            double cov = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                cov += (w.x.at(a, i) - means[a]) * (w.x.at(b, i) - means[b]);
            }
            cov /= static_cast<double>(n);
            const double denom = stds[a] * stds[b];
            out.push_back(denom > 1e-12 ? cov / denom : 0.0);
        }
    }

    // DFT band powers; a bin exactly on a boundary goes to the lower band.
    for (std::size_t ch = 0; ch < c; ++ch) {
        double band_power[std::size(kBands)] = {0.0};
        for (std::size_t k = 1; k <= n / 2; ++k) {
            const double freq = static_cast<double>(k) * rate / static_cast<double>(n);
            double re = 0.0, im = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double angle = -2.0 * M_PI * static_cast<double>(k * i) / static_cast<double>(n);
                re += w.x.at(ch, i) * std::cos(angle);
                im += w.x.at(ch, i) * std::sin(angle);
            }
            const double power = re * re + im * im;
            for (std::size_t b = 0; b < std::size(kBands); ++b) {
                if (freq > kBands[b].lo && freq <= kBands[b].hi) {
                    band_power[b] += power;
                    break;
                }
            }
        }
        for (double p : band_power) out.push_back(p);
    }
    return out;
}

namespace {

Metrics linear_baseline(const Dataset& train, const Dataset& test, Rng& rng,
                        const std::function<std::vector<double>(const Window&)>& featurize) {
    if (train.windows.empty() || test.windows.empty()) {
        throw ArgumentError("baseline needs nonempty train and test sets");
    }
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    x.reserve(train.windows.size());
    y.reserve(train.windows.size());
    for (const Window& w : train.windows) {
        x.push_back(featurize(w));
        y.push_back(w.label);
    }
    LinearModel model = train_linear_hinge(x, y, rng);
    std::vector<int> predictions, truth;
    predictions.reserve(test.windows.size());
    truth.reserve(test.windows.size());
    for (const Window& w : test.windows) {
        predictions.push_back(linear_predict(model, featurize(w)));
        truth.push_back(w.label);
    }
    return compute_metrics(predictions, truth);
}

} // namespace

Metrics raw_baseline(const Dataset& train, const Dataset& test, Rng& rng) {
    return linear_baseline(train, test, rng,
                           [](const Window& w) { return flatten_window(w); });
}

Metrics handcrafted_baseline(const Dataset& train, const Dataset& test, Rng& rng) {
    const double rate = train.rate;
    return linear_baseline(train, test, rng,
                           [rate](const Window& w) { return handcrafted_features(w, rate); });
}

// ---------------------------------------------------------------------------
// CNN / CNN+LSTM drivers

ModelGraph train_cnn(const Dataset& train, const CnnTrainOptions& options, std::uint64_t seed,
                     std::vector<double>* epoch_losses, const ParamSet* pretrained,
                     TransferScope scope) {
    if (train.windows.empty()) {
        throw ArgumentError("train_cnn on an empty dataset");
    }
    const std::size_t c = train.windows[0].x.dim(0);
    const std::size_t width = train.windows[0].x.dim(1);
    ModelGraph model = ModelGraph::build_cnn(c, width, options.arch);
    Rng rng(seed);
    model.init_params(rng);
    if (pretrained) {
        model.load_pretrained(*pretrained, scope);
    }
    OptimizerState opt = make_sgd_momentum(options.learning_rate, options.momentum);
    model.set_mode(Mode::train);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const double loss = model.train_epoch(train, opt, rng, options.batch);
        if (epoch_losses) epoch_losses->push_back(loss);
    }
    model.set_mode(Mode::infer);
    return model;
}

Metrics eval_cnn(ModelGraph& model, const Dataset& test) {
    if (test.windows.empty()) {
        throw ArgumentError("eval_cnn on an empty dataset");
    }
    model.set_mode(Mode::infer);
    std::vector<int> predictions, truth;
    predictions.reserve(test.windows.size());
    truth.reserve(test.windows.size());
    for (const Window& w : test.windows) {
        predictions.push_back(classify(model.predict_window(w.x)));
        truth.push_back(w.label);
    }
    return compute_metrics(predictions, truth);
}

namespace {

std::vector<Tensor> feature_pool(ModelGraph& cnn, const Dataset& data) {
    std::vector<Tensor> pool;
    pool.reserve(data.windows.size());
    for (const Window& w : data.windows) pool.push_back(cnn.extract_features(w.x));
    return pool;
}

std::vector<int> predict_sequences(ModelGraph& model, const std::vector<Tensor>& pool,
                                   const std::vector<WindowSequence>& seqs) {
    model.set_mode(Mode::infer);
    std::vector<int> predictions;
    predictions.reserve(seqs.size());
    std::vector<Tensor> inputs;
    for (const WindowSequence& seq : seqs) {
        inputs.clear();
        for (std::size_t idx : seq.window_indices) inputs.push_back(pool[idx]);
        predictions.push_back(classify(model.predict_feature_sequence(inputs)));
    }
    return predictions;
}

ModelGraph train_lstm_on_pool(ModelGraph& trained_cnn, const std::vector<Tensor>& pool,
                              const std::vector<WindowSequence>& seqs,
                              const LstmTrainOptions& options, std::uint64_t seed) {
    LstmOptions lstm;
    lstm.head_hidden = options.head_hidden;
    lstm.head_dropout = options.head_dropout;
    ModelGraph model =
        ModelGraph::build_cnn_lstm(trained_cnn.clone(), options.tau, options.q, lstm);
    Rng rng(seed);
    model.init_recurrent(rng);
    OptimizerState opt = make_rmsprop(options.learning_rate);
    model.set_mode(Mode::train);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        model.train_epoch(pool, seqs, opt, rng, options.batch);
    }
    model.set_mode(Mode::infer);
    return model;
}

} // namespace

ModelGraph train_cnn_lstm(ModelGraph& trained_cnn, const Dataset& train,
                          const LstmTrainOptions& options, std::uint64_t seed) {
    const SequenceDataset seqs = build_sequences(train, options.tau);
    if (seqs.sequences.empty()) {
        throw ArgumentError("no sequences of length tau=" + std::to_string(options.tau) +
                            " fit the training data");
    }
    const std::vector<Tensor> pool = feature_pool(trained_cnn, train);
    return train_lstm_on_pool(trained_cnn, pool, seqs.sequences, options, seed);
}

Metrics eval_cnn_lstm(ModelGraph& model, const Dataset& test) {
    const SequenceDataset seqs = build_sequences(test, model.tau());
    if (seqs.sequences.empty()) {
        throw ArgumentError("no sequences of length tau=" + std::to_string(model.tau()) +
                            " fit the test data");
    }
    const std::vector<Tensor> pool = feature_pool(model, test);
    const std::vector<int> predictions = predict_sequences(model, pool, seqs.sequences);
    std::vector<int> truth;
    truth.reserve(seqs.sequences.size());
    for (const WindowSequence& s : seqs.sequences) truth.push_back(s.label);
    return compute_metrics(predictions, truth);
}

// ---------------------------------------------------------------------------
// LOSO experiment runners

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= count) break;
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

namespace {

std::vector<SubjectResult> run_loso_cnn(const Dataset& data, const ExperimentConfig& config,
                                        const ParamSet* pretrained, TransferScope scope) {
    const std::vector<LosoSplit> splits = loso_splits(data);
    const std::size_t repeats = std::max<std::size_t>(1, config.repeats);
    std::vector<std::vector<Metrics>> per_fold(splits.size(),
                                               std::vector<Metrics>(repeats));
    parallel_for(splits.size() * repeats, config.jobs, [&](std::size_t job) {
        const std::size_t fold = job / repeats;
        const std::size_t rep = job % repeats;
        const std::uint64_t run_seed = derive_seed(config.seed, job);
        const LosoSplit& split = splits[fold];
        Dataset train_set = split.train;
        if (config.balanced) {
            Rng balance_rng(derive_seed(run_seed, 1));
            train_set = balance(train_set, balance_rng);
        }
        ModelGraph model = train_cnn(train_set, config.cnn, run_seed, nullptr, pretrained, scope);
        per_fold[fold][rep] = eval_cnn(model, split.test);
    });

    std::vector<SubjectResult> results;
    results.reserve(splits.size());
    for (std::size_t fold = 0; fold < splits.size(); ++fold) {
        SubjectResult r;
        r.subject = splits[fold].test_subject;
        std::vector<double> precisions, recalls;
        for (const Metrics& m : per_fold[fold]) {
            r.f1_runs.push_back(m.f1);
            precisions.push_back(m.precision);
            recalls.push_back(m.recall);
        }
        r.mean_f1 = mean_of(r.f1_runs);
        r.std_f1 = sample_std(r.f1_runs);
        r.mean_precision = mean_of(precisions);
        r.mean_recall = mean_of(recalls);
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace

std::vector<SubjectResult> run_feature_learning(const Dataset& data,
                                                const ExperimentConfig& config) {
    return run_loso_cnn(data, config, nullptr, TransferScope::all_layers);
}

std::vector<SubjectResult> run_transfer(const ParamSet& source, TransferScope scope,
                                        const Dataset& data, const ExperimentConfig& config) {
    return run_loso_cnn(data, config, &source, scope);
}

// ---------------------------------------------------------------------------
// Ensemble

int majority_vote(const std::vector<int>& votes) {
    if (votes.empty()) {
        throw ArgumentError("majority_vote on no votes");
    }
    std::size_t ones = 0;
    for (int v : votes) ones += v == 1 ? 1 : 0;
    // A tied vote predicts SMM.
    return 2 * ones >= votes.size() ? 1 : 0;
}

EnsembleSpec train_ensemble(ModelGraph& trained_cnn, const Dataset& train,
                            const EnsembleOptions& options, std::uint64_t seed) {
    if (options.pool_size < 1) {
        throw ArgumentError("ensemble pool size must be >= 1");
    }
    const SequenceDataset seqs = build_sequences(train, options.lstm.tau);
    if (seqs.sequences.empty()) {
        throw ArgumentError("no sequences of length tau fit the ensemble training data");
    }
    const std::vector<Tensor> pool = feature_pool(trained_cnn, train);
    std::vector<int> truth;
    truth.reserve(seqs.sequences.size());
    for (const WindowSequence& s : seqs.sequences) truth.push_back(s.label);

    EnsembleSpec spec;
    spec.members.reserve(options.pool_size);
    std::vector<std::vector<int>> train_preds(options.pool_size);
    for (std::size_t k = 0; k < options.pool_size; ++k) {
        ModelGraph member = train_lstm_on_pool(trained_cnn, pool, seqs.sequences, options.lstm,
                                               derive_seed(seed, k));
        train_preds[k] = predict_sequences(member, pool, seqs.sequences);
        spec.member_train_f1.push_back(compute_metrics(train_preds[k], truth).f1);
        spec.members.push_back(std::move(member));
    }

    spec.ranking.resize(options.pool_size);
    std::iota(spec.ranking.begin(), spec.ranking.end(), 0);
    std::stable_sort(spec.ranking.begin(), spec.ranking.end(), [&](std::size_t a, std::size_t b) {
        return spec.member_train_f1[a] > spec.member_train_f1[b];
    });

    // Sweep prefix sizes; argmax of the voted training F1, ties -> smaller b.
    double best_alpha = -1.0;
    spec.b = 1;
    std::vector<int> votes;
    for (std::size_t i = 1; i <= options.pool_size; ++i) {
        std::vector<int> voted(seqs.sequences.size());
        for (std::size_t s = 0; s < seqs.sequences.size(); ++s) {
            votes.clear();
            for (std::size_t r = 0; r < i; ++r) votes.push_back(train_preds[spec.ranking[r]][s]);
            voted[s] = majority_vote(votes);
        }
        const double alpha = compute_metrics(voted, truth).f1;
        if (alpha > best_alpha) {
            best_alpha = alpha;
            spec.b = i;
        }
    }
    return spec;
}

Metrics eval_ensemble(EnsembleSpec& spec, const Dataset& test) {
    if (spec.members.empty()) {
        throw ArgumentError("eval_ensemble on an empty pool");
    }
    ModelGraph& reference = spec.members[spec.ranking[0]];
    const SequenceDataset seqs = build_sequences(test, reference.tau());
    if (seqs.sequences.empty()) {
        throw ArgumentError("no sequences of length tau fit the ensemble test data");
    }
    // All members share the same frozen CNN parameters, so the static
    // features are extracted once.
    const std::vector<Tensor> pool = feature_pool(reference, test);
    std::vector<std::vector<int>> preds;
    preds.reserve(spec.b);
    for (std::size_t r = 0; r < spec.b; ++r) {
        preds.push_back(predict_sequences(spec.members[spec.ranking[r]], pool, seqs.sequences));
    }
    std::vector<int> voted(seqs.sequences.size());
    std::vector<int> votes;
    for (std::size_t s = 0; s < seqs.sequences.size(); ++s) {
        votes.clear();
        for (std::size_t r = 0; r < spec.b; ++r) votes.push_back(preds[r][s]);
        voted[s] = majority_vote(votes);
    }
    std::vector<int> truth;
    truth.reserve(seqs.sequences.size());
    for (const WindowSequence& s : seqs.sequences) truth.push_back(s.label);
    return compute_metrics(voted, truth);
}

} // namespace smm
