// Command-line front end: synth / preprocess / train / eval / transfer /
// ensemble / fisher, plus manifest-driven replay. Every run writes a
// manifest with the fully resolved configuration so it can be replayed
// bit-for-bit.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "smmkit/dataio.hpp"
#include "smmkit/experiments.hpp"
#include "smmkit/models.hpp"

namespace fs = std::filesystem;
using namespace smm;

namespace {

// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric failure.
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir / "manifest.txt", std::ios::trunc);
    if (!os) {
        throw IoError("cannot write manifest in " + out_dir.string());
    }
    os << "command=" << command << "\n";
    for (const auto& [key, value] : entries) os << key << "=" << value << "\n";
}

void write_metrics_csv(const fs::path& path, const std::string& config,
                       const std::vector<SubjectResult>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    os << "subject,config,mean_f1,std_f1,precision,recall\n";
    std::vector<double> f1s, precs, recs, stds;
    for (const SubjectResult& r : rows) {
        os << r.subject << ',' << config << ',' << fmt(r.mean_f1) << ',' << fmt(r.std_f1) << ','
           << fmt(r.mean_precision) << ',' << fmt(r.mean_recall) << "\n";
        f1s.push_back(r.mean_f1);
        stds.push_back(r.std_f1);
        precs.push_back(r.mean_precision);
        recs.push_back(r.mean_recall);
    }
    os << "Mean," << config << ',' << fmt(mean_of(f1s)) << ',' << fmt(mean_of(stds)) << ','
       << fmt(mean_of(precs)) << ',' << fmt(mean_of(recs)) << "\n";
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string out_dir;
    std::size_t subjects = 5;
    double minutes = 2.0;
    double rate = 100.0;
    double smm = 0.27;
    double band_lo = 2.0;
    double band_hi = 4.0;
    std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    SynthOptions opt;
    opt.n_subjects = a.subjects;
    opt.duration_s = a.minutes * 60.0;
    opt.rate = a.rate;
    opt.smm_fraction = a.smm;
    opt.band_lo_hz = a.band_lo;
    opt.band_hi_hz = a.band_hi;
    Rng rng(a.seed);
    const std::vector<Recording> recs = generate_synthetic(rng, opt);
    fs::create_directories(a.out_dir);
    std::size_t smm_samples = 0, total = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        save_csv(recs[i], (fs::path(a.out_dir) / ("sub" + std::to_string(i + 1) + ".csv")).string());
        total += recs[i].length();
        for (const Annotation& an : recs[i].annotations) smm_samples += an.end - an.start;
    }
    const double realized = static_cast<double>(smm_samples) / static_cast<double>(total);
    write_manifest(a.out_dir, "synth",
                   {{"out", a.out_dir},
                    {"subjects", std::to_string(a.subjects)},
                    {"minutes", fmt_full(a.minutes)},
                    {"rate", fmt_full(a.rate)},
                    {"smm", fmt_full(a.smm)},
                    {"band-lo", fmt_full(a.band_lo)},
                    {"band-hi", fmt_full(a.band_hi)},
                    {"seed", std::to_string(a.seed)}});
    std::cout << "wrote " << recs.size() << " recordings to " << a.out_dir
              << "; realized SMM fraction " << fmt(realized) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
    std::string in_dir;
    std::string out_file;
    double cutoff = 0.1;
    double resample = 0.0; // 0 = keep the source rate
    double window_s = 1.0;
    std::size_t step = 10;
    std::string provenance = "synthetic";
};

Provenance provenance_from(const std::string& name) {
    if (name == "simulated") return Provenance::simulated;
    if (name == "real1") return Provenance::real1;
    if (name == "real2") return Provenance::real2;
    if (name == "synthetic") return Provenance::synthetic;
    throw ArgumentError("unknown provenance " + name);
}

int run_preprocess(const PreprocessArgs& a) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(a.in_dir)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw ArgumentError("no .csv recordings found in " + a.in_dir);
    }
    std::vector<Recording> recs;
    recs.reserve(files.size());
    for (const fs::path& f : files) {
        Recording rec = load_csv(f.string());
        rec = highpass_filter(rec, a.cutoff);
        if (a.resample > 0.0 && a.resample != rec.rate) {
            rec = resample_linear(rec, a.resample);
        }
        recs.push_back(std::move(rec));
    }
    Dataset data = make_dataset(recs, a.window_s, a.step, provenance_from(a.provenance));
    const fs::path out_file(a.out_file);
    if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
    save_windows(data, a.out_file);

    const std::size_t w = data.windows[0].x.dim(1);
    const double overlap = w > a.step ? static_cast<double>(w - a.step) / static_cast<double>(w)
                                      : 0.0;
    std::ostringstream stats;
    stats << "windows=" << data.windows.size() << " width=" << w << " rate=" << data.rate
          << " overlap=" << fmt(overlap) << "\n";
    for (const std::string& subject : data.subjects) {
        std::size_t n = 0, pos = 0;
        for (const Window& win : data.windows) {
            if (win.subject_id != subject) continue;
            ++n;
            pos += win.label == 1 ? 1 : 0;
        }
        stats << "subject=" << subject << " windows=" << n << " smm_ratio="
              << fmt(n ? static_cast<double>(pos) / static_cast<double>(n) : 0.0) << "\n";
    }
    std::ofstream stats_file(out_file.string() + ".stats", std::ios::trunc);
    stats_file << stats.str();
    std::cout << stats.str();

    const fs::path out_dir = out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
    write_manifest(out_dir, "preprocess",
                   {{"in", a.in_dir},
                    {"out", a.out_file},
                    {"cutoff", fmt_full(a.cutoff)},
                    {"resample", fmt_full(a.resample)},
                    {"window", fmt_full(a.window_s)},
                    {"step", std::to_string(a.step)},
                    {"provenance", a.provenance}});
    return 0;
}

// ---------------------------------------------------------------------------
// train / transfer

struct TrainArgs {
    std::string data_file;
    std::string out_dir;
    std::string arch = "cnn";
    bool balanced = false;
    std::size_t repeats = 10;
    std::size_t epochs = 10;
    double lr = 0.0; // 0 = architecture default
    std::size_t batch = 100;
    std::size_t tau = 25;
    std::size_t q = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string source;       // transfer only
    std::string scope = "all"; // transfer only
};

std::string train_config_tag(const TrainArgs& a, const std::string& command) {
    std::ostringstream os;
    os << command << '-' << a.arch << (a.balanced ? "-balanced" : "-unbalanced");
    if (a.arch == "cnnlstm") os << "-tau" << a.tau << "-q" << a.q;
    return os.str();
}

std::vector<SubjectResult> run_lstm_loso(const Dataset& data, const TrainArgs& a,
                                         const ParamSet* pretrained, TransferScope scope) {
    const std::vector<LosoSplit> splits = loso_splits(data);
    const std::size_t repeats = std::max<std::size_t>(1, a.repeats);
    CnnTrainOptions cnn_opt;
    LstmTrainOptions lstm_opt;
    lstm_opt.tau = a.tau;
    lstm_opt.q = a.q;
    lstm_opt.epochs = a.epochs;
    if (a.lr > 0.0) lstm_opt.learning_rate = a.lr;
    std::vector<std::vector<Metrics>> per_fold(splits.size(), std::vector<Metrics>(repeats));
    parallel_for(splits.size() * repeats, a.jobs, [&](std::size_t job) {
        const std::size_t fold = job / repeats;
        const std::size_t rep = job % repeats;
        const std::uint64_t run_seed = derive_seed(a.seed, job);
        const LosoSplit& split = splits[fold];
        // --balanced applies to the CNN stage only; sequences need the
        // original unbalanced window order.
        Dataset cnn_train = split.train;
        if (a.balanced) {
            Rng balance_rng(derive_seed(run_seed, 1));
            cnn_train = balance(cnn_train, balance_rng);
        }
        ModelGraph cnn = train_cnn(cnn_train, cnn_opt, run_seed, nullptr, pretrained, scope);
        ModelGraph model = train_cnn_lstm(cnn, split.train, lstm_opt, derive_seed(run_seed, 2));
        per_fold[fold][rep] = eval_cnn_lstm(model, split.test);
    });
    std::vector<SubjectResult> results;
    for (std::size_t fold = 0; fold < splits.size(); ++fold) {
        SubjectResult r;
        r.subject = splits[fold].test_subject;
        std::vector<double> precs, recs;
        for (const Metrics& m : per_fold[fold]) {
            r.f1_runs.push_back(m.f1);
            precs.push_back(m.precision);
            recs.push_back(m.recall);
        }
        r.mean_f1 = mean_of(r.f1_runs);
        r.std_f1 = sample_std(r.f1_runs);
        r.mean_precision = mean_of(precs);
        r.mean_recall = mean_of(recs);
        results.push_back(std::move(r));
    }
    return results;
}

std::vector<SubjectResult> run_linear_loso(const Dataset& data, const TrainArgs& a, bool raw) {
    const std::vector<LosoSplit> splits = loso_splits(data);
    const std::size_t repeats = std::max<std::size_t>(1, a.repeats);
    std::vector<std::vector<Metrics>> per_fold(splits.size(), std::vector<Metrics>(repeats));
    parallel_for(splits.size() * repeats, a.jobs, [&](std::size_t job) {
        const std::size_t fold = job / repeats;
        const std::size_t rep = job % repeats;
        const LosoSplit& split = splits[fold];
        Rng rng(derive_seed(a.seed, job));
        Dataset train_set = split.train;
        if (a.balanced) {
            train_set = balance(train_set, rng);
        }
        per_fold[fold][rep] = raw ? raw_baseline(train_set, split.test, rng)
                                  : handcrafted_baseline(train_set, split.test, rng);
    });
    std::vector<SubjectResult> results;
    for (std::size_t fold = 0; fold < splits.size(); ++fold) {
        SubjectResult r;
        r.subject = splits[fold].test_subject;
        std::vector<double> precs, recs;
        for (const Metrics& m : per_fold[fold]) {
            r.f1_runs.push_back(m.f1);
            precs.push_back(m.precision);
            recs.push_back(m.recall);
        }
        r.mean_f1 = mean_of(r.f1_runs);
        r.std_f1 = sample_std(r.f1_runs);
        r.mean_precision = mean_of(precs);
        r.mean_recall = mean_of(recs);
        results.push_back(std::move(r));
    }
    return results;
}

int run_train_like(const TrainArgs& a, const std::string& command) {
    Dataset data = load_windows(a.data_file);
    ParamSet source;
    TransferScope scope = a.scope == "conv" ? TransferScope::conv_only : TransferScope::all_layers;
    if (command == "transfer") {
        source = load_params(a.source);
    }
    const ParamSet* pretrained = command == "transfer" ? &source : nullptr;

    std::vector<SubjectResult> rows;
    if (a.arch == "cnn") {
        ExperimentConfig config;
        config.balanced = a.balanced;
        config.repeats = a.repeats;
        config.cnn.epochs = a.epochs;
        if (a.lr > 0.0) config.cnn.learning_rate = a.lr;
        config.cnn.batch = a.batch;
        config.seed = a.seed;
        config.jobs = a.jobs;
        rows = pretrained ? run_transfer(source, scope, data, config)
                          : run_feature_learning(data, config);
    } else if (a.arch == "cnnlstm") {
        rows = run_lstm_loso(data, a, pretrained, scope);
    } else if (a.arch == "raw" || a.arch == "handcrafted") {
        if (command == "transfer") {
            throw ArgumentError("transfer applies to the cnn and cnnlstm architectures");
        }
        rows = run_linear_loso(data, a, a.arch == "raw");
    } else {
        throw ArgumentError("unknown architecture " + a.arch);
    }

    fs::create_directories(a.out_dir);
    const std::string config_tag = train_config_tag(a, command);
    write_metrics_csv(fs::path(a.out_dir) / "metrics.csv", config_tag, rows);

    // Final model on the full dataset for downstream eval/transfer.
    if (a.arch == "cnn" || a.arch == "cnnlstm") {
        const std::uint64_t final_seed = derive_seed(a.seed, 0xF1A51);
        Dataset train_set = data;
        if (a.balanced) {
            Rng balance_rng(derive_seed(final_seed, 1));
            train_set = balance(train_set, balance_rng);
        }
        CnnTrainOptions cnn_opt;
        cnn_opt.epochs = a.epochs;
        if (a.arch == "cnn" && a.lr > 0.0) cnn_opt.learning_rate = a.lr;
        cnn_opt.batch = a.batch;
        ModelGraph cnn = train_cnn(a.arch == "cnn" ? train_set : data, cnn_opt, final_seed,
                                   nullptr, pretrained, scope);
        if (a.arch == "cnn") {
            save_model(cnn, (fs::path(a.out_dir) / "model").string());
        } else {
            LstmTrainOptions lstm_opt;
            lstm_opt.tau = a.tau;
            lstm_opt.q = a.q;
            lstm_opt.epochs = a.epochs;
            if (a.lr > 0.0) lstm_opt.learning_rate = a.lr;
            ModelGraph model = train_cnn_lstm(cnn, data, lstm_opt, derive_seed(final_seed, 2));
            save_model(model, (fs::path(a.out_dir) / "model").string());
        }
    }

    std::vector<std::pair<std::string, std::string>> manifest{
        {"data", a.data_file},
        {"out", a.out_dir},
        {"arch", a.arch},
        {"balanced", a.balanced ? "1" : "0"},
        {"repeats", std::to_string(a.repeats)},
        {"epochs", std::to_string(a.epochs)},
        {"lr", fmt_full(a.lr)},
        {"batch", std::to_string(a.batch)},
        {"tau", std::to_string(a.tau)},
        {"q", std::to_string(a.q)},
        {"seed", std::to_string(a.seed)},
        {"jobs", std::to_string(a.jobs)}};
    if (command == "transfer") {
        manifest.push_back({"source", a.source});
        manifest.push_back({"scope", a.scope});
    }
    write_manifest(a.out_dir, command, manifest);
    std::cout << "wrote " << (fs::path(a.out_dir) / "metrics.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string model_prefix;
    std::string data_file;
    std::string out_dir;
};

int run_eval(const EvalArgs& a) {
    ModelGraph model = load_model(a.model_prefix);
    Dataset data = load_windows(a.data_file);
    std::vector<SubjectResult> rows;
    for (const std::string& subject : data.subjects) {
        Dataset subset;
        subset.subjects = {subject};
        subset.provenance = data.provenance;
        subset.rate = data.rate;
        subset.step = data.step;
        for (const Window& w : data.windows) {
            if (w.subject_id == subject) subset.windows.push_back(w);
        }
        if (subset.windows.empty()) continue;
        const Metrics m = model.kind() == ModelGraph::Kind::cnn ? eval_cnn(model, subset)
                                                                : eval_cnn_lstm(model, subset);
        SubjectResult r;
        r.subject = subject;
        r.mean_f1 = m.f1;
        r.std_f1 = 0.0;
        r.mean_precision = m.precision;
        r.mean_recall = m.recall;
        r.f1_runs = {m.f1};
        rows.push_back(std::move(r));
    }
    fs::create_directories(a.out_dir);
    write_metrics_csv(fs::path(a.out_dir) / "metrics.csv",
                      model.kind() == ModelGraph::Kind::cnn ? "eval-cnn" : "eval-cnnlstm", rows);
    write_manifest(a.out_dir, "eval",
                   {{"model", a.model_prefix}, {"data", a.data_file}, {"out", a.out_dir}});
    std::cout << "wrote " << (fs::path(a.out_dir) / "metrics.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ensemble

struct EnsembleArgs {
    std::string data_file;
    std::string out_dir;
    std::size_t pool = 10;
    std::size_t tau = 25;
    std::size_t q = 40;
    std::size_t epochs = 10;
    double lr = 1e-3;
    std::size_t batch = 100;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

int run_ensemble_cmd(const EnsembleArgs& a) {
    Dataset data = load_windows(a.data_file);
    const std::vector<LosoSplit> splits = loso_splits(data);
    EnsembleOptions opt;
    opt.pool_size = a.pool;
    opt.lstm.tau = a.tau;
    opt.lstm.q = a.q;
    opt.lstm.epochs = a.epochs;
    opt.lstm.learning_rate = a.lr;
    opt.lstm.batch = a.batch;

    std::vector<SubjectResult> rows(splits.size());
    std::vector<std::string> selections(splits.size());
    parallel_for(splits.size(), a.jobs, [&](std::size_t fold) {
        const LosoSplit& split = splits[fold];
        const std::uint64_t fold_seed = derive_seed(a.seed, fold);
        CnnTrainOptions cnn_opt;
        cnn_opt.batch = a.batch;
        ModelGraph cnn = train_cnn(split.train, cnn_opt, fold_seed);
        EnsembleSpec spec = train_ensemble(cnn, split.train, opt, derive_seed(fold_seed, 7));
        const Metrics m = eval_ensemble(spec, split.test);
        SubjectResult r;
        r.subject = split.test_subject;
        r.mean_f1 = m.f1;
        r.mean_precision = m.precision;
        r.mean_recall = m.recall;
        r.f1_runs = {m.f1};
        rows[fold] = std::move(r);
        std::ostringstream sel;
        sel << "subject=" << split.test_subject << " b=" << spec.b << " ranking=";
        for (std::size_t i = 0; i < spec.ranking.size(); ++i) {
            if (i) sel << '|';
            sel << spec.ranking[i];
        }
        sel << " train_f1=";
        for (std::size_t i = 0; i < spec.member_train_f1.size(); ++i) {
            if (i) sel << '|';
            sel << fmt(spec.member_train_f1[i]);
        }
        selections[fold] = sel.str();
    });

    fs::create_directories(a.out_dir);
    std::ostringstream tag;
    tag << "ensemble-l" << a.pool << "-tau" << a.tau << "-q" << a.q;
    write_metrics_csv(fs::path(a.out_dir) / "metrics.csv", tag.str(), rows);
    {
        std::ofstream os(fs::path(a.out_dir) / "ensemble.txt", std::ios::trunc);
        os << "vote=majority tie=smm\n";
        for (const std::string& line : selections) os << line << "\n";
    }
    write_manifest(a.out_dir, "ensemble",
                   {{"data", a.data_file},
                    {"out", a.out_dir},
                    {"l", std::to_string(a.pool)},
                    {"tau", std::to_string(a.tau)},
                    {"q", std::to_string(a.q)},
                    {"epochs", std::to_string(a.epochs)},
                    {"lr", fmt_full(a.lr)},
                    {"batch", std::to_string(a.batch)},
                    {"seed", std::to_string(a.seed)},
                    {"jobs", std::to_string(a.jobs)}});
    std::cout << "wrote " << (fs::path(a.out_dir) / "metrics.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fisher

struct FisherArgs {
    std::string data_file;
    std::string model_prefix; // optional
    std::string out_dir;
};

int run_fisher(const FisherArgs& a) {
    Dataset data = load_windows(a.data_file);
    std::vector<int> labels;
    labels.reserve(data.windows.size());
    for (const Window& w : data.windows) labels.push_back(w.label);

    std::vector<std::pair<std::string, double>> scores;
    {
        std::vector<std::vector<double>> feats;
        feats.reserve(data.windows.size());
        for (const Window& w : data.windows) feats.push_back(flatten_window(w));
        scores.emplace_back("raw", fisher_score(feats, labels));
    }
    {
        std::vector<std::vector<double>> feats;
        feats.reserve(data.windows.size());
        for (const Window& w : data.windows) feats.push_back(handcrafted_features(w, data.rate));
        scores.emplace_back("handcrafted", fisher_score(feats, labels));
    }
    if (!a.model_prefix.empty()) {
        ModelGraph model = load_model(a.model_prefix);
        std::vector<std::vector<double>> feats;
        feats.reserve(data.windows.size());
        for (const Window& w : data.windows) {
            feats.push_back(model.extract_features(w.x).values());
        }
        scores.emplace_back("learned", fisher_score(feats, labels));
    }

    fs::create_directories(a.out_dir);
    std::ofstream os(fs::path(a.out_dir) / "fisher.csv", std::ios::trunc);
    os << "feature_space,fisher_score\n";
    for (const auto& [name, score] : scores) {
        os << name << ',' << fmt(score) << "\n";
        std::cout << name << " fisher score: " << fmt(score) << "\n";
    }
    write_manifest(a.out_dir, "fisher",
                   {{"data", a.data_file}, {"model", a.model_prefix}, {"out", a.out_dir}});
    return 0;
}

// ---------------------------------------------------------------------------
// replay

int run_app(const std::vector<std::string>& args);

int run_replay(const std::string& manifest_path, const std::string& out_override) {
    std::ifstream is(manifest_path);
    if (!is) {
        throw IoError("cannot open manifest " + manifest_path);
    }
    std::string command;
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(manifest_path + ": malformed line '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "command") {
            command = value;
        } else {
            kv.emplace_back(key, value);
        }
    }
    if (command.empty()) {
        throw FormatError(manifest_path + " has no command= line");
    }
    std::vector<std::string> args{command};
    for (auto& [key, value] : kv) {
        if (key == "out" && !out_override.empty()) continue;
        if (key == "balanced") {
            if (value == "1") args.push_back("--balanced");
            continue;
        }
        if (value.empty()) continue;
        args.push_back("--" + key);
        args.push_back(value);
    }
    if (!out_override.empty()) {
        args.push_back("--out");
        args.push_back(out_override);
    }
    return run_app(args);
}

// ---------------------------------------------------------------------------
// app wiring

int run_app(const std::vector<std::string>& args) {
    CLI::App app{"Stereotypical motor movement detection pipeline"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic IMU recordings");
    synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();
    synth_cmd->add_option("--subjects", synth.subjects, "Number of subjects");
    synth_cmd->add_option("--minutes", synth.minutes, "Recording length per subject");
    synth_cmd->add_option("--rate", synth.rate, "Sampling rate in Hz");
    synth_cmd->add_option("--smm", synth.smm, "Target SMM sample fraction");
    synth_cmd->add_option("--band-lo", synth.band_lo, "SMM band lower edge in Hz");
    synth_cmd->add_option("--band-hi", synth.band_hi, "SMM band upper edge in Hz");
    synth_cmd->add_option("--seed", synth.seed, "Master seed");

    PreprocessArgs prep;
    auto* prep_cmd = app.add_subcommand("preprocess", "Filter, resample and segment recordings");
    prep_cmd->add_option("--in", prep.in_dir, "Directory of .csv recordings")->required();
    prep_cmd->add_option("--out", prep.out_file, "Output window archive")->required();
    prep_cmd->add_option("--cutoff", prep.cutoff, "High-pass cutoff in Hz");
    prep_cmd->add_option("--resample", prep.resample, "Target rate in Hz (0 keeps source)");
    prep_cmd->add_option("--window", prep.window_s, "Window length in seconds");
    prep_cmd->add_option("--step", prep.step, "Sliding step in samples");
    prep_cmd->add_option("--provenance", prep.provenance, "simulated|real1|real2|synthetic");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train and evaluate leave-one-subject-out");
    train_cmd->add_option("--data", train.data_file, "Window archive")->required();
    train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
    train_cmd->add_option("--arch", train.arch, "cnn|cnnlstm|raw|handcrafted");
    train_cmd->add_flag("--balanced", train.balanced, "Balance the training set");
    train_cmd->add_option("--repeats", train.repeats, "Training repetitions per fold");
    train_cmd->add_option("--epochs", train.epochs, "Training epochs");
    train_cmd->add_option("--lr", train.lr, "Learning rate (0 = architecture default)");
    train_cmd->add_option("--batch", train.batch, "Mini-batch size");
    train_cmd->add_option("--tau", train.tau, "Sequence length (cnnlstm)");
    train_cmd->add_option("--q", train.q, "LSTM neurons (cnnlstm)");
    train_cmd->add_option("--seed", train.seed, "Master seed");
    train_cmd->add_option("--jobs", train.jobs, "Parallel workers");

    TrainArgs transfer = train;
    auto* transfer_cmd = app.add_subcommand("transfer", "Train with pre-initialized parameters");
    transfer_cmd->add_option("--data", transfer.data_file, "Window archive")->required();
    transfer_cmd->add_option("--out", transfer.out_dir, "Output directory")->required();
    transfer_cmd->add_option("--source", transfer.source, "Source .params file")->required();
    transfer_cmd->add_option("--scope", transfer.scope, "all|conv");
    transfer_cmd->add_option("--arch", transfer.arch, "cnn|cnnlstm");
    transfer_cmd->add_flag("--balanced", transfer.balanced, "Balance the training set");
    transfer_cmd->add_option("--repeats", transfer.repeats, "Training repetitions per fold");
    transfer_cmd->add_option("--epochs", transfer.epochs, "Training epochs");
    transfer_cmd->add_option("--lr", transfer.lr, "Learning rate (0 = architecture default)");
    transfer_cmd->add_option("--batch", transfer.batch, "Mini-batch size");
    transfer_cmd->add_option("--tau", transfer.tau, "Sequence length (cnnlstm)");
    transfer_cmd->add_option("--q", transfer.q, "LSTM neurons (cnnlstm)");
    transfer_cmd->add_option("--seed", transfer.seed, "Master seed");
    transfer_cmd->add_option("--jobs", transfer.jobs, "Parallel workers");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model per subject");
    eval_cmd->add_option("--model", eval.model_prefix, "Model prefix (.meta/.params)")->required();
    eval_cmd->add_option("--data", eval.data_file, "Window archive")->required();
    eval_cmd->add_option("--out", eval.out_dir, "Output directory")->required();

    EnsembleArgs ens;
    auto* ens_cmd = app.add_subcommand("ensemble", "Best-b majority-voting ensemble");
    ens_cmd->add_option("--data", ens.data_file, "Window archive")->required();
    ens_cmd->add_option("--out", ens.out_dir, "Output directory")->required();
    ens_cmd->add_option("--l", ens.pool, "Pool size");
    ens_cmd->add_option("--tau", ens.tau, "Sequence length");
    ens_cmd->add_option("--q", ens.q, "LSTM neurons");
    ens_cmd->add_option("--epochs", ens.epochs, "Training epochs per member");
    ens_cmd->add_option("--lr", ens.lr, "Learning rate");
    ens_cmd->add_option("--batch", ens.batch, "Mini-batch size");
    ens_cmd->add_option("--seed", ens.seed, "Master seed");
    ens_cmd->add_option("--jobs", ens.jobs, "Parallel workers");

    FisherArgs fisher;
    auto* fisher_cmd = app.add_subcommand("fisher", "Class separability per feature space");
    fisher_cmd->add_option("--data", fisher.data_file, "Window archive")->required();
    fisher_cmd->add_option("--model", fisher.model_prefix, "Optional model prefix");
    fisher_cmd->add_option("--out", fisher.out_dir, "Output directory")->required();

    std::string replay_manifest, replay_out;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run a recorded manifest");
    replay_cmd->add_option("manifest", replay_manifest, "Path to manifest.txt")->required();
    replay_cmd->add_option("--out", replay_out, "Override the output location");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    if (synth_cmd->parsed()) return run_synth(synth);
    if (prep_cmd->parsed()) return run_preprocess(prep);
    if (train_cmd->parsed()) return run_train_like(train, "train");
    if (transfer_cmd->parsed()) return run_train_like(transfer, "transfer");
    if (eval_cmd->parsed()) return run_eval(eval);
    if (ens_cmd->parsed()) return run_ensemble_cmd(ens);
    if (fisher_cmd->parsed()) return run_fisher(fisher);
    if (replay_cmd->parsed()) return run_replay(replay_manifest, replay_out);
    return kExitUsage;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run_app(args);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const StateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const VersionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const TransferError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
