#include "smmkit/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace smm {

namespace {

constexpr std::size_t kChannelCount = 9;

} // namespace

std::size_t Dataset::count_label(int label) const {
    std::size_t n = 0;
    for (const Window& w : windows) {
        if (w.label == label) ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no, const std::string& why) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + why);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

Recording load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("cannot open " + path + " for reading");
    }
    Recording rec;
    rec.channels.assign(kChannelCount, {});

    std::string line;
    std::size_t line_no = 0;

    // Sidecar metadata line: "# subject=<id> rate=<hz>".
    if (!std::getline(is, line)) parse_fail(path, 1, "empty file");
    ++line_no;
    {
        std::istringstream meta(line);
        std::string hash, tok;
        meta >> hash;
        if (hash != "#") parse_fail(path, line_no, "expected metadata line starting with '#'");
        bool have_subject = false, have_rate = false;
        while (meta >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) parse_fail(path, line_no, "malformed metadata token " + tok);
            const std::string key = tok.substr(0, eq);
            const std::string value = tok.substr(eq + 1);
            if (key == "subject") {
                rec.subject_id = value;
                have_subject = true;
            } else if (key == "rate") {
                try {
                    rec.rate = std::stod(value);
                } catch (const std::exception&) {
                    parse_fail(path, line_no, "non-numeric rate " + value);
                }
                have_rate = true;
            }
        }
        if (!have_subject || !have_rate) parse_fail(path, line_no, "metadata needs subject= and rate=");
        if (rec.rate <= 0.0) parse_fail(path, line_no, "rate must be positive");
    }

    if (!std::getline(is, line)) parse_fail(path, 2, "missing header row");
    ++line_no;
    {
        const auto fields = split_fields(line);
        std::vector<std::string> expected{"t"};
        for (std::size_t i = 1; i <= kChannelCount; ++i) expected.push_back("ch" + std::to_string(i));
        expected.push_back("label");
        if (fields != expected) {
            parse_fail(path, line_no, "header must be t,ch1..ch" + std::to_string(kChannelCount) +
                                          ",label");
        }
    }

    std::vector<int> labels;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != kChannelCount + 2) {
            parse_fail(path, line_no, "expected " + std::to_string(kChannelCount + 2) +
                                          " columns, got " + std::to_string(fields.size()));
        }
        for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
            try {
                std::size_t used = 0;
                const double v = std::stod(fields[ch + 1], &used);
                if (used != fields[ch + 1].size()) throw std::invalid_argument("trailing junk");
                rec.channels[ch].push_back(v);
            } catch (const std::exception&) {
                parse_fail(path, line_no, "non-numeric value '" + fields[ch + 1] + "' in column ch" +
                                              std::to_string(ch + 1));
            }
        }
        const std::string& lab = fields.back();
        if (lab == "0") {
            labels.push_back(0);
        } else if (lab == "1") {
            labels.push_back(1);
        } else {
            parse_fail(path, line_no, "label must be 0 or 1, got '" + lab + "'");
        }
    }

    // Run-length encode the label column into SMM intervals.
    std::size_t run_start = 0;
    bool in_run = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1 && !in_run) {
            run_start = i;
            in_run = true;
        } else if (labels[i] == 0 && in_run) {
            rec.annotations.push_back({run_start, i, EventLabel::smm});
            in_run = false;
        }
    }
    if (in_run) rec.annotations.push_back({run_start, labels.size(), EventLabel::smm});

    rec.validate();
    return rec;
}

void save_csv(const Recording& rec, const std::string& path) {
    rec.validate();
    if (rec.channel_count() != kChannelCount) {
        throw ArgumentError("csv schema expects " + std::to_string(kChannelCount) + " channels, got " +
                            std::to_string(rec.channel_count()));
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + path + " for writing");
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", rec.rate);
    os << "# subject=" << rec.subject_id << " rate=" << buf << "\n";
    os << "t";
    for (std::size_t i = 1; i <= kChannelCount; ++i) os << ",ch" << i;
    os << ",label\n";
    const std::size_t len = rec.length();
    std::vector<int> labels(len, 0);
    for (const Annotation& a : rec.annotations) {
        if (a.label != EventLabel::smm) continue;
        for (std::size_t i = a.start; i < a.end; ++i) labels[i] = 1;
    }
    for (std::size_t i = 0; i < len; ++i) {
        os << i;
        for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
            std::snprintf(buf, sizeof(buf), "%.17g", rec.channels[ch][i]);
            os << ',' << buf;
        }
        os << ',' << labels[i] << "\n";
    }
    if (!os) {
        throw IoError("write failed for " + path);
    }
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

/// Draw `n` positive segment lengths that sum exactly to `total`.
std::vector<std::size_t> partition_lengths(Rng& rng, std::size_t n, std::size_t total) {
    std::vector<double> weights(n);
    double sum = 0.0;
    for (double& w : weights) {
        w = rng.uniform(0.6, 1.4);
        sum += w;
    }
    std::vector<std::size_t> lengths(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t len = static_cast<std::size_t>(std::llround(weights[i] / sum * total));
        len = std::min(len, total - assigned);
        lengths[i] = len;
        assigned += len;
    }
    lengths[n - 1] = total - assigned;
    return lengths;
}

} // namespace

std::vector<Recording> generate_synthetic(Rng& rng, const SynthOptions& opt) {
    if (opt.smm_fraction <= 0.0 || opt.smm_fraction >= 1.0) {
        throw ArgumentError("smm_fraction must lie in (0, 1), got " +
                            std::to_string(opt.smm_fraction));
    }
    if (opt.n_subjects < 1 || opt.duration_s <= 0.0 || opt.rate <= 0.0) {
        throw ArgumentError("synthetic generation needs subjects >= 1 and positive duration/rate");
    }
    std::vector<Recording> out;
    out.reserve(opt.n_subjects);
    const std::size_t n = static_cast<std::size_t>(std::llround(opt.duration_s * opt.rate));
    const std::size_t smm_total = static_cast<std::size_t>(std::llround(opt.smm_fraction * n));

    for (std::size_t s = 0; s < opt.n_subjects; ++s) {
        Recording rec;
        rec.subject_id = "Sub" + std::to_string(s + 1);
        rec.rate = opt.rate;
        rec.channels.assign(kChannelCount, std::vector<double>(n, 0.0));

        const double subject_freq = rng.uniform(opt.band_lo_hz, opt.band_hi_hz);
        const double subject_amp = rng.uniform(1.0, 1.8);
        std::vector<double> mix(kChannelCount), chan_phase(kChannelCount);
        for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
            mix[ch] = rng.uniform(0.25, 1.0);
            chan_phase[ch] = rng.uniform(0.0, 0.6);
        }
        const double drift_f1 = rng.uniform(0.02, 0.08);
        const double drift_f2 = rng.uniform(0.08, 0.20);
        const double drift_p1 = rng.uniform(0.0, 2.0 * M_PI);
        const double drift_p2 = rng.uniform(0.0, 2.0 * M_PI);
        const double dc = rng.uniform(-2.0, 2.0);

        // Burst layout: lengths sum exactly to the requested SMM total.
        const std::size_t mean_burst = static_cast<std::size_t>(std::llround(3.5 * opt.rate));
        const std::size_t n_bursts =
            std::max<std::size_t>(1, (smm_total + mean_burst / 2) / std::max<std::size_t>(1, mean_burst));
        std::vector<std::size_t> burst_len = partition_lengths(rng, n_bursts, smm_total);
        std::vector<std::size_t> gap_len = partition_lengths(rng, n_bursts + 1, n - smm_total);

        std::size_t cursor = 0;
        for (std::size_t b = 0; b < n_bursts; ++b) {
            cursor += gap_len[b];
            if (burst_len[b] == 0) continue;
            const std::size_t start = cursor;
            const std::size_t end = start + burst_len[b];
            const double freq = subject_freq * rng.uniform(0.95, 1.05);
            const double amp = subject_amp * rng.uniform(0.85, 1.15);
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
                const double w = 2.0 * M_PI * freq / opt.rate;
                for (std::size_t t = start; t < end; ++t) {
                    rec.channels[ch][t] +=
                        mix[ch] * amp * std::sin(w * static_cast<double>(t - start) + phase + chan_phase[ch]);
                }
            }
            rec.annotations.push_back({start, end, EventLabel::smm});
            cursor = end;
        }

        // Background on every sample: DC offset, slow drift, sensor noise.
        for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
            const double w1 = 2.0 * M_PI * drift_f1 / opt.rate;
            const double w2 = 2.0 * M_PI * drift_f2 / opt.rate;
            for (std::size_t t = 0; t < n; ++t) {
                rec.channels[ch][t] += dc + opt.drift_amp * std::sin(w1 * t + drift_p1) +
                                       0.4 * opt.drift_amp * std::sin(w2 * t + drift_p2) +
                                       rng.normal(0.0, opt.noise_std);
            }
        }

        rec.validate();
        out.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly

Dataset make_dataset(const std::vector<Recording>& recs, double window_s,
                     std::size_t step_samples, Provenance provenance) {
    if (recs.empty()) {
        throw ArgumentError("make_dataset needs at least one recording");
    }
    Dataset data;
    data.provenance = provenance;
    data.rate = recs[0].rate;
    data.step = step_samples;
    for (const Recording& rec : recs) {
        if (rec.rate != data.rate) {
            throw ArgumentError("recordings have mixed rates; resample first");
        }
        auto windows = segment(rec, window_s, step_samples);
        data.subjects.push_back(rec.subject_id);
        for (auto& w : windows) data.windows.push_back(std::move(w));
    }
    return data;
}

Dataset balance(const Dataset& train, Rng& rng, std::vector<std::size_t>* kept_majority) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < train.windows.size(); ++i) {
        (train.windows[i].label == 1 ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
        throw ArgumentError("balance() needs both classes present");
    }
    std::vector<std::size_t>& majority = pos.size() > neg.size() ? pos : neg;
    const std::vector<std::size_t>& minority = pos.size() > neg.size() ? neg : pos;
    shuffle_indices(majority, rng);
    std::vector<std::size_t> keep(majority.begin(),
                                  majority.begin() + static_cast<std::ptrdiff_t>(minority.size()));
    if (kept_majority) *kept_majority = keep;
    keep.insert(keep.end(), minority.begin(), minority.end());
    std::sort(keep.begin(), keep.end());

    Dataset out;
    out.subjects = train.subjects;
    out.provenance = train.provenance;
    out.rate = train.rate;
    out.step = train.step;
    out.windows.reserve(keep.size());
    for (std::size_t i : keep) out.windows.push_back(train.windows[i]);
    return out;
}

std::vector<LosoSplit> loso_splits(const Dataset& data) {
    if (data.subjects.size() < 2) {
        throw ArgumentError("leave-one-subject-out needs at least 2 subjects");
    }
    std::vector<LosoSplit> splits;
    splits.reserve(data.subjects.size());
    for (const std::string& subject : data.subjects) {
        LosoSplit split;
        split.test_subject = subject;
        split.train.provenance = split.test.provenance = data.provenance;
        split.train.rate = split.test.rate = data.rate;
        split.train.step = split.test.step = data.step;
        split.test.subjects = {subject};
        for (const std::string& other : data.subjects) {
            if (other != subject) split.train.subjects.push_back(other);
        }
        for (const Window& w : data.windows) {
            (w.subject_id == subject ? split.test : split.train).windows.push_back(w);
        }
        splits.push_back(std::move(split));
    }
    return splits;
}

// ---------------------------------------------------------------------------
// Window archive

namespace {

constexpr char kWindowMagic[8] = {'S', 'M', 'M', 'W', 'I', 'N', 'D', 'S'};
constexpr std::uint32_t kWindowVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(os, bits);
}

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool get_bytes(std::istream& is, void* out, std::size_t n) {
    is.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(is.gcount()) == n;
}

std::uint32_t need_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!get_bytes(is, b, 4)) throw FormatError(path + " is truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t need_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!get_bytes(is, b, 8)) throw FormatError(path + " is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double need_f64(std::istream& is, const std::string& path) {
    const std::uint64_t bits = need_u64(is, path);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string need_str(std::istream& is, const std::string& path) {
    const std::uint32_t len = need_u32(is, path);
    std::string s(len, '\0');
    if (len > 0 && !get_bytes(is, s.data(), len)) throw FormatError(path + " is truncated");
    return s;
}

} // namespace

void save_windows(const Dataset& data, const std::string& path) {
    if (data.windows.empty()) {
        throw ArgumentError("save_windows on an empty dataset");
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + path + " for writing");
    }
    os.write(kWindowMagic, sizeof(kWindowMagic));
    put_u32(os, kWindowVersion);
    put_u32(os, static_cast<std::uint32_t>(data.provenance));
    put_f64(os, data.rate);
    put_u64(os, data.step);
    put_u32(os, static_cast<std::uint32_t>(data.subjects.size()));
    for (const std::string& s : data.subjects) put_str(os, s);
    const std::size_t c = data.windows[0].x.dim(0);
    const std::size_t w = data.windows[0].x.dim(1);
    put_u64(os, c);
    put_u64(os, w);
    put_u64(os, data.windows.size());
    for (const Window& win : data.windows) {
        if (win.x.dim(0) != c || win.x.dim(1) != w) {
            throw ArgumentError("save_windows needs uniform window shapes");
        }
        put_str(os, win.subject_id);
        put_u64(os, win.t_index);
        put_u32(os, static_cast<std::uint32_t>(win.label));
        for (std::size_t i = 0; i < win.x.size(); ++i) put_f64(os, win.x[i]);
    }
    if (!os) {
        throw IoError("write failed for " + path);
    }
}

Dataset load_windows(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path + " for reading");
    }
    char magic[8];
    if (!get_bytes(is, magic, 8) || std::memcmp(magic, kWindowMagic, 8) != 0) {
        throw FormatError(path + " is not a window archive (bad magic)");
    }
    const std::uint32_t version = need_u32(is, path);
    if (version != kWindowVersion) {
        throw VersionError(path + " has unsupported version " + std::to_string(version));
    }
    Dataset data;
    const std::uint32_t prov = need_u32(is, path);
    if (prov > static_cast<std::uint32_t>(Provenance::synthetic)) {
        throw FormatError(path + " has an invalid provenance tag");
    }
    data.provenance = static_cast<Provenance>(prov);
    data.rate = need_f64(is, path);
    data.step = need_u64(is, path);
    const std::uint32_t n_subjects = need_u32(is, path);
    for (std::uint32_t i = 0; i < n_subjects; ++i) data.subjects.push_back(need_str(is, path));
    const std::size_t c = need_u64(is, path);
    const std::size_t w = need_u64(is, path);
    const std::uint64_t count = need_u64(is, path);
    if (c == 0 || w == 0) {
        throw FormatError(path + " has an empty window shape");
    }
    data.windows.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        Window win;
        win.subject_id = need_str(is, path);
        win.t_index = need_u64(is, path);
        const std::uint32_t label = need_u32(is, path);
        if (label > 1) {
            throw FormatError(path + " has an invalid window label");
        }
        win.label = static_cast<int>(label);
        win.x = Tensor({c, w});
        for (std::size_t i = 0; i < win.x.size(); ++i) win.x[i] = need_f64(is, path);
        data.windows.push_back(std::move(win));
    }
    return data;
}

SequenceDataset build_sequences(const Dataset& data, std::size_t tau) {
    if (tau < 1) {
        throw ArgumentError("sequence length tau must be >= 1");
    }
    // Precondition: windows ordered by (subject, t_index).
    for (std::size_t i = 1; i < data.windows.size(); ++i) {
        const Window& a = data.windows[i - 1];
        const Window& b = data.windows[i];
        if (a.subject_id == b.subject_id && b.t_index <= a.t_index) {
            throw ArgumentError("windows must be ordered by (subject, t_index)");
        }
    }
    std::size_t step = data.step;
    if (step == 0) {
        // Infer the segmentation stride as the smallest in-subject gap.
        for (std::size_t i = 1; i < data.windows.size(); ++i) {
            if (data.windows[i].subject_id != data.windows[i - 1].subject_id) continue;
            const std::size_t d = data.windows[i].t_index - data.windows[i - 1].t_index;
            if (step == 0 || d < step) step = d;
        }
        if (step == 0) step = 1;
    }
    SequenceDataset out;
    out.tau = tau;
    out.step = step;
    std::size_t run_start = 0;
    auto flush_run = [&](std::size_t run_end) {
        // Emit every tau-long slice of windows [run_start, run_end).
        if (run_end - run_start < tau) return;
        for (std::size_t first = run_start; first + tau <= run_end; ++first) {
            WindowSequence seq;
            seq.window_indices.resize(tau);
            for (std::size_t k = 0; k < tau; ++k) seq.window_indices[k] = first + k;
            seq.label = data.windows[first + tau - 1].label;
            out.sequences.push_back(std::move(seq));
        }
    };
    for (std::size_t i = 1; i <= data.windows.size(); ++i) {
        const bool boundary =
            i == data.windows.size() ||
            data.windows[i].subject_id != data.windows[i - 1].subject_id ||
            data.windows[i].t_index - data.windows[i - 1].t_index != step;
        if (boundary) {
            flush_run(i);
            run_start = i;
        }
    }
    return out;
}

} // namespace smm
