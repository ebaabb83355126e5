#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "smmkit/signal.hpp"
#include "smmkit/tensor.hpp"

namespace smm {

enum class Provenance { simulated, real1, real2, synthetic };

/// A windowed corpus ready for training. Windows are ordered by
/// (subject, t_index); `step` is the segmentation stride that produced
/// them, used downstream to check sequence consecutiveness.
struct Dataset {
    std::vector<Window> windows;
    std::vector<std::string> subjects;
    Provenance provenance = Provenance::synthetic;
    double rate = 0.0;
    std::size_t step = 0;

    std::size_t count_label(int label) const;
};

/// CSV schema: first line `# subject=<id> rate=<hz>`, header
/// `t,ch1..ch9,label`, then one row per sample. The label column is
/// run-length encoded into SMM annotation intervals.
Recording load_csv(const std::string& path);
void save_csv(const Recording& rec, const std::string& path);

struct SynthOptions {
    std::size_t n_subjects = 5;
    double duration_s = 120.0;
    double rate = 100.0;
    double smm_fraction = 0.27;
    double band_lo_hz = 2.0; // SMM oscillation band
    double band_hi_hz = 4.0;
    double noise_std = 0.2;
    double drift_amp = 0.6;
};

/// Synthetic 9-channel recordings: background = slow drift + noise, SMM
/// segments = bursts of band-limited sinusoids with per-subject frequency,
/// amplitude and channel mixing. Burst/gap lengths are scaled so the
/// realized SMM sample fraction matches the request up to rounding.
std::vector<Recording> generate_synthetic(Rng& rng, const SynthOptions& options);

/// Segment recordings into a windowed dataset (1-second windows unless
/// window_s says otherwise).
Dataset make_dataset(const std::vector<Recording>& recs, double window_s,
                     std::size_t step_samples, Provenance provenance);

/// Undersample the majority class to the minority count (seeded, without
/// replacement). Minority windows are never dropped, nothing is duplicated.
/// `kept_majority` (optional) receives the retained majority indices.
Dataset balance(const Dataset& train, Rng& rng,
                std::vector<std::size_t>* kept_majority = nullptr);

struct LosoSplit {
    std::string test_subject;
    Dataset train;
    Dataset test;
};

/// One split per subject: test = that subject, train = all others.
std::vector<LosoSplit> loso_splits(const Dataset& data);

/// Indices of tau consecutive windows of one subject; label of the final
/// window.
struct WindowSequence {
    std::vector<std::size_t> window_indices;
    int label = 0;
};

struct SequenceDataset {
    std::vector<WindowSequence> sequences;
    std::size_t tau = 1;
    std::size_t step = 1;
};

/// Stride-1 sequences of tau consecutive windows, never crossing subject
/// or recording-gap boundaries; the training set stays unbalanced.
SequenceDataset build_sequences(const Dataset& data, std::size_t tau);

/// Binary window archive: 8-byte magic "SMMWINDS", u32 version, header
/// (subjects, rate, step, provenance, channel count, window width), then
/// one record per window. Round-trip is bitwise lossless.
void save_windows(const Dataset& data, const std::string& path);
Dataset load_windows(const std::string& path);

} // namespace smm
