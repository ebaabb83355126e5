#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "smmkit/tensor.hpp"

namespace smm {

enum class EventLabel { no_smm = 0, smm = 1 };

/// Half-open sample interval [start, end) with the movement class observed
/// during it.
struct Annotation {
    std::size_t start = 0;
    std::size_t end = 0;
    EventLabel label = EventLabel::smm;
};

/// One subject's continuous multi-channel IMU stream with per-sample
/// annotations. All channels have equal length; annotations lie within the
/// recording and do not overlap.
struct Recording {
    std::string subject_id;
    double rate = 0.0; // Hz
    std::vector<std::vector<double>> channels;
    std::vector<Annotation> annotations;

    std::size_t length() const { return channels.empty() ? 0 : channels[0].size(); }
    std::size_t channel_count() const { return channels.size(); }

    /// Throws ArgumentError when an invariant is broken.
    void validate() const;
};

/// One-second classification sample: a [c x w] slice of the recording with
/// its class, subject and position in the source stream.
struct Window {
    Tensor x; // [c x w]
    int label = 0;
    std::string subject_id;
    std::size_t t_index = 0; // start sample in the source recording
};

/// First-order high-pass applied forward then backward (zero phase). DC
/// gain is 0 and the length is preserved; edge transients are kept.
Recording highpass_filter(const Recording& rec, double cutoff_hz);

/// Linear interpolation onto the uniform grid at target_hz over the same
/// time range. Annotation indices are rescaled with round-half-up.
Recording resample_linear(const Recording& rec, double target_hz);

/// Label rule: 1 iff at least half of the window's samples lie inside SMM
/// annotation intervals.
int label_window(const std::vector<Annotation>& annotations, std::size_t start, std::size_t w);

/// Sliding windows starting at 0, step, 2*step, ...; emits
/// floor((L - w) / step) + 1 windows in increasing t_index order.
std::vector<Window> segment(const Recording& rec, double window_s, std::size_t step_samples);

} // namespace smm
