#include "smmkit/signal.hpp"

#include <algorithm>
#include <cmath>

namespace smm {

void Recording::validate() const {
    if (rate <= 0.0) {
        throw ArgumentError("recording rate must be positive");
    }
    if (channels.empty()) {
        throw ArgumentError("recording has no channels");
    }
    const std::size_t len = channels[0].size();
    for (const auto& ch : channels) {
        if (ch.size() != len) {
            throw ArgumentError("recording channels differ in length");
        }
    }
    std::size_t prev_end = 0;
    bool first = true;
    for (const Annotation& a : annotations) {
        if (a.start >= a.end || a.end > len) {
            throw ArgumentError("annotation [" + std::to_string(a.start) + ", " +
                                std::to_string(a.end) + ") outside recording of length " +
                                std::to_string(len));
        }
        if (!first && a.start < prev_end) {
            throw ArgumentError("annotations overlap at sample " + std::to_string(a.start));
        }
        prev_end = a.end;
        first = false;
    }
}

namespace {

// y[n] = alpha * (y[n-1] + x[n] - x[n-1]), the discrete RC high-pass.
void highpass_once(std::vector<double>& x, double alpha) {
    if (x.empty()) return;
    double prev_x = x[0];
    double prev_y = 0.0;
    x[0] = 0.0;
    for (std::size_t n = 1; n < x.size(); ++n) {
        const double cur = x[n];
        const double y = alpha * (prev_y + cur - prev_x);
        x[n] = y;
        prev_x = cur;
        prev_y = y;
    }
}

// Forward-backward application over an odd-reflection extension of the
// signal; the extension is cropped afterwards, so the output length equals
// the input length and edge transients stay inside the padding.
std::vector<double> highpass_zero_phase(const std::vector<double>& x, double alpha,
                                        std::size_t pad) {
    const std::size_t n = x.size();
    pad = std::min(pad, n > 0 ? n - 1 : 0);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t k = pad; k > 0; --k) ext.push_back(2.0 * x[0] - x[k]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t k = 1; k <= pad; ++k) ext.push_back(2.0 * x[n - 1] - x[n - 1 - k]);

    highpass_once(ext, alpha);
    std::reverse(ext.begin(), ext.end());
    highpass_once(ext, alpha);
    std::reverse(ext.begin(), ext.end());
    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                               ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

} // namespace

Recording highpass_filter(const Recording& rec, double cutoff_hz) {
    rec.validate();
    if (cutoff_hz <= 0.0 || cutoff_hz >= rec.rate / 2.0) {
        throw ArgumentError("cutoff " + std::to_string(cutoff_hz) +
                            " Hz must lie in (0, rate/2) for rate " + std::to_string(rec.rate));
    }
    const double rc = 1.0 / (2.0 * M_PI * cutoff_hz);
    const double dt = 1.0 / rec.rate;
    const double alpha = rc / (rc + dt);
    // The y[0]=0 start-up transient decays as e^(-t/RC); ten time
    // constants of padding push its residue below 1e-4 of the signal.
    const std::size_t pad = static_cast<std::size_t>(std::llround(10.0 * rc * rec.rate));
    Recording out = rec;
    for (auto& ch : out.channels) {
        ch = highpass_zero_phase(ch, alpha, pad);
    }
    return out;
}

Recording resample_linear(const Recording& rec, double target_hz) {
    rec.validate();
    if (target_hz <= 0.0) {
        throw ArgumentError("target rate must be positive");
    }
    const std::size_t n = rec.length();
    const double ratio = target_hz / rec.rate;
    Recording out;
    out.subject_id = rec.subject_id;
    out.rate = target_hz;
    if (n == 0) {
        out.channels.assign(rec.channel_count(), {});
        return out;
    }
    // Output grid spans the same time range: floor((n-1) * ratio) + 1 points.
    const std::size_t m = static_cast<std::size_t>(std::floor((n - 1) * ratio)) + 1;
    out.channels.reserve(rec.channel_count());
    const double inv_ratio = rec.rate / target_hz;
    for (const auto& ch : rec.channels) {
        std::vector<double> res(m);
        for (std::size_t k = 0; k < m; ++k) {
            const double pos = k * inv_ratio;
            std::size_t left = static_cast<std::size_t>(std::floor(pos));
            if (left >= n - 1) left = n - 1;
            const double frac = pos - static_cast<double>(left);
            if (frac == 0.0) {
                res[k] = ch[left];
            } else {
                res[k] = (1.0 - frac) * ch[left] + frac * ch[left + 1];
            }
        }
        out.channels.push_back(std::move(res));
    }
    out.annotations.reserve(rec.annotations.size());
    for (const Annotation& a : rec.annotations) {
        Annotation scaled = a;
        scaled.start = static_cast<std::size_t>(std::floor(a.start * ratio + 0.5));
        scaled.end = static_cast<std::size_t>(std::floor(a.end * ratio + 0.5));
        scaled.start = std::min(scaled.start, m);
        scaled.end = std::min(scaled.end, m);
        if (scaled.start < scaled.end) out.annotations.push_back(scaled);
    }
    return out;
}

int label_window(const std::vector<Annotation>& annotations, std::size_t start, std::size_t w) {
    const std::size_t stop = start + w;
    std::size_t covered = 0;
    for (const Annotation& a : annotations) {
        if (a.label != EventLabel::smm) continue;
        const std::size_t lo = std::max(start, a.start);
        const std::size_t hi = std::min(stop, a.end);
        if (hi > lo) covered += hi - lo;
    }
    return 2 * covered >= w ? 1 : 0;
}

std::vector<Window> segment(const Recording& rec, double window_s, std::size_t step_samples) {
    rec.validate();
    if (step_samples < 1) {
        throw ArgumentError("segmentation step must be >= 1");
    }
    const std::size_t w = static_cast<std::size_t>(std::llround(window_s * rec.rate));
    const std::size_t len = rec.length();
    if (w < 1 || w > len) {
        throw ArgumentError("window of " + std::to_string(w) + " samples does not fit recording of length " +
                            std::to_string(len));
    }
    const std::size_t c = rec.channel_count();
    const std::size_t count = (len - w) / step_samples + 1;
    std::vector<Window> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t start = k * step_samples;
        Window win;
        win.x = Tensor({c, w});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < w; ++i) win.x.at(ch, i) = rec.channels[ch][start + i];
        }
        win.label = label_window(rec.annotations, start, w);
        win.subject_id = rec.subject_id;
        win.t_index = start;
        out.push_back(std::move(win));
    }
    return out;
}

} // namespace smm
