#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "smmkit/signal.hpp"

using namespace smm;

namespace {

Recording make_recording(std::size_t channels, std::size_t length, double rate) {
    Recording rec;
    rec.subject_id = "S1";
    rec.rate = rate;
    rec.channels.assign(channels, std::vector<double>(length, 0.0));
    return rec;
}

} // namespace

TEST_CASE("high-pass rejects a constant channel completely") {
    Recording rec = make_recording(2, 500, 100.0);
    for (auto& ch : rec.channels) {
        for (auto& v : ch) v = 3.7;
    }
    const Recording out = highpass_filter(rec, 0.1);
    CHECK(out.length() == rec.length());
    for (const auto& ch : out.channels) {
        for (double v : ch) CHECK(std::abs(v) < 1e-6);
    }
}

TEST_CASE("high-pass preserves a 5 Hz sinusoid within 1 percent") {
    const double rate = 100.0;
    const std::size_t n = 1000; // 10 s, 50 full cycles
    Recording rec = make_recording(1, n, rate);
    for (std::size_t i = 0; i < n; ++i) {
        rec.channels[0][i] = std::sin(2.0 * M_PI * 5.0 * static_cast<double>(i) / rate);
    }
    const double before = oracle::dft_amplitude(rec.channels[0], 50);
    const Recording out = highpass_filter(rec, 0.1);
    const double after = oracle::dft_amplitude(out.channels[0], 50);
    CHECK(std::abs(after - before) / before < 0.01);
}

TEST_CASE("high-pass removes the DC offset and keeps the 2 Hz component") {
    const double rate = 100.0;
    const std::size_t n = 2000; // 20 s
    Recording rec = make_recording(1, n, rate);
    for (std::size_t i = 0; i < n; ++i) {
        rec.channels[0][i] = 3.0 + std::sin(2.0 * M_PI * 2.0 * static_cast<double>(i) / rate);
    }
    const Recording out = highpass_filter(rec, 0.1);
    // 2 Hz lands in bin 40 of a 2000-sample DFT at 100 Hz.
    const double sine_amp = oracle::dft_amplitude(out.channels[0], 40);
    const double expected = static_cast<double>(n) / 2.0; // |DFT| of a unit sine at its bin
    CHECK(std::abs(sine_amp - expected) / expected < 0.02);
    // Residual DC is tiny relative to the original offset of 3.
    double mean = 0.0;
    for (double v : out.channels[0]) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean) < 0.02);
}

TEST_CASE("high-pass rejects cutoffs at or above Nyquist") {
    Recording rec = make_recording(1, 100, 100.0);
    CHECK_THROWS_AS(highpass_filter(rec, 50.0), ArgumentError);
    CHECK_THROWS_AS(highpass_filter(rec, 80.0), ArgumentError);
}

TEST_CASE("resampling to the source rate is the bitwise identity") {
    Rng rng(51);
    Recording rec = make_recording(2, 333, 90.0);
    for (auto& ch : rec.channels) {
        for (auto& v : ch) v = rng.normal(0.0, 1.0);
    }
    rec.annotations.push_back({10, 50, EventLabel::smm});
    const Recording out = resample_linear(rec, 90.0);
    CHECK(out.channels == rec.channels);
    CHECK(out.annotations[0].start == 10);
    CHECK(out.annotations[0].end == 50);
}

TEST_CASE("60 to 90 Hz resampling yields floor((N-1)*1.5)+1 samples") {
    for (std::size_t n : {10, 11, 60, 121, 600}) {
        Recording rec = make_recording(1, n, 60.0);
        const Recording out = resample_linear(rec, 90.0);
        // Index-enumeration oracle: count grid points k with k/90 <= (n-1)/60.
        std::size_t count = 0;
        while (static_cast<double>(count) / 90.0 <= (static_cast<double>(n - 1) / 60.0) + 1e-12) {
            ++count;
        }
        CHECK(out.length() == count);
        CHECK(out.length() == static_cast<std::size_t>(std::floor((n - 1) * 1.5)) + 1);
    }
}

TEST_CASE("linear interpolation is exact on an affine ramp") {
    const std::size_t n = 100;
    Recording rec = make_recording(1, n, 60.0);
    for (std::size_t i = 0; i < n; ++i) rec.channels[0][i] = static_cast<double>(i);
    const Recording out = resample_linear(rec, 90.0);
    for (std::size_t k = 0; k < out.length(); ++k) {
        const double expected = static_cast<double>(k) * 60.0 / 90.0;
        CHECK(out.channels[0][k] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("annotation indices rescale with round-half-up") {
    Recording rec = make_recording(1, 100, 60.0);
    rec.annotations.push_back({10, 21, EventLabel::smm});
    const Recording out = resample_linear(rec, 90.0);
    CHECK(out.annotations[0].start == 15);  // 10 * 1.5 = 15
    CHECK(out.annotations[0].end == 32);    // 21 * 1.5 = 31.5 -> 32
}

TEST_CASE("segment counts, overlap and boundary cases") {
    Recording rec = make_recording(3, 1000, 100.0);
    const auto windows = segment(rec, 1.0, 10);
    CHECK(windows.size() == 91);
    const double overlap = (100.0 - 10.0) / 100.0;
    CHECK(overlap == doctest::Approx(0.9));

    Recording exact = make_recording(1, 100, 100.0);
    CHECK(segment(exact, 1.0, 10).size() == 1);

    Recording at90 = make_recording(1, 900, 90.0);
    const auto w90 = segment(at90, 1.0, 10);
    CHECK(w90[0].x.dim(1) == 90);
    CHECK((90.0 - 10.0) / 90.0 == doctest::Approx(0.888888889));

    Recording tiny = make_recording(1, 50, 100.0);
    CHECK_THROWS_AS(segment(tiny, 1.0, 10), ArgumentError);
}

TEST_CASE("segment window count matches enumeration on random shapes") {
    Rng rng(52);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t len = 50 + rng.next_index(500);
        const std::size_t w = 10 + rng.next_index(40);
        if (w > len) continue;
        const std::size_t step = 1 + rng.next_index(20);
        Recording rec = make_recording(1, len, static_cast<double>(w));
        const auto windows = segment(rec, 1.0, step);
        // Enumeration oracle.
        std::size_t count = 0;
        for (std::size_t start = 0; start + w <= len; start += step) ++count;
        CHECK(windows.size() == count);
        CHECK(windows.size() == (len - w) / step + 1);
        for (std::size_t i = 1; i < windows.size(); ++i) {
            CHECK(windows[i].t_index == windows[i - 1].t_index + step);
        }
    }
}

TEST_CASE("window labels follow the majority rule") {
    std::vector<Annotation> anns{{100, 200, EventLabel::smm}};
    CHECK(label_window(anns, 120, 50) == 1);  // fully inside
    CHECK(label_window(anns, 300, 50) == 0);  // disjoint
    CHECK(label_window(anns, 75, 50) == 1);   // exactly half covered -> 1
    CHECK(label_window(anns, 74, 50) == 0);   // just under half
    CHECK(label_window(anns, 76, 50) == 1);
}

TEST_CASE("segment carries labels from annotations") {
    Recording rec = make_recording(1, 300, 100.0);
    rec.annotations.push_back({100, 200, EventLabel::smm});
    const auto windows = segment(rec, 1.0, 50);
    // Starts: 0 (0 covered), 50 (half), 100 (full), 150 (half), 200 (none).
    REQUIRE(windows.size() == 5);
    CHECK(windows[0].label == 0);
    CHECK(windows[1].label == 1);
    CHECK(windows[2].label == 1);
    CHECK(windows[3].label == 1);
    CHECK(windows[4].label == 0);
}

TEST_CASE("filtered DC-offset signals produce windows with near-zero mean") {
    const double rate = 100.0;

    // The offset contributes nothing: filtering is linear and a constant
    // maps to zero, so DC+s and s filter to the same signal.
    {
        const std::size_t n = 3000;
        Recording with_dc = make_recording(1, n, rate);
        Recording without_dc = make_recording(1, n, rate);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = std::sin(2.0 * M_PI * 3.0 * static_cast<double>(i) / rate);
            with_dc.channels[0][i] = 4.3 + s;
            without_dc.channels[0][i] = s;
        }
        const Recording a = highpass_filter(with_dc, 0.1);
        const Recording b = highpass_filter(without_dc, 0.1);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(a.channels[0][i] - b.channels[0][i]) < 1e-9);
        }
    }

    // Every window: a 2 Hz tone whose half-period divides n-1 continues
    // exactly under the filter's odd-reflection padding, so no window is
    // polluted by an edge transient.
    {
        const std::size_t n = 3001;
        Recording rec = make_recording(2, n, rate);
        Rng rng(53);
        for (auto& ch : rec.channels) {
            const double offset = rng.uniform(-5.0, 5.0);
            const double amp = rng.uniform(0.5, 2.0);
            for (std::size_t i = 0; i < n; ++i) {
                ch[i] = offset + amp * std::sin(2.0 * M_PI * 2.0 * static_cast<double>(i) / rate);
            }
        }
        const Recording filtered = highpass_filter(rec, 0.1);
        const auto windows = segment(filtered, 1.0, 10);
        for (const Window& w : windows) {
            for (std::size_t ch = 0; ch < 2; ++ch) {
                double mean = 0.0, var = 0.0;
                const std::size_t width = w.x.dim(1);
                for (std::size_t i = 0; i < width; ++i) mean += w.x.at(ch, i);
                mean /= static_cast<double>(width);
                for (std::size_t i = 0; i < width; ++i) {
                    var += (w.x.at(ch, i) - mean) * (w.x.at(ch, i) - mean);
                }
                const double stddev = std::sqrt(var / static_cast<double>(width));
                CHECK(std::abs(mean) < 0.01 * stddev + 1e-9);
            }
        }
    }

    // Arbitrary tones: the bound holds for every window clear of the
    // accepted edge-transient region (three time constants ~ 5 s).
    {
        const std::size_t n = 3000;
        Recording rec = make_recording(1, n, rate);
        for (std::size_t i = 0; i < n; ++i) {
            rec.channels[0][i] =
                -2.7 + std::sin(2.0 * M_PI * 3.0 * static_cast<double>(i) / rate);
        }
        const Recording filtered = highpass_filter(rec, 0.1);
        const auto windows = segment(filtered, 1.0, 10);
        for (const Window& w : windows) {
            if (w.t_index < 500 || w.t_index + 600 > n) continue;
            double mean = 0.0, var = 0.0;
            for (std::size_t i = 0; i < 100; ++i) mean += w.x.at(0, i);
            mean /= 100.0;
            for (std::size_t i = 0; i < 100; ++i) {
                var += (w.x.at(0, i) - mean) * (w.x.at(0, i) - mean);
            }
            const double stddev = std::sqrt(var / 100.0);
            CHECK(std::abs(mean) < 0.01 * stddev + 1e-9);
        }
    }
}

TEST_CASE("recording validation catches broken invariants") {
    Recording rec = make_recording(2, 100, 100.0);
    rec.channels[1].resize(99);
    CHECK_THROWS_AS(rec.validate(), ArgumentError);

    Recording bad_ann = make_recording(1, 100, 100.0);
    bad_ann.annotations.push_back({50, 150, EventLabel::smm});
    CHECK_THROWS_AS(bad_ann.validate(), ArgumentError);

    Recording overlapping = make_recording(1, 100, 100.0);
    overlapping.annotations.push_back({10, 40, EventLabel::smm});
    overlapping.annotations.push_back({30, 60, EventLabel::smm});
    CHECK_THROWS_AS(overlapping.validate(), ArgumentError);
}
