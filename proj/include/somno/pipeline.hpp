#pragma once

// Turns parsed recordings plus hypnogram annotations into labeled, normalized
// 30-second epochs (AASM five-class), and handles the dataset chores around
// them: wake trimming, resampling, night-level normalization, subject-wise
// k-fold splits, and the EPD1 epoch-dataset file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "somno/calibrate.hpp"
#include "somno/common.hpp"
#include "somno/edf.hpp"

namespace somno::pipeline {

struct UnknownLabel : Error {
    using Error::Error;
};
struct UpsamplingRequested : Error {
    using Error::Error;
};
struct ZeroVariance : Error {
    using Error::Error;
};
struct TooFewSubjects : Error {
    using Error::Error;
};
struct BadEpdFile : Error {
    using Error::Error;
};

enum class StageLabel : std::uint8_t { Wake = 0, N1 = 1, N2 = 2, N3 = 3, Rem = 4 };

inline constexpr int kStageCount = 5;
inline constexpr int kEpochSeconds = 30;
inline constexpr double kTargetRateHz = 100.0;
inline constexpr int kEpochSamples = 3000;  // 30 s at 100 Hz

inline const char* stage_name(StageLabel s) {
    switch (s) {
        case StageLabel::Wake: return "Wake";
        case StageLabel::N1: return "N1";
        case StageLabel::N2: return "N2";
        case StageLabel::N3: return "N3";
        case StageLabel::Rem: return "REM";
    }
    return "?";
}

struct LabeledEpoch {
    std::vector<float> samples;  // exactly kEpochSamples
    StageLabel label = StageLabel::Wake;
    std::uint32_t source_night = 0;
    std::uint32_t epoch_index = 0;  // 30 s slots since recording start
};

struct DatasetSplit {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> validation;
    std::vector<std::uint32_t> test;
};

// Sleep-EDF stage text to the five-class scheme. N4 folds into N3; movement
// and unscored epochs are excluded (nullopt). Anything else is a data error.
inline std::optional<StageLabel> map_stage_label(const std::string& text) {
    if (text == "Sleep stage W") return StageLabel::Wake;
    if (text == "Sleep stage 1") return StageLabel::N1;
    if (text == "Sleep stage 2") return StageLabel::N2;
    if (text == "Sleep stage 3") return StageLabel::N3;
    if (text == "Sleep stage 4") return StageLabel::N3;
    if (text == "Sleep stage R") return StageLabel::Rem;
    if (text == "Movement time" || text == "Sleep stage ?") return std::nullopt;
    throw UnknownLabel("unrecognized stage label: '" + text + "'");
}

// Cuts non-overlapping 3000-sample windows aligned to annotation onsets.
// Excluded stages are skipped, partial trailing windows are dropped, and
// annotations running past the signal end are truncated with a warning.
inline std::vector<LabeledEpoch> epoch_signal(const edf::Recording& rec,
                                              const std::vector<edf::StageAnnotation>& annotations,
                                              std::uint32_t night_id = 0) {
    if (std::abs(rec.sample_rate_hz - kTargetRateHz) > 1e-9)
        throw Error("epoch_signal expects a 100 Hz recording; resample first");

    std::vector<LabeledEpoch> out;
    const std::size_t total = rec.samples.size();
    for (const auto& ann : annotations) {
        auto stage = map_stage_label(ann.label_text);
        const long n_epochs = static_cast<long>(std::floor(ann.duration_s / kEpochSeconds));
        for (long j = 0; j < n_epochs; ++j) {
            const double onset = ann.onset_s + j * kEpochSeconds;
            const std::size_t start = static_cast<std::size_t>(std::llround(onset * kTargetRateHz));
            if (start + kEpochSamples > total) {
                log_warn("annotation at " + std::to_string(onset) +
                         "s extends past signal end; truncating night");
                return out;
            }
            if (!stage) continue;
            LabeledEpoch e;
            e.samples.reserve(kEpochSamples);
            for (int s = 0; s < kEpochSamples; ++s) {
                const double v = rec.samples[start + s];
                if (!std::isfinite(v)) throw Error("non-finite sample in recording");
                e.samples.push_back(static_cast<float>(v));
            }
            e.label = *stage;
            e.source_night = night_id;
            e.epoch_index = static_cast<std::uint32_t>(std::llround(onset / kEpochSeconds));
            out.push_back(std::move(e));
        }
    }
    return out;
}

// Keeps [max(0, first_sleep - B), min(end, last_sleep + B)] where B is the
// wake boundary in epochs (60 epochs = 30 minutes). Positions are list
// indices, so the result is always a contiguous, order-preserving slice.
inline std::vector<LabeledEpoch> trim_wake(const std::vector<LabeledEpoch>& epochs,
                                           long boundary_epochs = 60) {
    long first = -1, last = -1;
    for (long i = 0; i < static_cast<long>(epochs.size()); ++i) {
        if (epochs[i].label != StageLabel::Wake) {
            if (first < 0) first = i;
            last = i;
        }
    }
    if (first < 0) {
        log_warn("all-wake night: nothing to trim");
        return epochs;
    }
    const long lo = std::max<long>(0, first - boundary_epochs);
    const long hi = std::min<long>(static_cast<long>(epochs.size()) - 1, last + boundary_epochs);
    return std::vector<LabeledEpoch>(epochs.begin() + lo, epochs.begin() + hi + 1);
}

namespace detail {

// 63-tap Hamming-windowed sinc low-pass, cutoff in cycles/sample, unit DC
// gain.
inline std::vector<double> windowed_sinc(double cutoff_norm, int taps = 63) {
    const int m = (taps - 1) / 2;
    std::vector<double> h(taps);
    double sum = 0.0;
    for (int i = 0; i < taps; ++i) {
        const double x = i - m;
        const double pi = 3.14159265358979323846;
        double s = x == 0.0 ? 2.0 * cutoff_norm
                            : std::sin(2.0 * pi * cutoff_norm * x) / (pi * x);
        const double w = 0.54 - 0.46 * std::cos(2.0 * pi * i / (taps - 1));
        h[i] = s * w;
        sum += h[i];
    }
    for (double& v : h) v /= sum;
    return h;
}

// Zero-phase FIR application: kernel centered on each sample, zero padding
// at the edges.
inline std::vector<double> fir_centered(const std::vector<double>& x,
                                        const std::vector<double>& h) {
    const long n = static_cast<long>(x.size());
    const long m = (static_cast<long>(h.size()) - 1) / 2;
    std::vector<double> y(x.size(), 0.0);
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        const long j0 = std::max<long>(-m, -i);
        const long j1 = std::min<long>(m, n - 1 - i);
        for (long j = j0; j <= j1; ++j) acc += x[i + j] * h[m + j];
        y[i] = acc;
    }
    return y;
}

}  // namespace detail

// Downsamples by low-pass filtering (63-tap windowed sinc at 0.45 x the
// target rate) followed by linear interpolation at the target grid. Output
// index k reads the filtered input at source position k*src/dst.
template <typename T>
std::vector<T> resample(const std::vector<T>& samples, double src_rate_hz,
                        double dst_rate_hz = kTargetRateHz, bool antialias = true) {
    if (dst_rate_hz <= 0.0 || src_rate_hz <= 0.0) throw Error("sample rates must be positive");
    if (src_rate_hz < dst_rate_hz)
        throw UpsamplingRequested("resample only downsamples (src " +
                                  std::to_string(src_rate_hz) + " < dst " +
                                  std::to_string(dst_rate_hz) + ")");
    if (src_rate_hz == dst_rate_hz) return samples;

    std::vector<double> x(samples.begin(), samples.end());
    if (antialias) {
        const double cutoff_norm = 0.45 * dst_rate_hz / src_rate_hz;  // cycles per source sample
        x = detail::fir_centered(x, detail::windowed_sinc(cutoff_norm));
    }
    const std::size_t out_len =
        static_cast<std::size_t>(std::floor(static_cast<double>(samples.size()) * dst_rate_hz /
                                            src_rate_hz));
    const double step = src_rate_hz / dst_rate_hz;
    std::vector<T> out;
    out.reserve(out_len);
    for (std::size_t k = 0; k < out_len; ++k) {
        const double pos = k * step;
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i0);
        double v;
        if (i0 + 1 < x.size())
            v = x[i0] * (1.0 - frac) + x[i0 + 1] * frac;
        else
            v = x[std::min(i0, x.size() - 1)];
        out.push_back(static_cast<T>(v));
    }
    return out;
}

// Fits a whole-night profile over every sample of the night.
inline calibrate::CalibrationProfile night_profile(const std::vector<LabeledEpoch>& epochs) {
    if (epochs.empty()) throw Error("cannot normalize an empty night");
    std::vector<std::vector<float>> views;
    views.reserve(epochs.size());
    for (const auto& e : epochs) views.push_back(e.samples);
    try {
        return calibrate::fit_profile(views, calibrate::ProfileSource::WholeNight);
    } catch (const calibrate::ZeroVariance&) {
        throw ZeroVariance("night has zero variance (dead channel)");
    } catch (const calibrate::InsufficientData& e) {
        throw Error(e.what());
    }
}

// Whole-night Z-normalization: (x - mean) / std with population statistics,
// the same transform the live calibration applies.
inline std::vector<LabeledEpoch> normalize_night(const std::vector<LabeledEpoch>& epochs) {
    const auto profile = night_profile(epochs);
    std::vector<LabeledEpoch> out = epochs;
    for (auto& e : out) calibrate::apply_in_place(profile, e.samples);
    return out;
}

// Per-epoch variant, selectable instead of night-level normalization.
inline std::vector<LabeledEpoch> normalize_per_epoch(const std::vector<LabeledEpoch>& epochs) {
    std::vector<LabeledEpoch> out = epochs;
    for (auto& e : out) {
        std::vector<std::vector<float>> one{e.samples};
        try {
            calibrate::apply_in_place(calibrate::fit_profile(one, calibrate::ProfileSource::WholeNight),
                                      e.samples);
        } catch (const calibrate::ZeroVariance&) {
            throw ZeroVariance("epoch has zero variance (dead channel)");
        }
    }
    return out;
}

struct NightRef {
    std::uint32_t night_id = 0;
    std::uint32_t subject_id = 0;
};

// Subject-held-out k-fold split: the test fold holds every night of the
// held-out subject group; the remaining nights are partitioned into train and
// validation by ratio. Deterministic for a given seed.
inline DatasetSplit kfold_split(const std::vector<NightRef>& nights, int k, int fold,
                                std::uint64_t seed, double validation_ratio = 0.1) {
    if (k < 2) throw Error("k-fold split needs k >= 2");
    if (fold < 0 || fold >= k) throw Error("fold index out of range");

    std::vector<std::uint32_t> subjects;
    for (const auto& n : nights) subjects.push_back(n.subject_id);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    if (static_cast<int>(subjects.size()) < k)
        throw TooFewSubjects("k=" + std::to_string(k) + " exceeds subject count " +
                             std::to_string(subjects.size()));

    Rng rng(mix_seed(seed, 0xf01d));
    rng.shuffle(subjects.begin(), subjects.end());

    std::set<std::uint32_t> held_out;
    for (std::size_t i = fold; i < subjects.size(); i += k) held_out.insert(subjects[i]);

    DatasetSplit split;
    std::vector<std::uint32_t> rest;
    for (const auto& n : nights) {
        if (held_out.count(n.subject_id))
            split.test.push_back(n.night_id);
        else
            rest.push_back(n.night_id);
    }
    Rng rng2(mix_seed(seed, 0xa11 + static_cast<std::uint64_t>(fold)));
    rng2.shuffle(rest.begin(), rest.end());
    std::size_t n_val = static_cast<std::size_t>(std::llround(validation_ratio * rest.size()));
    if (n_val == 0 && rest.size() >= 2 && validation_ratio > 0.0) n_val = 1;
    split.validation.assign(rest.begin(), rest.begin() + n_val);
    split.train.assign(rest.begin() + n_val, rest.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

inline nlohmann::json split_to_json(const DatasetSplit& s) {
    return nlohmann::json{{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
    DatasetSplit s;
    s.train = j.at("train").get<std::vector<std::uint32_t>>();
    s.validation = j.at("validation").get<std::vector<std::uint32_t>>();
    s.test = j.at("test").get<std::vector<std::uint32_t>>();
    return s;
}

// ---------------------------------------------------------------------------
// EPD1 epoch-dataset format: magic "EPD1", u32 LE epoch count, u32 LE
// samples-per-epoch, then per epoch u8 label, u32 LE night id, f32 LE
// samples. Bit-exact for caching.

inline std::vector<std::uint8_t> encode_epd(const std::vector<LabeledEpoch>& epochs) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'E', 'P', 'D', '1'});
    put_u32le(out, static_cast<std::uint32_t>(epochs.size()));
    put_u32le(out, kEpochSamples);
    for (const auto& e : epochs) {
        if (e.samples.size() != kEpochSamples)
            throw BadEpdFile("epoch has " + std::to_string(e.samples.size()) +
                             " samples, expected " + std::to_string(kEpochSamples));
        out.push_back(static_cast<std::uint8_t>(e.label));
        put_u32le(out, e.source_night);
        for (float v : e.samples) put_f32le(out, v);
    }
    return out;
}

inline std::vector<LabeledEpoch> decode_epd(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "EPD1", 4) != 0)
        throw BadEpdFile("missing EPD1 magic");
    const std::uint32_t count = get_u32le(bytes.data() + 4);
    const std::uint32_t spe = get_u32le(bytes.data() + 8);
    if (spe != kEpochSamples)
        throw BadEpdFile("unsupported samples-per-epoch " + std::to_string(spe));
    const std::size_t per = 1 + 4 + 4ull * spe;
    if (bytes.size() < 12 + per * count) throw BadEpdFile("EPD1 file truncated");

    std::vector<LabeledEpoch> out;
    out.reserve(count);
    std::map<std::uint32_t, std::uint32_t> next_index;
    std::size_t pos = 12;
    for (std::uint32_t i = 0; i < count; ++i) {
        LabeledEpoch e;
        const std::uint8_t lab = bytes[pos];
        if (lab >= kStageCount) throw BadEpdFile("stage code out of range");
        e.label = static_cast<StageLabel>(lab);
        e.source_night = get_u32le(bytes.data() + pos + 1);
        e.samples.resize(spe);
        for (std::uint32_t s = 0; s < spe; ++s)
            e.samples[s] = get_f32le(bytes.data() + pos + 5 + 4ull * s);
        e.epoch_index = next_index[e.source_night]++;
        out.push_back(std::move(e));
        pos += per;
    }
    return out;
}

inline void write_epd_file(const std::string& path, const std::vector<LabeledEpoch>& epochs) {
    write_file_bytes(path, encode_epd(epochs));
}

inline std::vector<LabeledEpoch> read_epd_file(const std::string& path) {
    return decode_epd(read_file_bytes(path));
}

}  // namespace somno::pipeline
