#pragma once

// Z-score adaptation: fit mean/std on wake-stage (or whole-night) samples,
// then scale incoming raw EEG so a model trained on normalized data can be
// fed from a different instrument or subject.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "somno/common.hpp"

namespace somno::calibrate {

struct InsufficientData : Error {
    using Error::Error;
};
struct ZeroVariance : Error {
    using Error::Error;
};

enum class ProfileSource : std::uint8_t { WakeEpochs = 0, WholeNight = 1 };

struct CalibrationProfile {
    double mean = 0.0;
    double std = 1.0;
    long n_samples = 0;
    ProfileSource source = ProfileSource::WakeEpochs;
};

// Minimum sample count for a usable profile: one full 30 s epoch at 100 Hz.
inline constexpr long kMinProfileSamples = 3000;

// Pools every provided sample and fits mean plus population (1/N) standard
// deviation. The epochs are assumed to be wake stage; that assumption is the
// caller's contract.
template <typename T>
CalibrationProfile fit_profile(const std::vector<std::vector<T>>& epochs,
                               ProfileSource source = ProfileSource::WakeEpochs) {
    long n = 0;
    double sum = 0.0;
    for (const auto& e : epochs) {
        for (T v : e) {
            if (!std::isfinite(static_cast<double>(v))) throw InsufficientData("non-finite sample in calibration data");
            sum += static_cast<double>(v);
            ++n;
        }
    }
    if (n < kMinProfileSamples)
        throw InsufficientData("calibration needs at least " + std::to_string(kMinProfileSamples) +
                               " samples, got " + std::to_string(n));
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& e : epochs)
        for (T v : e) {
            const double d = static_cast<double>(v) - mean;
            ss += d * d;
        }
    const double sd = std::sqrt(ss / n);
    if (sd == 0.0)
        throw ZeroVariance("flat calibration signal (disconnected electrode?)");
    return CalibrationProfile{mean, sd, n, source};
}

template <typename T>
CalibrationProfile fit_wake_profile(const std::vector<std::vector<T>>& wake_epochs) {
    return fit_profile(wake_epochs, ProfileSource::WakeEpochs);
}

// (x - mean) / std, computed in double and narrowed back to T.
template <typename T>
void apply_in_place(const CalibrationProfile& p, std::vector<T>& samples) {
    for (T& v : samples)
        v = static_cast<T>((static_cast<double>(v) - p.mean) / p.std);
}

template <typename T>
std::vector<T> apply(const CalibrationProfile& p, const std::vector<T>& samples) {
    std::vector<T> out = samples;
    apply_in_place(p, out);
    return out;
}

inline nlohmann::json profile_to_json(const CalibrationProfile& p) {
    return nlohmann::json{{"mean", p.mean},
                          {"std", p.std},
                          {"n_samples", p.n_samples},
                          {"source", p.source == ProfileSource::WakeEpochs ? "wake_epochs"
                                                                           : "whole_night"}};
}

inline CalibrationProfile profile_from_json(const nlohmann::json& j) {
    CalibrationProfile p;
    p.mean = j.at("mean").get<double>();
    p.std = j.at("std").get<double>();
    p.n_samples = j.at("n_samples").get<long>();
    p.source = j.at("source").get<std::string>() == "whole_night" ? ProfileSource::WholeNight
                                                                  : ProfileSource::WakeEpochs;
    if (p.std <= 0.0) throw ZeroVariance("profile std must be positive");
    return p;
}

}  // namespace somno::calibrate
