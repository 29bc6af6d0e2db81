#pragma once

// EDF/EDF+ reader: fixed 256-byte header, 256 bytes per signal header,
// 16-bit little-endian samples, and TAL-coded annotations for EDF+ files
// (the Sleep-EDF hypnograms). Only 16-bit EDF is handled, not 24-bit BDF.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "somno/common.hpp"

namespace somno::edf {

struct TruncatedHeader : Error {
    using Error::Error;
};
struct MalformedField : Error {
    using Error::Error;
};
struct DegenerateScale : Error {
    using Error::Error;
};
struct ChannelNotFound : Error {
    using Error::Error;
};
struct TruncatedRecord : Error {
    using Error::Error;
};
struct MalformedTal : Error {
    using Error::Error;
};

struct EdfHeader {
    std::string version;       // 8 bytes, "0" for EDF
    std::string patient_id;    // 80
    std::string recording_id;  // 80
    std::string start_date;    // 8, dd.mm.yy
    std::string start_time;    // 8, hh.mm.ss
    std::string reserved;      // 44, carries "EDF+C"/"EDF+D" for EDF+
    long header_bytes = 0;
    long data_record_count = 0;  // -1 in the file is resolved from file size
    double record_duration_s = 0.0;
    int signal_count = 0;
};

struct SignalSpec {
    std::string label;         // 16 bytes
    std::string transducer;    // 80
    std::string physical_dim;  // 8
    double physical_min = 0.0;
    double physical_max = 0.0;
    int digital_min = 0;
    int digital_max = 0;
    std::string prefiltering;  // 80
    int samples_per_record = 0;
};

struct Recording {
    std::string channel_label;
    double sample_rate_hz = 0.0;
    std::vector<double> samples;  // physical units (uV for EEG)
    long clamped_samples = 0;     // digital values outside [dmin, dmax], clamped
};

struct StageAnnotation {
    double onset_s = 0.0;
    double duration_s = 0.0;
    std::string label_text;
};

namespace detail {

inline std::string trim_ascii(const char* p, std::size_t n) {
    std::size_t b = 0, e = n;
    while (b < e && (p[b] == ' ' || p[b] == '\0')) ++b;
    while (e > b && (p[e - 1] == ' ' || p[e - 1] == '\0')) --e;
    return std::string(p + b, e - b);
}

inline long parse_long_field(const std::string& s, const char* what) {
    if (s.empty()) throw MalformedField(std::string("empty numeric EDF field: ") + what);
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw MalformedField(std::string("non-numeric EDF field '") + s + "' for " + what);
    }
    if (pos != s.size())
        throw MalformedField(std::string("non-numeric EDF field '") + s + "' for " + what);
    return v;
}

inline double parse_double_field(const std::string& s, const char* what) {
    if (s.empty()) throw MalformedField(std::string("empty numeric EDF field: ") + what);
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw MalformedField(std::string("non-numeric EDF field '") + s + "' for " + what);
    }
    if (pos != s.size())
        throw MalformedField(std::string("non-numeric EDF field '") + s + "' for " + what);
    return v;
}

}  // namespace detail

struct ParsedHeader {
    EdfHeader header;
    std::vector<SignalSpec> signals;
};

// Parses the fixed header plus the per-signal header block. The byte layout
// is field-major: all 16-byte labels, then all 80-byte transducers, and so on.
inline ParsedHeader parse_header(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 256) throw TruncatedHeader("EDF header shorter than 256 bytes");
    const char* p = reinterpret_cast<const char*>(bytes.data());
    std::size_t off = 0;
    auto field = [&](std::size_t n) {
        std::string s = detail::trim_ascii(p + off, n);
        off += n;
        return s;
    };

    EdfHeader h;
    h.version = field(8);
    h.patient_id = field(80);
    h.recording_id = field(80);
    h.start_date = field(8);
    h.start_time = field(8);
    h.header_bytes = detail::parse_long_field(field(8), "header bytes");
    h.reserved = field(44);
    h.data_record_count = detail::parse_long_field(field(8), "data record count");
    h.record_duration_s = detail::parse_double_field(field(8), "record duration");
    h.signal_count = static_cast<int>(detail::parse_long_field(field(4), "signal count"));

    if (h.signal_count < 0) throw MalformedField("negative signal count");
    if (h.header_bytes != 256 * (h.signal_count + 1))
        throw MalformedField("header byte count does not match 256*(ns+1)");
    if (bytes.size() < static_cast<std::size_t>(h.header_bytes))
        throw TruncatedHeader("EDF file shorter than declared header");

    const int ns = h.signal_count;
    std::vector<SignalSpec> sigs(ns);
    auto sig_field = [&](std::size_t width, auto&& assign) {
        for (int i = 0; i < ns; ++i) {
            assign(sigs[i], detail::trim_ascii(p + off, width));
            off += width;
        }
    };
    sig_field(16, [](SignalSpec& s, std::string v) { s.label = std::move(v); });
    sig_field(80, [](SignalSpec& s, std::string v) { s.transducer = std::move(v); });
    sig_field(8, [](SignalSpec& s, std::string v) { s.physical_dim = std::move(v); });
    sig_field(8, [](SignalSpec& s, std::string v) {
        s.physical_min = detail::parse_double_field(v, "physical min");
    });
    sig_field(8, [](SignalSpec& s, std::string v) {
        s.physical_max = detail::parse_double_field(v, "physical max");
    });
    sig_field(8, [](SignalSpec& s, std::string v) {
        s.digital_min = static_cast<int>(detail::parse_long_field(v, "digital min"));
    });
    sig_field(8, [](SignalSpec& s, std::string v) {
        s.digital_max = static_cast<int>(detail::parse_long_field(v, "digital max"));
    });
    sig_field(80, [](SignalSpec& s, std::string v) { s.prefiltering = std::move(v); });
    sig_field(8, [](SignalSpec& s, std::string v) {
        s.samples_per_record = static_cast<int>(detail::parse_long_field(v, "samples per record"));
    });
    off += static_cast<std::size_t>(ns) * 32;  // per-signal reserved

    for (const auto& s : sigs) {
        if (s.samples_per_record <= 0) throw MalformedField("samples per record must be positive");
        if (s.digital_min >= s.digital_max)
            throw MalformedField("digital min must be below digital max for '" + s.label + "'");
    }
    return ParsedHeader{std::move(h), std::move(sigs)};
}

// EDF scaling is affine from digital to physical units. Out-of-range digital
// values are clamped by the caller (see read_signal); here the value is
// assumed in range.
inline double digital_to_physical(int d, const SignalSpec& spec) {
    if (spec.digital_max == spec.digital_min)
        throw DegenerateScale("digital min equals digital max for '" + spec.label + "'");
    return spec.physical_min + static_cast<double>(d - spec.digital_min) *
                                   (spec.physical_max - spec.physical_min) /
                                   static_cast<double>(spec.digital_max - spec.digital_min);
}

namespace detail {

inline std::size_t record_bytes(const std::vector<SignalSpec>& sigs) {
    std::size_t n = 0;
    for (const auto& s : sigs) n += static_cast<std::size_t>(s.samples_per_record) * 2;
    return n;
}

// A data_record_count of -1 is legal for streamed captures; resolve it from
// the file size.
inline long resolve_record_count(const EdfHeader& h, const std::vector<SignalSpec>& sigs,
                                 std::size_t file_size) {
    if (h.data_record_count >= 0) return h.data_record_count;
    std::size_t rb = record_bytes(sigs);
    if (rb == 0) return 0;
    return static_cast<long>((file_size - static_cast<std::size_t>(h.header_bytes)) / rb);
}

}  // namespace detail

// Extracts one channel by exact label match, concatenating all data records
// and converting each 16-bit LE two's-complement sample to physical units.
inline Recording read_signal(const std::vector<std::uint8_t>& bytes,
                             const std::string& channel_label) {
    ParsedHeader ph = parse_header(bytes);
    const auto& sigs = ph.signals;

    int idx = -1;
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        if (sigs[i].label == channel_label) {
            if (idx >= 0) throw ChannelNotFound("channel label '" + channel_label + "' ambiguous");
            idx = static_cast<int>(i);
        }
    }
    if (idx < 0) throw ChannelNotFound("channel '" + channel_label + "' not present");
    const SignalSpec& spec = sigs[idx];
    if (ph.header.record_duration_s <= 0.0)
        throw MalformedField("record duration must be positive for signal files");

    long records = detail::resolve_record_count(ph.header, sigs, bytes.size());
    std::size_t rec_bytes = detail::record_bytes(sigs);
    std::size_t chan_off = 0;
    for (int i = 0; i < idx; ++i) chan_off += static_cast<std::size_t>(sigs[i].samples_per_record) * 2;

    Recording rec;
    rec.channel_label = spec.label;
    rec.sample_rate_hz = spec.samples_per_record / ph.header.record_duration_s;
    rec.samples.reserve(static_cast<std::size_t>(records) * spec.samples_per_record);

    std::size_t pos = static_cast<std::size_t>(ph.header.header_bytes);
    for (long r = 0; r < records; ++r) {
        if (pos + rec_bytes > bytes.size())
            throw TruncatedRecord("file ends inside data record " + std::to_string(r));
        const std::uint8_t* sp = bytes.data() + pos + chan_off;
        for (int s = 0; s < spec.samples_per_record; ++s) {
            int d = get_i16le(sp + 2 * s);
            if (d < spec.digital_min) {
                d = spec.digital_min;
                ++rec.clamped_samples;
            } else if (d > spec.digital_max) {
                d = spec.digital_max;
                ++rec.clamped_samples;
            }
            rec.samples.push_back(digital_to_physical(d, spec));
        }
        pos += rec_bytes;
    }
    if (rec.clamped_samples > 0)
        log_warn(std::to_string(rec.clamped_samples) + " out-of-range samples clamped on '" +
                 spec.label + "'");
    return rec;
}

namespace detail {

// One TAL: "[+-]onset[\x15duration]\x14text\x14...\x14" terminated by \x00.
// Annotation texts may be empty (the per-record timekeeping TAL is skipped
// by virtue of its empty text).
inline void decode_tal(const char* p, std::size_t n, std::vector<StageAnnotation>& out) {
    std::size_t i = 0;
    if (n == 0) return;
    if (p[0] != '+' && p[0] != '-') throw MalformedTal("TAL onset must start with '+' or '-'");
    while (i < n && p[i] != '\x14' && p[i] != '\x15') ++i;
    if (i >= n) throw MalformedTal("TAL missing 0x14 terminator after onset");
    double onset = 0.0;
    try {
        std::size_t pos = 0;
        std::string onset_str(p, i);
        onset = std::stod(onset_str, &pos);
        if (pos != onset_str.size()) throw MalformedTal("non-numeric TAL onset");
    } catch (const MalformedTal&) {
        throw;
    } catch (const std::exception&) {
        throw MalformedTal("non-numeric TAL onset");
    }

    double duration = 0.0;
    if (p[i] == '\x15') {
        std::size_t j = ++i;
        while (i < n && p[i] != '\x14') ++i;
        if (i >= n) throw MalformedTal("TAL missing 0x14 terminator after duration");
        try {
            std::size_t pos = 0;
            std::string dur_str(p + j, i - j);
            duration = std::stod(dur_str, &pos);
            if (pos != dur_str.size()) throw MalformedTal("non-numeric TAL duration");
        } catch (const MalformedTal&) {
            throw;
        } catch (const std::exception&) {
            throw MalformedTal("non-numeric TAL duration");
        }
    }
    ++i;  // consume the 0x14 that closed onset/duration
    while (i < n) {
        std::size_t j = i;
        while (i < n && p[i] != '\x14') ++i;
        if (i >= n) throw MalformedTal("TAL annotation text missing 0x14 terminator");
        if (i > j) out.push_back(StageAnnotation{onset, duration, std::string(p + j, i - j)});
        ++i;
    }
}

}  // namespace detail

// Decodes every "EDF Annotations" signal in an EDF+ file into a list of
// annotations ordered by onset.
inline std::vector<StageAnnotation> parse_annotations(const std::vector<std::uint8_t>& bytes) {
    ParsedHeader ph = parse_header(bytes);
    const auto& sigs = ph.signals;

    std::vector<int> ann_idx;
    for (std::size_t i = 0; i < sigs.size(); ++i)
        if (sigs[i].label == "EDF Annotations") ann_idx.push_back(static_cast<int>(i));
    if (ann_idx.empty()) throw ChannelNotFound("no 'EDF Annotations' signal in file");

    long records = detail::resolve_record_count(ph.header, sigs, bytes.size());
    std::size_t rec_bytes = detail::record_bytes(sigs);

    std::vector<StageAnnotation> out;
    std::size_t pos = static_cast<std::size_t>(ph.header.header_bytes);
    for (long r = 0; r < records; ++r) {
        if (pos + rec_bytes > bytes.size())
            throw TruncatedRecord("file ends inside data record " + std::to_string(r));
        std::size_t chan_off = 0;
        std::size_t next_ann = 0;
        for (std::size_t i = 0; i < sigs.size(); ++i) {
            std::size_t len = static_cast<std::size_t>(sigs[i].samples_per_record) * 2;
            if (next_ann < ann_idx.size() && static_cast<int>(i) == ann_idx[next_ann]) {
                const char* p = reinterpret_cast<const char*>(bytes.data() + pos + chan_off);
                // TALs are separated by 0x00; trailing zero padding yields
                // empty chunks that are skipped.
                std::size_t b = 0;
                while (b < len) {
                    std::size_t e = b;
                    while (e < len && p[e] != '\x00') ++e;
                    if (e > b) detail::decode_tal(p + b, e - b, out);
                    b = e + 1;
                }
                ++next_ann;
            }
            chan_off += len;
        }
        pos += rec_bytes;
    }

    std::stable_sort(out.begin(), out.end(),
                     [](const StageAnnotation& a, const StageAnnotation& b) {
                         return a.onset_s < b.onset_s;
                     });
    for (const auto& a : out) {
        if (a.duration_s > 0.0) {
            double q = a.duration_s / 30.0;
            if (std::abs(q - std::round(q)) > 1e-9)
                log_warn("annotation duration " + std::to_string(a.duration_s) +
                         "s is not a multiple of 30s");
        }
    }
    return out;
}

// Convenience wrappers over whole files.
inline Recording read_signal_file(const std::string& path, const std::string& channel_label) {
    return read_signal(read_file_bytes(path), channel_label);
}

inline std::vector<StageAnnotation> parse_annotations_file(const std::string& path) {
    return parse_annotations(read_file_bytes(path));
}

inline ParsedHeader parse_header_file(const std::string& path) {
    return parse_header(read_file_bytes(path));
}

}  // namespace somno::edf
