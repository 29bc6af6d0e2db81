#include <catch2/catch_amalgamated.hpp>

#include "somno/edf.hpp"
#include "support/edf_writer.hpp"

using namespace somno;

namespace {

testsupport::EdfFileDef two_channel_file() {
    testsupport::EdfFileDef def;
    def.data_record_count = 2;
    def.record_duration_s = 30.0;
    testsupport::EdfSignalDef a;
    a.label = "EEG Fpz-Cz";
    a.samples_per_record = 3;
    a.digital_samples = {10, -20, 30, 40, -50, 60};
    testsupport::EdfSignalDef b;
    b.label = "EEG Pz-Oz";
    b.samples_per_record = 2;
    b.digital_samples = {1, 2, 3, 4};
    def.signals = {a, b};
    return def;
}

}  // namespace

TEST_CASE("header fields parse with trailing spaces trimmed", "[edf]") {
    auto bytes = testsupport::write_edf(two_channel_file());
    auto ph = edf::parse_header(bytes);
    CHECK(ph.header.version == "0");
    CHECK(ph.header.signal_count == 2);
    CHECK(ph.header.header_bytes == 768);  // 256 * (2 + 1)
    CHECK(ph.header.record_duration_s == 30.0);
    CHECK(ph.header.data_record_count == 2);
    REQUIRE(ph.signals.size() == 2);
    CHECK(ph.signals[0].label == "EEG Fpz-Cz");
    CHECK(ph.signals[0].samples_per_record == 3);
    CHECK(ph.signals[1].samples_per_record == 2);
}

TEST_CASE("truncated header is rejected", "[edf]") {
    auto bytes = testsupport::write_edf(two_channel_file());
    std::vector<std::uint8_t> tiny(bytes.begin(), bytes.begin() + 100);
    CHECK_THROWS_AS(edf::parse_header(tiny), edf::TruncatedHeader);
    std::vector<std::uint8_t> no_sig_headers(bytes.begin(), bytes.begin() + 300);
    CHECK_THROWS_AS(edf::parse_header(no_sig_headers), edf::TruncatedHeader);
}

TEST_CASE("non-numeric header field is rejected", "[edf]") {
    auto bytes = testsupport::write_edf(two_channel_file());
    // corrupt the data-record-count field (offset 236, width 8)
    for (int i = 0; i < 8; ++i) bytes[236 + i] = 'x';
    CHECK_THROWS_AS(edf::parse_header(bytes), edf::MalformedField);
}

TEST_CASE("digital-to-physical scaling", "[edf]") {
    edf::SignalSpec spec;
    spec.digital_min = -2048;
    spec.digital_max = 2047;
    spec.physical_min = -1000.0;
    spec.physical_max = 1000.0;

    CHECK(edf::digital_to_physical(spec.digital_min, spec) == spec.physical_min);
    CHECK(edf::digital_to_physical(spec.digital_max, spec) == spec.physical_max);
    // exact rational value: -1000 + 2048 * 2000 / 4095 = 200/819
    CHECK_THAT(edf::digital_to_physical(0, spec),
               Catch::Matchers::WithinAbs(200.0 / 819.0, 1e-12));

    edf::SignalSpec degenerate = spec;
    degenerate.digital_max = degenerate.digital_min;
    CHECK_THROWS_AS(edf::digital_to_physical(0, degenerate), edf::DegenerateScale);
}

TEST_CASE("scaling is affine and monotone", "[edf]") {
    edf::SignalSpec spec;
    spec.digital_min = -100;
    spec.digital_max = 155;
    spec.physical_min = -3.5;
    spec.physical_max = 12.25;
    double prev = edf::digital_to_physical(spec.digital_min, spec);
    for (int d = spec.digital_min + 1; d <= spec.digital_max; ++d) {
        double cur = edf::digital_to_physical(d, spec);
        REQUIRE(cur > prev);
        prev = cur;
    }
}

TEST_CASE("read_signal concatenates records in order", "[edf]") {
    auto bytes = testsupport::write_edf(two_channel_file());
    auto rec = edf::read_signal(bytes, "EEG Fpz-Cz");
    CHECK(rec.sample_rate_hz == Catch::Approx(0.1));  // 3 samples / 30 s
    REQUIRE(rec.samples.size() == 6);
    edf::SignalSpec spec;
    spec.digital_min = -2048;
    spec.digital_max = 2047;
    spec.physical_min = -1000.0;
    spec.physical_max = 1000.0;
    const int expected_digital[6] = {10, -20, 30, 40, -50, 60};
    for (int i = 0; i < 6; ++i)
        CHECK(rec.samples[i] == Catch::Approx(edf::digital_to_physical(expected_digital[i], spec)));
}

TEST_CASE("read_signal errors", "[edf]") {
    auto bytes = testsupport::write_edf(two_channel_file());
    CHECK_THROWS_AS(edf::read_signal(bytes, "EEG C3-A2"), edf::ChannelNotFound);
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_AS(edf::read_signal(cut, "EEG Fpz-Cz"), edf::TruncatedRecord);
}

TEST_CASE("record count of -1 is resolved from file size", "[edf]") {
    auto def = two_channel_file();
    def.declare_unknown_record_count = true;
    auto bytes = testsupport::write_edf(def);
    auto ph = edf::parse_header(bytes);
    CHECK(ph.header.data_record_count == -1);
    auto rec = edf::read_signal(bytes, "EEG Pz-Oz");
    CHECK(rec.samples.size() == 4);  // 2 records x 2 samples recovered
}

TEST_CASE("out-of-range digital samples are clamped and counted", "[edf]") {
    testsupport::EdfFileDef def;
    def.data_record_count = 1;
    def.record_duration_s = 1.0;
    testsupport::EdfSignalDef s;
    s.label = "EEG test";
    s.digital_min = -100;
    s.digital_max = 100;
    s.physical_min = -1.0;
    s.physical_max = 1.0;
    s.samples_per_record = 4;
    s.digital_samples = {0, 5000, -5000, 50};
    def.signals = {s};
    auto bytes = testsupport::write_edf(def);

    std::vector<std::string> warnings;
    warn_handler() = [&](const std::string& m) { warnings.push_back(m); };
    auto rec = edf::read_signal(bytes, "EEG test");
    warn_handler() = nullptr;

    CHECK(rec.clamped_samples == 2);
    CHECK(rec.samples[1] == 1.0);
    CHECK(rec.samples[2] == -1.0);
    CHECK(warnings.size() == 1);
}

TEST_CASE("round-trip of random synthetic EDF files", "[edf]") {
    Rng rng(20260810);
    for (int iter = 0; iter < 20; ++iter) {
        testsupport::EdfFileDef def;
        def.data_record_count = 1 + static_cast<long>(rng.below(5));
        def.record_duration_s = 1 + static_cast<double>(rng.below(30));
        int nsig = 1 + static_cast<int>(rng.below(3));
        for (int s = 0; s < nsig; ++s) {
            testsupport::EdfSignalDef sd;
            sd.label = "CH" + std::to_string(s);
            sd.samples_per_record = 1 + static_cast<int>(rng.below(50));
            sd.digital_min = -2048;
            sd.digital_max = 2047;
            for (long i = 0; i < def.data_record_count * sd.samples_per_record; ++i)
                sd.digital_samples.push_back(
                    static_cast<std::int16_t>(rng.below(4096)) - 2048);
            def.signals.push_back(std::move(sd));
        }
        auto bytes = testsupport::write_edf(def);
        auto ph = edf::parse_header(bytes);
        REQUIRE(ph.header.data_record_count == def.data_record_count);
        REQUIRE(ph.header.signal_count == nsig);
        for (int s = 0; s < nsig; ++s) {
            const auto& sd = def.signals[s];
            auto rec = edf::read_signal(bytes, sd.label);
            REQUIRE(rec.samples.size() == sd.digital_samples.size());
            // invert the scaling to recover digital values bit-exactly
            for (std::size_t i = 0; i < rec.samples.size(); ++i) {
                double back = (rec.samples[i] - ph.signals[s].physical_min) *
                                  (ph.signals[s].digital_max - ph.signals[s].digital_min) /
                                  (ph.signals[s].physical_max - ph.signals[s].physical_min) +
                              ph.signals[s].digital_min;
                REQUIRE(std::lround(back) == sd.digital_samples[i]);
            }
        }
    }
}

TEST_CASE("TAL decoding", "[edf]") {
    SECTION("hand-built TAL against the published layout") {
        testsupport::EdfFileDef def;
        def.reserved = "EDF+C";
        def.data_record_count = 1;
        def.record_duration_s = 30.0;
        std::string tal = std::string("+0") + '\x15' + "30" + '\x14' + "Sleep stage W" + '\x14' +
                          '\x00' + '\x00';
        testsupport::EdfSignalDef ann;
        ann.label = "EDF Annotations";
        ann.physical_min = -1;
        ann.physical_max = 1;
        ann.digital_min = -32768;
        ann.digital_max = 32767;
        ann.samples_per_record = static_cast<int>(tal.size() / 2);
        ann.digital_samples.resize(tal.size() / 2);
        std::memcpy(ann.digital_samples.data(), tal.data(), tal.size());
        def.signals = {ann};

        auto anns = edf::parse_annotations(testsupport::write_edf(def));
        REQUIRE(anns.size() == 1);
        CHECK(anns[0].onset_s == 0.0);
        CHECK(anns[0].duration_s == 30.0);
        CHECK(anns[0].label_text == "Sleep stage W");
    }

    SECTION("empty annotation record yields no annotations") {
        auto bytes = testsupport::write_hypnogram_edf({});
        CHECK(edf::parse_annotations(bytes).empty());
    }

    SECTION("hypnogram writer round-trip, ordered by onset") {
        std::vector<testsupport::HypnoEntry> entries = {
            {60.0, 30.0, "Sleep stage 1"},
            {0.0, 60.0, "Sleep stage W"},
            {90.0, 120.0, "Sleep stage 2"},
        };
        auto anns = edf::parse_annotations(testsupport::write_hypnogram_edf(entries));
        REQUIRE(anns.size() == 3);
        CHECK(anns[0].label_text == "Sleep stage W");
        CHECK(anns[1].label_text == "Sleep stage 1");
        CHECK(anns[2].label_text == "Sleep stage 2");
        for (std::size_t i = 1; i < anns.size(); ++i)
            CHECK(anns[i].onset_s >= anns[i - 1].onset_s);
        for (const auto& a : anns) {
            double q = a.duration_s / 30.0;
            CHECK(q == std::round(q));
        }
    }

    SECTION("malformed TALs are rejected") {
        auto make = [](const std::string& tal_text) {
            testsupport::EdfFileDef def;
            def.reserved = "EDF+C";
            def.data_record_count = 1;
            def.record_duration_s = 30.0;
            std::string tal = tal_text;
            if (tal.size() % 2) tal += '\x00';
            testsupport::EdfSignalDef ann;
            ann.label = "EDF Annotations";
            ann.physical_min = -1;
            ann.physical_max = 1;
            ann.digital_min = -32768;
            ann.digital_max = 32767;
            ann.samples_per_record = static_cast<int>(tal.size() / 2);
            ann.digital_samples.resize(tal.size() / 2);
            std::memcpy(ann.digital_samples.data(), tal.data(), tal.size());
            def.signals = {ann};
            return testsupport::write_edf(def);
        };
        CHECK_THROWS_AS(edf::parse_annotations(make("+abc\x14text\x14")), edf::MalformedTal);
        CHECK_THROWS_AS(edf::parse_annotations(make("12\x14text\x14")), edf::MalformedTal);
        CHECK_THROWS_AS(edf::parse_annotations(make("+5\x14text")), edf::MalformedTal);
    }
}
