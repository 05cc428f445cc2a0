#include "hsps/timetag.hpp"

#include <sstream>

#include <gtest/gtest.h>

using namespace hsps;

namespace {

EventStream sample_stream() {
    EventStream s;
    s.rep_period_ps = 500000;
    s.records = {{0, 0},       {1, 1200},   {3, 4100},   {0, 500000}, {0, 1000000},
                 {1, 1000300}, {2, 1000300}, {0, 1500000}, {1, 1999999}};
    return s;
}

std::string to_bytes(const EventStream& s) {
    std::ostringstream os(std::ios::binary);
    write_stream(s, os);
    return os.str();
}

}  // namespace

TEST(Tts1, BinaryRoundTrip) {
    const EventStream s = sample_stream();
    const std::string bytes = to_bytes(s);
    EXPECT_EQ(bytes.size(), kTts1HeaderSize + kTts1RecordSize * s.records.size());
    std::istringstream is(bytes, std::ios::binary);
    const EventStream back = read_stream(is);
    EXPECT_EQ(back.rep_period_ps, s.rep_period_ps);
    EXPECT_EQ(back.records, s.records);
}

TEST(Tts1, LittleEndianLayout) {
    EventStream s;
    s.rep_period_ps = 0x0102;
    s.records = {{2, 0x0A0B0C}};
    const std::string b = to_bytes(s);
    EXPECT_EQ(b.substr(0, 4), "TTS1");
    EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);
    EXPECT_EQ(static_cast<unsigned char>(b[8]), 0x02);
    EXPECT_EQ(static_cast<unsigned char>(b[9]), 0x01);
    EXPECT_EQ(static_cast<unsigned char>(b[16]), 2);
    EXPECT_EQ(static_cast<unsigned char>(b[17]), 0x0C);
    EXPECT_EQ(static_cast<unsigned char>(b[19]), 0x0A);
}

TEST(Tts1, LargeStreamCrossesChunks) {
    EventStream s;
    s.rep_period_ps = 1000;
    for (std::uint64_t i = 0; i < 200000; ++i) s.records.push_back({static_cast<std::uint8_t>(i % 4), i * 10});
    std::istringstream is(to_bytes(s), std::ios::binary);
    EXPECT_EQ(read_stream(is).records, s.records);
}

TEST(Tts1, TruncatedRecordReportsOffset) {
    std::string b = to_bytes(sample_stream());
    b.resize(b.size() - 3);
    std::istringstream is(b, std::ios::binary);
    try {
        read_stream(is);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), kTts1HeaderSize + 8 * kTts1RecordSize);
    }
}

TEST(Tts1, RejectsBadHeader) {
    std::string b = to_bytes(sample_stream());
    std::string bad_magic = b;
    bad_magic[0] = 'X';
    std::istringstream a(bad_magic, std::ios::binary);
    EXPECT_THROW(read_stream(a), ParseError);
    std::string bad_version = b;
    bad_version[4] = 7;
    std::istringstream v(bad_version, std::ios::binary);
    EXPECT_THROW(read_stream(v), ParseError);
    std::istringstream shorty(b.substr(0, 10), std::ios::binary);
    EXPECT_THROW(read_stream(shorty), ParseError);
}

TEST(Tts1, RejectsUnknownChannelAndDisorder) {
    EventStream s = sample_stream();
    s.records[2].channel = 9;
    std::istringstream a(to_bytes(s), std::ios::binary);
    try {
        read_stream(a);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), kTts1HeaderSize + 2 * kTts1RecordSize);
    }
    EventStream t = sample_stream();
    std::swap(t.records[1], t.records[2]);
    std::istringstream b(to_bytes(t), std::ios::binary);
    EXPECT_THROW(read_stream(b), ParseError);
}

TEST(Tts1, EmptyStream) {
    EventStream s;
    std::istringstream is(to_bytes(s), std::ios::binary);
    const EventStream back = read_stream(is);
    EXPECT_TRUE(back.records.empty());
    EXPECT_TRUE(localize(back).empty());
    EXPECT_EQ(localize(back).n_pulses(), 0u);
}

TEST(Csv, RoundTripAndErrors) {
    const EventStream s = sample_stream();
    std::ostringstream os;
    write_stream_csv(s, os);
    std::istringstream is(os.str());
    EXPECT_EQ(read_stream_csv(is).records, s.records);

    std::istringstream bad("channel,global_time_ps\n0,10\n1,abc\n");
    try {
        read_stream_csv(bad);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 3u);
    }
    std::istringstream header("chan,time\n");
    EXPECT_THROW(read_stream_csv(header), ParseError);
}

TEST(Localize, SyncTagsDefinePulses) {
    EventStream s = sample_stream();
    s.records.insert(s.records.begin(), {{1, 0}});
    s.records[1].global_time_ps = 5;  // first sync after a stray photon
    s.records[0].global_time_ps = 2;
    const PulseGroups g = localize(s);
    EXPECT_EQ(g.n_pulses(), 4u);
    EXPECT_EQ(g.dropped_before_first_sync(), 1u);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_EQ(g[0].pulse_index, 0u);
    EXPECT_EQ(g[0].events[0].local_time_ps, 1195u);
    EXPECT_EQ(g[1].pulse_index, 2u);
    ASSERT_EQ(g[1].events.size(), 2u);
    EXPECT_EQ(g[1].events[0].channel, 1);  // equal times ordered by channel
    EXPECT_EQ(g[2].events[0].local_time_ps, 499999u);
}

TEST(Localize, PeriodReconstructionMatchesSyncs) {
    const EventStream s = sample_stream();
    EventStream no_sync;
    no_sync.rep_period_ps = s.rep_period_ps;
    for (const TagRecord& r : s.records) {
        if (r.channel != kSyncChannel) no_sync.records.push_back(r);
    }
    const PulseGroups a = localize(s);
    const PulseGroups b = localize(no_sync);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].pulse_index, b[i].pulse_index);
        EXPECT_TRUE(std::equal(a[i].events.begin(), a[i].events.end(), b[i].events.begin(), b[i].events.end()));
    }
    no_sync.rep_period_ps = 0;
    EXPECT_THROW(localize(no_sync), DomainError);
}

TEST(Histogram, CountsDetectorEvents) {
    const PulseGroups g = localize(sample_stream());
    const Histogram h = lifetime_histogram(g, 1000);
    EXPECT_EQ(h.total, 5u);
    EXPECT_EQ(h.counts.size(), 500u);
    EXPECT_EQ(h.counts[0], 2u);
    EXPECT_EQ(h.counts[1], 1u);
    EXPECT_NEAR(h.bin_center_ns(1), 1.5, 1e-12);
    const Histogram cut = lifetime_histogram(g, 1000, 2000);
    EXPECT_EQ(cut.total, 3u);
    EXPECT_THROW(lifetime_histogram(g, 0), DomainError);
}

TEST(Correction, ReferenceSplitters) {
    const CorrectionFactors k = correction_factors(0.4, 0.5);
    EXPECT_NEAR(k.c2, 1.0 / 0.66, 1e-12);
    EXPECT_NEAR(k.c3, 1.0 / 0.216, 1e-12);
    EXPECT_THROW(correction_factors(1.0, 0.5), DomainError);
    EXPECT_THROW(correction_factors(0.4, 0.0), DomainError);
    const CorrectionFactors unity = correction_factors(DetectorConfig::ideal());
    EXPECT_EQ(unity.c2, 1.0);
    EXPECT_EQ(unity.c3, 1.0);
}

TEST(Correction, MatchesBruteForceRouting) {
    // Enumerate all detector assignments of two and three photons.
    const double r1 = 0.3;
    const double r2 = 0.65;
    const double p[3] = {r1, (1 - r1) * r2, (1 - r1) * (1 - r2)};
    double diff2 = 0.0;
    double diff3 = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (i != j) diff2 += p[i] * p[j];
            for (int k = 0; k < 3; ++k) {
                if (i != j && j != k && i != k) diff3 += p[i] * p[j] * p[k];
            }
        }
    }
    const CorrectionFactors c = correction_factors(r1, r2);
    EXPECT_NEAR(c.c2, 1.0 / diff2, 1e-12);
    EXPECT_NEAR(c.c3, 1.0 / diff3, 1e-12);
}

TEST(PhotonCounts, FilterAndPurity) {
    PulseGroups g(10, 1000);
    const std::vector<LocalEvent> one{{1, 500}};
    const std::vector<LocalEvent> two{{1, 100}, {2, 600}};
    const std::vector<LocalEvent> four{{1, 400}, {2, 500}, {3, 600}, {1, 700}};
    g.add(0, one);
    g.add(1, two);
    g.add(2, four);
    g.add(3, one);
    PhotonCounts c = photon_counts(g, 0.0);
    EXPECT_EQ(c.n1, 2u);
    EXPECT_EQ(c.n2m, 1u);
    EXPECT_EQ(c.n3m, 1u);
    EXPECT_EQ(c.n_over3, 1u);
    c = photon_counts(g, 0.3);
    EXPECT_EQ(c.n1, 3u);
    const DetectorConfig d = DetectorConfig::ideal();
    EXPECT_NEAR(*raw_purity(g, 0.5, d, 0.0), 2.0 / (2.0 + 2.0 + 4.0), 1e-12);
    EXPECT_FALSE(raw_purity(PulseGroups(3, 1000), 0.5, d, 0.0));
}
