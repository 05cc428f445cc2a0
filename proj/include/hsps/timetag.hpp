#pragma once

// Time-tag streams: TTS1 binary and CSV I/O, grouping of detector events by excitation
// pulse, lifetime histograms and the photon-number correction for a detector tree that
// cannot resolve more than one photon per detector per pulse.
//
// TTS1 layout, little-endian:
//   header (16 bytes): "TTS1" | version u16 | reserved u16 | rep_period_ps u64
//   record (9 bytes):  channel u8 | global_time_ps u64

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hsps/detector.hpp"
#include "hsps/errors.hpp"

namespace hsps {

inline constexpr std::uint8_t kSyncChannel = 0;
inline constexpr std::uint8_t kMaxChannel = 3;
inline constexpr std::uint16_t kTts1Version = 1;
inline constexpr std::size_t kTts1HeaderSize = 16;
inline constexpr std::size_t kTts1RecordSize = 9;

struct TagRecord {
    std::uint8_t channel = 0;
    std::uint64_t global_time_ps = 0;

    friend bool operator==(const TagRecord&, const TagRecord&) = default;
};

/// Stream order: by time, ties broken by channel (sync first).
inline bool tag_before(const TagRecord& a, const TagRecord& b) {
    return a.global_time_ps != b.global_time_ps ? a.global_time_ps < b.global_time_ps
                                                : a.channel < b.channel;
}

struct EventStream {
    std::uint64_t rep_period_ps = 0;  // 0 when unknown (CSV input)
    std::vector<TagRecord> records;
};

inline std::int64_t ns_to_ps(double ns) { return std::llround(ns * 1e3); }

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

namespace detail {

inline void put_le(std::ostream& os, std::uint64_t v, int bytes) {
    std::array<char, 8> buf{};
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf.data(), bytes);
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline void check_record(const TagRecord& rec, const TagRecord* prev, std::uint64_t index,
                         std::uint64_t offset) {
    if (rec.channel > kMaxChannel) {
        throw ParseError("record " + std::to_string(index) + ": unknown channel " +
                             std::to_string(rec.channel),
                         offset);
    }
    if (prev && tag_before(rec, *prev)) {
        throw ParseError("record " + std::to_string(index) + ": timestamp " +
                             std::to_string(rec.global_time_ps) + " precedes previous record",
                         offset);
    }
}

}  // namespace detail

inline void write_stream(const EventStream& stream, std::ostream& os) {
    os.write("TTS1", 4);
    detail::put_le(os, kTts1Version, 2);
    detail::put_le(os, 0, 2);
    detail::put_le(os, stream.rep_period_ps, 8);
    for (const TagRecord& r : stream.records) {
        detail::put_le(os, r.channel, 1);
        detail::put_le(os, r.global_time_ps, 8);
    }
    if (!os) throw std::ios_base::failure("failed writing TTS1 stream");
}

inline EventStream read_stream(std::istream& is) {
    std::array<unsigned char, kTts1HeaderSize> header{};
    is.read(reinterpret_cast<char*>(header.data()), header.size());
    if (is.gcount() != static_cast<std::streamsize>(header.size())) {
        throw ParseError("truncated TTS1 header", static_cast<std::uint64_t>(is.gcount()));
    }
    if (std::memcmp(header.data(), "TTS1", 4) != 0) throw ParseError("bad TTS1 magic", 0);
    const auto version = static_cast<std::uint16_t>(detail::get_le(header.data() + 4, 2));
    if (version != kTts1Version) {
        throw ParseError("unsupported TTS1 version " + std::to_string(version), 4);
    }

    EventStream out;
    out.rep_period_ps = detail::get_le(header.data() + 8, 8);

    constexpr std::size_t kChunkRecords = 1 << 16;
    std::vector<unsigned char> buf(kChunkRecords * kTts1RecordSize);
    std::uint64_t offset = kTts1HeaderSize;
    std::size_t carry = 0;
    while (is) {
        is.read(reinterpret_cast<char*>(buf.data() + carry),
                static_cast<std::streamsize>(buf.size() - carry));
        const std::size_t have = carry + static_cast<std::size_t>(is.gcount());
        const std::size_t whole = have / kTts1RecordSize;
        for (std::size_t i = 0; i < whole; ++i) {
            const unsigned char* p = buf.data() + i * kTts1RecordSize;
            TagRecord rec{p[0], detail::get_le(p + 1, 8)};
            detail::check_record(rec, out.records.empty() ? nullptr : &out.records.back(),
                                 out.records.size(), offset);
            out.records.push_back(rec);
            offset += kTts1RecordSize;
        }
        carry = have - whole * kTts1RecordSize;
        std::memmove(buf.data(), buf.data() + whole * kTts1RecordSize, carry);
    }
    if (carry != 0) throw ParseError("truncated TTS1 record", offset);
    return out;
}

inline void write_stream_csv(const EventStream& stream, std::ostream& os) {
    os << "channel,global_time_ps\n";
    for (const TagRecord& r : stream.records) {
        os << static_cast<unsigned>(r.channel) << ',' << r.global_time_ps << '\n';
    }
    if (!os) throw std::ios_base::failure("failed writing CSV stream");
}

/// CSV twin of TTS1. The offset reported in errors is the 1-based line number.
inline EventStream read_stream_csv(std::istream& is) {
    EventStream out;
    std::string line;
    if (!std::getline(is, line)) throw ParseError("missing CSV header", 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "channel,global_time_ps") throw ParseError("bad CSV header '" + line + "'", 1);
    std::uint64_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        unsigned long long channel = 0;
        unsigned long long time = 0;
        try {
            std::size_t used = 0;
            if (comma == std::string::npos) throw std::invalid_argument("no comma");
            channel = std::stoull(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("channel");
            const std::string rest = line.substr(comma + 1);
            time = std::stoull(rest, &used);
            if (used != rest.size()) throw std::invalid_argument("time");
        } catch (const std::logic_error&) {
            throw ParseError("malformed CSV record '" + line + "'", line_no);
        }
        if (channel > 255) throw ParseError("unknown channel " + std::to_string(channel), line_no);
        TagRecord rec{static_cast<std::uint8_t>(channel), time};
        detail::check_record(rec, out.records.empty() ? nullptr : &out.records.back(),
                             out.records.size(), line_no);
        out.records.push_back(rec);
    }
    return out;
}

inline bool is_csv_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv";
}

/// Reads TTS1, or CSV when the extension is .csv.
inline EventStream read_stream_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open '" + path.string() + "'");
    return is_csv_path(path) ? read_stream_csv(in) : read_stream(in);
}

inline void write_stream_file(const EventStream& stream, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
    if (is_csv_path(path)) {
        write_stream_csv(stream, out);
    } else {
        write_stream(stream, out);
    }
}

// ---------------------------------------------------------------------------
// Pulse grouping
// ---------------------------------------------------------------------------

struct LocalEvent {
    std::uint8_t channel = 0;
    std::uint64_t local_time_ps = 0;

    friend bool operator==(const LocalEvent&, const LocalEvent&) = default;
};

struct PulseGroup {
    std::uint64_t pulse_index = 0;
    std::span<const LocalEvent> events;  // sorted by local time
};

/// Detector events grouped by excitation pulse. Only pulses with at least one event are
/// stored; `n_pulses()` counts every pulse, including empty ones.
class PulseGroups {
  public:
    class iterator {
      public:
        using iterator_category = std::forward_iterator_tag;
        using value_type = PulseGroup;
        using difference_type = std::ptrdiff_t;
        using pointer = void;
        using reference = PulseGroup;

        iterator() = default;
        iterator(const PulseGroups* owner, std::size_t i) : owner_(owner), i_(i) {}
        PulseGroup operator*() const { return (*owner_)[i_]; }
        iterator& operator++() {
            ++i_;
            return *this;
        }
        iterator operator++(int) {
            iterator tmp = *this;
            ++i_;
            return tmp;
        }
        friend bool operator==(const iterator& a, const iterator& b) { return a.i_ == b.i_; }

      private:
        const PulseGroups* owner_ = nullptr;
        std::size_t i_ = 0;
    };

    PulseGroups() = default;
    PulseGroups(std::uint64_t n_pulses, std::uint64_t rep_period_ps)
        : n_pulses_(n_pulses), rep_period_ps_(rep_period_ps) {}

    std::uint64_t n_pulses() const { return n_pulses_; }
    std::uint64_t rep_period_ps() const { return rep_period_ps_; }
    std::uint64_t dropped_before_first_sync() const { return dropped_; }
    std::size_t size() const { return index_.size(); }
    bool empty() const { return index_.empty(); }
    std::size_t n_events() const { return events_.size(); }

    PulseGroup operator[](std::size_t i) const {
        return {index_[i], std::span<const LocalEvent>(events_).subspan(
                               offsets_[i], offsets_[i + 1] - offsets_[i])};
    }
    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, size()}; }

    /// Appends one pulse; pulse indices must be strictly increasing.
    void add(std::uint64_t pulse_index, std::span<const LocalEvent> events) {
        if (events.empty()) return;
        if (!index_.empty() && pulse_index <= index_.back()) {
            throw DomainError("pulse groups must be added in increasing pulse order");
        }
        index_.push_back(pulse_index);
        events_.insert(events_.end(), events.begin(), events.end());
        std::sort(events_.end() - static_cast<std::ptrdiff_t>(events.size()), events_.end(),
                  [](const LocalEvent& a, const LocalEvent& b) {
                      return a.local_time_ps != b.local_time_ps ? a.local_time_ps < b.local_time_ps
                                                                : a.channel < b.channel;
                  });
        offsets_.push_back(events_.size());
        n_pulses_ = std::max(n_pulses_, pulse_index + 1);
    }

    void set_n_pulses(std::uint64_t n) { n_pulses_ = std::max(n_pulses_, n); }
    void set_dropped(std::uint64_t n) { dropped_ = n; }

    friend bool operator==(const PulseGroups&, const PulseGroups&) = default;

  private:
    std::uint64_t n_pulses_ = 0;
    std::uint64_t rep_period_ps_ = 0;
    std::uint64_t dropped_ = 0;
    std::vector<std::uint64_t> index_;
    std::vector<std::size_t> offsets_{0};
    std::vector<LocalEvent> events_;
};

/// Assigns every detector tag to the nearest preceding sync tag. Without sync tags the pulse
/// grid is reconstructed from `rep_period_ps` (explicit argument, else the stream header).
/// Photons before the first sync are dropped and counted.
inline PulseGroups localize(const EventStream& stream,
                            std::optional<std::uint64_t> rep_period_ps = std::nullopt) {
    const std::uint64_t period = rep_period_ps.value_or(stream.rep_period_ps);
    const auto& records = stream.records;
    const bool has_sync = std::any_of(records.begin(), records.end(),
                                      [](const TagRecord& r) { return r.channel == kSyncChannel; });

    std::vector<LocalEvent> current;
    if (has_sync) {
        PulseGroups groups(0, period);
        std::uint64_t dropped = 0;
        std::uint64_t n_sync = 0;
        std::uint64_t sync_time = 0;
        for (const TagRecord& r : records) {
            if (r.channel == kSyncChannel) {
                if (n_sync > 0) groups.add(n_sync - 1, current);
                current.clear();
                sync_time = r.global_time_ps;
                ++n_sync;
            } else if (n_sync == 0) {
                ++dropped;
            } else {
                current.push_back({r.channel, r.global_time_ps - sync_time});
            }
        }
        if (n_sync > 0) groups.add(n_sync - 1, current);
        groups.set_n_pulses(n_sync);
        groups.set_dropped(dropped);
        return groups;
    }

    if (records.empty()) return PulseGroups(0, period);
    if (period == 0) {
        throw DomainError("stream has no sync tags and no repetition period to reconstruct them");
    }
    PulseGroups groups(0, period);
    std::uint64_t pulse = records.front().global_time_ps / period;
    for (const TagRecord& r : records) {
        const std::uint64_t k = r.global_time_ps / period;
        if (k != pulse) {
            groups.add(pulse, current);
            current.clear();
            pulse = k;
        }
        current.push_back({r.channel, r.global_time_ps - k * period});
    }
    groups.add(pulse, current);
    return groups;
}

// ---------------------------------------------------------------------------
// Histogram and photon-number statistics
// ---------------------------------------------------------------------------

struct Histogram {
    std::uint64_t bin_width_ps = 1;
    std::uint64_t origin_ps = 0;
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;

    double bin_center_ns(std::size_t i) const {
        return (static_cast<double>(origin_ps) +
                (static_cast<double>(i) + 0.5) * static_cast<double>(bin_width_ps)) *
               1e-3;
    }
};

/// Local-time histogram over detector channels 1-3. The range covers every event unless
/// `range_ps` is given, in which case later events are left out of the histogram.
inline Histogram lifetime_histogram(const PulseGroups& groups, std::uint64_t bin_width_ps,
                                    std::optional<std::uint64_t> range_ps = std::nullopt) {
    detail::require(bin_width_ps > 0, "histogram bin width must be > 0");
    std::uint64_t range = 0;
    if (range_ps) {
        range = *range_ps;
    } else {
        for (const PulseGroup g : groups) {
            for (const LocalEvent& e : g.events) range = std::max(range, e.local_time_ps + 1);
        }
    }
    Histogram h;
    h.bin_width_ps = bin_width_ps;
    h.counts.assign((range + bin_width_ps - 1) / bin_width_ps, 0);
    for (const PulseGroup g : groups) {
        for (const LocalEvent& e : g.events) {
            if (e.channel == kSyncChannel || e.local_time_ps >= range) continue;
            ++h.counts[e.local_time_ps / bin_width_ps];
            ++h.total;
        }
    }
    return h;
}

struct CorrectionFactors {
    double c2 = 1.0;
    double c3 = 1.0;
};

/// Inverse probabilities that two (three) photons land on distinct detectors of the tree.
inline CorrectionFactors correction_factors(double r1, double r2) {
    if (!(r1 > 0.0 && r1 < 1.0) || !(r2 > 0.0 && r2 < 1.0)) {
        throw DomainError("photon-number correction is undefined for a degenerate splitter (r1, r2 must be in (0,1))");
    }
    const double p_diff2 = 2.0 * r1 * (1.0 - r1) + (1.0 - r1) * (1.0 - r1) * 2.0 * r2 * (1.0 - r2);
    const double p_diff3 = 6.0 * r1 * r2 * (1.0 - r1) * (1.0 - r1) * (1.0 - r2);
    return {1.0 / p_diff2, 1.0 / p_diff3};
}

/// Correction factors for a detector configuration; unity for resolving detectors.
inline CorrectionFactors correction_factors(const DetectorConfig& d) {
    if (d.photon_number_resolving()) return {};
    return correction_factors(d.r1, d.r2);
}

/// Number of events at or after the filter time.
inline std::size_t count_after(std::span<const LocalEvent> events, std::uint64_t t_f_ps) {
    return static_cast<std::size_t>(std::count_if(
        events.begin(), events.end(), [&](const LocalEvent& e) { return e.local_time_ps >= t_f_ps; }));
}

struct PhotonCounts {
    std::uint64_t n1 = 0;
    std::uint64_t n2m = 0;
    std::uint64_t n3m = 0;  // three or more
    std::uint64_t n_over3 = 0;
};

inline PhotonCounts photon_counts(const PulseGroups& groups, double t_f_ns) {
    detail::require(t_f_ns >= 0.0, "t_f must be >= 0");
    const auto t_f_ps = static_cast<std::uint64_t>(ns_to_ps(t_f_ns));
    PhotonCounts c;
    for (const PulseGroup g : groups) {
        const std::size_t n = count_after(g.events, t_f_ps);
        if (n == 1) ++c.n1;
        else if (n == 2) ++c.n2m;
        else if (n >= 3) ++c.n3m;
        if (n > 3) ++c.n_over3;
    }
    return c;
}

/// Pre-purification purity N1 / (N1 + N2/alpha + N3/alpha^2) after dropping events earlier
/// than t_f, with N2 and N3 corrected for same-detector losses. Pulses with more than three
/// photons are counted as three. Empty when no single-photon pulse exists.
inline std::optional<double> raw_purity(const PulseGroups& groups, double alpha,
                                        const DetectorConfig& d, double t_f_ns) {
    detail::require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0,1]");
    const PhotonCounts c = photon_counts(groups, t_f_ns);
    if (c.n1 == 0) return std::nullopt;
    const CorrectionFactors k = correction_factors(d);
    const double n1 = static_cast<double>(c.n1);
    const double n2 = k.c2 * static_cast<double>(c.n2m);
    const double n3 = k.c3 * static_cast<double>(c.n3m);
    return n1 / (n1 + n2 / alpha + n3 / (alpha * alpha));
}

}  // namespace hsps
