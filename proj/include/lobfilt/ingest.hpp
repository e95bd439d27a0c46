#pragma once

#include <lobfilt/event.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lobfilt {

struct SessionMeta {
    std::string trading_date{"19700101"};
    Nanos session_start{(9 * 3600 + 20 * 60) * kSecond};
    Nanos session_end{(15 * 3600 + 25 * 60) * kSecond};
    std::string instrument{"BANKNIFTY"};

    void validate() const {
        if (session_end <= session_start) throw ConfigError("session_end must be after session_start");
    }
};

/// Decimal price grid. Prices are held internally as integer multiples of
/// the tick; the tick itself is kept as a scaled integer so that conversion
/// is exact.
class TickSize {
public:
    static constexpr int kScaleDigits = 8;
    static constexpr std::int64_t kScale = 100'000'000;

    TickSize() : TickSize("0.05") {}
    explicit TickSize(std::string_view decimal) {
        auto scaled = parse_scaled(decimal);
        if (!scaled || *scaled <= 0) throw ConfigError("invalid tick size '" + std::string(decimal) + "'");
        scaled_ = *scaled;
        decimals_ = 0;
        for (std::int64_t rem = scaled_, p = kScale; rem % p != 0; p /= 10) ++decimals_;
    }

    std::int64_t scaled() const noexcept { return scaled_; }
    double value() const noexcept { return static_cast<double>(scaled_) / kScale; }

    /// Exact conversion of a decimal price string to ticks.
    std::optional<PriceTicks> to_ticks(std::string_view decimal) const noexcept {
        auto scaled = parse_scaled(decimal);
        if (!scaled || *scaled % scaled_ != 0) return std::nullopt;
        return *scaled / scaled_;
    }

    std::string to_decimal(PriceTicks ticks) const {
        const std::int64_t scaled = ticks * scaled_;
        std::string out = (scaled < 0 ? "-" : "") + std::to_string(std::abs(scaled) / kScale);
        if (decimals_ > 0) {
            std::string frac = std::to_string(std::abs(scaled) % kScale);
            frac.insert(0, kScaleDigits - frac.size(), '0');
            out += '.';
            out += frac.substr(0, static_cast<std::size_t>(decimals_));
        }
        return out;
    }

    static std::optional<std::int64_t> parse_scaled(std::string_view s) noexcept {
        if (s.empty()) return std::nullopt;
        bool neg = false;
        if (s.front() == '-') {
            neg = true;
            s.remove_prefix(1);
        }
        const auto dot = s.find('.');
        std::string_view whole = s.substr(0, dot);
        std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
        if (whole.empty() && frac.empty()) return std::nullopt;
        if (frac.size() > static_cast<std::size_t>(kScaleDigits)) return std::nullopt;
        std::int64_t w = 0, f = 0;
        if (!whole.empty()) {
            auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), w);
            if (ec != std::errc{} || p != whole.data() + whole.size()) return std::nullopt;
        }
        if (!frac.empty()) {
            auto [p, ec] = std::from_chars(frac.data(), frac.data() + frac.size(), f);
            if (ec != std::errc{} || p != frac.data() + frac.size()) return std::nullopt;
            for (std::size_t i = frac.size(); i < static_cast<std::size_t>(kScaleDigits); ++i) f *= 10;
        }
        const std::int64_t v = w * kScale + f;
        return neg ? -v : v;
    }

private:
    std::int64_t scaled_{5'000'000};
    int decimals_{2};
};

struct IngestOptions {
    TickSize tick{};
    // Strict mode throws on the first malformed row; lenient mode counts it
    // in `rejected` and moves on.
    bool strict{true};
};

struct IngestResult {
    std::vector<Event> events;
    std::size_t rows{0};
    std::size_t dropped_outside_session{0};
    std::size_t rejected{0};
};

inline constexpr std::string_view kTickHeader = "timestamp_ns,oid,etype,side,price,qty";

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && !s.empty();
}

inline const char* kSnapshotNames[] = {"bp", "bq", "ap", "aq"};

inline std::string snapshot_column_name(std::size_t i) {
    // bids first (bp1,bq1..bp5,bq5), then asks
    const std::size_t side = i / (2 * kBookDepth);
    const std::size_t level = (i % (2 * kBookDepth)) / 2;
    const std::size_t field = i % 2;
    return std::string(kSnapshotNames[side * 2 + field]) + std::to_string(level + 1);
}

}  // namespace detail

/// Parses one data row. Throws ParseError naming the line and field.
inline Event parse_tick_row(std::string_view line, std::size_t line_no, const TickSize& tick) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto f = detail::split_csv(line);
    auto fail = [&](std::string_view field, std::string_view value) -> ParseError {
        return ParseError("line " + std::to_string(line_no) + ": bad " + std::string(field) + " '" +
                          std::string(value) + "'");
    };
    if (f.size() != 6 && f.size() != 6 + 4 * kBookDepth)
        throw ParseError("line " + std::to_string(line_no) + ": expected 6 or " +
                         std::to_string(6 + 4 * kBookDepth) + " fields, got " + std::to_string(f.size()));

    Event e;
    std::int64_t ts = 0;
    if (!detail::parse_int(f[0], ts) || ts < 0) throw fail("timestamp_ns", f[0]);
    e.timestamp = Nanos{ts};
    if (!detail::parse_int(f[1], e.oid)) throw fail("oid", f[1]);
    auto et = parse_event_type(f[2]);
    if (!et) throw fail("etype", f[2]);
    e.etype = *et;
    auto side = parse_side(f[3]);
    if (!side) throw fail("side", f[3]);
    e.side = *side;
    auto px = tick.to_ticks(f[4]);
    if (!px || *px < 0) throw fail("price", f[4]);
    e.price = *px;
    if (e.etype != EventType::Cancel && e.price <= 0) throw fail("price", f[4]);
    if (!detail::parse_int(f[5], e.qty) || e.qty < 0) throw fail("qty", f[5]);

    if (f.size() > 6) {
        BookSnapshot snap;
        for (std::size_t i = 0; i < 4 * kBookDepth; ++i) {
            const std::string_view v = f[6 + i];
            const std::size_t side_idx = i / (2 * kBookDepth);
            const std::size_t level = (i % (2 * kBookDepth)) / 2;
            Level& lv = side_idx == 0 ? snap.bids[level] : snap.asks[level];
            if (v.empty()) continue;
            if (i % 2 == 0) {
                auto p = tick.to_ticks(v);
                if (!p || *p < 0) throw fail(detail::snapshot_column_name(i), v);
                lv.price = *p;
            } else if (!detail::parse_int(v, lv.qty) || lv.qty < 0) {
                throw fail(detail::snapshot_column_name(i), v);
            }
        }
        if (!snap.well_formed())
            throw ParseError("line " + std::to_string(line_no) + ": snapshot levels out of order or crossed");
        e.snapshot = snap;
    }
    return e;
}

/// Reads a tick CSV stream; output is stably sorted by timestamp and
/// restricted to [session_start, session_end].
inline IngestResult parse_tick_stream(std::istream& in, const SessionMeta& meta, const IngestOptions& opts = {}) {
    meta.validate();
    IngestResult res;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: missing header");
    if (std::string_view(line).substr(0, kTickHeader.size()) != kTickHeader)
        throw ParseError("line 1: header must start with '" + std::string(kTickHeader) + "'");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        ++res.rows;
        Event e;
        try {
            e = parse_tick_row(line, line_no, opts.tick);
        } catch (const ParseError&) {
            if (opts.strict) throw;
            ++res.rejected;
            continue;
        }
        if (e.timestamp < meta.session_start || e.timestamp > meta.session_end) {
            ++res.dropped_outside_session;
            continue;
        }
        res.events.push_back(std::move(e));
    }
    std::stable_sort(res.events.begin(), res.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    return res;
}

inline IngestResult parse_tick_file(const std::string& path, const SessionMeta& meta, const IngestOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return parse_tick_stream(in, meta, opts);
}

/// Writes events in the ingest CSV format. Snapshot columns are emitted for
/// every row when any event carries a snapshot.
inline void write_tick_csv(std::ostream& out, std::span<const Event> events, const TickSize& tick = {}) {
    const bool with_snap = std::any_of(events.begin(), events.end(), [](const Event& e) { return e.snapshot.has_value(); });
    out << kTickHeader;
    if (with_snap)
        for (std::size_t i = 0; i < 4 * kBookDepth; ++i) out << ',' << detail::snapshot_column_name(i);
    out << '\n';
    for (const Event& e : events) {
        out << e.timestamp.count() << ',' << e.oid << ',' << to_string(e.etype) << ',' << to_string(e.side) << ','
            << tick.to_decimal(e.price) << ',' << e.qty;
        if (with_snap) {
            for (std::size_t i = 0; i < 4 * kBookDepth; ++i) {
                out << ',';
                if (!e.snapshot) continue;
                const std::size_t level = (i % (2 * kBookDepth)) / 2;
                const Level& lv = i < 2 * kBookDepth ? e.snapshot->bids[level] : e.snapshot->asks[level];
                if (lv.qty == 0 && lv.price == 0) continue;
                if (i % 2 == 0) out << tick.to_decimal(lv.price);
                else out << lv.qty;
            }
        }
        out << '\n';
    }
}

}  // namespace lobfilt
