#pragma once

#include <lobfilt/lifecycle.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <ostream>
#include <set>
#include <string>
#include <string_view>

namespace lobfilt {

enum class FilterKind : std::uint8_t { Unfiltered, Lifetime, ModCount, ModTime };

/// One filtration scheme with its threshold. Lifetime and ModTime carry a
/// duration, ModCount an integer.
class FilterSpec {
public:
    static FilterSpec unfiltered() { return FilterSpec(FilterKind::Unfiltered, Nanos{0}, 0); }

    static FilterSpec lifetime(Nanos t_bar) {
        if (t_bar <= Nanos{0}) throw ConfigError("lifetime threshold must be positive");
        return FilterSpec(FilterKind::Lifetime, t_bar, 0);
    }
    static FilterSpec modcount(int m_bar) {
        if (m_bar < 0) throw ConfigError("modification count threshold must be >= 0");
        return FilterSpec(FilterKind::ModCount, Nanos{0}, m_bar);
    }
    static FilterSpec modtime(Nanos mt_bar) {
        if (mt_bar <= Nanos{0}) throw ConfigError("modification-time threshold must be positive");
        return FilterSpec(FilterKind::ModTime, mt_bar, 0);
    }

    FilterKind kind() const noexcept { return kind_; }
    Nanos duration_threshold() const noexcept { return duration_; }
    int count_threshold() const noexcept { return count_; }

    /// Short scheme code used in report row labels: UF, LF, MF, MTF.
    std::string code() const {
        switch (kind_) {
            case FilterKind::Unfiltered: return "UF";
            case FilterKind::Lifetime: return "LF";
            case FilterKind::ModCount: return "MF";
            case FilterKind::ModTime: return "MTF";
        }
        return "?";
    }

    /// Full label including the threshold, e.g. "LF-500ms", "MF-3", "UF".
    std::string label() const {
        switch (kind_) {
            case FilterKind::Unfiltered: return "UF";
            case FilterKind::ModCount: return code() + "-" + std::to_string(count_);
            default: break;
        }
        const auto ns = duration_.count();
        if (ns % kMillisecond.count() == 0) return code() + "-" + std::to_string(ns / kMillisecond.count()) + "ms";
        return code() + "-" + std::to_string(ns) + "ns";
    }

    friend bool operator==(const FilterSpec&, const FilterSpec&) = default;

private:
    FilterSpec(FilterKind k, Nanos d, int c) : kind_(k), duration_(d), count_(c) {}

    FilterKind kind_;
    Nanos duration_;
    int count_;
};

/// Parses a duration such as "500ms", "1s", "250us", "100ns"; a bare number
/// is taken as milliseconds.
inline Nanos parse_duration(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
    const std::string_view num = text.substr(0, i);
    const std::string_view unit = text.substr(i);
    double value = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
    if (num.empty() || ec != std::errc{} || p != num.data() + num.size())
        throw ConfigError("bad duration '" + std::string(text) + "'");
    double scale = 0;
    if (unit.empty() || unit == "ms") scale = 1e6;
    else if (unit == "s") scale = 1e9;
    else if (unit == "us") scale = 1e3;
    else if (unit == "ns") scale = 1;
    else if (unit == "min") scale = 60e9;
    else throw ConfigError("bad duration unit '" + std::string(unit) + "'");
    return Nanos{static_cast<Nanos::rep>(std::llround(value * scale))};
}

/// Builds a spec from the CLI vocabulary: kind in {uf, lf, mf, mtf} and a
/// threshold string ("100ms" for lf/mtf, "3" for mf).
inline FilterSpec parse_filter_spec(std::string_view kind_text, std::string_view threshold) {
    std::string kind(kind_text);
    for (char& c : kind) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (kind == "uf") return FilterSpec::unfiltered();
    if (kind == "lf") return FilterSpec::lifetime(parse_duration(threshold));
    if (kind == "mtf") return FilterSpec::modtime(parse_duration(threshold));
    if (kind == "mf") {
        int m = 0;
        auto [p, ec] = std::from_chars(threshold.data(), threshold.data() + threshold.size(), m);
        if (threshold.empty() || ec != std::errc{} || p != threshold.data() + threshold.size())
            throw ConfigError("bad modification count '" + std::string(threshold) + "'");
        return FilterSpec::modcount(m);
    }
    throw ConfigError("unknown filter kind '" + std::string(kind) + "'");
}

struct ExclusionSet {
    FilterSpec spec{FilterSpec::unfiltered()};
    std::set<OrderId> excluded;

    bool contains(OrderId oid) const { return excluded.count(oid) != 0; }
};

namespace detail {

template <typename Pred>
ExclusionSet exclude_where(const LifecycleMap& lifecycles, FilterSpec spec, Pred pred) {
    ExclusionSet out{spec, {}};
    for (const auto& [oid, life] : lifecycles)
        if (pred(life)) out.excluded.insert(out.excluded.end(), oid);
    return out;
}

}  // namespace detail

/// Excludes orders whose time-in-book is below `t_bar`.
inline ExclusionSet lifetime_filter(const LifecycleMap& lifecycles, Nanos t_bar) {
    return detail::exclude_where(lifecycles, FilterSpec::lifetime(t_bar),
                                 [t_bar](const OrderLifecycle& l) { return l.lifetime < t_bar; });
}

/// Excludes orders modified more than `m_bar` times.
inline ExclusionSet modcount_filter(const LifecycleMap& lifecycles, int m_bar) {
    return detail::exclude_where(lifecycles, FilterSpec::modcount(m_bar),
                                 [m_bar](const OrderLifecycle& l) { return l.mod_count > m_bar; });
}

/// Excludes orders whose last two modifications are closer than `mt_bar`.
/// Orders with fewer than two modifications have no gap and are retained.
inline ExclusionSet modtime_filter(const LifecycleMap& lifecycles, Nanos mt_bar) {
    return detail::exclude_where(lifecycles, FilterSpec::modtime(mt_bar), [mt_bar](const OrderLifecycle& l) {
        return l.last_mod_gap.has_value() && *l.last_mod_gap < mt_bar;
    });
}

inline ExclusionSet apply_filter(const LifecycleMap& lifecycles, const FilterSpec& spec) {
    switch (spec.kind()) {
        case FilterKind::Unfiltered: return ExclusionSet{spec, {}};
        case FilterKind::Lifetime: return lifetime_filter(lifecycles, spec.duration_threshold());
        case FilterKind::ModCount: return modcount_filter(lifecycles, spec.count_threshold());
        case FilterKind::ModTime: return modtime_filter(lifecycles, spec.duration_threshold());
    }
    return ExclusionSet{spec, {}};
}

/// Newline-delimited oid list, ascending.
inline void write_exclusion_list(std::ostream& out, const ExclusionSet& set) {
    for (OrderId oid : set.excluded) out << oid << '\n';
}

}  // namespace lobfilt
