#pragma once

#include <lobfilt/signals.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

namespace lobfilt {

/// Bin boundaries for the OBI and return regimes. Bins are left-closed
/// [e_k, e_{k+1}); the outermost bins are open-ended for returns, while the
/// OBI scheme covers exactly [-1, +1] with +1 falling in the last bin.
struct RegimeScheme {
    std::vector<double> obi_edges;  // obi_bins + 1 entries, from -1 to +1
    std::vector<double> ret_edges;  // interior return boundaries, ret_bins - 1 entries

    std::size_t obi_bins() const noexcept { return obi_edges.size() - 1; }
    std::size_t ret_bins() const noexcept { return ret_edges.size() + 1; }

    static std::vector<double> uniform_obi_edges(std::size_t bins) {
        if (bins == 0) throw ConfigError("need at least one OBI bin");
        std::vector<double> e(bins + 1);
        for (std::size_t k = 0; k <= bins; ++k) e[k] = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(bins);
        e.front() = -1.0;
        e.back() = 1.0;
        return e;
    }

    /// Symmetric return edges around zero. With an even bin count the
    /// central edge is 0 (zero falls in the upper mild bin); with an odd
    /// count the centre bin straddles zero. Outer edges sit at `theta`
    /// multiples spaced evenly, i.e. {-theta, 0, theta} for 4 bins and
    /// {-theta, theta} for 3.
    static std::vector<double> symmetric_return_edges(std::size_t bins, double theta) {
        if (bins < 2) throw ConfigError("need at least two return bins");
        if (!(theta > 0)) throw ConfigError("return threshold must be positive");
        const std::size_t m = (bins - 1) / 2;  // positive edges
        std::vector<double> e;
        for (std::size_t k = m; k >= 1; --k) e.push_back(-theta * static_cast<double>(k));
        if (bins % 2 == 0) e.push_back(0.0);
        for (std::size_t k = 1; k <= m; ++k) e.push_back(theta * static_cast<double>(k));
        return e;
    }

    static RegimeScheme make(std::size_t obi_bins, std::size_t ret_bins, double theta) {
        return {uniform_obi_edges(obi_bins), symmetric_return_edges(ret_bins, theta)};
    }

    void validate() const {
        if (obi_edges.size() < 2 || obi_edges.front() != -1.0 || obi_edges.back() != 1.0)
            throw ConfigError("OBI edges must span [-1, +1]");
        auto strictly = [](const std::vector<double>& v) {
            return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
        };
        if (!strictly(obi_edges) || !strictly(ret_edges)) throw ConfigError("regime edges must be strictly increasing");
    }
};

/// Return threshold theta: the `level` quantile of |r| (linear
/// interpolation). Falls back to the smallest positive |r|, then to 1e-12,
/// so the edges stay strictly increasing on degenerate sessions.
inline double return_threshold(std::span<const double> returns, double level = 0.6) {
    std::vector<double> a;
    a.reserve(returns.size());
    for (double r : returns)
        if (std::isfinite(r)) a.push_back(std::abs(r));
    if (a.empty()) return 1e-12;
    std::sort(a.begin(), a.end());
    const double pos = level * static_cast<double>(a.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, a.size() - 1);
    double theta = a[lo] + (pos - static_cast<double>(lo)) * (a[hi] - a[lo]);
    if (theta > 0) return theta;
    auto it = std::upper_bound(a.begin(), a.end(), 0.0);
    return it != a.end() ? *it : 1e-12;
}

inline std::size_t discretize_obi(double value, const RegimeScheme& scheme) {
    if (!(value >= -1.0 && value <= 1.0)) throw DomainError("OBI value outside [-1, 1]");
    const auto& e = scheme.obi_edges;
    if (value >= e.back()) return scheme.obi_bins() - 1;
    const auto it = std::upper_bound(e.begin(), e.end(), value);
    return static_cast<std::size_t>(it - e.begin()) - 1;
}

inline std::size_t discretize_return(double value, const RegimeScheme& scheme) {
    if (!std::isfinite(value)) throw DomainError("return must be finite");
    const auto& e = scheme.ret_edges;
    return static_cast<std::size_t>(std::upper_bound(e.begin(), e.end(), value) - e.begin());
}

struct RegimeVectors {
    Nanos anchor{0};
    std::vector<int> q_vec;  // OBI regime occupancy counts
    std::vector<int> r_vec;  // one-hot return regime
};

struct RegimeBuild {
    std::vector<RegimeVectors> vectors;
    std::size_t excluded{0};  // windows without a return or without any OBI sample
};

/// One RegimeVectors per window that has a return and at least one valid
/// intra-window OBI sample. `samples` selects the sub-sampled series, e.g.
/// &WindowSignal::sub_obi or &WindowSignal::sub_trade_obi.
inline RegimeBuild build_regime_vectors(std::span<const WindowSignal> signals, const RegimeScheme& scheme,
                                        std::vector<std::optional<double>> WindowSignal::*samples = &WindowSignal::sub_obi,
                                        std::optional<double> WindowSignal::*ret = &WindowSignal::ret) {
    RegimeBuild out;
    for (const auto& s : signals) {
        const auto& r = s.*ret;
        RegimeVectors v{s.anchor, std::vector<int>(scheme.obi_bins(), 0), std::vector<int>(scheme.ret_bins(), 0)};
        int n = 0;
        for (const auto& x : s.*samples)
            if (x) {
                ++v.q_vec[discretize_obi(*x, scheme)];
                ++n;
            }
        if (!r || n == 0) {
            ++out.excluded;
            continue;
        }
        v.r_vec[discretize_return(*r, scheme)] = 1;
        out.vectors.push_back(std::move(v));
    }
    return out;
}

inline void write_regime_csv(std::ostream& out, std::span<const RegimeVectors> vectors) {
    if (vectors.empty()) {
        out << "anchor_ns\n";
        return;
    }
    out << "anchor_ns";
    for (std::size_t i = 0; i < vectors.front().q_vec.size(); ++i) out << ",q" << i;
    for (std::size_t j = 0; j < vectors.front().r_vec.size(); ++j) out << ",r" << j;
    out << '\n';
    for (const auto& v : vectors) {
        out << v.anchor.count();
        for (int q : v.q_vec) out << ',' << q;
        for (int r : v.r_vec) out << ',' << r;
        out << '\n';
    }
}

}  // namespace lobfilt
