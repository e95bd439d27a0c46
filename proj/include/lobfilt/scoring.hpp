#pragma once

#include <lobfilt/regimes.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace lobfilt {

// ---------------------------------------------------------------------------
// Pearson correlation

/// Product-moment correlation, accumulated in one pass (Welford). Absent
/// for fewer than three points or a constant series.
inline std::optional<double> pearson_score(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DomainError("pearson_score: series lengths differ");
    if (x.size() < 3) return std::nullopt;
    double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(i + 1);
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x[i] - mx);
        syy += dy * (y[i] - my);
        sxy += dx * (y[i] - my);
    }
    if (!(sxx > 0) || !(syy > 0)) return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

using OptSeries = std::vector<std::optional<double>>;

/// Correlation of x[i] against y[i + lag] over indices where both exist.
inline std::optional<double> lagged_pearson_at(const OptSeries& x, const OptSeries& y, std::ptrdiff_t lag) {
    std::vector<double> a, b;
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(x.size()); ++i) {
        const std::ptrdiff_t j = i + lag;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(y.size())) continue;
        if (!x[static_cast<std::size_t>(i)] || !y[static_cast<std::size_t>(j)]) continue;
        a.push_back(*x[static_cast<std::size_t>(i)]);
        b.push_back(*y[static_cast<std::size_t>(j)]);
    }
    return pearson_score(a, b);
}

/// Lags in grid steps; entries are absent when overlap is insufficient.
inline std::map<std::ptrdiff_t, std::optional<double>> lagged_pearson(const OptSeries& x, const OptSeries& y,
                                                                      std::span<const std::ptrdiff_t> lags) {
    std::map<std::ptrdiff_t, std::optional<double>> out;
    for (auto lag : lags) out[lag] = lagged_pearson_at(x, y, lag);
    return out;
}

// ---------------------------------------------------------------------------
// Autoregressive residualization

struct ArFit {
    std::vector<double> residuals;  // length n - max_order, mean removed
    int order{0};
    std::vector<double> coefficients;  // intercept first, then lags 1..order
    bool fallback{false};              // singular design, Yule-Walker AR(1) used
};

/// Least-squares AR(p) for p in 1..max_order, picked by AIC. All candidate
/// orders are fitted on the common sample t = max_order..n-1 so their AIC
/// values are comparable, and residuals are aligned to that sample.
inline ArFit ar_residualize(std::span<const double> series, int max_order) {
    if (max_order < 1) throw DomainError("ar_residualize: max_order must be >= 1");
    const auto n = static_cast<Eigen::Index>(series.size());
    if (n <= 10 * max_order) throw DomainError("ar_residualize: series too short for requested order");

    const Eigen::Index rows = n - max_order;
    const Eigen::Map<const Eigen::VectorXd> s(series.data(), n);
    const Eigen::VectorXd target = s.tail(rows);

    ArFit best;
    double best_aic = std::numeric_limits<double>::infinity();
    for (int p = 1; p <= max_order; ++p) {
        Eigen::MatrixXd X(rows, p + 1);
        X.col(0).setOnes();
        for (int k = 1; k <= p; ++k) X.col(k) = s.segment(max_order - k, rows);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < X.cols()) continue;
        const Eigen::VectorXd beta = qr.solve(target);
        const Eigen::VectorXd resid = target - X * beta;
        const double sse = resid.squaredNorm();
        const double aic = static_cast<double>(rows) * std::log(std::max(sse / static_cast<double>(rows), 1e-300)) +
                           2.0 * static_cast<double>(p + 1);
        if (aic < best_aic) {
            best_aic = aic;
            best.order = p;
            best.coefficients.assign(beta.data(), beta.data() + beta.size());
            best.residuals.assign(resid.data(), resid.data() + resid.size());
        }
    }

    if (best.order == 0) {
        // Yule-Walker AR(1); a constant series gives phi = 0.
        const double mean = s.mean();
        const Eigen::VectorXd c = s.array() - mean;
        const double denom = c.squaredNorm();
        const double phi = denom > 0 ? c.head(n - 1).dot(c.tail(n - 1)) / denom : 0.0;
        best.order = 1;
        best.fallback = true;
        best.coefficients = {mean * (1 - phi), phi};
        best.residuals.resize(static_cast<std::size_t>(rows));
        for (Eigen::Index t = 0; t < rows; ++t)
            best.residuals[static_cast<std::size_t>(t)] = c(max_order + t) - phi * c(max_order + t - 1);
    }

    double m = 0;
    for (double r : best.residuals) m += r;
    m /= static_cast<double>(best.residuals.size());
    for (double& r : best.residuals) r -= m;
    return best;
}

/// Largest usable AR order for a series of length n, capped at `cap`.
inline int feasible_ar_order(std::size_t n, int cap) {
    const int by_len = static_cast<int>((n == 0 ? 0 : n - 1) / 10);
    return std::min(cap, by_len);
}

// ---------------------------------------------------------------------------
// Regime-space scores

/// Which sign of OBI/return co-movement counts as aligned. OBI is
/// sell-minus-buy, so the default treats positive OBI with negative returns
/// as the aligned pairing.
enum class Alignment : std::uint8_t { Opposite, Same };

inline double regime_direction(std::size_t bin, std::size_t bins) {
    if (bins < 2) return 0.0;
    const double half = static_cast<double>(bins - 1) / 2.0;
    return (static_cast<double>(bin) - half) / half;
}

/// Diagonality mask over (OBI bin, return bin). Entry sign is +1 for
/// aligned pairs and -1 for anti-aligned pairs, weighted by a Gaussian in
/// the magnitude mismatch; zero for the neutral OBI bin.
inline Eigen::MatrixXd alignment_mask(std::size_t obi_bins, std::size_t ret_bins, double sigma = 0.5,
                                      Alignment orient = Alignment::Opposite) {
    const double flip = orient == Alignment::Opposite ? -1.0 : 1.0;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(obi_bins), static_cast<Eigen::Index>(ret_bins));
    for (std::size_t i = 0; i < obi_bins; ++i) {
        const double u = regime_direction(i, obi_bins);
        for (std::size_t j = 0; j < ret_bins; ++j) {
            const double v = flip * regime_direction(j, ret_bins);
            const double s = (u * v > 0) - (u * v < 0);
            const double d = std::abs(u) - std::abs(v);
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                s * std::exp(-d * d / (2.0 * sigma * sigma));
        }
    }
    return m;
}

struct RegimeMatrices {
    Eigen::MatrixXd q;  // windows x obi_bins
    Eigen::MatrixXd r;  // windows x ret_bins
};

inline RegimeMatrices to_matrices(std::span<const RegimeVectors> vectors) {
    RegimeMatrices m;
    if (vectors.empty()) return m;
    const auto nq = static_cast<Eigen::Index>(vectors.front().q_vec.size());
    const auto nr = static_cast<Eigen::Index>(vectors.front().r_vec.size());
    const auto n = static_cast<Eigen::Index>(vectors.size());
    m.q.resize(n, nq);
    m.r.resize(n, nr);
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto& v = vectors[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < nq; ++i) m.q(t, i) = v.q_vec[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < nr; ++j) m.r(t, j) = v.r_vec[static_cast<std::size_t>(j)];
    }
    return m;
}

/// Pairs q at row t with r at row t + lag.
inline RegimeMatrices lag_align(const RegimeMatrices& m, Eigen::Index lag) {
    const Eigen::Index n = m.q.rows() - lag;
    if (lag < 0 || n <= 0) return {Eigen::MatrixXd(0, m.q.cols()), Eigen::MatrixXd(0, m.r.cols())};
    return {m.q.topRows(n), m.r.middleRows(lag, n)};
}

/// Residualizes every column with an AR(p) fit. All columns share the same
/// max order so rows stay aligned (the first `max_order` rows are dropped).
inline RegimeMatrices residualize_columns(const RegimeMatrices& m, int max_order) {
    auto column_resid = [max_order](const Eigen::MatrixXd& a) {
        const Eigen::Index rows = a.rows() - max_order;
        Eigen::MatrixXd out(rows, a.cols());
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            const Eigen::VectorXd col = a.col(c);
            const auto fit = ar_residualize(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), max_order);
            out.col(c) = Eigen::Map<const Eigen::VectorXd>(fit.residuals.data(), rows);
        }
        return out;
    };
    return {column_resid(m.q), column_resid(m.r)};
}

/// Contiguous block boundaries: `blocks` nearly equal parts of n rows.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> block_ranges(Eigen::Index n, int blocks) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    if (blocks <= 0 || n <= 0) return out;
    for (int b = 0; b < blocks; ++b) {
        const Eigen::Index lo = n * b / blocks;
        const Eigen::Index hi = n * (b + 1) / blocks;
        if (hi > lo) out.emplace_back(lo, hi - lo);
    }
    return out;
}

struct MaskedCorrelation {
    std::optional<double> score;
    Eigen::MatrixXd mean_corr;      // obi_bins x ret_bins, averaged over blocks
    int blocks{0};
    std::size_t degenerate_entries{0};  // (block, i, j) triples with a constant component
};

/// Averages per-block correlation matrices between q components and r
/// components, then sums the mask-weighted entries (signed).
inline MaskedCorrelation masked_regime_correlation(const RegimeMatrices& m, const Eigen::MatrixXd& mask,
                                                   int blocks = 20) {
    MaskedCorrelation out;
    const Eigen::Index nq = m.q.cols(), nr = m.r.cols();
    if (mask.rows() != nq || mask.cols() != nr) throw DomainError("mask shape does not match regime vectors");
    out.mean_corr = Eigen::MatrixXd::Zero(nq, nr);
    const int b = static_cast<int>(std::min<Eigen::Index>(blocks, m.q.rows() / 2));
    if (b < 2) return out;

    for (const auto& [lo, len] : block_ranges(m.q.rows(), b)) {
        const Eigen::MatrixXd q = m.q.middleRows(lo, len).rowwise() - m.q.middleRows(lo, len).colwise().mean();
        const Eigen::MatrixXd r = m.r.middleRows(lo, len).rowwise() - m.r.middleRows(lo, len).colwise().mean();
        const Eigen::VectorXd qn = q.colwise().norm();
        const Eigen::VectorXd rn = r.colwise().norm();
        const Eigen::MatrixXd cross = q.transpose() * r;
        for (Eigen::Index i = 0; i < nq; ++i)
            for (Eigen::Index j = 0; j < nr; ++j) {
                const double d = qn(i) * rn(j);
                if (d > 1e-300) out.mean_corr(i, j) += std::clamp(cross(i, j) / d, -1.0, 1.0);
                else ++out.degenerate_entries;
            }
        ++out.blocks;
    }
    out.mean_corr /= out.blocks;
    out.score = mask.cwiseProduct(out.mean_corr).sum();
    return out;
}

inline MaskedCorrelation masked_regime_correlation(std::span<const RegimeVectors> vectors, const Eigen::MatrixXd& mask,
                                                   int blocks = 20) {
    return masked_regime_correlation(to_matrices(vectors), mask, blocks);
}

struct RegimeR2 {
    std::optional<double> score;
    int blocks{0};
    int ridge_blocks{0};     // rank-deficient designs solved with a 1e-8 ridge
    int skipped_blocks{0};   // too few rows or constant target
    std::vector<double> block_r2;
};

/// Per block, OLS of the return-regime rows on [1, q] and the pooled R^2
/// over all return components; the score is the sum of block R^2 values.
inline RegimeR2 regime_r2(const RegimeMatrices& m, int blocks = 20, double ridge = 1e-8) {
    RegimeR2 out;
    const Eigen::Index p = m.q.cols() + 1;
    for (const auto& [lo, len] : block_ranges(m.q.rows(), blocks)) {
        if (len <= p) {
            ++out.skipped_blocks;
            continue;
        }
        Eigen::MatrixXd X(len, p);
        X.col(0).setOnes();
        X.rightCols(p - 1) = m.q.middleRows(lo, len);
        const Eigen::MatrixXd Y = m.r.middleRows(lo, len);
        const double sst = (Y.rowwise() - Y.colwise().mean()).squaredNorm();
        if (!(sst > 0)) {
            ++out.skipped_blocks;
            continue;
        }
        Eigen::MatrixXd beta;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < p) {
            const Eigen::MatrixXd G = X.transpose() * X + ridge * Eigen::MatrixXd::Identity(p, p);
            beta = G.ldlt().solve(X.transpose() * Y);
            ++out.ridge_blocks;
        } else {
            beta = qr.solve(Y);
        }
        const double sse = (Y - X * beta).squaredNorm();
        const double r2 = 1.0 - sse / sst;
        out.block_r2.push_back(r2);
        ++out.blocks;
    }
    if (out.blocks > 0) {
        double s = 0;
        for (double v : out.block_r2) s += v;
        out.score = s;
    }
    return out;
}

/// Index-lag form: regresses R at window t + lag on Q at window t.
inline RegimeR2 regime_r2(std::span<const RegimeVectors> vectors, Eigen::Index lag, int blocks = 20) {
    return regime_r2(lag_align(to_matrices(vectors), lag), blocks);
}

}  // namespace lobfilt
