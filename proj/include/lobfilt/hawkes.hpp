#pragma once

#include <lobfilt/scoring.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace lobfilt::hawkes {

struct MarkedEvent {
    double t{0};  // seconds from the stream origin
    int dim{0};

    friend bool operator==(const MarkedEvent&, const MarkedEvent&) = default;
};

struct MarkedEventStream {
    std::vector<MarkedEvent> events;  // nondecreasing in t
    double horizon{0};
    int dims{0};

    std::vector<std::size_t> counts() const {
        std::vector<std::size_t> c(static_cast<std::size_t>(dims), 0);
        for (const auto& e : events) ++c[static_cast<std::size_t>(e.dim)];
        return c;
    }
};

/// Multivariate Hawkes parameters with sum-of-exponentials kernels
///   phi_ij(t) = sum_k a_ijk exp(-beta_k t)
/// where i is the excited (target) dimension and j the source.
struct KernelEstimate {
    int dims{0};
    std::vector<double> decays;      // beta_k, per second
    Eigen::VectorXd mu;              // baseline intensities, events per second
    std::vector<double> amplitudes;  // a_ijk at (i * dims + j) * K + k

    // Filled by fit().
    double loglik{0};
    int iterations{0};
    bool converged{false};

    std::size_t K() const noexcept { return decays.size(); }

    double& a(int i, int j, std::size_t k) { return amplitudes[(static_cast<std::size_t>(i * dims + j)) * K() + k]; }
    double a(int i, int j, std::size_t k) const {
        return amplitudes[(static_cast<std::size_t>(i * dims + j)) * K() + k];
    }

    static KernelEstimate zeros(int dims, std::vector<double> decays) {
        KernelEstimate est;
        est.dims = dims;
        est.decays = std::move(decays);
        est.mu = Eigen::VectorXd::Zero(dims);
        est.amplitudes.assign(static_cast<std::size_t>(dims * dims) * est.decays.size(), 0.0);
        return est;
    }

    /// Phi(i, j) = integral of phi_ij = sum_k a_ijk / beta_k.
    Eigen::MatrixXd norm_matrix() const {
        Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(dims, dims);
        for (int i = 0; i < dims; ++i)
            for (int j = 0; j < dims; ++j)
                for (std::size_t k = 0; k < K(); ++k) phi(i, j) += a(i, j, k) / decays[k];
        return phi;
    }

    double spectral_radius() const {
        if (dims == 0) return 0;
        Eigen::EigenSolver<Eigen::MatrixXd> es(norm_matrix(), false);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }

    void validate() const {
        if (mu.size() != dims || amplitudes.size() != static_cast<std::size_t>(dims * dims) * K())
            throw DomainError("kernel estimate has inconsistent dimensions");
        for (double b : decays)
            if (!(b > 0)) throw DomainError("decay rates must be positive");
    }
};

// ---------------------------------------------------------------------------
// Regime-labelled point process

enum class ObiPlacement : std::uint8_t { SubSample, Anchor };

/// Builds the joint OBI/return regime stream. OBI regimes occupy dimensions
/// 0..obi_bins-1 and return regimes obi_bins..obi_bins+ret_bins-1. With
/// sub-sample placement each intra-window OBI sample becomes an event at the
/// end of its sub-window; with anchor placement the window-level OBI is
/// placed at the anchor. Each window with a return adds one event at its
/// anchor.
inline MarkedEventStream build_marked_stream(std::span<const WindowSignal> windows, const WindowGrid& grid,
                                             const RegimeScheme& scheme, Nanos origin, double horizon,
                                             std::vector<std::optional<double>> WindowSignal::*samples,
                                             std::optional<double> WindowSignal::*window_value,
                                             std::optional<double> WindowSignal::*ret = &WindowSignal::ret,
                                             ObiPlacement placement = ObiPlacement::SubSample) {
    MarkedEventStream out;
    out.horizon = horizon;
    out.dims = static_cast<int>(scheme.obi_bins() + scheme.ret_bins());
    const int ret_base = static_cast<int>(scheme.obi_bins());
    for (const auto& w : windows) {
        if (placement == ObiPlacement::SubSample) {
            const auto& xs = w.*samples;
            for (std::size_t k = 0; k < xs.size(); ++k) {
                if (!xs[k]) continue;
                const Nanos at = w.anchor - grid.h + grid.sub * static_cast<Nanos::rep>(k + 1);
                out.events.push_back({to_seconds(at - origin), static_cast<int>(discretize_obi(*xs[k], scheme))});
            }
        } else if (const auto& x = w.*window_value) {
            out.events.push_back({to_seconds(w.anchor - origin), static_cast<int>(discretize_obi(*x, scheme))});
        }
        if (const auto& r = w.*ret)
            out.events.push_back({to_seconds(w.anchor - origin), ret_base + static_cast<int>(discretize_return(*r, scheme))});
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const MarkedEvent& a, const MarkedEvent& b) { return a.t < b.t; });
    return out;
}

// ---------------------------------------------------------------------------
// Likelihood

namespace detail {

/// Walks the stream keeping S_jk(t) = sum_{t_m < t, dim j} exp(-beta_k (t - t_m)).
/// Events sharing a timestamp do not excite each other. `visit(event, S)`
/// is called with the state just before each event.
template <typename Visit>
void sweep(const MarkedEventStream& s, std::span<const double> decays, Visit&& visit) {
    const std::size_t K = decays.size();
    const auto D = static_cast<std::size_t>(s.dims);
    std::vector<double> state(D * K, 0.0);
    double t_state = 0;
    std::size_t i = 0;
    while (i < s.events.size()) {
        const double t = s.events[i].t;
        for (std::size_t k = 0; k < K; ++k) {
            const double f = std::exp(-decays[k] * (t - t_state));
            for (std::size_t j = 0; j < D; ++j) state[j * K + k] *= f;
        }
        t_state = t;
        std::size_t end = i;
        while (end < s.events.size() && s.events[end].t == t) ++end;
        for (std::size_t n = i; n < end; ++n) visit(s.events[n], std::span<const double>(state));
        for (std::size_t n = i; n < end; ++n)
            for (std::size_t k = 0; k < K; ++k) state[static_cast<std::size_t>(s.events[n].dim) * K + k] += 1.0;
        i = end;
    }
}

/// G_jk = sum_{m in j} (1 - exp(-beta_k (T - t_m))) / beta_k.
inline std::vector<double> compensator_terms(const MarkedEventStream& s, std::span<const double> decays) {
    const std::size_t K = decays.size();
    std::vector<double> g(static_cast<std::size_t>(s.dims) * K, 0.0);
    for (const auto& e : s.events)
        for (std::size_t k = 0; k < K; ++k)
            g[static_cast<std::size_t>(e.dim) * K + k] += -std::expm1(-decays[k] * (s.horizon - e.t)) / decays[k];
    return g;
}

}  // namespace detail

/// Exact log-likelihood using recursive intensity updates, O(events * dims * K).
inline double loglik(const KernelEstimate& p, const MarkedEventStream& s) {
    p.validate();
    if (p.dims != s.dims) throw DomainError("loglik: dimension mismatch");
    const std::size_t K = p.K();
    const int D = p.dims;
    long double ll = 0;
    detail::sweep(s, p.decays, [&](const MarkedEvent& e, std::span<const double> state) {
        double lambda = p.mu(e.dim);
        for (int j = 0; j < D; ++j)
            for (std::size_t k = 0; k < K; ++k) lambda += p.a(e.dim, j, k) * state[static_cast<std::size_t>(j) * K + k];
        if (!(lambda > 0)) throw DomainError("loglik: nonpositive intensity at t=" + std::to_string(e.t));
        ll += std::log(static_cast<long double>(lambda));
    });
    const auto g = detail::compensator_terms(s, p.decays);
    for (int i = 0; i < D; ++i) {
        ll -= p.mu(i) * s.horizon;
        for (int j = 0; j < D; ++j)
            for (std::size_t k = 0; k < K; ++k) ll -= p.a(i, j, k) * g[static_cast<std::size_t>(j) * K + k];
    }
    return static_cast<double>(ll);
}

// ---------------------------------------------------------------------------
// Fitting

struct FitOptions {
    int max_iterations{2000};
    double rel_tolerance{1e-8};
};

namespace detail {

struct DimProblem {
    Eigen::MatrixXd X;  // events of this target dim x (1 + D*K): [1, S_jk]
    Eigen::VectorXd c;  // [T, G_jk]
};

inline double objective(const DimProblem& p, const Eigen::VectorXd& w) {
    const Eigen::VectorXd lam = p.X * w;
    if ((lam.array() <= 0).any()) return -std::numeric_limits<double>::infinity();
    return lam.array().log().sum() - p.c.dot(w);
}

struct DimResult {
    Eigen::VectorXd w;
    double f{0};
    int iterations{0};
    bool converged{false};
};

/// Projected, diagonally scaled gradient ascent on the concave per-dimension
/// likelihood, with Armijo backtracking along the projection arc. With unit
/// step and scaling w/c the update coincides with an EM step.
inline DimResult maximize(const DimProblem& p, const FitOptions& opt) {
    const Eigen::Index P = p.c.size();
    const double n = static_cast<double>(p.X.rows());
    DimResult r;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(P);
    Eigen::VectorXd active = Eigen::VectorXd::Zero(P);
    int n_active = 0;
    for (Eigen::Index q = 1; q < P; ++q)
        if (p.c(q) > 0) {
            active(q) = 1;
            ++n_active;
        }
    w(0) = (n_active > 0 ? 0.5 : 1.0) * n / p.c(0);
    for (Eigen::Index q = 1; q < P; ++q)
        if (active(q) > 0) w(q) = 0.5 * n / (p.c(q) * n_active);
    const Eigen::VectorXd floor = (w * 1e-3).cwiseMax(1e-12);

    double f = objective(p, w);
    double step = 1.0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        r.iterations = it + 1;
        const Eigen::VectorXd lam = p.X * w;
        const Eigen::VectorXd grad = p.X.transpose() * lam.cwiseInverse() - p.c;
        Eigen::VectorXd dir = (w.cwiseMax(floor).array() / p.c.array().max(1e-300) * grad.array()).matrix();
        for (Eigen::Index q = 1; q < P; ++q)
            if (active(q) == 0) dir(q) = 0;

        step = std::min(step * 2.0, 64.0);
        bool accepted = false;
        Eigen::VectorXd w_new;
        double f_new = f;
        while (step > 1e-12) {
            w_new = (w + step * dir).cwiseMax(0.0);
            f_new = objective(p, w_new);
            if (f_new >= f + 1e-4 * grad.dot(w_new - w)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            r.converged = true;  // no ascent direction left
            break;
        }
        const double change = std::abs(f_new - f) / std::max(std::abs(f), 1e-300);
        w = w_new;
        f = f_new;
        if (change < opt.rel_tolerance) {
            r.converged = true;
            break;
        }
    }
    r.w = w;
    r.f = f;
    return r;
}

}  // namespace detail

/// Maximum-likelihood baselines and amplitudes for fixed decays, subject to
/// nonnegativity. The likelihood separates over target dimensions, so each
/// dimension is fitted independently; a dimension without events is
/// baseline-only with mu = 0.
inline KernelEstimate fit(const MarkedEventStream& s, std::vector<double> decays, const FitOptions& opt = {}) {
    if (decays.empty()) throw DomainError("fit: need at least one decay rate");
    for (double b : decays)
        if (!(b > 0)) throw DomainError("fit: decay rates must be positive");
    if (!(s.horizon > 0)) throw DomainError("fit: horizon must be positive");

    const int D = s.dims;
    const std::size_t K = decays.size();
    const auto P = static_cast<Eigen::Index>(1 + static_cast<std::size_t>(D) * K);
    KernelEstimate est = KernelEstimate::zeros(D, decays);

    const auto counts = s.counts();
    std::vector<detail::DimProblem> probs(static_cast<std::size_t>(D));
    std::vector<Eigen::Index> fill(static_cast<std::size_t>(D), 0);
    const auto g = detail::compensator_terms(s, decays);
    for (int i = 0; i < D; ++i) {
        auto& pr = probs[static_cast<std::size_t>(i)];
        pr.X.resize(static_cast<Eigen::Index>(counts[static_cast<std::size_t>(i)]), P);
        pr.c.resize(P);
        pr.c(0) = s.horizon;
        for (Eigen::Index q = 1; q < P; ++q) pr.c(q) = g[static_cast<std::size_t>(q - 1)];
    }
    detail::sweep(s, decays, [&](const MarkedEvent& e, std::span<const double> state) {
        auto& pr = probs[static_cast<std::size_t>(e.dim)];
        const Eigen::Index row = fill[static_cast<std::size_t>(e.dim)]++;
        pr.X(row, 0) = 1.0;
        for (Eigen::Index q = 1; q < P; ++q) pr.X(row, q) = state[static_cast<std::size_t>(q - 1)];
    });

    est.converged = true;
    for (int i = 0; i < D; ++i) {
        const auto& pr = probs[static_cast<std::size_t>(i)];
        if (pr.X.rows() == 0) continue;
        const auto r = detail::maximize(pr, opt);
        est.mu(i) = r.w(0);
        for (int j = 0; j < D; ++j)
            for (std::size_t k = 0; k < K; ++k)
                est.a(i, j, k) = r.w(static_cast<Eigen::Index>(1 + static_cast<std::size_t>(j) * K + k));
        est.iterations = std::max(est.iterations, r.iterations);
        est.converged = est.converged && r.converged;
    }
    est.loglik = loglik(est, s);
    return est;
}

// ---------------------------------------------------------------------------
// Excitation score

/// Return-regime rows against OBI-regime columns; positive weight only for
/// sign-aligned pairs, Gaussian in the magnitude mismatch.
inline Eigen::MatrixXd excitation_mask(std::size_t obi_bins, std::size_t ret_bins, double sigma = 0.5,
                                       Alignment orient = Alignment::Opposite) {
    const double flip = orient == Alignment::Opposite ? -1.0 : 1.0;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ret_bins), static_cast<Eigen::Index>(obi_bins));
    for (std::size_t j = 0; j < ret_bins; ++j) {
        const double v = flip * regime_direction(j, ret_bins);
        for (std::size_t i = 0; i < obi_bins; ++i) {
            const double u = regime_direction(i, obi_bins);
            if (u * v <= 0) continue;
            const double d = std::abs(u) - std::abs(v);
            m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = std::exp(-d * d / (2.0 * sigma * sigma));
        }
    }
    return m;
}

/// Entrywise l1 norm of the masked OBI -> return block of Phi. The
/// within-OBI and within-return blocks do not enter.
inline double excitation_score(const KernelEstimate& est, const Eigen::MatrixXd& mask) {
    const Eigen::Index nr = mask.rows(), nq = mask.cols();
    if (nr + nq != est.dims) throw DomainError("excitation mask does not match kernel dimensions");
    const Eigen::MatrixXd phi = est.norm_matrix();
    return phi.block(nq, 0, nr, nq).cwiseProduct(mask).cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Simulation

/// Ogata thinning. Between events every intensity decays, so the intensity
/// just after the last event bounds the process until the next one.
inline MarkedEventStream simulate_hawkes(const KernelEstimate& p, double horizon, std::uint64_t seed) {
    p.validate();
    if (p.spectral_radius() >= 1.0) throw DomainError("simulate_hawkes: spectral radius of Phi must be < 1");
    MarkedEventStream out;
    out.dims = p.dims;
    out.horizon = std::max(horizon, 0.0);
    if (!(horizon > 0)) return out;

    const std::size_t K = p.K();
    const int D = p.dims;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> state(static_cast<std::size_t>(D) * K, 0.0);
    std::vector<double> lambda(static_cast<std::size_t>(D));

    auto intensities = [&]() {
        double total = 0;
        for (int i = 0; i < D; ++i) {
            double l = p.mu(i);
            for (int j = 0; j < D; ++j)
                for (std::size_t k = 0; k < K; ++k) l += p.a(i, j, k) * state[static_cast<std::size_t>(j) * K + k];
            lambda[static_cast<std::size_t>(i)] = l;
            total += l;
        }
        return total;
    };

    double t = 0;
    double bound = intensities();
    while (bound > 0) {
        const double wait = -std::log1p(-unif(rng)) / bound;
        const double t_next = t + wait;
        if (t_next > horizon) break;
        for (std::size_t k = 0; k < K; ++k) {
            const double f = std::exp(-p.decays[k] * wait);
            for (int j = 0; j < D; ++j) state[static_cast<std::size_t>(j) * K + k] *= f;
        }
        t = t_next;
        const double total = intensities();
        const double u = unif(rng) * bound;
        if (u < total) {
            double acc = 0;
            int dim = D - 1;
            for (int i = 0; i < D; ++i) {
                acc += lambda[static_cast<std::size_t>(i)];
                if (u < acc) {
                    dim = i;
                    break;
                }
            }
            out.events.push_back({t, dim});
            for (std::size_t k = 0; k < K; ++k) state[static_cast<std::size_t>(dim) * K + k] += 1.0;
        }
        bound = intensities();
    }
    return out;
}

}  // namespace lobfilt::hawkes
