#pragma once

#include <lobfilt/book.hpp>
#include <lobfilt/filters.hpp>
#include <lobfilt/hawkes.hpp>
#include <lobfilt/ingest.hpp>
#include <lobfilt/lifecycle.hpp>
#include <lobfilt/regimes.hpp>
#include <lobfilt/scoring.hpp>
#include <lobfilt/signals.hpp>
#include <lobfilt/synth.hpp>

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace lobfilt {

enum class SignalVariant : std::uint8_t { BookObi, TradeObi };
enum class ReturnSource : std::uint8_t { Backward, Forward };

inline std::string to_string(SignalVariant v) { return v == SignalVariant::BookObi ? "book" : "trade"; }

struct RunConfig {
    std::vector<std::string> inputs;
    std::optional<synth::GeneratorConfig> generator;
    int synthetic_sessions{1};  // consecutive seeds starting at generator->seed

    SessionMeta meta{};
    TickSize tick{};

    std::vector<FilterSpec> filters;  // Unfiltered is always added

    Nanos h{10 * kSecond};
    Nanos stride{15 * kSecond};
    Nanos xi{1 * kSecond};
    Nanos sub{1 * kSecond};

    std::vector<Nanos> pearson_lags{1 * kSecond, 10 * kSecond, 30 * kSecond, 50 * kSecond, 80 * kSecond, 100 * kSecond};
    std::vector<Nanos> regime_lags{1 * kSecond, 10 * kSecond, 20 * kSecond};

    std::size_t obi_bins{9};
    std::size_t ret_bins{4};
    double theta_quantile{0.6};
    double mask_sigma{0.5};
    Alignment alignment{Alignment::Opposite};
    int blocks{20};
    int ar_max_order{5};

    std::vector<double> decays{0.1, 1.0, 10.0};
    hawkes::ObiPlacement placement{hawkes::ObiPlacement::SubSample};
    hawkes::FitOptions fit{};
    bool run_hawkes{true};
    bool run_scores{true};

    std::vector<SignalVariant> variants{SignalVariant::BookObi, SignalVariant::TradeObi};
    ReturnSource return_source{ReturnSource::Backward};

    std::string out_dir{};
    bool write_artifacts{true};
    int jobs{1};

    /// UF plus three thresholds for each scheme.
    static std::vector<FilterSpec> default_filter_grid() {
        return {FilterSpec::unfiltered(),
                FilterSpec::lifetime(100 * kMillisecond), FilterSpec::lifetime(500 * kMillisecond),
                FilterSpec::lifetime(1000 * kMillisecond),
                FilterSpec::modcount(1), FilterSpec::modcount(3), FilterSpec::modcount(5),
                FilterSpec::modtime(50 * kMillisecond), FilterSpec::modtime(100 * kMillisecond),
                FilterSpec::modtime(200 * kMillisecond)};
    }

    void normalize() {
        if (std::find(filters.begin(), filters.end(), FilterSpec::unfiltered()) == filters.end())
            filters.insert(filters.begin(), FilterSpec::unfiltered());
        if (filters.front() != FilterSpec::unfiltered()) {
            filters.erase(std::find(filters.begin(), filters.end(), FilterSpec::unfiltered()));
            filters.insert(filters.begin(), FilterSpec::unfiltered());
        }
    }

    void validate() const {
        if (inputs.empty() && !generator) throw ConfigError("no input files and no generator configured");
        if (generator) generator->validate();
        if (synthetic_sessions < 1) throw ConfigError("synthetic_sessions must be >= 1");
        if (obi_bins < 1 || ret_bins < 2) throw ConfigError("need >= 1 OBI bin and >= 2 return bins");
        if (!(theta_quantile > 0 && theta_quantile < 1)) throw ConfigError("theta_quantile must lie in (0, 1)");
        if (blocks < 1) throw ConfigError("blocks must be >= 1");
        if (ar_max_order < 1) throw ConfigError("ar_max_order must be >= 1");
        if (decays.empty()) throw ConfigError("need at least one Hawkes decay");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        if (variants.empty()) throw ConfigError("need at least one signal variant");
        meta.validate();
    }
};

// ---------------------------------------------------------------------------
// Results

struct CellScores {
    std::string row;  // date_filter label
    FilterSpec filter{FilterSpec::unfiltered()};
    SignalVariant variant{SignalVariant::BookObi};
    std::size_t windows{0};

    std::optional<double> s_rho, s_rho_ar;
    std::map<std::int64_t, std::optional<double>> pearson, pearson_ar;  // lag seconds -> score
    std::optional<double> cc0, cc0_ar, r2_0, r2_0_ar;
    std::map<std::int64_t, std::optional<double>> cc, cc_ar, r2, r2_ar;

    std::optional<double> s_phi;
    double spectral_radius{0};
    bool hawkes_converged{false};
    nlohmann::json kernel;

    std::size_t clamp_count{0};
    std::size_t retained_trades_of_excluded{0};
    std::size_t excluded_orders{0};
    std::string error;  // nonempty when the cell failed
};

struct SessionReport {
    std::string date;
    std::size_t events{0};
    std::size_t anchors{0};
    std::map<SignalVariant, std::size_t> common_windows;
    std::map<SignalVariant, std::size_t> excluded_windows;
    double theta{0};
    std::vector<CellScores> cells;
};

struct RunResult {
    std::vector<SessionReport> sessions;
    std::size_t failed_cells{0};
};

// ---------------------------------------------------------------------------

namespace detail {

inline std::int64_t whole_seconds(Nanos d) { return d.count() / kSecond.count(); }

inline std::string lag_name(Nanos d) {
    if (d.count() % kSecond.count() == 0) return std::to_string(whole_seconds(d)) + "s";
    return std::to_string(d.count() / kMillisecond.count()) + "ms";
}

/// Row label: "<date>_<code>" when the scheme appears once in the grid,
/// otherwise the thresholded label, e.g. "20230102_MTF-50ms".
inline std::string row_label(const std::string& date, const FilterSpec& f, const std::vector<FilterSpec>& grid) {
    const auto same_kind = std::count_if(grid.begin(), grid.end(), [&](const FilterSpec& g) { return g.kind() == f.kind(); });
    return date + "_" + (same_kind > 1 ? f.label() : f.code());
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index writes
/// only its own slot, so results do not depend on scheduling.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

inline std::optional<double> WindowSignal::*value_member(SignalVariant v) {
    return v == SignalVariant::BookObi ? &WindowSignal::obi : &WindowSignal::trade_obi;
}

inline std::vector<std::optional<double>> WindowSignal::*sample_member(SignalVariant v) {
    return v == SignalVariant::BookObi ? &WindowSignal::sub_obi : &WindowSignal::sub_trade_obi;
}

struct PairedSeries {
    std::vector<double> x, y;
};

/// Pearson of x against y, optionally after AR residualization of both.
inline std::optional<double> association(const PairedSeries& p, bool ar, int max_order) {
    if (!ar) return pearson_score(p.x, p.y);
    const int order = feasible_ar_order(p.x.size(), max_order);
    if (order < 1) return std::nullopt;
    const auto rx = ar_residualize(p.x, order);
    const auto ry = ar_residualize(p.y, order);
    return pearson_score(rx.residuals, ry.residuals);
}

inline RegimeMatrices maybe_residualize(const RegimeMatrices& m, bool ar, int max_order) {
    if (!ar) return m;
    const int order = feasible_ar_order(static_cast<std::size_t>(m.q.rows()), max_order);
    if (order < 1) return {Eigen::MatrixXd(0, m.q.cols()), Eigen::MatrixXd(0, m.r.cols())};
    return residualize_columns(m, order);
}

struct FilterData {
    ExclusionSet exclusion;
    FilteredStream stream;
    std::size_t clamp_count{0};
    std::vector<WindowSignal> signals;
};

struct Session {
    std::string date;
    std::vector<Event> events;
    SessionMeta meta;
};

inline std::string date_from_path(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    return out;
}

inline nlohmann::json kernel_json(const hawkes::KernelEstimate& est) {
    nlohmann::json j;
    j["dims"] = est.dims;
    j["decays"] = est.decays;
    j["mu"] = std::vector<double>(est.mu.data(), est.mu.data() + est.mu.size());
    j["amplitudes"] = est.amplitudes;
    const Eigen::MatrixXd phi = est.norm_matrix();
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(phi.cols()));
        for (Eigen::Index c = 0; c < phi.cols(); ++c) r[static_cast<std::size_t>(c)] = phi(i, c);
        rows.push_back(r);
    }
    j["norm_matrix"] = rows;
    j["converged"] = est.converged;
    j["iterations"] = est.iterations;
    j["loglik"] = est.loglik;
    j["spectral_radius"] = est.spectral_radius();
    return j;
}

}  // namespace detail

/// Scores one (filter, variant) cell over the common evaluation windows.
struct CellInputs {
    const std::vector<WindowSignal>* signals;           // all anchors for this filter
    const std::vector<std::size_t>* common;             // indices of the common windows
    const std::map<std::int64_t, std::vector<std::optional<double>>>* lagged_returns;  // lag ns -> per anchor
    const RegimeScheme* scheme;
    const WindowGrid* grid;
    Nanos origin;
    double horizon;
};

inline void score_cell(const RunConfig& cfg, const CellInputs& in, CellScores& out) {
    const auto value = detail::value_member(out.variant);
    const auto samples = detail::sample_member(out.variant);
    const auto ret = cfg.return_source == ReturnSource::Backward ? &WindowSignal::ret : &WindowSignal::fwd_ret;
    const auto& sig = *in.signals;
    out.windows = in.common->size();

    auto paired = [&](Nanos lag) {
        detail::PairedSeries p;
        for (std::size_t idx : *in.common) {
            const auto& x = sig[idx].*value;
            const auto y = lag == Nanos{0} ? sig[idx].*ret : in.lagged_returns->at(lag.count())[idx];
            if (!x || !y) continue;
            p.x.push_back(*x);
            p.y.push_back(*y);
        }
        return p;
    };

    auto regime_mats = [&](Nanos lag) {
        std::vector<RegimeVectors> vecs;
        for (std::size_t idx : *in.common) {
            WindowSignal w = sig[idx];
            w.ret = lag == Nanos{0} ? sig[idx].*ret : in.lagged_returns->at(lag.count())[idx];
            auto b = build_regime_vectors(std::span<const WindowSignal>(&w, 1), *in.scheme, samples, &WindowSignal::ret);
            for (auto& v : b.vectors) vecs.push_back(std::move(v));
        }
        return to_matrices(vecs);
    };

    if (cfg.run_scores) {
        const auto base = paired(Nanos{0});
        out.s_rho = detail::association(base, false, cfg.ar_max_order);
        out.s_rho_ar = detail::association(base, true, cfg.ar_max_order);
        for (Nanos lag : cfg.pearson_lags) {
            const auto p = paired(lag);
            out.pearson[detail::whole_seconds(lag)] = detail::association(p, false, cfg.ar_max_order);
            out.pearson_ar[detail::whole_seconds(lag)] = detail::association(p, true, cfg.ar_max_order);
        }

        const Eigen::MatrixXd mask = alignment_mask(in.scheme->obi_bins(), in.scheme->ret_bins(), cfg.mask_sigma, cfg.alignment);
        auto regime_scores = [&](Nanos lag, std::optional<double>& cc, std::optional<double>& cc_ar,
                                 std::optional<double>& r2, std::optional<double>& r2_ar) {
            const auto m = regime_mats(lag);
            cc = masked_regime_correlation(m, mask, cfg.blocks).score;
            r2 = regime_r2(m, cfg.blocks).score;
            const auto mr = detail::maybe_residualize(m, true, cfg.ar_max_order);
            cc_ar = masked_regime_correlation(mr, mask, cfg.blocks).score;
            r2_ar = regime_r2(mr, cfg.blocks).score;
        };
        regime_scores(Nanos{0}, out.cc0, out.cc0_ar, out.r2_0, out.r2_0_ar);
        for (Nanos lag : cfg.regime_lags) {
            const auto s = detail::whole_seconds(lag);
            regime_scores(lag, out.cc[s], out.cc_ar[s], out.r2[s], out.r2_ar[s]);
        }
    }

    if (cfg.run_hawkes) {
        std::vector<WindowSignal> windows;
        windows.reserve(in.common->size());
        for (std::size_t idx : *in.common) windows.push_back(sig[idx]);
        const auto stream = hawkes::build_marked_stream(windows, *in.grid, *in.scheme, in.origin, in.horizon, samples,
                                                        value, ret, cfg.placement);
        if (!stream.events.empty()) {
            const auto est = hawkes::fit(stream, cfg.decays, cfg.fit);
            const Eigen::MatrixXd m = hawkes::excitation_mask(in.scheme->obi_bins(), in.scheme->ret_bins(),
                                                              cfg.mask_sigma, cfg.alignment);
            out.s_phi = hawkes::excitation_score(est, m);
            out.spectral_radius = est.spectral_radius();
            out.hawkes_converged = est.converged;
            out.kernel = detail::kernel_json(est);
        }
    }
}

namespace detail {

inline std::vector<Session> load_sessions(const RunConfig& cfg) {
    std::vector<Session> out;
    for (const auto& path : cfg.inputs) {
        IngestOptions opts;
        opts.tick = cfg.tick;
        auto res = parse_tick_file(path, cfg.meta, opts);
        SessionMeta m = cfg.meta;
        m.trading_date = date_from_path(path);
        out.push_back({m.trading_date, std::move(res.events), m});
    }
    if (cfg.generator) {
        for (int k = 0; k < cfg.synthetic_sessions; ++k) {
            auto g = *cfg.generator;
            g.seed += static_cast<std::uint64_t>(k);
            auto s = synth::generate_session(g);
            out.push_back({s.meta.trading_date, std::move(s.events), s.meta});
        }
    }
    return out;
}

}  // namespace detail

/// Full grid for one session: filters -> streams -> signals -> common
/// windows -> per-(filter, variant) scores.
inline SessionReport run_session(const RunConfig& cfg, const detail::Session& session) {
    SessionReport rep;
    rep.date = session.date;
    rep.events = session.events.size();

    const auto lifecycles = build_lifecycles(session.events, session.meta.session_end);
    const auto grid = WindowGrid::make(session.meta.session_start, session.meta.session_end, cfg.h, cfg.stride, cfg.xi, cfg.sub);
    rep.anchors = grid.anchors.size();

    std::vector<detail::FilterData> data(cfg.filters.size());
    detail::parallel_for(cfg.filters.size(), cfg.jobs, [&](std::size_t f) {
        auto& d = data[f];
        d.exclusion = apply_filter(lifecycles, cfg.filters[f]);
        d.stream = apply_exclusion(session.events, d.exclusion);
        d.clamp_count = reconstruct_book(d.stream).clamp_count;
        d.signals = compute_signals(d.stream, grid);
    });

    // Trades are kept under every filter, so returns are filter-independent;
    // take them from the unfiltered stream.
    const auto& base = data.front().signals;
    const auto ret = cfg.return_source == ReturnSource::Backward ? &WindowSignal::ret : &WindowSignal::fwd_ret;
    std::vector<double> returns;
    for (const auto& s : base)
        if (s.*ret) returns.push_back(*(s.*ret));
    rep.theta = return_threshold(returns, cfg.theta_quantile);
    const RegimeScheme scheme = RegimeScheme::make(cfg.obi_bins, cfg.ret_bins, rep.theta);

    std::map<std::int64_t, std::vector<std::optional<double>>> lagged;
    {
        const SignalIndex idx(data.front().stream.events);
        std::vector<Nanos> lags = cfg.pearson_lags;
        lags.insert(lags.end(), cfg.regime_lags.begin(), cfg.regime_lags.end());
        for (Nanos lag : lags) {
            auto& v = lagged[lag.count()];
            if (!v.empty()) continue;
            v.reserve(grid.anchors.size());
            for (Nanos a : grid.anchors) {
                const Nanos at = a + lag;
                if (at > session.meta.session_end) {
                    v.push_back(std::nullopt);
                    continue;
                }
                v.push_back(cfg.return_source == ReturnSource::Backward ? idx.realized_return({at - cfg.h, at})
                                                                        : idx.realized_return({at, at + cfg.xi}));
            }
        }
    }

    // Identical evaluation windows: a window is kept only if it is valid
    // under every filter.
    std::map<SignalVariant, std::vector<std::size_t>> common;
    for (SignalVariant v : cfg.variants) {
        const auto value = detail::value_member(v);
        auto& c = common[v];
        for (std::size_t i = 0; i < grid.anchors.size(); ++i) {
            bool ok = (base[i].*ret).has_value();
            for (const auto& d : data) ok = ok && (d.signals[i].*value).has_value();
            if (ok) c.push_back(i);
        }
        rep.common_windows[v] = c.size();
        rep.excluded_windows[v] = grid.anchors.size() - c.size();
    }

    const double horizon = to_seconds(session.meta.session_end - session.meta.session_start);
    rep.cells.resize(cfg.filters.size() * cfg.variants.size());
    detail::parallel_for(rep.cells.size(), cfg.jobs, [&](std::size_t c) {
        const std::size_t f = c % cfg.filters.size();
        const SignalVariant v = cfg.variants[c / cfg.filters.size()];
        CellScores& cell = rep.cells[c];
        cell.filter = cfg.filters[f];
        cell.variant = v;
        cell.row = detail::row_label(session.date, cfg.filters[f], cfg.filters);
        cell.clamp_count = data[f].clamp_count;
        cell.retained_trades_of_excluded = data[f].stream.retained_trades_of_excluded;
        cell.excluded_orders = data[f].exclusion.excluded.size();
        try {
            const CellInputs in{&data[f].signals, &common.at(v), &lagged, &scheme, &grid,
                                session.meta.session_start, horizon};
            score_cell(cfg, in, cell);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    if (cfg.write_artifacts && !cfg.out_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path dir = fs::path(cfg.out_dir) / "artifacts" / session.date;
        for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
            const std::string label = cfg.filters[f].label();
            {
                auto o = detail::open_out(dir / ("signals_" + label + ".csv"));
                write_signal_csv(o, data[f].signals);
            }
            {
                auto o = detail::open_out(dir / ("excluded_" + label + ".txt"));
                write_exclusion_list(o, data[f].exclusion);
            }
            for (SignalVariant v : cfg.variants) {
                std::vector<WindowSignal> ws;
                for (std::size_t idx : common.at(v)) ws.push_back(data[f].signals[idx]);
                auto b = build_regime_vectors(ws, scheme, detail::sample_member(v), ret);
                auto o = detail::open_out(dir / ("regimes_" + to_string(v) + "_" + label + ".csv"));
                write_regime_csv(o, b.vectors);
            }
        }
        for (const auto& cell : rep.cells) {
            if (cell.kernel.is_null()) continue;
            auto o = detail::open_out(dir / ("kernel_" + to_string(cell.variant) + "_" + cell.filter.label() + ".json"));
            o << cell.kernel.dump(2) << '\n';
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Report tables

namespace detail {

inline std::string fmt(const std::optional<double>& v, int precision = 5) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
    return buf;
}

}  // namespace detail

struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write_csv(std::ostream& out) const {
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
            out << '\n';
        }
    }
};

/// Appendix-style tables per signal variant: Pearson by lag (with and
/// without AR correction), regime CC/R2 by lag, Hawkes SumExp, and a summary
/// of the contemporaneous scores with window counts.
inline std::vector<Table> build_tables(const RunConfig& cfg, const RunResult& res) {
    std::vector<Table> tables;
    for (SignalVariant v : cfg.variants) {
        const std::string vs = to_string(v);
        Table pr{"pearson_" + vs, {"Date_Filter"}, {}}, pr_ar{"pearson_" + vs + "_ar", {"Date_Filter"}, {}};
        for (Nanos lag : cfg.pearson_lags) {
            pr.header.push_back(detail::lag_name(lag));
            pr_ar.header.push_back(detail::lag_name(lag));
        }
        Table rg{"regime_" + vs, {"Date_Filter"}, {}}, rg_ar{"regime_" + vs + "_ar", {"Date_Filter"}, {}};
        for (Nanos lag : cfg.regime_lags) {
            for (Table* t : {&rg, &rg_ar}) {
                t->header.push_back("CC_" + detail::lag_name(lag));
                t->header.push_back("R2_" + detail::lag_name(lag));
            }
        }
        Table hk{"hawkes_" + vs, {"Date_Filter", "SumExp"}, {}};
        Table sm{"summary_" + vs,
                 {"Date_Filter", "S_rho", "S_rho_AR", "S_rho_lambda", "S_rho_lambda_AR", "S_R", "S_R_AR", "S_phi",
                  "windows", "excluded_orders", "clamped"},
                 {}};

        for (const auto& s : res.sessions) {
            for (const auto& c : s.cells) {
                if (c.variant != v) continue;
                std::vector<std::string> a{c.row}, b{c.row}, r1{c.row}, r2{c.row};
                for (Nanos lag : cfg.pearson_lags) {
                    const auto k = detail::whole_seconds(lag);
                    a.push_back(detail::fmt(c.pearson.count(k) ? c.pearson.at(k) : std::nullopt));
                    b.push_back(detail::fmt(c.pearson_ar.count(k) ? c.pearson_ar.at(k) : std::nullopt));
                }
                for (Nanos lag : cfg.regime_lags) {
                    const auto k = detail::whole_seconds(lag);
                    auto get = [&](const std::map<std::int64_t, std::optional<double>>& m) {
                        return m.count(k) ? m.at(k) : std::nullopt;
                    };
                    r1.push_back(detail::fmt(get(c.cc), 4));
                    r1.push_back(detail::fmt(get(c.r2), 4));
                    r2.push_back(detail::fmt(get(c.cc_ar), 4));
                    r2.push_back(detail::fmt(get(c.r2_ar), 4));
                }
                pr.rows.push_back(a);
                pr_ar.rows.push_back(b);
                rg.rows.push_back(r1);
                rg_ar.rows.push_back(r2);
                hk.rows.push_back({c.row, detail::fmt(c.s_phi, 4)});
                sm.rows.push_back({c.row, detail::fmt(c.s_rho), detail::fmt(c.s_rho_ar), detail::fmt(c.cc0, 4),
                                   detail::fmt(c.cc0_ar, 4), detail::fmt(c.r2_0, 4), detail::fmt(c.r2_0_ar, 4),
                                   detail::fmt(c.s_phi, 4), std::to_string(c.windows),
                                   std::to_string(c.excluded_orders), std::to_string(c.clamp_count)});
            }
        }
        for (Table* t : {&pr, &pr_ar, &rg, &rg_ar, &hk, &sm}) tables.push_back(std::move(*t));
    }
    return tables;
}

inline nlohmann::json report_json(const RunResult& res) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    auto optmap = [&](const std::map<std::int64_t, std::optional<double>>& m) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : m) j[std::to_string(k) + "s"] = opt(v);
        return j;
    };
    nlohmann::json j;
    j["sessions"] = nlohmann::json::array();
    for (const auto& s : res.sessions) {
        nlohmann::json js;
        js["date"] = s.date;
        js["events"] = s.events;
        js["anchors"] = s.anchors;
        js["theta"] = s.theta;
        for (const auto& [v, n] : s.common_windows) js["common_windows"][to_string(v)] = n;
        for (const auto& [v, n] : s.excluded_windows) js["excluded_windows"][to_string(v)] = n;
        js["cells"] = nlohmann::json::array();
        for (const auto& c : s.cells) {
            nlohmann::json jc;
            jc["row"] = c.row;
            jc["filter"] = c.filter.label();
            jc["variant"] = to_string(c.variant);
            jc["windows"] = c.windows;
            jc["S_rho"] = opt(c.s_rho);
            jc["S_rho_AR"] = opt(c.s_rho_ar);
            jc["S_rho_lambda"] = opt(c.cc0);
            jc["S_rho_lambda_AR"] = opt(c.cc0_ar);
            jc["S_R"] = opt(c.r2_0);
            jc["S_R_AR"] = opt(c.r2_0_ar);
            jc["S_phi"] = opt(c.s_phi);
            jc["pearson"] = optmap(c.pearson);
            jc["pearson_AR"] = optmap(c.pearson_ar);
            jc["CC"] = optmap(c.cc);
            jc["CC_AR"] = optmap(c.cc_ar);
            jc["R2"] = optmap(c.r2);
            jc["R2_AR"] = optmap(c.r2_ar);
            jc["spectral_radius"] = c.spectral_radius;
            jc["hawkes_converged"] = c.hawkes_converged;
            jc["excluded_orders"] = c.excluded_orders;
            jc["retained_trades_of_excluded"] = c.retained_trades_of_excluded;
            jc["clamp_count"] = c.clamp_count;
            if (!c.error.empty()) jc["error"] = c.error;
            js["cells"].push_back(jc);
        }
        j["sessions"].push_back(js);
    }
    return j;
}

inline void write_reports(const RunConfig& cfg, const RunResult& res) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    for (const auto& t : build_tables(cfg, res)) {
        auto o = detail::open_out(dir / (t.name + ".csv"));
        t.write_csv(o);
    }
    auto o = detail::open_out(dir / "report.json");
    o << report_json(res).dump(2) << '\n';
}

/// Runs every session of the configuration and, when an output directory is
/// set, writes the report tables and per-cell artifacts.
inline RunResult run_pipeline(RunConfig cfg) {
    cfg.normalize();
    cfg.validate();
    RunResult res;
    for (const auto& s : detail::load_sessions(cfg)) {
        res.sessions.push_back(run_session(cfg, s));
        for (const auto& c : res.sessions.back().cells)
            if (!c.error.empty()) ++res.failed_cells;
    }
    if (!cfg.out_dir.empty()) write_reports(cfg, res);
    return res;
}

// ---------------------------------------------------------------------------
// Key-value run configuration

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = synth::detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<Nanos> parse_durations(const std::string& s) {
    std::vector<Nanos> out;
    for (const auto& t : split(s, ',')) out.push_back(parse_duration(t));
    return out;
}

}  // namespace detail

/// Filter grid syntax: "uf; lf:100ms,500ms; mf:1,3,5; mtf:50ms".
inline std::vector<FilterSpec> parse_filter_grid(const std::string& text) {
    std::vector<FilterSpec> out;
    for (const auto& group : detail::split(text, ';')) {
        const auto colon = group.find(':');
        const std::string kind = synth::detail::trim(group.substr(0, colon));
        if (colon == std::string::npos) {
            out.push_back(parse_filter_spec(kind, ""));
            continue;
        }
        for (const auto& th : detail::split(group.substr(colon + 1), ',')) out.push_back(parse_filter_spec(kind, th));
    }
    return out;
}

/// Applies `key = value` settings; keys prefixed "generator." configure the
/// synthetic session generator.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key.rfind("generator.", 0) == 0) {
        if (!cfg.generator) cfg.generator.emplace();
        cfg.generator->set(key.substr(10), value);
        return;
    }
    auto to_int = [&] {
        try {
            return std::stoi(value);
        } catch (const std::exception&) {
            throw ConfigError("bad integer for " + key + ": '" + value + "'");
        }
    };
    auto to_double = [&] {
        try {
            return std::stod(value);
        } catch (const std::exception&) {
            throw ConfigError("bad number for " + key + ": '" + value + "'");
        }
    };
    if (key == "inputs") cfg.inputs = detail::split(value, ',');
    else if (key == "synthetic_sessions") cfg.synthetic_sessions = to_int();
    else if (key == "filters") cfg.filters = parse_filter_grid(value);
    else if (key == "tick_size") cfg.tick = TickSize(value);
    else if (key == "session_start") cfg.meta.session_start = parse_duration(value);
    else if (key == "session_end") cfg.meta.session_end = parse_duration(value);
    else if (key == "h") cfg.h = parse_duration(value);
    else if (key == "stride") cfg.stride = parse_duration(value);
    else if (key == "xi") cfg.xi = parse_duration(value);
    else if (key == "sub") cfg.sub = parse_duration(value);
    else if (key == "pearson_lags") cfg.pearson_lags = detail::parse_durations(value);
    else if (key == "regime_lags") cfg.regime_lags = detail::parse_durations(value);
    else if (key == "obi_bins") cfg.obi_bins = static_cast<std::size_t>(to_int());
    else if (key == "ret_bins") cfg.ret_bins = static_cast<std::size_t>(to_int());
    else if (key == "theta_quantile") cfg.theta_quantile = to_double();
    else if (key == "mask_sigma") cfg.mask_sigma = to_double();
    else if (key == "alignment") {
        if (value == "opposite") cfg.alignment = Alignment::Opposite;
        else if (value == "same") cfg.alignment = Alignment::Same;
        else throw ConfigError("alignment must be 'opposite' or 'same'");
    } else if (key == "blocks") cfg.blocks = to_int();
    else if (key == "ar_max_order") cfg.ar_max_order = to_int();
    else if (key == "decays") {
        cfg.decays.clear();
        for (const auto& d : detail::split(value, ',')) cfg.decays.push_back(std::stod(d));
    } else if (key == "placement") {
        if (value == "subsample") cfg.placement = hawkes::ObiPlacement::SubSample;
        else if (value == "anchor") cfg.placement = hawkes::ObiPlacement::Anchor;
        else throw ConfigError("placement must be 'subsample' or 'anchor'");
    } else if (key == "variants") {
        cfg.variants.clear();
        for (const auto& v : detail::split(value, ',')) {
            if (v == "book") cfg.variants.push_back(SignalVariant::BookObi);
            else if (v == "trade") cfg.variants.push_back(SignalVariant::TradeObi);
            else throw ConfigError("unknown variant '" + v + "'");
        }
    } else if (key == "return_source") {
        if (value == "backward") cfg.return_source = ReturnSource::Backward;
        else if (value == "forward") cfg.return_source = ReturnSource::Forward;
        else throw ConfigError("return_source must be 'backward' or 'forward'");
    } else if (key == "hawkes") cfg.run_hawkes = value == "on" || value == "true" || value == "1";
    else if (key == "max_iterations") cfg.fit.max_iterations = to_int();
    else if (key == "out") cfg.out_dir = value;
    else if (key == "jobs") cfg.jobs = to_int();
    else if (key == "artifacts") cfg.write_artifacts = value == "on" || value == "true" || value == "1";
    else throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    RunConfig cfg;
    cfg.filters = RunConfig::default_filter_grid();
    for (const auto& [k, v] : synth::read_key_values(in)) apply_setting(cfg, k, v);
    return cfg;
}

}  // namespace lobfilt
