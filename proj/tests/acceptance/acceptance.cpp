// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <lobfilt/pipeline.hpp>

#include "support/random_stream.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using namespace lobfilt;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kPearsonTol = 1e-12;
constexpr double kLoglikTol = 1e-10;
constexpr double kArResidualBound = 0.05;
constexpr double kRecoveryRelErr = 0.15;
constexpr double kFilterBudgetS = 10.0;
constexpr double kBookBudgetS = 30.0;
constexpr double kFitBudgetS = 60.0;
constexpr double kGridBudgetS = 600.0;

// 09:20 to 15:25, the default session bounds of the command-line tool.
constexpr Nanos kTradingDay{21900 * kSecond.count()};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

std::set<OrderId> comprehension(const LifecycleMap& m, const FilterSpec& f) {
    std::set<OrderId> out;
    for (const auto& [oid, l] : m) {
        bool drop = false;
        switch (f.kind()) {
            case FilterKind::Unfiltered: break;
            case FilterKind::Lifetime: drop = l.lifetime < f.duration_threshold(); break;
            case FilterKind::ModCount: drop = l.mod_count > f.count_threshold(); break;
            case FilterKind::ModTime: drop = l.mod_count >= 2 && *l.last_mod_gap < f.duration_threshold(); break;
        }
        if (drop) out.insert(oid);
    }
    return out;
}

bool subset(const std::set<OrderId>& a, const std::set<OrderId>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

Outcome ac1_filters() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    const auto grid = RunConfig::default_filter_grid();
    std::size_t mismatches = 0, nest_violations = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const auto m = fixtures::random_lifecycles(rng, 200);
        std::vector<std::set<OrderId>> sets;
        for (const auto& f : grid) {
            sets.push_back(apply_filter(m, f).excluded);
            mismatches += sets.back() != comprehension(m, f);
        }
        for (std::size_t a = 0; a < grid.size(); ++a)
            for (std::size_t b = 0; b < grid.size(); ++b) {
                const auto &fa = grid[a], &fb = grid[b];
                if (fa.kind() != fb.kind() || a == b) continue;
                if (fa.kind() == FilterKind::ModCount) {
                    if (fa.count_threshold() < fb.count_threshold()) nest_violations += !subset(sets[b], sets[a]);
                } else if (fa.kind() != FilterKind::Unfiltered && fa.duration_threshold() < fb.duration_threshold()) {
                    nest_violations += !subset(sets[a], sets[b]);
                }
            }
    }
    const double s = since(t0);
    return {mismatches == 0 && nest_violations == 0 && s < kFilterBudgetS,
            fmt("mismatches=%zu nesting_violations=%zu time=%.2fs", mismatches, nest_violations, s)};
}

// Recount of live retained orders, rebuilt per timestamp.
BookSnapshot recount(const std::vector<Event>& prefix) {
    struct O {
        Side side;
        PriceTicks price;
        Quantity qty;
    };
    std::map<OrderId, O> live;
    for (const auto& e : prefix) {
        if (e.etype == EventType::New || e.etype == EventType::Modify) live[e.oid] = {e.side, e.price, e.qty};
        else if (e.etype == EventType::Cancel) live.erase(e.oid);
        else if (auto it = live.find(e.oid); it != live.end()) {
            it->second.qty -= std::min(e.qty, it->second.qty);
            if (it->second.qty == 0) live.erase(it);
        }
    }
    std::map<PriceTicks, Quantity> bid, ask;
    for (const auto& [oid, o] : live) (o.side == Side::Bid ? bid : ask)[o.price] += o.qty;
    BookSnapshot s;
    std::size_t i = 0;
    for (auto it = bid.rbegin(); it != bid.rend() && i < kBookDepth; ++it) s.bids[i++] = {it->first, it->second};
    i = 0;
    for (auto it = ask.begin(); it != ask.end() && i < kBookDepth; ++it) s.asks[i++] = {it->first, it->second};
    return s;
}

bool same_book(const BookSnapshot& a, const BookSnapshot& b) {
    for (std::size_t i = 0; i < kBookDepth; ++i) {
        if (a.bids[i].qty != b.bids[i].qty || a.asks[i].qty != b.asks[i].qty) return false;
        if (a.bids[i].qty > 0 && a.bids[i].price != b.bids[i].price) return false;
        if (a.asks[i].qty > 0 && a.asks[i].price != b.asks[i].price) return false;
    }
    return true;
}

Outcome ac2_book() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    std::size_t bad = 0, checked = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const auto raw = fixtures::random_stream(rng, 1000);
        ExclusionSet ex;
        for (const auto& e : raw)
            if (rng() % 4 == 0) ex.excluded.insert(e.oid);
        const auto fs = apply_exclusion(raw, ex);
        const auto replay = reconstruct_book(fs);
        std::size_t k = 0;
        std::vector<Event> prefix;
        for (std::size_t i = 0; i < fs.events.size(); ++i) {
            prefix.push_back(fs.events[i]);
            if (i + 1 < fs.events.size() && fs.events[i + 1].timestamp == fs.events[i].timestamp) continue;
            ++checked;
            if (k >= replay.snapshots.size() || replay.snapshots[k].timestamp != fs.events[i].timestamp ||
                !same_book(replay.snapshots[k].book, recount(prefix)))
                ++bad;
            ++k;
        }
        bad += k != replay.snapshots.size();
    }
    const double s = since(t0);
    return {bad == 0 && s < kBookBudgetS, fmt("snapshots=%zu mismatches=%zu time=%.2fs", checked, bad, s)};
}

std::multiset<std::tuple<Nanos::rep, OrderId, PriceTicks, Quantity>> trades_of(std::span<const Event> ev) {
    std::multiset<std::tuple<Nanos::rep, OrderId, PriceTicks, Quantity>> out;
    for (const auto& e : ev)
        if (e.etype == EventType::Trade) out.emplace(e.timestamp.count(), e.oid, e.price, e.qty);
    return out;
}

Outcome ac3_trades() {
    std::size_t streams = 0, bad = 0;
    auto check = [&](const std::vector<Event>& raw, Nanos close) {
        const auto lc = build_lifecycles(raw, close);
        const auto want = trades_of(raw);
        for (const auto& f : RunConfig::default_filter_grid()) {
            ++streams;
            bad += trades_of(apply_exclusion(raw, apply_filter(lc, f)).events) != want;
        }
    };
    std::mt19937_64 rng(303);
    for (int rep = 0; rep < 100; ++rep) {
        const auto raw = fixtures::random_stream(rng, 2000);
        check(raw, raw.back().timestamp);
    }
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        synth::GeneratorConfig g;
        g.seed = seed;
        g.flicker_fraction = 0.5;
        g.spoof_fraction = 0.3;
        const auto s = synth::generate_session(g);
        check(s.events, s.meta.session_end);
    }
    return {bad == 0, fmt("filtered_streams=%zu mismatches=%zu", streams, bad)};
}

Outcome ac4_signals() {
    std::size_t windows = 0, bound_bad = 0, flag_bad = 0, count_bad = 0, excluded = 0;
    auto check_stream = [&](const std::vector<Event>& raw, Nanos start, Nanos end) {
        FilteredStream fs;
        fs.events = raw;
        const auto grid = WindowGrid::make(start, end);
        for (const auto& w : compute_signals(fs, grid)) {
            ++windows;
            const Window win{w.anchor - grid.h, w.anchor};
            std::int64_t trades = 0;
            for (const auto& e : raw) trades += e.etype == EventType::Trade && e.timestamp > win.from && e.timestamp <= win.to;
            auto in_bounds = [](const std::optional<double>& v) { return !v || (*v >= -1.0 && *v <= 1.0); };
            bound_bad += !in_bounds(w.obi) || !in_bounds(w.trade_obi);
            flag_bad += w.obi.has_value() != (w.n_buy + w.n_sell > 0);
            flag_bad += w.trade_obi.has_value() != (trades > 0);
            excluded += !w.obi || !w.trade_obi;
        }
    };
    std::mt19937_64 rng(404);
    for (int rep = 0; rep < 20; ++rep) {
        // a quiet hour in the middle gives zero-activity windows
        auto a = fixtures::random_stream(rng, 1500);
        auto b = fixtures::random_stream(rng, 1500, a.back().timestamp + 120 * kSecond);
        a.insert(a.end(), b.begin(), b.end());
        check_stream(a, Nanos{0}, a.back().timestamp);
    }

    // Pipeline accounting: excluded + common = anchors, and no common window lacks a value.
    RunConfig cfg;
    synth::GeneratorConfig g;
    g.seed = 5;
    g.trade_rate = 0.08;
    g.order_rate = 0.1;
    cfg.generator = g;
    cfg.filters = RunConfig::default_filter_grid();
    cfg.run_hawkes = false;
    cfg.write_artifacts = false;
    const auto res = run_pipeline(cfg);
    const auto& s = res.sessions.at(0);
    for (const auto v : cfg.variants) {
        count_bad += s.common_windows.at(v) + s.excluded_windows.at(v) != s.anchors;
        for (const auto& c : s.cells)
            if (c.variant == v) count_bad += c.windows != s.common_windows.at(v);
    }
    const bool some_excluded = excluded > 0 && s.excluded_windows.at(SignalVariant::TradeObi) > 0;
    return {bound_bad == 0 && flag_bad == 0 && count_bad == 0 && some_excluded,
            fmt("windows=%zu out_of_bounds=%zu flag_errors=%zu excluded=%zu pipeline_excluded(book,trade)=(%zu,%zu) "
                "accounting_errors=%zu",
                windows, bound_bad, flag_bad, excluded, s.excluded_windows.at(SignalVariant::BookObi),
                s.excluded_windows.at(SignalVariant::TradeObi), count_bad)};
}

Outcome ac5_pearson() {
    std::mt19937_64 rng(505);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> x(1000), y(1000);
        const double mix = n(rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = 3.0 + 2.0 * n(rng);
            y[i] = mix * x[i] + n(rng) - 7.0;
        }
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
        mx /= 1000.0;
        my /= 1000.0;
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
        }
        worst = std::max(worst, std::abs(*pearson_score(x, y) - sxy / std::sqrt(sxx * syy)));
    }
    return {worst < kPearsonTol, fmt("series=100 max_abs_diff=%.3g tol=%.0e", worst, kPearsonTol)};
}

Outcome ac6_ar() {
    int ok = 0;
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(600 + seed);
        std::normal_distribution<double> z(0.0, 1.0);
        std::vector<double> x(10000);
        double v = 0;
        for (int burn = 0; burn < 200; ++burn) v = 0.9 * v + z(rng);
        for (double& s : x) s = v = 0.9 * v + z(rng);
        const auto fit = ar_residualize(x, 5);
        const auto& r = fit.residuals;
        const double rho = *pearson_score(std::span(r).subspan(1), std::span(r).first(r.size() - 1));
        worst = std::max(worst, std::abs(rho));
        ok += std::abs(rho) < kArResidualBound;
    }
    return {ok >= 48, fmt("seeds_ok=%d/50 (need 48) max_abs_lag1=%.4f", ok, worst)};
}

double direct_loglik(const hawkes::KernelEstimate& p, const hawkes::MarkedEventStream& s) {
    long double ll = 0;
    for (const auto& e : s.events) {
        long double lam = p.mu(e.dim);
        for (const auto& m : s.events) {
            if (!(m.t < e.t)) continue;
            for (std::size_t k = 0; k < p.K(); ++k) lam += p.a(e.dim, m.dim, k) * std::exp(-static_cast<long double>(p.decays[k]) * (e.t - m.t));
        }
        ll += std::log(lam);
    }
    for (int i = 0; i < p.dims; ++i) {
        ll -= p.mu(i) * s.horizon;
        for (const auto& e : s.events)
            for (std::size_t k = 0; k < p.K(); ++k)
                ll -= p.a(i, e.dim, k) * -std::expm1(-static_cast<long double>(p.decays[k]) * (s.horizon - e.t)) / p.decays[k];
    }
    return static_cast<double>(ll);
}

Outcome ac7_loglik() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const int dims = 1 + static_cast<int>(rng() % 5);
        const std::size_t n = 1 + rng() % 1000;
        hawkes::MarkedEventStream s;
        s.dims = dims;
        s.horizon = 200.0;
        for (std::size_t i = 0; i < n; ++i)
            s.events.push_back({std::round(u(rng) * 20000.0) / 100.0, static_cast<int>(rng() % static_cast<unsigned>(dims))});
        std::sort(s.events.begin(), s.events.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
        auto p = hawkes::KernelEstimate::zeros(dims, {0.1, 1.0, 10.0});
        for (int i = 0; i < dims; ++i) p.mu(i) = 0.05 + u(rng);
        for (double& a : p.amplitudes) a = u(rng) < 0.3 ? 0.0 : 0.5 * u(rng);
        worst = std::max(worst, std::abs(hawkes::loglik(p, s) - direct_loglik(p, s)));
    }
    return {worst < kLoglikTol, fmt("streams=100 max_abs_diff=%.3g tol=%.0e", worst, kLoglikTol)};
}

Outcome ac8_recovery() {
    auto truth = hawkes::KernelEstimate::zeros(1, {2.0});
    truth.mu(0) = 0.5;
    truth.a(0, 0, 0) = 0.8;
    int ok = 0;
    double worst_time = 0, worst_err = 0;
    std::size_t min_events = SIZE_MAX;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = hawkes::simulate_hawkes(truth, 60000.0, 800 + seed);
        min_events = std::min(min_events, s.events.size());
        const auto t0 = Clock::now();
        const auto est = hawkes::fit(s, {2.0});
        worst_time = std::max(worst_time, since(t0));
        const double err = std::abs(est.norm_matrix()(0, 0) - 0.4) / 0.4;
        worst_err = std::max(worst_err, err);
        ok += err < kRecoveryRelErr;
    }
    return {ok >= 18 && worst_time < kFitBudgetS,
            fmt("seeds_ok=%d/20 (need 18) max_rel_err=%.3f min_events=%zu max_fit_time=%.2fs", ok, worst_err,
                min_events, worst_time)};
}

// ---------------------------------------------------------------------------
// Synthetic harness shared by the two qualitative criteria.

struct HarnessRun {
    std::map<std::string, CellScores> book, trade;  // by filter label
};

std::vector<HarnessRun> harness_runs() {
    std::vector<HarnessRun> out;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        RunConfig cfg;
        synth::GeneratorConfig g;
        g.seed = seed;
        g.session_length = kTradingDay;
        g.flicker_fraction = 0.5;
        g.spoof_fraction = 0.3;
        cfg.generator = g;
        cfg.filters = RunConfig::default_filter_grid();
        cfg.alignment = Alignment::Same;
        cfg.write_artifacts = false;
        const auto res = run_pipeline(cfg);
        HarnessRun h;
        for (const auto& c : res.sessions.at(0).cells)
            (c.variant == SignalVariant::BookObi ? h.book : h.trade)[c.filter.label()] = c;
        out.push_back(std::move(h));
    }
    return out;
}

Outcome ac9_headline(const std::vector<HarnessRun>& runs) {
    int rho_up = 0, lambda_up = 0;
    double mean_uf = 0, mean_mtf = 0;
    for (const auto& h : runs) {
        const auto& uf = h.book.at("UF");
        const auto& mtf = h.book.at("MTF-50ms");
        rho_up += mtf.s_rho.value_or(-2) > uf.s_rho.value_or(2);
        lambda_up += mtf.cc0.value_or(-1e9) > uf.cc0.value_or(1e9);
        mean_uf += uf.s_rho.value_or(0) / static_cast<double>(runs.size());
        mean_mtf += mtf.s_rho.value_or(0) / static_cast<double>(runs.size());
    }
    return {rho_up >= 18 && lambda_up >= 15,
            fmt("S_rho improved %d/20 (need 18), S_rho_lambda improved %d/20 (need 15), mean S_rho UF=%.3f MTF-50ms=%.3f",
                rho_up, lambda_up, mean_uf, mean_mtf)};
}

double relative_spread(const std::map<std::string, CellScores>& cells) {
    double lo = 1e300, hi = -1e300, sum = 0;
    std::size_t n = 0;
    for (const auto& [label, c] : cells) {
        if (!c.s_phi) continue;
        lo = std::min(lo, *c.s_phi);
        hi = std::max(hi, *c.s_phi);
        sum += *c.s_phi;
        ++n;
    }
    if (n == 0 || sum == 0) return 0.0;
    return (hi - lo) / (sum / static_cast<double>(n));
}

Outcome ac10_excitation(const std::vector<HarnessRun>& runs) {
    int wider = 0, identical_trade_cells = 0;
    double mb = 0, mt = 0;
    for (const auto& h : runs) {
        const double b = relative_spread(h.book), t = relative_spread(h.trade);
        wider += t > b;
        mb += b / static_cast<double>(runs.size());
        mt += t / static_cast<double>(runs.size());
        const auto& uf = h.trade.at("UF");
        identical_trade_cells += std::all_of(h.trade.begin(), h.trade.end(), [&](const auto& kv) {
            return kv.second.s_phi == uf.s_phi && kv.second.kernel == uf.kernel;
        });
    }
    return {wider >= 15, fmt("trade spread > book spread %d/20 (need 15), mean relative spread book=%.4f trade=%.4f, "
                             "seeds with identical trade-OBI kernels across all filters=%d/20",
                             wider, mb, mt, identical_trade_cells)};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> slurp_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

Outcome ac11_grid() {
    const fs::path base = fs::temp_directory_path() / "lobfilt_acceptance";
    fs::remove_all(base);
    double worst = 0;
    std::vector<std::map<std::string, std::string>> trees;
    std::size_t cells = 0, failed = 0;
    for (const char* name : {"run1", "run2"}) {
        RunConfig cfg;
        synth::GeneratorConfig g;
        g.seed = 42;
        g.flicker_fraction = 0.5;
        g.spoof_fraction = 0.3;
        cfg.generator = g;
        cfg.filters = RunConfig::default_filter_grid();
        cfg.jobs = 4;
        cfg.out_dir = (base / name).string();
        const auto t0 = Clock::now();
        const auto res = run_pipeline(cfg);
        worst = std::max(worst, since(t0));
        cells = res.sessions.at(0).cells.size();
        failed += res.failed_cells;
        trees.push_back(slurp_tree(base / name));
    }
    const bool identical = trees[0] == trees[1];
    const std::size_t files = trees[0].size();
    fs::remove_all(base);
    return {identical && worst < kGridBudgetS && cells == 20 && failed == 0,
            fmt("cells=%zu failed=%zu files=%zu identical=%s max_time=%.1fs budget=%.0fs", cells, failed, files,
                identical ? "yes" : "no", worst, kGridBudgetS)};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](const char* id, const char* name, const Outcome& o) {
        std::printf("%s %-5s %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    report("AC1", "filter exclusion sets and nesting", ac1_filters());
    report("AC2", "book reconstruction vs recount", ac2_book());
    report("AC3", "trade retention", ac3_trades());
    report("AC4", "signal bounds and exclusions", ac4_signals());
    report("AC5", "Pearson vs two-pass formula", ac5_pearson());
    report("AC6", "AR residualization", ac6_ar());
    report("AC7", "Hawkes loglik vs direct sum", ac7_loglik());
    report("AC8", "Hawkes kernel recovery", ac8_recovery());
    const auto runs = harness_runs();
    report("AC9", "MTF beats UF on the harness", ac9_headline(runs));
    report("AC10", "trade-OBI excitation spread", ac10_excitation(runs));
    report("AC11", "full grid determinism and budget", ac11_grid());
    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
