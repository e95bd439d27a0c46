#include <lobfilt/pipeline.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

using namespace lobfilt;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs{1};
};

struct StreamOptions {
    std::string input;
    std::string tick_size{"0.05"};
    std::string session_start{"33600s"};
    std::string session_end{"55500s"};

    SessionMeta meta() const {
        SessionMeta m;
        m.session_start = parse_duration(session_start);
        m.session_end = parse_duration(session_end);
        m.trading_date = std::filesystem::path(input).stem().string();
        m.validate();
        return m;
    }

    IngestResult load() const {
        IngestOptions o;
        o.tick = TickSize(tick_size);
        return parse_tick_file(input, meta(), o);
    }

    void add_to(CLI::App* cmd) {
        cmd->add_option("input", input, "tick CSV file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--tick-size", tick_size, "price tick size")->capture_default_str();
        cmd->add_option("--session-start", session_start, "session open, e.g. 33600s")->capture_default_str();
        cmd->add_option("--session-end", session_end, "session close, e.g. 55500s")->capture_default_str();
    }
};

struct FilterOptions {
    std::string kind{"uf"};
    std::string threshold;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--filter", kind, "uf|lf|mf|mtf")
            ->check(CLI::IsMember({"uf", "lf", "mf", "mtf", "UF", "LF", "MF", "MTF"}))
            ->capture_default_str();
        cmd->add_option("--threshold", threshold, "threshold with unit, e.g. 100ms, or a count for mf");
    }

    FilterSpec spec() const { return parse_filter_spec(kind, threshold); }
};

struct PipelineOptions {
    std::vector<std::string> inputs;
    std::string filters;
    std::vector<std::string> variants;
    std::string return_source;
    std::string alignment;
    int sessions{0};
    bool no_artifacts{false};

    void add_to(CLI::App* cmd) {
        cmd->add_option("inputs", inputs, "tick CSV files (one per session)")->check(CLI::ExistingFile);
        cmd->add_option("--filters", filters, "filter grid, e.g. \"lf:100ms,500ms; mtf:50ms\"");
        cmd->add_option("--variant", variants, "book and/or trade")->check(CLI::IsMember({"book", "trade"}));
        cmd->add_option("--return-source", return_source, "backward|forward")
            ->check(CLI::IsMember({"backward", "forward"}));
        cmd->add_option("--alignment", alignment, "opposite|same")->check(CLI::IsMember({"opposite", "same"}));
        cmd->add_option("--sessions", sessions, "number of synthetic sessions (consecutive seeds)");
        cmd->add_flag("--no-artifacts", no_artifacts, "skip per-cell CSV/JSON artifacts");
    }

    RunConfig build(const Globals& g) const {
        RunConfig cfg = g.config.empty() ? RunConfig{} : load_run_config(g.config);
        if (g.config.empty()) cfg.filters = RunConfig::default_filter_grid();
        if (!inputs.empty()) cfg.inputs = inputs;
        if (!filters.empty()) cfg.filters = parse_filter_grid(filters);
        if (!variants.empty()) {
            cfg.variants.clear();
            for (const auto& v : variants) cfg.variants.push_back(v == "book" ? SignalVariant::BookObi : SignalVariant::TradeObi);
        }
        if (!return_source.empty()) apply_setting(cfg, "return_source", return_source);
        if (!alignment.empty()) apply_setting(cfg, "alignment", alignment);
        if (sessions > 0) cfg.synthetic_sessions = sessions;
        if (g.seed) {
            if (!cfg.generator) cfg.generator.emplace();
            cfg.generator->seed = *g.seed;
        }
        if (cfg.inputs.empty() && !cfg.generator) cfg.generator.emplace();
        if (!g.out.empty()) cfg.out_dir = g.out;
        cfg.jobs = g.jobs;
        if (no_artifacts) cfg.write_artifacts = false;
        return cfg;
    }
};

void print_tables(const RunConfig& cfg, const RunResult& res, const std::string& prefix) {
    for (const auto& t : build_tables(cfg, res)) {
        if (t.name.rfind(prefix, 0) != 0) continue;
        std::cout << "# " << t.name << '\n';
        t.write_csv(std::cout);
        std::cout << '\n';
    }
}

int finish(const RunResult& res) {
    for (const auto& s : res.sessions)
        for (const auto& c : s.cells)
            if (!c.error.empty())
                std::cerr << "cell " << c.row << " (" << to_string(c.variant) << ") failed: " << c.error << '\n';
    return res.failed_cells > 0 ? 2 : 0;
}

std::ostream& output(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
    if (path.empty() || path == "-") return std::cout;
    holder = std::make_unique<std::ofstream>(path);
    if (!*holder) throw ConfigError("cannot write '" + path + "'");
    return *holder;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structural noise filtering for limit order book signals"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "key-value configuration file");
    app.add_option("--seed", g.seed, "generator seed");
    app.add_option("--out", g.out, "output file or directory");
    app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate and normalize a tick CSV");
    StreamOptions ingest_stream;
    bool lenient = false;
    ingest_stream.add_to(ingest);
    ingest->add_flag("--lenient", lenient, "skip malformed rows instead of failing");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic session");
    std::vector<std::string> overrides;
    simulate->add_option("--set", overrides, "generator override key=value");

    // filter
    auto* filter = app.add_subcommand("filter", "compute an exclusion set");
    StreamOptions filter_stream;
    FilterOptions filter_opts;
    std::string snapshots;
    filter_stream.add_to(filter);
    filter_opts.add_to(filter);
    filter->add_option("--snapshots", snapshots, "write top-5 book snapshots of the filtered stream");

    // signals
    auto* signals = app.add_subcommand("signals", "compute window signals");
    StreamOptions signal_stream;
    FilterOptions signal_filter;
    std::string regimes_path, variant{"book"};
    signal_stream.add_to(signals);
    signal_filter.add_to(signals);
    signals->add_option("--regimes", regimes_path, "also write regime vectors");
    signals->add_option("--variant", variant, "book|trade")->check(CLI::IsMember({"book", "trade"}));

    // score / hawkes / run
    auto* score = app.add_subcommand("score", "correlation and regime scores across the filter grid");
    auto* hawkes_cmd = app.add_subcommand("hawkes", "Hawkes excitation scores across the filter grid");
    auto* run = app.add_subcommand("run", "full pipeline with report tables");
    PipelineOptions score_opts, hawkes_opts, run_opts;
    score_opts.add_to(score);
    hawkes_opts.add_to(hawkes_cmd);
    run_opts.add_to(run);

    // report
    auto* report = app.add_subcommand("report", "print tables from a finished run");
    std::string report_dir;
    report->add_option("dir", report_dir, "run output directory")->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        std::unique_ptr<std::ofstream> holder;

        if (*ingest) {
            IngestOptions o;
            o.tick = TickSize(ingest_stream.tick_size);
            o.strict = !lenient;
            const auto res = parse_tick_file(ingest_stream.input, ingest_stream.meta(), o);
            const auto lc = build_lifecycles(res.events, ingest_stream.meta().session_end);
            std::cerr << "rows=" << res.rows << " events=" << res.events.size()
                      << " dropped_outside_session=" << res.dropped_outside_session << " rejected=" << res.rejected
                      << " orders=" << lc.size() << '\n';
            if (!g.out.empty()) write_tick_csv(output(g.out, holder), res.events, o.tick);
            return 0;
        }

        if (*simulate) {
            synth::GeneratorConfig cfg = g.config.empty() ? synth::GeneratorConfig{} : synth::load_generator_config(g.config);
            for (const auto& kv : overrides) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
                cfg.set(synth::detail::trim(kv.substr(0, eq)), synth::detail::trim(kv.substr(eq + 1)));
            }
            if (g.seed) cfg.seed = *g.seed;
            cfg.validate();
            const auto s = synth::generate_session(cfg);
            write_tick_csv(output(g.out, holder), s.events, s.tick);
            std::cerr << "events=" << s.events.size() << " planted=" << s.planted.size() << '\n';
            return 0;
        }

        if (*filter) {
            const auto res = filter_stream.load();
            const auto lc = build_lifecycles(res.events, filter_stream.meta().session_end);
            const auto excl = apply_filter(lc, filter_opts.spec());
            write_exclusion_list(output(g.out, holder), excl);
            const auto fs = apply_exclusion(res.events, excl);
            std::cerr << excl.spec.label() << ": excluded " << excl.excluded.size() << " of " << lc.size()
                      << " orders, retained " << fs.events.size() << " of " << res.events.size() << " events\n";
            if (!snapshots.empty()) {
                const auto replay = reconstruct_book(fs);
                std::ofstream so(snapshots);
                if (!so) throw ConfigError("cannot write '" + snapshots + "'");
                write_snapshot_csv(so, replay.snapshots, TickSize(filter_stream.tick_size));
                std::cerr << "snapshots=" << replay.snapshots.size() << " clamped=" << replay.clamp_count << '\n';
            }
            return 0;
        }

        if (*signals) {
            const auto res = signal_stream.load();
            const auto meta = signal_stream.meta();
            const auto lc = build_lifecycles(res.events, meta.session_end);
            const auto fs = apply_exclusion(res.events, apply_filter(lc, signal_filter.spec()));
            const auto grid = WindowGrid::make(meta.session_start, meta.session_end);
            const auto sig = compute_signals(fs, grid);
            write_signal_csv(output(g.out, holder), sig);
            if (!regimes_path.empty()) {
                std::vector<double> rets;
                for (const auto& s : sig)
                    if (s.ret) rets.push_back(*s.ret);
                const auto scheme = RegimeScheme::make(9, 4, return_threshold(rets));
                const auto b = build_regime_vectors(sig, scheme, variant == "book" ? &WindowSignal::sub_obi : &WindowSignal::sub_trade_obi);
                std::ofstream ro(regimes_path);
                if (!ro) throw ConfigError("cannot write '" + regimes_path + "'");
                write_regime_csv(ro, b.vectors);
                std::cerr << "regime windows=" << b.vectors.size() << " excluded=" << b.excluded << '\n';
            }
            return 0;
        }

        if (*score || *hawkes_cmd || *run) {
            const PipelineOptions& po = *score ? score_opts : *hawkes_cmd ? hawkes_opts : run_opts;
            RunConfig cfg = po.build(g);
            if (*score) cfg.run_hawkes = false;
            if (*hawkes_cmd) cfg.run_scores = false;
            const auto res = run_pipeline(cfg);
            if (cfg.out_dir.empty() || *score || *hawkes_cmd)
                print_tables(cfg, res, *hawkes_cmd ? "hawkes_" : "summary_");
            return finish(res);
        }

        if (*report) {
            std::ifstream in(std::filesystem::path(report_dir) / "report.json");
            if (!in) throw ConfigError("no report.json in '" + report_dir + "'");
            const auto j = nlohmann::json::parse(in);
            std::printf("%-28s %-6s %9s %9s %9s %9s %9s %8s\n", "Date_Filter", "var", "S_rho", "S_rho_AR", "S_rhoL",
                        "S_R", "S_phi", "windows");
            auto num = [](const nlohmann::json& v) { return v.is_null() ? std::string("-") : detail::fmt(v.get<double>(), 4); };
            for (const auto& s : j.at("sessions"))
                for (const auto& c : s.at("cells"))
                    std::printf("%-28s %-6s %9s %9s %9s %9s %9s %8zu\n", c.at("row").get<std::string>().c_str(),
                                c.at("variant").get<std::string>().c_str(), num(c.at("S_rho")).c_str(),
                                num(c.at("S_rho_AR")).c_str(), num(c.at("S_rho_lambda")).c_str(),
                                num(c.at("S_R")).c_str(), num(c.at("S_phi")).c_str(), c.at("windows").get<std::size_t>());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
