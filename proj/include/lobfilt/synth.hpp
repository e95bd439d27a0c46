#pragma once

#include <lobfilt/ingest.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace lobfilt::synth {

struct GeneratorConfig {
    std::uint64_t seed{1};
    Nanos session_start{(9 * 3600 + 20 * 60) * kSecond};
    Nanos session_length{3600 * kSecond};
    double order_rate{4.0};          // new orders per second, per side
    double flicker_fraction{0.0};    // orders living < 100 ms
    double spoof_fraction{0.0};      // orders with >= 2 modifications, last gap < 50 ms
    double kappa{2.0};               // trade-price drift, ticks per second per unit imbalance
    double trade_rate{2.0};          // trades per second
    double price_noise{2.0};         // fair-value diffusion, ticks per sqrt(second)
    double imbalance_amplitude{0.8};  // planted imbalance drawn from U(-a, a)
    double regime_seconds{20.0};     // mean duration of one planted imbalance level
    double lifetime_seconds{30.0};   // mean lifetime of persistent orders
    double persistent_mod_prob{0.3};
    std::string initial_price{"40000.00"};
    std::string tick_size{"0.05"};

    void validate() const {
        auto frac = [](double f) { return f >= 0.0 && f <= 1.0; };
        if (!frac(flicker_fraction) || !frac(spoof_fraction) || flicker_fraction + spoof_fraction > 1.0)
            throw ConfigError("noise fractions must lie in [0, 1] and sum to at most 1");
        if (!frac(persistent_mod_prob)) throw ConfigError("persistent_mod_prob must lie in [0, 1]");
        if (!(order_rate > 0) || !(trade_rate > 0) || !(regime_seconds > 0) || !(lifetime_seconds > 0))
            throw ConfigError("rates and durations must be positive");
        if (session_length <= Nanos{0}) throw ConfigError("session_length must be positive");
        if (price_noise < 0 || imbalance_amplitude < 0 || imbalance_amplitude > 1)
            throw ConfigError("price_noise must be >= 0 and imbalance_amplitude in [0, 1]");
    }

    SessionMeta session_meta() const {
        SessionMeta m;
        m.trading_date = "SYN" + std::to_string(seed);
        m.session_start = session_start;
        m.session_end = session_start + session_length;
        m.instrument = "SYNTH";
        return m;
    }

    /// Applies one `key = value` setting; unknown keys are a ConfigError.
    void set(const std::string& key, const std::string& value) {
        auto num = [&]() {
            std::size_t pos = 0;
            double v = std::stod(value, &pos);
            if (pos != value.size()) throw ConfigError("bad number for " + key + ": '" + value + "'");
            return v;
        };
        try {
            if (key == "seed") seed = std::stoull(value);
            else if (key == "session_start_s") session_start = Nanos{static_cast<Nanos::rep>(std::llround(num() * 1e9))};
            else if (key == "session_length_s") session_length = Nanos{static_cast<Nanos::rep>(std::llround(num() * 1e9))};
            else if (key == "order_rate") order_rate = num();
            else if (key == "flicker_fraction") flicker_fraction = num();
            else if (key == "spoof_fraction") spoof_fraction = num();
            else if (key == "kappa") kappa = num();
            else if (key == "trade_rate") trade_rate = num();
            else if (key == "price_noise") price_noise = num();
            else if (key == "imbalance_amplitude") imbalance_amplitude = num();
            else if (key == "regime_seconds") regime_seconds = num();
            else if (key == "lifetime_seconds") lifetime_seconds = num();
            else if (key == "persistent_mod_prob") persistent_mod_prob = num();
            else if (key == "initial_price") initial_price = value;
            else if (key == "tick_size") tick_size = value;
            else throw ConfigError("unknown generator key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad value for " + key + ": '" + value + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError("value out of range for " + key + ": '" + value + "'");
        }
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace detail

/// Reads `key = value` lines; `#` starts a comment. Returns the pairs in
/// file order so callers can route keys to different config objects.
inline std::vector<std::pair<std::string, std::string>> read_key_values(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
        kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return kv;
}

inline GeneratorConfig load_generator_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open generator config '" + path + "'");
    GeneratorConfig cfg;
    for (const auto& [k, v] : read_key_values(in)) cfg.set(k, v);
    cfg.validate();
    return cfg;
}

enum class OrderClass : std::uint8_t { Persistent, Flicker, Spoof };

/// Planted ground truth kept alongside the stream for tests.
struct PlantedOrder {
    OrderId oid{0};
    OrderClass cls{OrderClass::Persistent};
    Nanos entry{0};
    std::vector<Nanos> mods;
    Nanos cancel_at{0};
};

struct Session {
    std::vector<Event> events;
    std::map<OrderId, PlantedOrder> planted;
    std::vector<std::pair<Nanos, double>> imbalance_path;  // (segment start, level)
    SessionMeta meta;
    TickSize tick;
};

namespace detail {

class Generator {
public:
    explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg), rng_(cfg.seed), tick_(cfg.tick_size) {
        const auto p0 = tick_.to_ticks(cfg.initial_price);
        if (!p0 || *p0 <= 0) throw ConfigError("initial_price is not on the tick grid");
        p0_ = *p0;
    }

    Session run() {
        Session s;
        s.meta = cfg_.session_meta();
        s.tick = tick_;
        plant_imbalance(s);
        plant_fair_value();
        schedule_arrivals();
        while (!queue_.empty()) {
            const Action a = queue_.top();
            queue_.pop();
            dispatch(a, s);
        }
        s.planted = std::move(planted_);
        return s;
    }

private:
    enum class Kind : std::uint8_t { Arrival, Modify, Cancel, Trade };

    struct Action {
        Nanos t;
        std::uint64_t seq;
        Kind kind;
        OrderId oid;
        bool operator>(const Action& o) const { return t != o.t ? t > o.t : seq > o.seq; }
    };

    struct Live {
        Side side;
        PriceTicks price;
        Quantity qty;
        std::uint64_t seq;
    };

    // Price-time key: best first on both sides.
    using Queue = std::set<std::tuple<PriceTicks, std::uint64_t, OrderId>>;

    static constexpr double kFairStep = 0.1;  // seconds

    Nanos end() const { return cfg_.session_start + cfg_.session_length; }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double expo(double mean) { return std::exponential_distribution<double>(1.0 / mean)(rng_); }
    Nanos secs(double s) const { return Nanos{static_cast<Nanos::rep>(std::llround(s * 1e9))}; }

    void push(Nanos t, Kind k, OrderId oid = 0) { queue_.push({t, next_seq_++, k, oid}); }

    void plant_imbalance(Session& s) {
        for (Nanos t = cfg_.session_start; t < end();) {
            s.imbalance_path.emplace_back(t, uniform(-cfg_.imbalance_amplitude, cfg_.imbalance_amplitude));
            t += std::max(secs(expo(cfg_.regime_seconds)), kMillisecond);
        }
        path_ = s.imbalance_path;
    }

    double imbalance_at(Nanos t) const {
        auto it = std::upper_bound(path_.begin(), path_.end(), t,
                                   [](Nanos v, const auto& seg) { return v < seg.first; });
        return it == path_.begin() ? 0.0 : std::prev(it)->second;
    }

    void plant_fair_value() {
        const auto steps = static_cast<std::size_t>(std::ceil(to_seconds(cfg_.session_length) / kFairStep)) + 1;
        fair_.resize(steps);
        std::normal_distribution<double> z(0.0, 1.0);
        double v = static_cast<double>(p0_);
        for (std::size_t k = 0; k < steps; ++k) {
            fair_[k] = v;
            const Nanos t = cfg_.session_start + secs(kFairStep * static_cast<double>(k));
            v += cfg_.kappa * imbalance_at(t) * kFairStep + cfg_.price_noise * std::sqrt(kFairStep) * z(rng_);
        }
    }

    double fair_at(Nanos t) const {
        const auto k = static_cast<std::size_t>(to_seconds(t - cfg_.session_start) / kFairStep);
        return fair_[std::min(k, fair_.size() - 1)];
    }

    void schedule_arrivals() {
        for (Nanos t = cfg_.session_start + secs(expo(0.5 / cfg_.order_rate)); t < end();
             t += std::max(secs(expo(0.5 / cfg_.order_rate)), Nanos{1}))
            push(t, Kind::Arrival);
        for (Nanos t = cfg_.session_start + secs(expo(1.0 / cfg_.trade_rate)); t < end();
             t += std::max(secs(expo(1.0 / cfg_.trade_rate)), Nanos{1}))
            push(t, Kind::Trade);
    }

    std::optional<PriceTicks> best(Side side) const {
        const Queue& q = side == Side::Bid ? bids_ : asks_;
        if (q.empty()) return std::nullopt;
        const PriceTicks key = std::get<0>(*q.begin());
        return side == Side::Bid ? -key : key;
    }

    /// Quote `offset` ticks behind the fair value, never crossing the book.
    PriceTicks quote(Side side, Nanos t, int offset) const {
        const double v = fair_at(t);
        if (side == Side::Bid) {
            PriceTicks p = static_cast<PriceTicks>(std::floor(v)) - offset;
            if (auto a = best(Side::Ask)) p = std::min(p, *a - 1);
            return std::max<PriceTicks>(p, 1);
        }
        PriceTicks p = static_cast<PriceTicks>(std::ceil(v)) + offset;
        if (auto b = best(Side::Bid)) p = std::max(p, *b + 1);
        return p;
    }

    int offset() {
        int k = 0;
        while (k < 4 && uniform(0, 1) < 0.5) ++k;
        return k;
    }

    void rest(OrderId oid, const Live& o) {
        live_[oid] = o;
        (o.side == Side::Bid ? bids_ : asks_).emplace(o.side == Side::Bid ? -o.price : o.price, o.seq, oid);
    }

    void unrest(OrderId oid) {
        const Live& o = live_.at(oid);
        (o.side == Side::Bid ? bids_ : asks_).erase({o.side == Side::Bid ? -o.price : o.price, o.seq, oid});
        live_.erase(oid);
    }

    void emit(Session& s, Nanos t, OrderId oid, EventType et, Side side, PriceTicks px, Quantity q) {
        s.events.push_back(Event{t, oid, et, side, px, q, std::nullopt});
    }

    void dispatch(const Action& a, Session& s) {
        switch (a.kind) {
            case Kind::Arrival: arrive(a.t, s); break;
            case Kind::Modify: modify(a.t, a.oid, s); break;
            case Kind::Cancel: cancel(a.t, a.oid, s); break;
            case Kind::Trade: trade(a.t, s); break;
        }
    }

    void arrive(Nanos t, Session& s) {
        const OrderId oid = next_oid_++;
        const double u = uniform(0, 1);
        PlantedOrder plan{oid, OrderClass::Persistent, t, {}, Nanos{0}};
        Side side;
        int off;
        if (u < cfg_.flicker_fraction) {
            plan.cls = OrderClass::Flicker;
            side = uniform(0, 1) < 0.5 ? Side::Bid : Side::Ask;
            off = 0;
            plan.cancel_at = t + secs(uniform(0.001, 0.099));
        } else if (u < cfg_.flicker_fraction + cfg_.spoof_fraction) {
            plan.cls = OrderClass::Spoof;
            side = uniform(0, 1) < 0.5 ? Side::Bid : Side::Ask;
            off = static_cast<int>(uniform(0, 3));
            const int n_mods = 2 + static_cast<int>(uniform(0, 3));
            Nanos m = t;
            for (int k = 0; k < n_mods - 1; ++k) {
                m += secs(uniform(0.1, 0.7));
                plan.mods.push_back(m);
            }
            m += secs(uniform(0.002, 0.045));
            plan.mods.push_back(m);
            plan.cancel_at = m + secs(uniform(0.005, 0.05));
        } else {
            // Sell-side arrivals when the planted (sell-minus-buy) imbalance is positive.
            side = uniform(0, 1) < 0.5 * (1.0 + imbalance_at(t)) ? Side::Ask : Side::Bid;
            off = offset();
            const Nanos life = std::max(secs(expo(cfg_.lifetime_seconds)), Nanos{1000});
            if (uniform(0, 1) < cfg_.persistent_mod_prob) {
                const int n_mods = 1 + static_cast<int>(uniform(0, 2));
                for (int k = 0; k < n_mods; ++k) plan.mods.push_back(t + secs(uniform(0, 1) * to_seconds(life)));
                std::sort(plan.mods.begin(), plan.mods.end());
                for (auto& m : plan.mods) m = std::max(m, t + Nanos{1});
                for (std::size_t k = 1; k < plan.mods.size(); ++k) plan.mods[k] = std::max(plan.mods[k], plan.mods[k - 1] + Nanos{1});
            }
            plan.cancel_at = std::max(t + life, plan.mods.empty() ? t : plan.mods.back() + Nanos{1});
        }
        const Quantity qty = 1 + static_cast<Quantity>(uniform(0, 20));
        const Live o{side, quote(side, t, off), qty, next_seq_++};
        rest(oid, o);
        emit(s, t, oid, EventType::New, side, o.price, qty);
        for (Nanos m : plan.mods)
            if (m < end()) push(m, Kind::Modify, oid);
        if (plan.cancel_at < end()) push(plan.cancel_at, Kind::Cancel, oid);
        planted_.emplace(oid, std::move(plan));
    }

    void modify(Nanos t, OrderId oid, Session& s) {
        if (!live_.count(oid)) return;  // executed in full earlier
        Live o = live_.at(oid);
        unrest(oid);
        o.price = quote(o.side, t, planted_.at(oid).cls == OrderClass::Persistent ? offset() : 0);
        o.seq = next_seq_++;
        rest(oid, o);
        emit(s, t, oid, EventType::Modify, o.side, o.price, o.qty);
    }

    void cancel(Nanos t, OrderId oid, Session& s) {
        if (!live_.count(oid)) return;
        const Live o = live_.at(oid);
        unrest(oid);
        emit(s, t, oid, EventType::Cancel, o.side, o.price, o.qty);
    }

    /// Executes against the best resting order on a random side. Quotes track
    /// the fair value, so trade prices follow it without the aggressor side
    /// depending on the price path.
    void trade(Nanos t, Session& s) {
        (void)t;
        const Side hit = uniform(0, 1) < 0.5 ? Side::Bid : Side::Ask;
        const Queue& q = hit == Side::Bid ? bids_ : asks_;
        if (q.empty()) return;
        const OrderId oid = std::get<2>(*q.begin());
        Live& o = live_.at(oid);
        const Quantity fill = 1 + static_cast<Quantity>(uniform(0, static_cast<double>(o.qty)));
        const Quantity qty = std::min(fill, o.qty);
        emit(s, t, oid, EventType::Trade, o.side, o.price, qty);
        o.qty -= qty;
        if (o.qty == 0) unrest(oid);
    }

    GeneratorConfig cfg_;
    std::mt19937_64 rng_;
    TickSize tick_;
    PriceTicks p0_{0};
    std::vector<std::pair<Nanos, double>> path_;
    std::vector<double> fair_;
    std::priority_queue<Action, std::vector<Action>, std::greater<>> queue_;
    std::uint64_t next_seq_{0};
    OrderId next_oid_{1};
    std::map<OrderId, Live> live_;
    Queue bids_, asks_;
    std::map<OrderId, PlantedOrder> planted_;
};

}  // namespace detail

/// Synthetic session with planted flicker and spoof populations and a
/// trade-price drift coupled to the persistent-order imbalance.
inline Session generate_session(const GeneratorConfig& cfg) {
    cfg.validate();
    return detail::Generator(cfg).run();
}

}  // namespace lobfilt::synth
