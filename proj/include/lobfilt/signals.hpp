#pragma once

#include <lobfilt/book.hpp>

#include <algorithm>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

namespace lobfilt {

/// Half-open window (from, to] in session time.
struct Window {
    Nanos from{0};
    Nanos to{0};
};

struct DirectionalCounts {
    std::int64_t buy{0};
    std::int64_t sell{0};

    friend bool operator==(const DirectionalCounts&, const DirectionalCounts&) = default;
};

/// Sell-minus-buy imbalance; absent when the window saw no events.
inline std::optional<double> obi(DirectionalCounts c) noexcept {
    const auto total = c.buy + c.sell;
    if (total == 0) return std::nullopt;
    return static_cast<double>(c.sell - c.buy) / static_cast<double>(total);
}

/// Buy-minus-sell imbalance of signed trade counts; absent without trades.
inline std::optional<double> trade_imbalance(std::int64_t buyer_initiated, std::int64_t seller_initiated) noexcept {
    const auto total = buyer_initiated + seller_initiated;
    if (total == 0) return std::nullopt;
    return static_cast<double>(buyer_initiated - seller_initiated) / static_cast<double>(total);
}

struct SignedTrade {
    Nanos timestamp{0};
    PriceTicks price{0};
    int sign{+1};  // +1 buyer-initiated, -1 seller-initiated
};

/// Tick rule: up-tick buys, down-tick sells, zero-tick repeats the previous
/// sign; the first trade counts as buyer-initiated.
inline std::vector<SignedTrade> sign_trades(std::span<const Event> events) {
    std::vector<SignedTrade> out;
    int sign = +1;
    std::optional<PriceTicks> last;
    for (const Event& e : events) {
        if (e.etype != EventType::Trade) continue;
        if (last) {
            if (e.price > *last) sign = +1;
            else if (e.price < *last) sign = -1;
        }
        last = e.price;
        out.push_back({e.timestamp, e.price, sign});
    }
    return out;
}

/// Prefix-sum index over a filtered stream answering window queries in
/// O(log n).
class SignalIndex {
public:
    explicit SignalIndex(std::span<const Event> events) {
        times_.reserve(events.size());
        buy_.reserve(events.size() + 1);
        sell_.reserve(events.size() + 1);
        buy_.push_back(0);
        sell_.push_back(0);
        for (const Event& e : events) {
            times_.push_back(e.timestamp);
            buy_.push_back(buy_.back() + (e.side == Side::Bid ? 1 : 0));
            sell_.push_back(sell_.back() + (e.side == Side::Ask ? 1 : 0));
        }
        trades_ = sign_trades(events);
        trade_times_.reserve(trades_.size());
        buy_trades_.push_back(0);
        for (const auto& t : trades_) {
            trade_times_.push_back(t.timestamp);
            buy_trades_.push_back(buy_trades_.back() + (t.sign > 0 ? 1 : 0));
        }
    }

    DirectionalCounts counts(Window w) const {
        const auto [lo, hi] = range(times_, w);
        return {buy_[hi] - buy_[lo], sell_[hi] - sell_[lo]};
    }

    std::optional<double> book_obi(Window w) const { return obi(counts(w)); }

    std::optional<double> trade_obi(Window w) const {
        const auto [lo, hi] = range(trade_times_, w);
        const std::int64_t buys = buy_trades_[hi] - buy_trades_[lo];
        const std::int64_t n = static_cast<std::int64_t>(hi - lo);
        return trade_imbalance(buys, n - buys);
    }

    /// Relative change from the first to the last trade price in the window.
    std::optional<double> realized_return(Window w) const {
        const auto [lo, hi] = range(trade_times_, w);
        if (lo == hi) return std::nullopt;
        const double first = static_cast<double>(trades_[lo].price);
        const double last = static_cast<double>(trades_[hi - 1].price);
        return (last - first) / first;
    }

    std::size_t trade_count(Window w) const {
        const auto [lo, hi] = range(trade_times_, w);
        return hi - lo;
    }

private:
    static std::pair<std::size_t, std::size_t> range(const std::vector<Nanos>& t, Window w) {
        const auto lo = std::upper_bound(t.begin(), t.end(), w.from) - t.begin();
        const auto hi = std::upper_bound(t.begin(), t.end(), w.to) - t.begin();
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
    }

    std::vector<Nanos> times_;
    std::vector<std::int64_t> buy_, sell_;
    std::vector<SignedTrade> trades_;
    std::vector<Nanos> trade_times_;
    std::vector<std::int64_t> buy_trades_;
};

inline DirectionalCounts directional_counts(const FilteredStream& stream, Window w) {
    DirectionalCounts c;
    for (const Event& e : stream.events) {
        if (e.timestamp <= w.from || e.timestamp > w.to) continue;
        (e.side == Side::Bid ? c.buy : c.sell) += 1;
    }
    return c;
}

inline std::optional<double> trade_obi(const FilteredStream& stream, Window w) {
    std::int64_t buys = 0, sells = 0;
    for (const auto& t : sign_trades(stream.events)) {
        if (t.timestamp <= w.from || t.timestamp > w.to) continue;
        (t.sign > 0 ? buys : sells) += 1;
    }
    return trade_imbalance(buys, sells);
}

inline std::optional<double> realized_return(const FilteredStream& stream, Window w) {
    std::optional<PriceTicks> first, last;
    for (const Event& e : stream.events) {
        if (e.etype != EventType::Trade || e.timestamp <= w.from || e.timestamp > w.to) continue;
        if (!first) first = e.price;
        last = e.price;
    }
    if (!first) return std::nullopt;
    return static_cast<double>(*last - *first) / static_cast<double>(*first);
}

struct WindowGrid {
    Nanos h{10 * kSecond};
    Nanos stride{15 * kSecond};
    Nanos xi{1 * kSecond};
    Nanos sub{1 * kSecond};  // intra-window OBI sampling step
    std::vector<Nanos> anchors;

    /// Anchors at session_start + k*stride for every k with
    /// anchor - h >= session_start and anchor <= session_end.
    static WindowGrid make(Nanos session_start, Nanos session_end, Nanos h = 10 * kSecond,
                           Nanos stride = 15 * kSecond, Nanos xi = 1 * kSecond, Nanos sub = 1 * kSecond) {
        if (h <= Nanos{0} || stride <= Nanos{0} || xi <= Nanos{0} || sub <= Nanos{0})
            throw ConfigError("window lengths must be positive");
        if (h.count() % sub.count() != 0) throw ConfigError("window length must be a multiple of the sub-sample step");
        WindowGrid g{h, stride, xi, sub, {}};
        for (Nanos t = session_start + stride; t <= session_end; t += stride)
            if (t - h >= session_start) g.anchors.push_back(t);
        return g;
    }

    std::size_t subs_per_window() const noexcept { return static_cast<std::size_t>(h / sub); }
};

struct WindowSignal {
    Nanos anchor{0};
    std::int64_t n_buy{0};
    std::int64_t n_sell{0};
    std::optional<double> obi;
    std::optional<double> trade_obi;
    std::optional<double> ret;
    std::optional<double> fwd_ret;
    // Per sub-step samples inside (anchor - h, anchor], oldest first.
    std::vector<std::optional<double>> sub_obi;
    std::vector<std::optional<double>> sub_trade_obi;
};

inline WindowSignal compute_window(const SignalIndex& idx, const WindowGrid& grid, Nanos anchor) {
    const Window w{anchor - grid.h, anchor};
    WindowSignal s;
    s.anchor = anchor;
    const auto c = idx.counts(w);
    s.n_buy = c.buy;
    s.n_sell = c.sell;
    s.obi = obi(c);
    s.trade_obi = idx.trade_obi(w);
    s.ret = idx.realized_return(w);
    s.fwd_ret = idx.realized_return({anchor, anchor + grid.xi});
    const std::size_t n = grid.subs_per_window();
    s.sub_obi.reserve(n);
    s.sub_trade_obi.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Window sw{w.from + grid.sub * static_cast<Nanos::rep>(k), w.from + grid.sub * static_cast<Nanos::rep>(k + 1)};
        s.sub_obi.push_back(idx.book_obi(sw));
        s.sub_trade_obi.push_back(idx.trade_obi(sw));
    }
    return s;
}

inline std::vector<WindowSignal> compute_signals(const FilteredStream& stream, const WindowGrid& grid) {
    const SignalIndex idx(stream.events);
    std::vector<WindowSignal> out;
    out.reserve(grid.anchors.size());
    for (Nanos a : grid.anchors) out.push_back(compute_window(idx, grid, a));
    return out;
}

namespace detail {
inline void put_opt(std::ostream& out, const std::optional<double>& v) {
    if (v) out << std::setprecision(17) << *v;
}
}  // namespace detail

inline void write_signal_csv(std::ostream& out, std::span<const WindowSignal> signals) {
    out << "anchor_ns,n_buy,n_sell,obi,trade_obi,ret,fwd_ret\n";
    for (const auto& s : signals) {
        out << s.anchor.count() << ',' << s.n_buy << ',' << s.n_sell << ',';
        detail::put_opt(out, s.obi);
        out << ',';
        detail::put_opt(out, s.trade_obi);
        out << ',';
        detail::put_opt(out, s.ret);
        out << ',';
        detail::put_opt(out, s.fwd_ret);
        out << '\n';
    }
}

}  // namespace lobfilt
