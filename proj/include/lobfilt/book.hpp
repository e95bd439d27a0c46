#pragma once

#include <lobfilt/filters.hpp>
#include <lobfilt/ingest.hpp>

#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

namespace lobfilt {

struct FilteredStream {
    FilterSpec spec{FilterSpec::unfiltered()};
    std::vector<Event> events;
    std::size_t retained_trades_of_excluded{0};
};

/// Drops New/Modify/Cancel events of excluded orders. Trade ticks are always
/// kept, including those of excluded orders.
inline FilteredStream apply_exclusion(std::span<const Event> raw, const ExclusionSet& excl) {
    FilteredStream out{excl.spec, {}, 0};
    out.events.reserve(raw.size());
    for (const Event& e : raw) {
        const bool excluded = excl.contains(e.oid);
        if (!excluded) {
            out.events.push_back(e);
        } else if (e.etype == EventType::Trade) {
            out.events.push_back(e);
            ++out.retained_trades_of_excluded;
        }
    }
    return out;
}

struct TimedSnapshot {
    Nanos timestamp{0};
    BookSnapshot book;
};

struct BookReplay {
    std::vector<TimedSnapshot> snapshots;  // one per distinct event timestamp
    std::size_t clamp_count{0};            // events that would have driven depth negative
    std::size_t tape_only_trades{0};       // trades against orders absent from the book
};

/// Price-level book built from order-level state. A Trade row names the
/// resting order it executed against; when that order is not in the book
/// (excluded by the filter) the trade only reaches the tape.
class OrderBook {
public:
    struct Resting {
        Side side;
        PriceTicks price;
        Quantity remaining;
    };

    void apply(const Event& e) {
        switch (e.etype) {
            case EventType::New: {
                if (orders_.count(e.oid)) {
                    ++clamps_;
                    remove(e.oid);
                }
                orders_.emplace(e.oid, Resting{e.side, e.price, e.qty});
                level(e.side, e.price) += e.qty;
                prune(e.side, e.price);
                break;
            }
            case EventType::Modify: {
                // cancel-replace keeping the oid
                if (!orders_.count(e.oid)) {
                    ++clamps_;
                    break;
                }
                remove(e.oid);
                orders_.emplace(e.oid, Resting{e.side, e.price, e.qty});
                level(e.side, e.price) += e.qty;
                prune(e.side, e.price);
                break;
            }
            case EventType::Cancel: {
                if (!orders_.count(e.oid)) {
                    ++clamps_;
                    break;
                }
                remove(e.oid);
                break;
            }
            case EventType::Trade: {
                auto it = orders_.find(e.oid);
                if (it == orders_.end()) {
                    ++tape_only_;
                    break;
                }
                Resting& r = it->second;
                Quantity fill = e.qty;
                if (fill > r.remaining) {
                    ++clamps_;
                    fill = r.remaining;
                }
                r.remaining -= fill;
                decrement(r.side, r.price, fill);
                if (r.remaining == 0) orders_.erase(it);
                break;
            }
        }
    }

    BookSnapshot snapshot() const {
        BookSnapshot s;
        std::size_t i = 0;
        for (auto it = bids_.begin(); it != bids_.end() && i < kBookDepth; ++it, ++i) s.bids[i] = {it->first, it->second};
        i = 0;
        for (auto it = asks_.begin(); it != asks_.end() && i < kBookDepth; ++it, ++i) s.asks[i] = {it->first, it->second};
        return s;
    }

    const std::unordered_map<OrderId, Resting>& orders() const noexcept { return orders_; }
    std::size_t clamp_count() const noexcept { return clamps_; }
    std::size_t tape_only_trades() const noexcept { return tape_only_; }

private:
    Quantity& level(Side side, PriceTicks price) { return side == Side::Bid ? bids_[price] : asks_[price]; }

    void prune(Side side, PriceTicks price) {
        if (side == Side::Bid) {
            auto it = bids_.find(price);
            if (it != bids_.end() && it->second <= 0) bids_.erase(it);
        } else {
            auto it = asks_.find(price);
            if (it != asks_.end() && it->second <= 0) asks_.erase(it);
        }
    }

    void decrement(Side side, PriceTicks price, Quantity qty) {
        Quantity& q = level(side, price);
        q -= qty;
        if (q < 0) {
            ++clamps_;
            q = 0;
        }
        prune(side, price);
    }

    void remove(OrderId oid) {
        auto it = orders_.find(oid);
        decrement(it->second.side, it->second.price, it->second.remaining);
        orders_.erase(it);
    }

    std::unordered_map<OrderId, Resting> orders_;
    std::map<PriceTicks, Quantity, std::greater<>> bids_;
    std::map<PriceTicks, Quantity> asks_;
    std::size_t clamps_{0};
    std::size_t tape_only_{0};
};

/// Replays a filtered stream and records the top-5 book after the last
/// event of every distinct timestamp.
inline BookReplay reconstruct_book(const FilteredStream& stream) {
    BookReplay out;
    OrderBook book;
    const auto& ev = stream.events;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        book.apply(ev[i]);
        if (i + 1 == ev.size() || ev[i + 1].timestamp != ev[i].timestamp)
            out.snapshots.push_back({ev[i].timestamp, book.snapshot()});
    }
    out.clamp_count = book.clamp_count();
    out.tape_only_trades = book.tape_only_trades();
    return out;
}

inline void write_snapshot_csv(std::ostream& out, std::span<const TimedSnapshot> snaps, const TickSize& tick = {}) {
    out << "timestamp_ns";
    for (std::size_t i = 1; i <= kBookDepth; ++i) out << ",bp" << i << ",bq" << i;
    for (std::size_t i = 1; i <= kBookDepth; ++i) out << ",ap" << i << ",aq" << i;
    out << '\n';
    auto put = [&](const Level& lv) {
        out << ',';
        if (lv.qty > 0) out << tick.to_decimal(lv.price);
        out << ',';
        if (lv.qty > 0) out << lv.qty;
    };
    for (const auto& s : snaps) {
        out << s.timestamp.count();
        for (const auto& lv : s.book.bids) put(lv);
        for (const auto& lv : s.book.asks) put(lv);
        out << '\n';
    }
}

}  // namespace lobfilt
