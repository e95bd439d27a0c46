#pragma once

#include <lobfilt/event.hpp>

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace lobfilt {

enum class Terminal : std::uint8_t {
    Cancelled,
    FullyExecuted,
    // MODIFY keeps the oid alive, so this feed format never yields Replaced;
    // kept for feeds that reissue ids on replace.
    Replaced,
    SessionEnd,
};

struct OrderLifecycle {
    OrderId oid{0};
    Nanos entry{0};
    Nanos exit{0};
    Nanos lifetime{0};
    int mod_count{0};
    std::optional<Nanos> last_mod_gap{};  // set iff mod_count >= 2
    Terminal terminal{Terminal::SessionEnd};

    friend bool operator==(const OrderLifecycle&, const OrderLifecycle&) = default;
};

using LifecycleMap = std::map<OrderId, OrderLifecycle>;

namespace detail {

struct OpenOrder {
    OrderLifecycle life;
    Quantity remaining{0};
    std::optional<Nanos> prev_mod;
    std::optional<Nanos> last_mod;
    bool closed{false};
};

inline std::string where(const Event& e) {
    return "oid " + std::to_string(e.oid) + " at t=" + std::to_string(e.timestamp.count()) + "ns";
}

}  // namespace detail

/// Builds one lifecycle per order id from a time-ordered stream.
///
/// Orders still resting when the stream ends are closed at `session_close`
/// (or the last event timestamp when not given) with terminal SessionEnd.
/// Partial executions leave the order open; the Trade that exhausts the
/// remaining quantity closes it as FullyExecuted.
///
/// Throws OrderingError on decreasing timestamps and StructuralError when a
/// Modify/Cancel/Trade references an oid that is not open.
inline LifecycleMap build_lifecycles(std::span<const Event> events,
                                     std::optional<Nanos> session_close = std::nullopt) {
    std::map<OrderId, detail::OpenOrder> book;
    Nanos prev{std::numeric_limits<Nanos::rep>::min()};

    for (const Event& e : events) {
        if (e.timestamp < prev)
            throw OrderingError("timestamp decreases at " + detail::where(e) + " (previous " +
                                std::to_string(prev.count()) + "ns)");
        prev = e.timestamp;

        if (e.etype == EventType::New) {
            auto [it, inserted] = book.try_emplace(e.oid);
            if (!inserted)
                throw StructuralError("duplicate NEW for " + detail::where(e));
            it->second.life.oid = e.oid;
            it->second.life.entry = e.timestamp;
            it->second.remaining = e.qty;
            continue;
        }

        auto it = book.find(e.oid);
        if (it == book.end() || it->second.closed)
            throw StructuralError(std::string(to_string(e.etype)) + " for unknown " + detail::where(e));
        auto& o = it->second;

        switch (e.etype) {
            case EventType::Modify:
                ++o.life.mod_count;
                o.prev_mod = o.last_mod;
                o.last_mod = e.timestamp;
                o.remaining = e.qty;
                break;
            case EventType::Cancel:
                o.closed = true;
                o.life.exit = e.timestamp;
                o.life.terminal = Terminal::Cancelled;
                break;
            case EventType::Trade:
                o.remaining -= e.qty;
                if (o.remaining <= 0) {
                    o.closed = true;
                    o.life.exit = e.timestamp;
                    o.life.terminal = Terminal::FullyExecuted;
                }
                break;
            case EventType::New:
                break;
        }
    }

    const Nanos close = session_close.value_or(events.empty() ? Nanos{0} : events.back().timestamp);

    LifecycleMap out;
    for (auto& [oid, o] : book) {
        if (!o.closed) {
            o.life.exit = std::max(close, o.life.entry);
            o.life.terminal = Terminal::SessionEnd;
        }
        o.life.lifetime = o.life.exit - o.life.entry;
        if (o.life.mod_count >= 2) o.life.last_mod_gap = *o.last_mod - *o.prev_mod;
        out.emplace(oid, o.life);
    }
    return out;
}

}  // namespace lobfilt
