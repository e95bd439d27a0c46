#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lobfilt {

// All timestamps are nanoseconds since the session epoch (midnight of the
// trading date); durations share the same representation.
using Nanos = std::chrono::nanoseconds;
using OrderId = std::uint64_t;
using PriceTicks = std::int64_t;
using Quantity = std::int64_t;

constexpr Nanos kSecond{1'000'000'000};
constexpr Nanos kMillisecond{1'000'000};

enum class EventType : std::uint8_t { New, Trade, Modify, Cancel };
enum class Side : std::uint8_t { Bid, Ask };

constexpr std::size_t kBookDepth = 5;

struct Level {
    PriceTicks price{0};
    Quantity qty{0};

    friend bool operator==(const Level&, const Level&) = default;
};

/// Top-of-book view, best level first. Unused levels are {0, 0}.
struct BookSnapshot {
    std::array<Level, kBookDepth> bids{};
    std::array<Level, kBookDepth> asks{};

    std::size_t bid_levels() const noexcept { return count(bids); }
    std::size_t ask_levels() const noexcept { return count(asks); }

    /// Bid prices strictly decreasing, ask prices strictly increasing, and an
    /// uncrossed top when both sides are present.
    bool well_formed() const noexcept {
        for (std::size_t i = 1; i < bid_levels(); ++i)
            if (bids[i].price >= bids[i - 1].price) return false;
        for (std::size_t i = 1; i < ask_levels(); ++i)
            if (asks[i].price <= asks[i - 1].price) return false;
        if (bid_levels() > 0 && ask_levels() > 0 && asks[0].price <= bids[0].price) return false;
        return true;
    }

    friend bool operator==(const BookSnapshot&, const BookSnapshot&) = default;

private:
    static std::size_t count(const std::array<Level, kBookDepth>& side) noexcept {
        std::size_t n = 0;
        while (n < kBookDepth && side[n].qty > 0) ++n;
        return n;
    }
};

struct Event {
    Nanos timestamp{0};
    OrderId oid{0};
    EventType etype{EventType::New};
    Side side{Side::Bid};
    PriceTicks price{0};
    Quantity qty{0};
    std::optional<BookSnapshot> snapshot{};

    friend bool operator==(const Event&, const Event&) = default;
};

inline std::string_view to_string(EventType t) noexcept {
    switch (t) {
        case EventType::New: return "NEW";
        case EventType::Trade: return "TRADE";
        case EventType::Modify: return "MODIFY";
        case EventType::Cancel: return "CANCEL";
    }
    return "?";
}

inline std::string_view to_string(Side s) noexcept { return s == Side::Bid ? "BID" : "ASK"; }

inline std::optional<EventType> parse_event_type(std::string_view token) noexcept {
    if (token == "NEW") return EventType::New;
    if (token == "TRADE") return EventType::Trade;
    if (token == "MODIFY") return EventType::Modify;
    if (token == "CANCEL") return EventType::Cancel;
    return std::nullopt;
}

inline std::optional<Side> parse_side(std::string_view token) noexcept {
    if (token == "BID") return Side::Bid;
    if (token == "ASK") return Side::Ask;
    return std::nullopt;
}

inline double to_seconds(Nanos d) noexcept { return static_cast<double>(d.count()) * 1e-9; }

// Error hierarchy shared by all modules.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : Error {
    using Error::Error;
};
struct StructuralError : Error {
    using Error::Error;
};
struct OrderingError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace lobfilt
