#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace pdupower {

// 5-minute telemetry cadence.
inline constexpr int kPeriodsPerDay = 288;
inline constexpr int kMinutesPerPeriod = 5;

struct Timestamp {
    std::int32_t day = 0;
    std::int32_t period = 0;  // in [0, kPeriodsPerDay)

    [[nodiscard]] std::int64_t index() const {
        return static_cast<std::int64_t>(day) * kPeriodsPerDay + period;
    }
    static Timestamp from_index(std::int64_t idx) {
        return {static_cast<std::int32_t>(idx / kPeriodsPerDay),
                static_cast<std::int32_t>(idx % kPeriodsPerDay)};
    }
    auto operator<=>(const Timestamp&) const = default;
};

// One calendar day of the fixed 288-slot grid.
struct DayGrid {
    std::int32_t day = 0;
    [[nodiscard]] static constexpr int size() { return kPeriodsPerDay; }
    [[nodiscard]] Timestamp at(int period) const { return {day, period}; }
};

// Error taxonomy. The CLI maps each category to a distinct exit code.
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ContractError : std::logic_error { using std::logic_error::logic_error; };
struct DomainError : std::domain_error { using std::domain_error::domain_error; };
struct TrainingError : std::runtime_error { using std::runtime_error::runtime_error; };
struct PlacementError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DataError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ModelMissingError : std::runtime_error { using std::runtime_error::runtime_error; };
struct VersionError : std::runtime_error { using std::runtime_error::runtime_error; };
struct IntegrityError : std::runtime_error { using std::runtime_error::runtime_error; };

// Per-sample state bits carried through cleaning. A sample is usable for
// training when its power is present and no exclusion bit is set.
enum SampleFlag : std::uint8_t {
    kFlagGap = 1u << 0,             // power missing in the raw series
    kFlagInterpolated = 1u << 1,    // gap filled linearly
    kFlagLongGap = 1u << 2,         // gap longer than max_gap, left missing
    kFlagSmoothed = 1u << 3,        // cpu replaced by EWMA
    kFlagRateExcluded = 1u << 4,    // power/resource rate bound violated
    kFlagMedianExcluded = 1u << 5,  // below fraction of daily median
    kFlagDeadDay = 1u << 6,         // whole day had no usable samples
};

inline constexpr std::uint8_t kExclusionMask =
    kFlagLongGap | kFlagRateExcluded | kFlagMedianExcluded | kFlagDeadDay;

inline bool is_missing(double v) { return std::isnan(v); }
inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Shortest round-trip decimal form; locale-independent so emitted artifacts
// are byte-reproducible.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    if (s == "nan" || s == "-nan") return missing_value();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw IntegrityError("malformed numeric field '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw IntegrityError("malformed integer field '" + std::string(s) + "'");
    return v;
}

// FNV-1a, used to derive per-entity random streams from string ids.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace pdupower
