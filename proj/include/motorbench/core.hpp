#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace motorbench {

/// Per-phase quantity, indexed a, b, c.
template <typename T>
using PhaseArray = std::array<T, 3>;

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::size_t index(Phase p) { return static_cast<std::size_t>(p); }

template <typename T>
constexpr T phase_max(const PhaseArray<T>& x) { return std::max({x[0], x[1], x[2]}); }

template <typename T>
constexpr T phase_min(const PhaseArray<T>& x) { return std::min({x[0], x[1], x[2]}); }

template <typename T>
constexpr T phase_mean(const PhaseArray<T>& x) { return (x[0] + x[1] + x[2]) / T(3); }

/// The eight injectable bench faults.
enum class FaultKind : std::uint8_t {
    Overvoltage,
    Undervoltage,
    Overcurrent,
    PhaseLoss,
    LockedRotor,
    ExtendedStart,
    VoltageUnbalance,
    CurrentUnbalance,
};

inline constexpr std::size_t kFaultKindCount = 8;

inline constexpr std::array<FaultKind, kFaultKindCount> kAllFaults = {
    FaultKind::Overvoltage,      FaultKind::Undervoltage, FaultKind::Overcurrent,
    FaultKind::PhaseLoss,        FaultKind::LockedRotor,  FaultKind::ExtendedStart,
    FaultKind::VoltageUnbalance, FaultKind::CurrentUnbalance,
};

inline constexpr std::size_t index(FaultKind f) { return static_cast<std::size_t>(f); }

inline constexpr std::string_view to_string(FaultKind f) {
    switch (f) {
    case FaultKind::Overvoltage: return "Overvoltage";
    case FaultKind::Undervoltage: return "Undervoltage";
    case FaultKind::Overcurrent: return "Overcurrent";
    case FaultKind::PhaseLoss: return "PhaseLoss";
    case FaultKind::LockedRotor: return "LockedRotor";
    case FaultKind::ExtendedStart: return "ExtendedStart";
    case FaultKind::VoltageUnbalance: return "VoltageUnbalance";
    case FaultKind::CurrentUnbalance: return "CurrentUnbalance";
    }
    return "?";
}

inline std::optional<FaultKind> parse_fault_kind(std::string_view s) {
    for (FaultKind f : kAllFaults) {
        if (to_string(f) == s) return f;
    }
    return std::nullopt;
}

/// ANSI / IEEE C37.2 device function that a relay element emulates.
enum class AnsiFunction : std::uint8_t {
    Undervoltage27,
    CurrentUnbalance46,
    VoltageUnbalance47,
    IncompleteSequence48,
    TimeOvercurrent51,
    Overvoltage59,
    PhaseLoss,
    LockedRotor,
};

inline constexpr AnsiFunction ansi_function(FaultKind f) {
    switch (f) {
    case FaultKind::Overvoltage: return AnsiFunction::Overvoltage59;
    case FaultKind::Undervoltage: return AnsiFunction::Undervoltage27;
    case FaultKind::Overcurrent: return AnsiFunction::TimeOvercurrent51;
    case FaultKind::PhaseLoss: return AnsiFunction::PhaseLoss;
    case FaultKind::LockedRotor: return AnsiFunction::LockedRotor;
    case FaultKind::ExtendedStart: return AnsiFunction::IncompleteSequence48;
    case FaultKind::VoltageUnbalance: return AnsiFunction::VoltageUnbalance47;
    case FaultKind::CurrentUnbalance: return AnsiFunction::CurrentUnbalance46;
    }
    return AnsiFunction::PhaseLoss;
}

inline constexpr std::string_view to_string(AnsiFunction a) {
    switch (a) {
    case AnsiFunction::Undervoltage27: return "27";
    case AnsiFunction::CurrentUnbalance46: return "46";
    case AnsiFunction::VoltageUnbalance47: return "47";
    case AnsiFunction::IncompleteSequence48: return "48_EXT_START";
    case AnsiFunction::TimeOvercurrent51: return "51";
    case AnsiFunction::Overvoltage59: return "59";
    case AnsiFunction::PhaseLoss: return "PHASE_LOSS";
    case AnsiFunction::LockedRotor: return "LOCKED_ROTOR";
    }
    return "?";
}

enum class Unit : std::uint8_t { Volt, Ampere, Percent };

inline constexpr std::string_view to_string(Unit u) {
    switch (u) {
    case Unit::Volt: return "V";
    case Unit::Ampere: return "A";
    case Unit::Percent: return "%";
    }
    return "?";
}

struct Quantity {
    double value = 0.0;
    Unit unit = Unit::Percent;

    bool operator==(const Quantity&) const = default;
};

/// Per-phase RMS voltages (line-to-neutral) and currents as seen by the relay.
struct ThreePhaseMeasurement {
    PhaseArray<double> v{};
    PhaseArray<double> i{};
    double frequency_hz = 0.0;
    double sim_time_s = 0.0;

    bool operator==(const ThreePhaseMeasurement&) const = default;
};

/// One offending field of a rejected configuration.
struct ValidationIssue {
    std::string field;
    std::string message;
};

/// Thrown when a configuration, setting or script fails validation.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<ValidationIssue> issues)
        : std::runtime_error(render(issues)), issues_(std::move(issues)) {}
    ConfigError(std::string field, std::string message)
        : ConfigError(std::vector<ValidationIssue>{{std::move(field), std::move(message)}}) {}

    const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

private:
    static std::string render(const std::vector<ValidationIssue>& issues) {
        std::string out = "invalid configuration";
        for (const auto& issue : issues) {
            out += "\n  ";
            out += issue.field;
            out += ": ";
            out += issue.message;
        }
        return out;
    }

    std::vector<ValidationIssue> issues_;
};

} // namespace motorbench
