#pragma once

#include "motorbench/injection.hpp"
#include "motorbench/motor.hpp"
#include "motorbench/protection.hpp"

namespace motorbench {

/// Everything needed to reproduce a run.
struct RunConfig {
    motor::MotorParams motor = motor::default_params();
    protection::ProtectionSettings protection{};
    injection::InjectionConfig injection{};
    double tick_duration_s = 0.010;
    std::uint64_t rng_seed = 1;

    bool operator==(const RunConfig&) const = default;
};

inline std::vector<ValidationIssue> check(const RunConfig& c) {
    std::vector<ValidationIssue> issues = motor::check(c.motor);
    if (!(c.tick_duration_s > 0.0)) {
        issues.push_back({"tick_duration_s", "must be > 0"});
        return issues;
    }
    for (auto& i : protection::check(c.protection, c.tick_duration_s)) issues.push_back(std::move(i));
    for (auto& i : injection::check(c.injection, c.motor.rated_voltage_ll_v)) issues.push_back(std::move(i));
    return issues;
}

inline void validate(const RunConfig& c) {
    auto issues = check(c);
    if (!issues.empty()) throw ConfigError(std::move(issues));
}

} // namespace motorbench
