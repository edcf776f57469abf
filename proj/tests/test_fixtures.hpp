#pragma once

#include <cstdint>

#include "pdupower/anomalies.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/preprocess.hpp"
#include "pdupower/telemetry.hpp"

namespace fixtures {

inline pdupower::Fleet make_fleet(int clusters, int pdus, int machines, std::uint64_t seed = 42) {
    pdupower::FleetConfig cfg;
    cfg.n_clusters = clusters;
    cfg.pdus_per_cluster = pdus;
    cfg.machines_per_pdu = machines;
    cfg.seed = seed;
    return pdupower::generate_fleet(cfg);
}

// Deterministic load, no utilization noise, no meter noise: every recorded
// value equals its ground truth.
inline pdupower::LoadScenario flat_scenario() {
    pdupower::LoadScenario sc;
    sc.utilization_noise_sigma = 0.0;
    sc.common_sigma = 0.0;
    return sc;
}

inline pdupower::SimOptions sim_options(int n_days, double noise, std::uint64_t seed,
                                        int threads = 1) {
    pdupower::SimOptions opt;
    opt.n_days = n_days;
    opt.meter_noise_sigma = noise;
    opt.seed = seed;
    opt.threads = threads;
    return opt;
}

inline pdupower::MachineSpec make_machine(double idle, double max, double mix, double exponent,
                                          double capacity = 64.0) {
    pdupower::MachineSpec m;
    m.machine_id = "test-m000";
    m.config_code = "10000";
    m.platform_family = "ridgeline";
    m.category = pdupower::MachineCategory::kCompute;
    m.idle_power = idle;
    m.max_power = max;
    m.dedicated_label = "shared";
    m.curve_exponent = exponent;
    m.curve_mix = mix;
    m.cpu_capacity = capacity;
    return m;
}

}  // namespace fixtures
