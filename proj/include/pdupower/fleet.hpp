#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/rng.hpp"

namespace pdupower {

enum class MachineCategory { kCompute, kStorage, kAccelerator };

inline const char* to_string(MachineCategory c) {
    switch (c) {
        case MachineCategory::kCompute: return "compute";
        case MachineCategory::kStorage: return "storage";
        case MachineCategory::kAccelerator: return "accelerator";
    }
    return "?";
}

inline MachineCategory category_from_string(std::string_view s) {
    if (s == "compute") return MachineCategory::kCompute;
    if (s == "storage") return MachineCategory::kStorage;
    if (s == "accelerator") return MachineCategory::kAccelerator;
    throw ConfigError("unknown machine category '" + std::string(s) + "'");
}

struct MachineSpec {
    std::string machine_id;
    std::string config_code;       // 5-digit hardware bill-of-materials code
    std::string platform_family;   // one of kPlatformFamilies
    MachineCategory category = MachineCategory::kCompute;
    double idle_power = 0.0;       // watts at zero CPU usage
    double max_power = 0.0;        // watts at full CPU usage
    std::string dedicated_label;   // "shared" or "dedicated"
    double curve_exponent = 1.0;   // >= 1
    double curve_mix = 1.0;        // in [0, 1]; 1 = straight line
    double cpu_capacity = 0.0;     // cores
};

struct PduSpec {
    std::string pdu_id;
    std::string cluster_id;
    std::vector<MachineSpec> machines;
    double network_max_power = 0.0;  // watts
    double cooling_max_power = 0.0;  // watts
    std::string architecture_type;   // one of kArchitectureTypes
    std::map<std::string, int> family_counts;

    [[nodiscard]] double idle_power() const {
        double s = 0.0;
        for (const auto& m : machines) s += m.idle_power;
        return s;
    }
    [[nodiscard]] double max_power() const {
        double s = 0.0;
        for (const auto& m : machines) s += m.max_power;
        return s;
    }
    [[nodiscard]] double cpu_capacity() const {
        double s = 0.0;
        for (const auto& m : machines) s += m.cpu_capacity;
        return s;
    }
};

struct ClusterSpec {
    std::string cluster_id;
    std::vector<std::string> pdu_ids;
};

struct Fleet {
    std::vector<ClusterSpec> clusters;
    std::vector<PduSpec> pdus;  // ordered by pdu_id

    [[nodiscard]] const PduSpec* find_pdu(std::string_view id) const {
        for (const auto& p : pdus)
            if (p.pdu_id == id) return &p;
        return nullptr;
    }
    [[nodiscard]] std::size_t machine_count() const {
        std::size_t n = 0;
        for (const auto& p : pdus) n += p.machines.size();
        return n;
    }
};

inline constexpr int kPlatformFamilyCount = 10;

inline const std::vector<std::string>& platform_families() {
    static const std::vector<std::string> kFamilies = {
        "ridgeline", "foxtail", "copperpeak", "bluejay", "granite", "harbor",
        "cobalt-store", "drift-store", "tensor-a", "tensor-b"};
    return kFamilies;
}

inline const std::vector<std::string>& architecture_types() {
    // Redundancy class of the PDU's power feed.
    static const std::vector<std::string> kArchs = {"N", "N+1", "2N"};
    return kArchs;
}

// Fixed hardware catalog: two configurations per platform family. The code
// is the 5-digit identity downstream models one-hot encode; every machine
// with the same code shares the same electrical behavior.
struct HardwareConfig {
    std::string code;
    std::string family;
    MachineCategory category;
    double idle_power;
    double max_power;
    double cpu_capacity;
    double curve_exponent;
    double curve_mix;
};

inline const std::vector<HardwareConfig>& hardware_catalog() {
    static const std::vector<HardwareConfig> kCatalog = {
        // compute: wide dynamic range, visibly curved power response
        {"10000", "ridgeline", MachineCategory::kCompute, 190.0, 560.0, 48.0, 1.8, 0.45},
        {"10001", "ridgeline", MachineCategory::kCompute, 215.0, 640.0, 64.0, 1.6, 0.55},
        {"10100", "foxtail", MachineCategory::kCompute, 175.0, 520.0, 48.0, 2.1, 0.35},
        {"10101", "foxtail", MachineCategory::kCompute, 240.0, 710.0, 72.0, 1.9, 0.40},
        {"10200", "copperpeak", MachineCategory::kCompute, 260.0, 820.0, 96.0, 1.5, 0.60},
        {"10201", "copperpeak", MachineCategory::kCompute, 300.0, 905.0, 128.0, 1.7, 0.50},
        {"10300", "bluejay", MachineCategory::kCompute, 205.0, 585.0, 56.0, 2.0, 0.30},
        {"10301", "bluejay", MachineCategory::kCompute, 230.0, 660.0, 64.0, 1.4, 0.65},
        {"10400", "granite", MachineCategory::kCompute, 285.0, 870.0, 112.0, 1.6, 0.55},
        {"10401", "granite", MachineCategory::kCompute, 320.0, 980.0, 128.0, 1.8, 0.45},
        {"10500", "harbor", MachineCategory::kCompute, 170.0, 490.0, 40.0, 2.2, 0.25},
        {"10501", "harbor", MachineCategory::kCompute, 195.0, 575.0, 56.0, 1.5, 0.70},
        // storage: narrow dynamic range, power nearly flat in CPU
        {"20000", "cobalt-store", MachineCategory::kStorage, 390.0, 470.0, 24.0, 1.2, 0.80},
        {"20001", "cobalt-store", MachineCategory::kStorage, 430.0, 515.0, 32.0, 1.1, 0.85},
        {"20100", "drift-store", MachineCategory::kStorage, 355.0, 430.0, 24.0, 1.3, 0.75},
        {"20101", "drift-store", MachineCategory::kStorage, 470.0, 560.0, 32.0, 1.2, 0.80},
        // accelerator hosts: high draw, narrow range, weak CPU coupling
        {"30000", "tensor-a", MachineCategory::kAccelerator, 880.0, 1050.0, 32.0, 1.4, 0.60},
        {"30001", "tensor-a", MachineCategory::kAccelerator, 960.0, 1150.0, 48.0, 1.3, 0.65},
        {"30100", "tensor-b", MachineCategory::kAccelerator, 1020.0, 1220.0, 48.0, 1.5, 0.55},
        {"30101", "tensor-b", MachineCategory::kAccelerator, 1100.0, 1310.0, 64.0, 1.2, 0.70},
    };
    return kCatalog;
}

inline const HardwareConfig& catalog_entry(std::string_view code) {
    for (const auto& c : hardware_catalog())
        if (c.code == code) return c;
    throw ConfigError("unknown hardware config code '" + std::string(code) + "'");
}

struct FleetConfig {
    int n_clusters = 4;
    int pdus_per_cluster = 3;
    int machines_per_pdu = 50;
    double compute_fraction = 0.70;
    double storage_fraction = 0.20;
    double accelerator_fraction = 0.10;
    std::uint64_t seed = 1;
};

inline void validate_machine_spec(const MachineSpec& m) {
    if (!(m.idle_power > 0.0 && m.idle_power < m.max_power))
        throw ConfigError("machine " + m.machine_id + ": requires 0 < idle_power < max_power");
    if (m.cpu_capacity <= 0.0)
        throw ConfigError("machine " + m.machine_id + ": cpu_capacity must be positive");
    if (m.curve_exponent < 1.0)
        throw ConfigError("machine " + m.machine_id + ": curve_exponent must be >= 1");
    if (m.curve_mix < 0.0 || m.curve_mix > 1.0)
        throw ConfigError("machine " + m.machine_id + ": curve_mix must be in [0, 1]");
    if (m.category != MachineCategory::kCompute) {
        // Storage and accelerator hardware has a narrow power dynamic range.
        const double range = (m.max_power - m.idle_power) / m.max_power;
        if (range > 0.2 + 1e-12)
            throw ConfigError("machine " + m.machine_id + ": dynamic range " +
                              format_double(range) + " exceeds 0.2 for its category");
    }
}

inline void validate_fleet(const Fleet& fleet) {
    std::map<std::string, int> seen_pdu;
    for (const auto& c : fleet.clusters) {
        if (c.pdu_ids.empty()) throw ConfigError("cluster " + c.cluster_id + " has no PDUs");
        for (const auto& id : c.pdu_ids)
            if (++seen_pdu[id] > 1)
                throw ConfigError("PDU " + id + " assigned to more than one cluster");
    }
    for (const auto& p : fleet.pdus) {
        std::map<std::string, int> counts;
        for (const auto& m : p.machines) {
            validate_machine_spec(m);
            counts[m.platform_family]++;
        }
        if (counts != p.family_counts)
            throw ConfigError("PDU " + p.pdu_id + ": family_counts disagree with machine list");
        if (!p.machines.empty() && !(p.idle_power() > 0.0 && p.max_power() > 0.0))
            throw ConfigError("PDU " + p.pdu_id + ": derived power bounds must be positive");
    }
}

// Power response of one machine at utilization u in [0, 1]. Monotone in u by
// construction (curve_mix blends a line with a convex power law), anchored at
// idle_power and max_power.
inline double machine_power_curve(const MachineSpec& spec, double utilization) {
    if (!(utilization >= 0.0 && utilization <= 1.0))
        throw DomainError("utilization " + format_double(utilization) + " outside [0, 1]");
    const double shape = spec.curve_mix * utilization +
                         (1.0 - spec.curve_mix) * std::pow(utilization, spec.curve_exponent);
    return spec.idle_power + (spec.max_power - spec.idle_power) * shape;
}

namespace detail {

inline std::vector<int> largest_remainder_counts(const std::vector<double>& fractions, int total) {
    std::vector<int> counts(fractions.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = fractions[i] * total;
        counts[i] = static_cast<int>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - counts[i], i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int k = 0; k < total - assigned; ++k) counts[remainders[k % remainders.size()].second]++;
    return counts;
}

inline std::vector<const HardwareConfig*> configs_for_category(MachineCategory cat) {
    std::vector<const HardwareConfig*> out;
    for (const auto& c : hardware_catalog())
        if (c.category == cat) out.push_back(&c);
    return out;
}

}  // namespace detail

// Builds the synthetic fleet topology: clusters of PDUs, each PDU holding a
// machine mix drawn from the hardware catalog. All draws are keyed by
// (seed, pdu_id), so the result is identical no matter how the loops run.
inline Fleet generate_fleet(const FleetConfig& cfg) {
    if (cfg.n_clusters < 0 || cfg.pdus_per_cluster < 0 || cfg.machines_per_pdu < 0)
        throw ConfigError("fleet counts must be non-negative");
    const double mix_sum =
        cfg.compute_fraction + cfg.storage_fraction + cfg.accelerator_fraction;
    if (std::abs(mix_sum - 1.0) > 1e-9)
        throw ConfigError("category mix sums to " + format_double(mix_sum) + ", expected 1");
    if (cfg.compute_fraction < 0 || cfg.storage_fraction < 0 || cfg.accelerator_fraction < 0)
        throw ConfigError("category mix fractions must be non-negative");

    Fleet fleet;
    char buf[64];
    for (int ci = 0; ci < cfg.n_clusters; ++ci) {
        std::snprintf(buf, sizeof(buf), "c%02d", ci);
        ClusterSpec cluster;
        cluster.cluster_id = buf;
        for (int pi = 0; pi < cfg.pdus_per_cluster; ++pi) {
            std::snprintf(buf, sizeof(buf), "c%02d-p%02d", ci, pi);
            PduSpec pdu;
            pdu.pdu_id = buf;
            pdu.cluster_id = cluster.cluster_id;
            RandomStream rng(cfg.seed, pdu.pdu_id, "fleet");

            pdu.architecture_type =
                architecture_types()[rng.uniform_index(architecture_types().size())];

            const auto counts = detail::largest_remainder_counts(
                {cfg.compute_fraction, cfg.storage_fraction, cfg.accelerator_fraction},
                cfg.machines_per_pdu);
            const MachineCategory cats[] = {MachineCategory::kCompute,
                                            MachineCategory::kStorage,
                                            MachineCategory::kAccelerator};
            int mi = 0;
            for (int cat_idx = 0; cat_idx < 3; ++cat_idx) {
                const auto configs = detail::configs_for_category(cats[cat_idx]);
                for (int k = 0; k < counts[cat_idx]; ++k, ++mi) {
                    const HardwareConfig& hw = *configs[rng.uniform_index(configs.size())];
                    MachineSpec m;
                    std::snprintf(buf, sizeof(buf), "%s-m%03d", pdu.pdu_id.c_str(), mi);
                    m.machine_id = buf;
                    m.config_code = hw.code;
                    m.platform_family = hw.family;
                    m.category = hw.category;
                    m.idle_power = hw.idle_power;
                    m.max_power = hw.max_power;
                    m.cpu_capacity = hw.cpu_capacity;
                    m.curve_exponent = hw.curve_exponent;
                    m.curve_mix = hw.curve_mix;
                    m.dedicated_label = rng.uniform() < 0.3 ? "dedicated" : "shared";
                    pdu.family_counts[m.platform_family]++;
                    pdu.machines.push_back(std::move(m));
                }
            }

            // Networking is unmetered; cooling rides the same feed. Both are
            // sized off the PDU's IT capacity with a per-PDU jitter.
            const double it_max = pdu.max_power();
            pdu.network_max_power = std::round(it_max * rng.uniform(0.05, 0.08));
            pdu.cooling_max_power = std::round(it_max * rng.uniform(0.11, 0.17));

            cluster.pdu_ids.push_back(pdu.pdu_id);
            fleet.pdus.push_back(std::move(pdu));
        }
        fleet.clusters.push_back(std::move(cluster));
    }
    validate_fleet(fleet);
    return fleet;
}

}  // namespace pdupower
