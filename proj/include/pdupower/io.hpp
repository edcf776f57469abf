#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pdupower/anomalies.hpp"
#include "pdupower/core.hpp"
#include "pdupower/eval.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/forest.hpp"
#include "pdupower/perpdu.hpp"
#include "pdupower/preprocess.hpp"
#include "pdupower/telemetry.hpp"
#include "pdupower/unified_machine.hpp"

namespace pdupower {

using json = nlohmann::json;

inline constexpr int kArtifactFormatVersion = 1;

// ---------------------------------------------------------------------------
// Filesystem helpers

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json parse_json_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Telemetry format: columnar text, one row per (entity, day, period).
// Machine files carry (cpu, power, flags); PDU files add the simulator's
// ground-truth it/overhead split. Flags serialize as fixed-order letters.

inline std::string flags_to_string(std::uint8_t f) {
    if (f == 0) return "-";
    std::string s;
    if (f & kFlagGap) s += 'g';
    if (f & kFlagInterpolated) s += 'i';
    if (f & kFlagLongGap) s += 'G';
    if (f & kFlagSmoothed) s += 's';
    if (f & kFlagRateExcluded) s += 'r';
    if (f & kFlagMedianExcluded) s += 'm';
    if (f & kFlagDeadDay) s += 'd';
    return s;
}

inline std::uint8_t flags_from_string(std::string_view s) {
    if (s == "-") return 0;
    std::uint8_t f = 0;
    for (char c : s) {
        switch (c) {
            case 'g': f |= kFlagGap; break;
            case 'i': f |= kFlagInterpolated; break;
            case 'G': f |= kFlagLongGap; break;
            case 's': f |= kFlagSmoothed; break;
            case 'r': f |= kFlagRateExcluded; break;
            case 'm': f |= kFlagMedianExcluded; break;
            case 'd': f |= kFlagDeadDay; break;
            default: throw IntegrityError(std::string("unknown flag letter '") + c + "'");
        }
    }
    return f;
}

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace detail

inline void save_telemetry(const TelemetryDataset& ds, const std::filesystem::path& machine_path,
                           const std::filesystem::path& pdu_path) {
    const auto emit_header = [&](std::string& out, const char* kind, const char* columns) {
        out += "#pdupower-telemetry\tv1\n";
        out += std::string("#kind\t") + kind + "\n";
        out += "#day_start\t" + std::to_string(ds.day_start) + "\n";
        out += "#n_days\t" + std::to_string(ds.n_days) + "\n";
        out += columns;
    };
    {
        std::string out;
        emit_header(out, "machine", "entity_id\tday\tperiod\tcpu\tpower\tflags\n");
        for (const auto& s : ds.machines) {
            for (std::size_t i = 0; i < s.cpu.size(); ++i) {
                const Timestamp ts = ds.timestamp_at(i);
                out += s.machine_id;
                out += '\t';
                out += std::to_string(ts.day);
                out += '\t';
                out += std::to_string(ts.period);
                out += '\t';
                out += format_double(s.cpu[i]);
                out += '\t';
                out += format_double(s.power[i]);
                out += '\t';
                out += flags_to_string(s.flags[i]);
                out += '\n';
            }
        }
        write_file_atomic(machine_path, out);
    }
    {
        std::string out;
        emit_header(out, "pdu",
                    "entity_id\tday\tperiod\tcpu\tpower\tit_power\toverhead_power\tflags\n");
        for (const auto& s : ds.pdus) {
            for (std::size_t i = 0; i < s.cpu.size(); ++i) {
                const Timestamp ts = ds.timestamp_at(i);
                out += s.pdu_id;
                out += '\t';
                out += std::to_string(ts.day);
                out += '\t';
                out += std::to_string(ts.period);
                out += '\t';
                out += format_double(s.cpu[i]);
                out += '\t';
                out += format_double(s.power[i]);
                out += '\t';
                out += format_double(s.it_power[i]);
                out += '\t';
                out += format_double(s.overhead_power[i]);
                out += '\t';
                out += flags_to_string(s.flags[i]);
                out += '\n';
            }
        }
        write_file_atomic(pdu_path, out);
    }
}

inline TelemetryDataset load_telemetry(const std::filesystem::path& machine_path,
                                       const std::filesystem::path& pdu_path) {
    TelemetryDataset ds;
    int header_day_start = 0;
    int header_n_days = 0;

    const auto load_one = [&](const std::filesystem::path& path, bool pdu_kind) {
        const std::string text = read_file(path);
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line) || !line.starts_with("#pdupower-telemetry"))
            throw IntegrityError(path.string() + ": not a telemetry file");
        const auto magic = detail::split_tabs(line);
        if (magic.size() != 2 || magic[1] != "v1")
            throw VersionError(path.string() + ": unsupported telemetry version");
        std::string expected_kind = pdu_kind ? "pdu" : "machine";
        if (!std::getline(in, line) || detail::split_tabs(line).size() != 2 ||
            detail::split_tabs(line)[1] != expected_kind)
            throw IntegrityError(path.string() + ": wrong or missing kind header");
        if (!std::getline(in, line)) throw IntegrityError(path.string() + ": truncated header");
        header_day_start = static_cast<int>(parse_int(detail::split_tabs(line)[1]));
        if (!std::getline(in, line)) throw IntegrityError(path.string() + ": truncated header");
        header_n_days = static_cast<int>(parse_int(detail::split_tabs(line)[1]));
        if (!std::getline(in, line)) throw IntegrityError(path.string() + ": missing column header");
        ds.day_start = header_day_start;
        ds.n_days = header_n_days;
        const std::size_t expected = ds.samples_per_series();
        const std::size_t n_cols = pdu_kind ? 8 : 6;

        std::string current;
        std::size_t row_in_series = 0;
        auto check_complete = [&]() {
            if (!current.empty() && row_in_series != expected)
                throw IntegrityError(path.string() + ": series " + current + " has " +
                                     std::to_string(row_in_series) + " rows, expected " +
                                     std::to_string(expected));
        };
        std::size_t line_no = 5;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto f = detail::split_tabs(line);
            if (f.size() != n_cols)
                throw IntegrityError(path.string() + ":" + std::to_string(line_no) +
                                     ": expected " + std::to_string(n_cols) + " columns");
            const std::string id(f[0]);
            if (id != current) {
                check_complete();
                current = id;
                row_in_series = 0;
                if (pdu_kind) {
                    PduSeries s;
                    s.pdu_id = id;
                    s.cpu.reserve(expected);
                    ds.pdus.push_back(std::move(s));
                } else {
                    MachineSeries s;
                    s.machine_id = id;
                    s.cpu.reserve(expected);
                    ds.machines.push_back(std::move(s));
                }
            }
            const auto day = static_cast<std::int32_t>(parse_int(f[1]));
            const auto period = static_cast<std::int32_t>(parse_int(f[2]));
            const std::size_t want = row_in_series;
            const std::size_t got = ds.index_of({day, period});
            if (got != want)
                throw ContractError(path.string() + ":" + std::to_string(line_no) +
                                    ": rows out of order for " + id);
            if (pdu_kind) {
                auto& s = ds.pdus.back();
                s.cpu.push_back(parse_double(f[3]));
                s.power.push_back(parse_double(f[4]));
                s.it_power.push_back(parse_double(f[5]));
                s.overhead_power.push_back(parse_double(f[6]));
                s.flags.push_back(flags_from_string(f[7]));
            } else {
                auto& s = ds.machines.back();
                s.cpu.push_back(parse_double(f[3]));
                s.power.push_back(parse_double(f[4]));
                s.flags.push_back(flags_from_string(f[5]));
            }
            row_in_series++;
        }
        check_complete();
    };

    load_one(machine_path, false);
    load_one(pdu_path, true);
    return ds;
}

// Order-insensitive content hash used as the training-data fingerprint in
// model artifacts (per-series hashes combine by XOR).
inline std::uint64_t dataset_fingerprint(const TelemetryDataset& ds) {
    std::uint64_t h = 0;
    const auto hash_series = [](std::string_view id, std::span<const double> a,
                                std::span<const double> b) {
        std::uint64_t s = fnv1a(id);
        const auto mix = [&s](double v) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, sizeof(bits));
            s = splitmix64(s ^ bits);
        };
        for (double v : a) mix(v);
        for (double v : b) mix(v);
        return s;
    };
    for (const auto& m : ds.machines) h ^= hash_series(m.machine_id, m.cpu, m.power);
    for (const auto& p : ds.pdus) h ^= hash_series(p.pdu_id, p.cpu, p.power);
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------
// Fleet JSON

inline json fleet_to_json(const Fleet& fleet) {
    json j;
    j["format_version"] = kArtifactFormatVersion;
    j["clusters"] = json::array();
    for (const auto& c : fleet.clusters)
        j["clusters"].push_back({{"cluster_id", c.cluster_id}, {"pdu_ids", c.pdu_ids}});
    j["pdus"] = json::array();
    for (const auto& p : fleet.pdus) {
        json pj;
        pj["pdu_id"] = p.pdu_id;
        pj["cluster_id"] = p.cluster_id;
        pj["network_max_power"] = p.network_max_power;
        pj["cooling_max_power"] = p.cooling_max_power;
        pj["architecture_type"] = p.architecture_type;
        pj["family_counts"] = p.family_counts;
        pj["machines"] = json::array();
        for (const auto& m : p.machines) {
            pj["machines"].push_back({{"machine_id", m.machine_id},
                                      {"config_code", m.config_code},
                                      {"platform_family", m.platform_family},
                                      {"category", to_string(m.category)},
                                      {"idle_power", m.idle_power},
                                      {"max_power", m.max_power},
                                      {"dedicated_label", m.dedicated_label},
                                      {"curve_exponent", m.curve_exponent},
                                      {"curve_mix", m.curve_mix},
                                      {"cpu_capacity", m.cpu_capacity}});
        }
        j["pdus"].push_back(std::move(pj));
    }
    return j;
}

inline Fleet fleet_from_json(const json& j) {
    if (j.value("format_version", -1) != kArtifactFormatVersion)
        throw VersionError("unsupported fleet file version");
    Fleet fleet;
    for (const auto& cj : j.at("clusters")) {
        ClusterSpec c;
        c.cluster_id = cj.at("cluster_id").get<std::string>();
        c.pdu_ids = cj.at("pdu_ids").get<std::vector<std::string>>();
        fleet.clusters.push_back(std::move(c));
    }
    for (const auto& pj : j.at("pdus")) {
        PduSpec p;
        p.pdu_id = pj.at("pdu_id").get<std::string>();
        p.cluster_id = pj.at("cluster_id").get<std::string>();
        p.network_max_power = pj.at("network_max_power").get<double>();
        p.cooling_max_power = pj.at("cooling_max_power").get<double>();
        p.architecture_type = pj.at("architecture_type").get<std::string>();
        p.family_counts = pj.at("family_counts").get<std::map<std::string, int>>();
        for (const auto& mj : pj.at("machines")) {
            MachineSpec m;
            m.machine_id = mj.at("machine_id").get<std::string>();
            m.config_code = mj.at("config_code").get<std::string>();
            m.platform_family = mj.at("platform_family").get<std::string>();
            m.category = category_from_string(mj.at("category").get<std::string>());
            m.idle_power = mj.at("idle_power").get<double>();
            m.max_power = mj.at("max_power").get<double>();
            m.dedicated_label = mj.at("dedicated_label").get<std::string>();
            m.curve_exponent = mj.at("curve_exponent").get<double>();
            m.curve_mix = mj.at("curve_mix").get<double>();
            m.cpu_capacity = mj.at("cpu_capacity").get<double>();
            p.machines.push_back(std::move(m));
        }
        fleet.pdus.push_back(std::move(p));
    }
    validate_fleet(fleet);
    return fleet;
}

// ---------------------------------------------------------------------------
// Model artifacts: a versioned envelope around a kind-specific payload, with
// the training config snapshot and data fingerprint for provenance.

struct ModelArtifact {
    std::string kind;  // per_pdu | unified_machine | unified_pdu
    json payload;
    json training_config;
    std::string data_fingerprint;
};

inline void save_model_artifact(const ModelArtifact& artifact, const std::filesystem::path& path) {
    json j;
    j["format_version"] = kArtifactFormatVersion;
    j["kind"] = artifact.kind;
    j["training_config"] = artifact.training_config;
    j["data_fingerprint"] = artifact.data_fingerprint;
    j["payload"] = artifact.payload;
    write_file_atomic(path, j.dump(1, '\t') + "\n");
}

inline ModelArtifact load_model_artifact(const std::filesystem::path& path,
                                         const std::string& expected_kind) {
    if (!std::filesystem::exists(path))
        throw ModelMissingError("model file not found: " + path.string());
    const json j = parse_json_file(path);
    const int version = j.value("format_version", -1);
    if (version != kArtifactFormatVersion)
        throw VersionError(path.string() + ": unsupported model format version " +
                           std::to_string(version));
    ModelArtifact artifact;
    artifact.kind = j.at("kind").get<std::string>();
    if (artifact.kind != expected_kind)
        throw DataError(path.string() + ": model kind '" + artifact.kind + "', expected '" +
                        expected_kind + "'");
    artifact.training_config = j.value("training_config", json::object());
    artifact.data_fingerprint = j.value("data_fingerprint", "");
    artifact.payload = j.at("payload");
    return artifact;
}

inline json per_pdu_models_to_json(const std::map<std::string, PerPduModel>& models) {
    json out = json::array();
    for (const auto& [id, m] : models) {
        json lines = json::array();
        for (const auto& line : m.lines)
            lines.push_back(
                {{"alpha", line.alpha}, {"beta", line.beta}, {"fallback", line.fallback}});
        out.push_back({{"pdu_id", id},
                       {"trained_day", m.trained_day},
                       {"cpu_min", m.cpu_min},
                       {"cpu_max", m.cpu_max},
                       {"lambda", m.lambda},
                       {"lines", std::move(lines)}});
    }
    return out;
}

inline std::map<std::string, PerPduModel> per_pdu_models_from_json(const json& j) {
    std::map<std::string, PerPduModel> out;
    for (const auto& mj : j) {
        PerPduModel m;
        m.pdu_id = mj.at("pdu_id").get<std::string>();
        m.trained_day = mj.at("trained_day").get<int>();
        m.cpu_min = mj.at("cpu_min").get<double>();
        m.cpu_max = mj.at("cpu_max").get<double>();
        m.lambda = mj.at("lambda").get<double>();
        const auto& lines = mj.at("lines");
        for (std::size_t r = 0; r < 3; ++r) {
            m.lines[r].alpha = lines.at(r).at("alpha").get<double>();
            m.lines[r].beta = lines.at(r).at("beta").get<double>();
            m.lines[r].fallback = lines.at(r).at("fallback").get<bool>();
        }
        out.emplace(m.pdu_id, std::move(m));
    }
    return out;
}

inline json forest_to_json(const RandomForest& model) {
    json j;
    j["params"] = {{"n_trees", model.params.n_trees},
                   {"max_depth", model.params.max_depth},
                   {"min_samples_leaf", model.params.min_samples_leaf},
                   {"features_per_split", model.params.features_per_split},
                   {"bootstrap", model.params.bootstrap},
                   {"seed", model.params.seed}};
    j["column_names"] = model.column_names;
    j["encoding"] = model.encoding.categories;
    j["target_min"] = model.target_min;
    j["target_max"] = model.target_max;
    j["trees"] = json::array();
    for (const auto& t : model.trees) {
        json tj;
        std::vector<std::int32_t> feature;
        std::vector<double> threshold;
        std::vector<std::int32_t> left;
        std::vector<std::int32_t> right;
        std::vector<double> value;
        for (const auto& nd : t.nodes) {
            feature.push_back(nd.feature);
            threshold.push_back(nd.threshold);
            left.push_back(nd.left);
            right.push_back(nd.right);
            value.push_back(nd.value);
        }
        tj["feature"] = std::move(feature);
        tj["threshold"] = std::move(threshold);
        tj["left"] = std::move(left);
        tj["right"] = std::move(right);
        tj["value"] = std::move(value);
        j["trees"].push_back(std::move(tj));
    }
    return j;
}

inline RandomForest forest_from_json(const json& j) {
    RandomForest model;
    const auto& pj = j.at("params");
    model.params.n_trees = pj.at("n_trees").get<int>();
    model.params.max_depth = pj.at("max_depth").get<int>();
    model.params.min_samples_leaf = pj.at("min_samples_leaf").get<int>();
    model.params.features_per_split = pj.at("features_per_split").get<double>();
    model.params.bootstrap = pj.at("bootstrap").get<bool>();
    model.params.seed = pj.at("seed").get<std::uint64_t>();
    model.column_names = j.at("column_names").get<std::vector<std::string>>();
    model.encoding.categories =
        j.at("encoding").get<std::map<std::string, std::vector<std::string>>>();
    model.target_min = j.at("target_min").get<double>();
    model.target_max = j.at("target_max").get<double>();
    for (const auto& tj : j.at("trees")) {
        RegressionTree tree;
        const auto feature = tj.at("feature").get<std::vector<std::int32_t>>();
        const auto threshold = tj.at("threshold").get<std::vector<double>>();
        const auto left = tj.at("left").get<std::vector<std::int32_t>>();
        const auto right = tj.at("right").get<std::vector<std::int32_t>>();
        const auto value = tj.at("value").get<std::vector<double>>();
        if (feature.size() != threshold.size() || feature.size() != left.size() ||
            feature.size() != right.size() || feature.size() != value.size())
            throw IntegrityError("forest payload: ragged tree arrays");
        for (std::size_t i = 0; i < feature.size(); ++i)
            tree.nodes.push_back(TreeNode{feature[i], threshold[i], left[i], right[i], value[i]});
        model.trees.push_back(std::move(tree));
    }
    return model;
}

// ---------------------------------------------------------------------------
// Reports

inline json cleaning_report_to_json(const CleaningReport& r) {
    return {{"input_points", r.input_points},
            {"retained_points", r.retained_points},
            {"removed_points", r.removed_points},
            {"retained_fraction", r.retained_fraction()},
            {"gaps_filled", r.gaps_filled},
            {"gaps_unfilled", r.gaps_unfilled},
            {"smoothed_points", r.smoothed_points},
            {"rate_excluded", r.rate_excluded},
            {"median_excluded", r.median_excluded},
            {"dead_day_points", r.dead_day_points}};
}

inline json anomaly_ledger_to_json(const AnomalyLedger& ledger) {
    json j = json::array();
    for (const auto& r : ledger.records)
        j.push_back({{"kind", to_string(r.kind)},
                     {"entity_kind", r.pdu_entity ? "pdu" : "machine"},
                     {"entity_id", r.entity_id},
                     {"start", r.start},
                     {"length", r.length}});
    return j;
}

inline AnomalyLedger anomaly_ledger_from_json(const json& j) {
    AnomalyLedger ledger;
    for (const auto& rj : j) {
        AnomalyRecord r;
        const std::string kind = rj.at("kind").get<std::string>();
        if (kind == "gap")
            r.kind = AnomalyKind::kGap;
        else if (kind == "spike")
            r.kind = AnomalyKind::kSpike;
        else if (kind == "maintenance")
            r.kind = AnomalyKind::kMaintenance;
        else
            throw IntegrityError("unknown anomaly kind '" + kind + "'");
        r.pdu_entity = rj.at("entity_kind").get<std::string>() == "pdu";
        r.entity_id = rj.at("entity_id").get<std::string>();
        r.start = rj.at("start").get<std::size_t>();
        r.length = rj.at("length").get<std::size_t>();
        ledger.records.push_back(std::move(r));
    }
    return ledger;
}

inline std::string cdf_to_tsv(const CdfTable& cdf) {
    std::string out = "threshold\tfraction\n";
    for (std::size_t i = 0; i < cdf.thresholds.size(); ++i)
        out += format_double(cdf.thresholds[i]) + "\t" + format_double(cdf.fraction[i]) + "\n";
    return out;
}

}  // namespace pdupower
