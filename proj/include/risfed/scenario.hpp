#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "risfed/config.hpp"
#include "risfed/core.hpp"
#include "risfed/rng.hpp"

namespace risfed {

// Every tunable in the whole pipeline lives here. Defaults reproduce the
// reference deployment: 18 APs, 3 RIS panels of 10x20 elements, 500 UEs at
// a 70/30 legitimate/eavesdropper mix, 28 GHz FR2 numerology.
struct ScenarioConfig {
    // [scenario]
    int n_ap = 18;
    int n_ris = 3;
    int n_ue = 500;
    double legit_fraction = 0.7;
    double carrier_ghz = 28.0;
    double bandwidth_mhz = 400.0;
    double scs_khz = 120.0;
    int n_rb = 60;
    int ap_antennas = 32;
    int ue_antennas = 1;
    int ris_rows = 10;
    int ris_cols = 20;
    double ap_height_m = 8.0;
    double ue_height_m = 1.5;
    double ris_height_m = 6.0;
    double p_ap_dbm = 40.0;
    double p_lu_dbm = 23.0;
    std::vector<double> eve_power_range_dbm = {24.0, 30.0};
    double noise_figure_db = 5.0;
    std::vector<double> area_m = {120.0, 60.0};
    int n_fl_clients = 3;
    std::vector<double> early_exit_cl = {0.55, 0.70};
    int n_phase_configs = 100;
    uint64_t master_seed = 1;

    // [topology]
    double client_alpha = 0.5;
    double ap_jitter = 0.1;

    // [channel]
    double pl_intercept_db = 32.4;
    double pl_exponent_los = 2.0;
    double pl_exponent_nlos = 3.2;
    double shadowing_los_db = 3.0;
    double shadowing_nlos_db = 7.0;
    double rician_k_db = 9.0;
    int n_taps = 4;
    double pdp_decay = 1.0;
    double d_clutter_m = 25.0;
    double ris_element_gain_db = 0.0;

    // [secrecy]
    std::string wideband_mode = "mean";  // or "geometric"
    bool asr_normalize_by_users = false;

    // [dataset]
    double split_ratio = 0.8;
    std::string ris_plane = "distance";  // or "ris_x"
    std::string csi_axes = "antenna_rb";

    // [nn]
    double lambda_aux = 0.3;
    double learning_rate = 1e-3;
    int batch_size = 32;
    int local_epochs = 2;

    // [federated]
    int rounds = 20;
    bool aggregator_trains = false;

    // [experiments]
    int desk_phases = 8;
    int desk_ue = 150;
    int desk_rounds = 10;
    std::vector<double> asr_ratios = {2.0, 3.5, 5.5};
    int top_k = 5;

    int ris_elements() const { return ris_rows * ris_cols; }
    int n_legit() const {
        return static_cast<int>(std::llround(legit_fraction * n_ue));
    }
    int n_eve() const { return n_ue - n_legit(); }
    double area_x() const { return area_m[0]; }
    double area_y() const { return area_m[1]; }
    double bandwidth_hz() const { return bandwidth_mhz * 1e6; }
};

namespace detail {

struct ConfigField {
    std::string section;
    std::string key;
    std::function<void(ScenarioConfig&, const ConfigValue&)> set;
    std::function<ConfigValue(const ScenarioConfig&)> get;
};

inline ConfigError bad_type(const std::string& key, const char* want) {
    return ConfigError("key '" + key + "': expected " + want);
}

inline const std::vector<ConfigField>& config_fields() {
    auto count = [](std::string sec, std::string key, int ScenarioConfig::* m) {
        return ConfigField{
            sec, key,
            [key, m](ScenarioConfig& c, const ConfigValue& v) {
                if (v.kind != ConfigValue::Kind::Int) throw bad_type(key, "an integer");
                c.*m = static_cast<int>(v.i);
            },
            [m](const ScenarioConfig& c) {
                return ConfigValue::of_int(static_cast<uint64_t>(c.*m));
            }};
    };
    auto real_full = [](std::string sec, std::string key, double ScenarioConfig::* m) {
        return ConfigField{
            sec, key,
            [m](ScenarioConfig& c, const ConfigValue& v) { c.*m = v.as_real(); },
            [m](const ScenarioConfig& c) { return ConfigValue::of_real(c.*m); }};
    };
    auto boolean = [](std::string sec, std::string key, bool ScenarioConfig::* m) {
        return ConfigField{
            sec, key,
            [key, m](ScenarioConfig& c, const ConfigValue& v) {
                if (v.kind != ConfigValue::Kind::Bool) throw bad_type(key, "a boolean");
                c.*m = v.b;
            },
            [m](const ScenarioConfig& c) { return ConfigValue::of_bool(c.*m); }};
    };
    auto str = [](std::string sec, std::string key, std::string ScenarioConfig::* m) {
        return ConfigField{
            sec, key,
            [key, m](ScenarioConfig& c, const ConfigValue& v) {
                if (v.kind != ConfigValue::Kind::Str) throw bad_type(key, "a string");
                c.*m = v.s;
            },
            [m](const ScenarioConfig& c) { return ConfigValue::of_str(c.*m); }};
    };
    auto list = [](std::string sec, std::string key,
                   std::vector<double> ScenarioConfig::* m) {
        return ConfigField{
            sec, key,
            [key, m](ScenarioConfig& c, const ConfigValue& v) {
                if (v.kind != ConfigValue::Kind::RealList)
                    throw bad_type(key, "a list of numbers");
                c.*m = v.list;
            },
            [m](const ScenarioConfig& c) { return ConfigValue::of_list(c.*m); }};
    };

    static const std::vector<ConfigField> fields = [&] {
        std::vector<ConfigField> f;
        f.push_back(count("scenario", "n_ap", &ScenarioConfig::n_ap));
        f.push_back(count("scenario", "n_ris", &ScenarioConfig::n_ris));
        f.push_back(count("scenario", "n_ue", &ScenarioConfig::n_ue));
        f.push_back(real_full("scenario", "legit_fraction", &ScenarioConfig::legit_fraction));
        f.push_back(real_full("scenario", "carrier_ghz", &ScenarioConfig::carrier_ghz));
        f.push_back(real_full("scenario", "bandwidth_mhz", &ScenarioConfig::bandwidth_mhz));
        f.push_back(real_full("scenario", "scs_khz", &ScenarioConfig::scs_khz));
        f.push_back(count("scenario", "n_rb", &ScenarioConfig::n_rb));
        f.push_back(count("scenario", "ap_antennas", &ScenarioConfig::ap_antennas));
        f.push_back(count("scenario", "ue_antennas", &ScenarioConfig::ue_antennas));
        f.push_back(count("scenario", "ris_rows", &ScenarioConfig::ris_rows));
        f.push_back(count("scenario", "ris_cols", &ScenarioConfig::ris_cols));
        f.push_back(real_full("scenario", "ap_height_m", &ScenarioConfig::ap_height_m));
        f.push_back(real_full("scenario", "ue_height_m", &ScenarioConfig::ue_height_m));
        f.push_back(real_full("scenario", "ris_height_m", &ScenarioConfig::ris_height_m));
        f.push_back(real_full("scenario", "p_ap_dbm", &ScenarioConfig::p_ap_dbm));
        f.push_back(real_full("scenario", "p_lu_dbm", &ScenarioConfig::p_lu_dbm));
        f.push_back(list("scenario", "eve_power_range_dbm",
                         &ScenarioConfig::eve_power_range_dbm));
        f.push_back(real_full("scenario", "noise_figure_db", &ScenarioConfig::noise_figure_db));
        f.push_back(list("scenario", "area_m", &ScenarioConfig::area_m));
        f.push_back(count("scenario", "n_fl_clients", &ScenarioConfig::n_fl_clients));
        f.push_back(list("scenario", "early_exit_cl", &ScenarioConfig::early_exit_cl));
        f.push_back(count("scenario", "n_phase_configs", &ScenarioConfig::n_phase_configs));
        f.push_back(ConfigField{
            "scenario", "master_seed",
            [](ScenarioConfig& c, const ConfigValue& v) {
                if (v.kind != ConfigValue::Kind::Int)
                    throw bad_type("master_seed", "an unsigned integer");
                c.master_seed = v.i;
            },
            [](const ScenarioConfig& c) { return ConfigValue::of_int(c.master_seed); }});

        f.push_back(real_full("topology", "client_alpha", &ScenarioConfig::client_alpha));
        f.push_back(real_full("topology", "ap_jitter", &ScenarioConfig::ap_jitter));

        f.push_back(real_full("channel", "pl_intercept_db", &ScenarioConfig::pl_intercept_db));
        f.push_back(real_full("channel", "pl_exponent_los", &ScenarioConfig::pl_exponent_los));
        f.push_back(real_full("channel", "pl_exponent_nlos", &ScenarioConfig::pl_exponent_nlos));
        f.push_back(real_full("channel", "shadowing_los_db", &ScenarioConfig::shadowing_los_db));
        f.push_back(
            real_full("channel", "shadowing_nlos_db", &ScenarioConfig::shadowing_nlos_db));
        f.push_back(real_full("channel", "rician_k_db", &ScenarioConfig::rician_k_db));
        f.push_back(count("channel", "n_taps", &ScenarioConfig::n_taps));
        f.push_back(real_full("channel", "pdp_decay", &ScenarioConfig::pdp_decay));
        f.push_back(real_full("channel", "d_clutter_m", &ScenarioConfig::d_clutter_m));
        f.push_back(
            real_full("channel", "ris_element_gain_db", &ScenarioConfig::ris_element_gain_db));

        f.push_back(str("secrecy", "wideband_mode", &ScenarioConfig::wideband_mode));
        f.push_back(boolean("secrecy", "asr_normalize_by_users",
                            &ScenarioConfig::asr_normalize_by_users));

        f.push_back(real_full("dataset", "split_ratio", &ScenarioConfig::split_ratio));
        f.push_back(str("dataset", "ris_plane", &ScenarioConfig::ris_plane));
        f.push_back(str("dataset", "csi_axes", &ScenarioConfig::csi_axes));

        f.push_back(real_full("nn", "lambda_aux", &ScenarioConfig::lambda_aux));
        f.push_back(real_full("nn", "learning_rate", &ScenarioConfig::learning_rate));
        f.push_back(count("nn", "batch_size", &ScenarioConfig::batch_size));
        f.push_back(count("nn", "local_epochs", &ScenarioConfig::local_epochs));

        f.push_back(count("federated", "rounds", &ScenarioConfig::rounds));
        f.push_back(boolean("federated", "aggregator_trains",
                            &ScenarioConfig::aggregator_trains));

        f.push_back(count("experiments", "desk_phases", &ScenarioConfig::desk_phases));
        f.push_back(count("experiments", "desk_ue", &ScenarioConfig::desk_ue));
        f.push_back(count("experiments", "desk_rounds", &ScenarioConfig::desk_rounds));
        f.push_back(list("experiments", "asr_ratios", &ScenarioConfig::asr_ratios));
        f.push_back(count("experiments", "top_k", &ScenarioConfig::top_k));
        return f;
    }();
    return fields;
}

}  // namespace detail

// Named-invariant checks. Throws ConfigError naming the violated invariant.
inline void validate_config(const ScenarioConfig& c) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    require(c.n_ap >= 1 && c.n_ris >= 1 && c.n_ue >= 1 && c.n_rb >= 1 &&
                c.ap_antennas >= 1 && c.ris_rows >= 1 && c.ris_cols >= 1 &&
                c.n_phase_configs >= 1 && c.n_fl_clients >= 1 && c.n_taps >= 1 &&
                c.batch_size >= 1 && c.desk_phases >= 1 && c.desk_ue >= 1 && c.top_k >= 1,
            "all counts must be >= 1");
    require(c.local_epochs >= 0 && c.rounds >= 0 && c.desk_rounds >= 0,
            "epochs and rounds must be >= 0");
    require(c.legit_fraction > 0.0 && c.legit_fraction <= 1.0,
            "legit_fraction out of range (0, 1]");
    require(c.n_fl_clients <= c.n_ap, "n_fl_clients must not exceed n_ap");
    for (double cl : c.early_exit_cl)
        require(cl >= 0.5 && cl < 1.0, "early_exit_cl entries must lie in [0.5, 1.0)");
    require(c.carrier_ghz > 0 && c.bandwidth_mhz > 0 && c.scs_khz > 0,
            "carrier, bandwidth and subcarrier spacing must be positive");
    require(c.n_rb * 12.0 * c.scs_khz * 1e3 <= c.bandwidth_hz(),
            "bandwidth consistency: n_rb * 12 subcarriers * scs exceeds bandwidth");
    require(c.ue_antennas == 1, "ue_antennas must be 1 (single-antenna UEs)");
    require(c.eve_power_range_dbm.size() == 2 &&
                c.eve_power_range_dbm[0] <= c.eve_power_range_dbm[1],
            "eve_power_range_dbm must be [lo, hi] with lo <= hi");
    require(c.eve_power_range_dbm[0] > c.p_lu_dbm,
            "eve_power_range_dbm must lie strictly above p_lu_dbm");
    require(c.area_m.size() == 2 && c.area_m[0] > 0 && c.area_m[1] > 0,
            "area_m must be [x, y] with positive extents");
    require(c.ap_height_m > 0 && c.ue_height_m > 0 && c.ris_height_m > 0,
            "antenna heights must be positive");
    require(c.client_alpha >= 0.0 && c.client_alpha <= 1.0,
            "client_alpha must lie in [0, 1]");
    require(c.ap_jitter >= 0.0 && c.ap_jitter <= 0.5, "ap_jitter must lie in [0, 0.5]");
    require(c.pl_exponent_los >= 2.0 && c.pl_exponent_nlos >= c.pl_exponent_los,
            "path-loss exponents must satisfy nlos >= los >= 2");
    require(c.shadowing_los_db >= 0 && c.shadowing_nlos_db >= 0,
            "shadowing sigmas must be >= 0");
    require(c.pdp_decay > 0, "pdp_decay must be positive");
    require(c.d_clutter_m > 0, "d_clutter_m must be positive");
    require(c.wideband_mode == "mean" || c.wideband_mode == "geometric",
            "wideband_mode must be 'mean' or 'geometric'");
    require(c.split_ratio > 0.0 && c.split_ratio < 1.0, "split_ratio out of range (0, 1)");
    require(c.ris_plane == "distance" || c.ris_plane == "ris_x",
            "ris_plane must be 'distance' or 'ris_x'");
    require(c.csi_axes == "antenna_rb", "csi_axes: only 'antenna_rb' is supported");
    require(c.lambda_aux >= 0.0, "lambda_aux must be >= 0");
    require(c.learning_rate > 0.0, "learning_rate must be positive");
    for (double r : c.asr_ratios) require(r >= 1.0, "asr_ratios entries must be >= 1");
    require(c.n_legit() >= 0 && c.n_legit() <= c.n_ue, "legit count out of range");
}

// Unknown keys are rejected; absent keys keep their defaults.
inline ScenarioConfig load_config(std::string_view text) {
    ConfigDoc doc = parse_document(text);
    ScenarioConfig cfg;
    const auto& fields = detail::config_fields();
    for (const auto& sec : doc.sections) {
        for (const auto& entry : sec.entries) {
            const detail::ConfigField* match = nullptr;
            for (const auto& f : fields)
                if (f.section == sec.name && f.key == entry.key) {
                    match = &f;
                    break;
                }
            if (!match)
                throw ConfigError("unknown config key '" + sec.name + "." + entry.key +
                                  "' at line " + std::to_string(entry.line));
            match->set(cfg, entry.value);
        }
    }
    validate_config(cfg);
    return cfg;
}

inline std::string save_config(const ScenarioConfig& cfg) {
    ConfigDoc doc;
    for (const auto& f : detail::config_fields()) doc.set(f.section, f.key, f.get(cfg));
    return serialize_document(doc);
}

// Thermal noise floor plus receiver noise figure over the full bandwidth.
inline double noise_power_dbm(const ScenarioConfig& cfg) {
    return -174.0 + 10.0 * std::log10(cfg.bandwidth_hz()) + cfg.noise_figure_db;
}

inline RngStream derive_stream(const ScenarioConfig& cfg, std::string_view stream_id) {
    if (stream_id.empty()) throw IntegrityError("stream_id must be nonempty");
    return derive_stream(cfg.master_seed, stream_id);
}

}  // namespace risfed
