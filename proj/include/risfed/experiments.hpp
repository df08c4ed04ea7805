#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "risfed/channel.hpp"
#include "risfed/dataset.hpp"
#include "risfed/federated.hpp"
#include "risfed/io.hpp"
#include "risfed/nn.hpp"
#include "risfed/secrecy.hpp"
#include "risfed/svg.hpp"
#include "risfed/topology.hpp"

namespace risfed {

// Laptop-sized campaign: fewer UEs, phases and rounds; --full restores the
// configured scale.
inline ScenarioConfig desk_scale(ScenarioConfig cfg) {
    cfg.n_ue = cfg.desk_ue;
    cfg.n_phase_configs = cfg.desk_phases;
    cfg.rounds = cfg.desk_rounds;
    validate_config(cfg);
    return cfg;
}

inline Arch arch_for(const ScenarioConfig& cfg) {
    Arch a;
    a.in_h = cfg.ap_antennas;
    a.in_w = cfg.n_rb;
    return a;
}

// Topology, client selection and the aggregator AP are shared by every
// phase of a campaign.
struct RunContext {
    ScenarioConfig cfg;
    Topology topo;
    int aggregator = 0;
    std::vector<int> client_aps;
};

inline RunContext prepare_run(const ScenarioConfig& cfg) {
    RunContext rc;
    rc.cfg = cfg;
    Rng rng = derive_stream(cfg, "topology").rng();
    rc.topo = place_entities(cfg, rng);
    rc.aggregator = central_ap(rc.topo);
    std::vector<int> exclude;
    if (!cfg.aggregator_trains && cfg.n_fl_clients < cfg.n_ap)
        exclude.push_back(rc.aggregator);
    rc.client_aps =
        select_fl_clients(rc.topo, cfg.n_fl_clients, cfg.client_alpha, exclude);
    return rc;
}

struct ExitRow {
    double cl = -1.0;  // -1 marks the no-exit baseline row
    double accuracy = 0.0;
    double exit_rate = 0.0;
    double mac_ratio = 1.0;
};

struct PhaseResult {
    int phase_id = 0;
    bool ok = false;
    std::string error;
    Metrics metrics;          // global model on the phase's test split
    double asr_true_self = 0.0;  // true-label ASR on the campaign topology
    ModelParams params;       // trained global model
    std::map<double, double> asr_ml;    // ratio -> ASR, classifier adversaries
    std::map<double, double> asr_true;  // ratio -> ASR, true-label adversaries
    std::vector<ExitRow> exit_rows;
};

// One Monte Carlo phase: draw the phase's reflection vector, regenerate
// channels, rebuild the dataset, train federated, evaluate. With a
// non-empty outdir the phase persists its checkpoint, round log and
// secrecy table under outdir/phase_<id>/.
inline PhaseResult run_phase(const RunContext& rc, int phase_id,
                             const std::filesystem::path& outdir = {},
                             bool parallel_clients = false) {
    const ScenarioConfig& cfg = rc.cfg;
    PhaseResult result;
    result.phase_id = phase_id;
    try {
        RisConfiguration theta = random_ris_phases(cfg, phase_id);
        ChannelContext ctx(cfg, rc.topo, phase_id);
        SnrTable table = build_snr_table(ctx, theta, noise_power_dbm(cfg));
        Association assoc = associate(rc.topo, table);
        Dataset full = generate_dataset(cfg, rc.topo, assoc, ctx, theta);
        Rng split_rng = derive_stream(cfg, "split").rng();
        auto [train, test] = split(full, cfg.split_ratio, split_rng);
        std::vector<ClientShard> shards = partition_clients(train, rc.client_aps, rc.topo);

        FlSetup setup;
        setup.arch = arch_for(cfg);
        setup.client_aps = rc.client_aps;
        for (const auto& s : shards) setup.shards.push_back(s.indices);
        setup.train = &train;
        setup.test = &test;
        RoundState state = run_training(cfg, setup, cfg.rounds, parallel_clients);

        result.metrics = state.history.empty() ? evaluate(state.global, setup.arch, test)
                                               : state.history.back().global;
        result.params = std::move(state.global);
        SecrecyReport secrecy = evaluate_secrecy(rc.topo, assoc, table, rc.topo.ue_is_eve,
                                                 cfg.asr_normalize_by_users);
        result.asr_true_self = secrecy.asr;

        if (!outdir.empty()) {
            std::filesystem::path dir =
                outdir / ("phase_" + std::to_string(phase_id));
            save_checkpoint(result.params, dir / "checkpoint.bin");
            std::ostringstream rounds_csv;
            write_round_log(state.history, rounds_csv);
            atomic_write(dir / "rounds.csv", rounds_csv.str());
            std::ostringstream secrecy_csv;
            write_secrecy_csv(secrecy, phase_id, secrecy_csv);
            atomic_write(dir / "secrecy.csv", secrecy_csv.str());
        }
        result.ok = true;
    } catch (const std::exception& e) {
        result.error = e.what();
    }
    return result;
}

// Phases are independent and carry pre-derived seeds, so the worker count
// changes wall-clock time only, never results.
inline std::vector<PhaseResult> run_phase_sweep(const RunContext& rc, int n_phases,
                                                int jobs = 1,
                                                const std::filesystem::path& outdir = {}) {
    if (n_phases < 1 || n_phases > rc.cfg.n_phase_configs)
        throw ConfigError("sweep: phase count out of range");
    std::vector<PhaseResult> results(n_phases);
    if (jobs <= 1) {
        for (int p = 0; p < n_phases; ++p) results[p] = run_phase(rc, p, outdir);
        return results;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            int p = next.fetch_add(1);
            if (p >= n_phases) return;
            results[p] = run_phase(rc, p, outdir);
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(jobs, n_phases); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

struct QuartileRow {
    std::string metric;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    bool partial = false;  // fewer than 4 samples
};

// Linear-interpolation quantile at rank p*(n-1).
inline double quantile(std::vector<double> sorted, double p) {
    if (sorted.empty()) throw IntegrityError("quantile of empty set");
    double rank = p * (sorted.size() - 1);
    size_t lo = static_cast<size_t>(rank);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = rank - lo;
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline std::vector<QuartileRow> metric_distribution(
    const std::vector<PhaseResult>& results) {
    std::vector<std::pair<std::string, std::function<double(const Metrics&)>>> fields = {
        {"accuracy", [](const Metrics& m) { return m.accuracy; }},
        {"precision", [](const Metrics& m) { return m.macro_precision; }},
        {"recall", [](const Metrics& m) { return m.macro_recall; }},
        {"f1", [](const Metrics& m) { return m.macro_f1; }},
    };
    std::vector<QuartileRow> rows;
    for (auto& [name, get] : fields) {
        std::vector<double> values;
        for (const auto& r : results)
            if (r.ok) values.push_back(get(r.metrics));
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        QuartileRow row;
        row.metric = name;
        row.partial = values.size() < 4;
        row.min = values.front();
        row.max = values.back();
        row.median = quantile(values, 0.5);
        row.q1 = quantile(values, 0.25);
        row.q3 = quantile(values, 0.75);
        rows.push_back(row);
    }
    return rows;
}

// Phase ids ordered by test accuracy (descending, ties toward the lower
// id), failed phases excluded.
inline std::vector<int> top_phases_by_accuracy(const std::vector<PhaseResult>& results,
                                               int k) {
    std::vector<std::pair<double, int>> order;
    for (const auto& r : results)
        if (r.ok) order.push_back({-r.metrics.accuracy, r.phase_id});
    std::sort(order.begin(), order.end());
    std::vector<int> out;
    for (int i = 0; i < std::min<int>(k, static_cast<int>(order.size())); ++i)
        out.push_back(order[i].second);
    return out;
}

// Accuracy, exit rate and expected-MAC ratio per confidence level on a
// fixed model, plus the no-exit baseline row.
inline std::vector<ExitRow> early_exit_study(const ModelParams& params, const Arch& arch,
                                             const Dataset& test,
                                             const std::vector<double>& cls) {
    std::vector<ExitRow> rows;
    Metrics base = evaluate(params, arch, test);
    rows.push_back({-1.0, base.accuracy, 0.0, 1.0});
    for (double cl : cls) {
        EarlyExitPolicy policy{cl};
        Metrics m = evaluate(params, arch, test, &policy);
        rows.push_back({cl, m.accuracy, m.exit_rate, m.mac_ratio});
    }
    return rows;
}

inline double ratio_to_fraction(double ratio) { return ratio / (ratio + 1.0); }

// ASR-vs-ratio curves for a set of trained phases. For every ratio the
// topology is rebuilt with the same positions and a re-cut adversary set;
// the classifier then labels every UE of the rebuilt scenario and predicted
// eavesdroppers form the adversary set of the ML curve. Legitimate-side
// rates always follow the true labels. Ratios whose rebuilt topology has
// no eavesdropper at all are skipped.
struct AsrStudy {
    std::vector<double> ratios_used;
    std::vector<double> ratios_skipped;
};

inline AsrStudy asr_vs_ratio_study(const ScenarioConfig& base_cfg,
                                   std::vector<PhaseResult*> phases,
                                   const std::vector<double>& ratios) {
    AsrStudy study;
    for (double ratio : ratios) {
        ScenarioConfig cfg = base_cfg;
        cfg.legit_fraction = ratio_to_fraction(ratio);
        validate_config(cfg);
        Rng topo_rng = derive_stream(cfg, "topology").rng();
        Topology topo = place_entities(cfg, topo_rng);
        int eves = 0;
        for (auto e : topo.ue_is_eve) eves += e;
        if (eves == 0) {
            study.ratios_skipped.push_back(ratio);
            continue;
        }
        study.ratios_used.push_back(ratio);
        for (PhaseResult* phase : phases) {
            RisConfiguration theta = random_ris_phases(cfg, phase->phase_id);
            ChannelContext ctx(cfg, topo, phase->phase_id);
            SnrTable table = build_snr_table(ctx, theta, noise_power_dbm(cfg));
            Association assoc = associate(topo, table);

            phase->asr_true[ratio] =
                evaluate_secrecy(topo, assoc, table, topo.ue_is_eve,
                                 cfg.asr_normalize_by_users)
                    .asr;

            Dataset ds = generate_dataset(cfg, topo, assoc, ctx, theta);
            std::vector<uint8_t> pred =
                predict_labels(phase->params, arch_for(cfg), ds);
            phase->asr_ml[ratio] =
                evaluate_secrecy(topo, assoc, table, pred, cfg.asr_normalize_by_users)
                    .asr;
        }
    }
    return study;
}

// True-label-only curve; no dataset or model involved. Used by trend
// studies over many seeds.
inline std::map<double, double> true_label_asr_curve(const ScenarioConfig& base_cfg,
                                                     int phase_id,
                                                     const std::vector<double>& ratios) {
    std::map<double, double> curve;
    for (double ratio : ratios) {
        ScenarioConfig cfg = base_cfg;
        cfg.legit_fraction = ratio_to_fraction(ratio);
        validate_config(cfg);
        Rng topo_rng = derive_stream(cfg, "topology").rng();
        Topology topo = place_entities(cfg, topo_rng);
        int eves = 0;
        for (auto e : topo.ue_is_eve) eves += e;
        if (eves == 0) continue;
        RisConfiguration theta = random_ris_phases(cfg, phase_id);
        ChannelContext ctx(cfg, topo, phase_id);
        SnrTable table = build_snr_table(ctx, theta, noise_power_dbm(cfg));
        Association assoc = associate(topo, table);
        curve[ratio] = evaluate_secrecy(topo, assoc, table, topo.ue_is_eve,
                                        cfg.asr_normalize_by_users)
                           .asr;
    }
    return curve;
}

struct CampaignReport {
    std::vector<PhaseResult> phases;
    std::vector<QuartileRow> quartiles;
    std::vector<int> top_ids;
    int exit_phase = -1;
    std::vector<ExitRow> exit_rows;
    std::vector<double> ratios;
    bool complete = true;
    std::vector<std::string> manifest;
};

namespace report_detail {

inline void add_file(CampaignReport& rep, const std::filesystem::path& outdir,
                     const std::string& name, const std::string& bytes) {
    atomic_write(outdir / name, bytes);
    rep.manifest.push_back(name);
}

}  // namespace report_detail

// CSV tables, one SVG per study, a text summary and a hash manifest.
// Sections without data are simply absent; reruns produce byte-identical
// CSVs.
inline void emit_report(CampaignReport& rep, const std::filesystem::path& outdir) {
    using report_detail::add_file;
    std::filesystem::create_directories(outdir);

    if (!rep.phases.empty()) {
        std::string csv = "phase_id,ok,accuracy,precision,recall,f1,asr_true_self\n";
        for (const auto& p : rep.phases) {
            csv += std::to_string(p.phase_id) + "," + (p.ok ? "1" : "0") + "," +
                   fmt_g(p.metrics.accuracy) + "," + fmt_g(p.metrics.macro_precision) +
                   "," + fmt_g(p.metrics.macro_recall) + "," + fmt_g(p.metrics.macro_f1) +
                   "," + fmt_g(p.asr_true_self) + "\n";
        }
        add_file(rep, outdir, "sweep_metrics.csv", csv);
    }
    if (!rep.quartiles.empty()) {
        std::string csv = "metric,min,q1,median,q3,max,partial\n";
        std::vector<svg::BoxStat> boxes;
        for (const auto& q : rep.quartiles) {
            csv += q.metric + "," + fmt_g(q.min) + "," + fmt_g(q.q1) + "," +
                   fmt_g(q.median) + "," + fmt_g(q.q3) + "," + fmt_g(q.max) + "," +
                   (q.partial ? "1" : "0") + "\n";
            boxes.push_back({q.metric, q.min, q.q1, q.median, q.q3, q.max});
        }
        add_file(rep, outdir, "metric_distribution.csv", csv);
        add_file(rep, outdir, "metric_distribution.svg",
                 svg::box_plot("Classifier metric distribution across RIS phases", boxes,
                               0.0, 1.0, "score"));
    }
    if (!rep.exit_rows.empty()) {
        std::string csv = "cl,accuracy,exit_rate,mac_ratio\n";
        std::vector<svg::BarGroup> groups;
        for (const auto& r : rep.exit_rows) {
            std::string label = r.cl < 0 ? "full" : "cl=" + fmt_g(r.cl);
            csv += (r.cl < 0 ? std::string("full") : fmt_g(r.cl)) + "," +
                   fmt_g(r.accuracy) + "," + fmt_g(r.exit_rate) + "," +
                   fmt_g(r.mac_ratio) + "\n";
            groups.push_back({label, {r.accuracy, r.exit_rate, r.mac_ratio}});
        }
        add_file(rep, outdir, "early_exit.csv", csv);
        add_file(rep, outdir, "early_exit.svg",
                 svg::bar_chart("Early-exit accuracy and cost (best phase " +
                                    std::to_string(rep.exit_phase) + ")",
                                {"accuracy", "exit rate", "mac ratio"}, groups, 1.05,
                                "value"));
    }
    bool any_curve = false;
    for (const auto& p : rep.phases) any_curve = any_curve || !p.asr_ml.empty();
    if (any_curve) {
        std::string csv = "series,phase_id,ratio,asr_bpshz\n";
        std::vector<svg::Series> lines;
        const PhaseResult* best = nullptr;
        for (const auto& p : rep.phases) {
            if (p.asr_ml.empty()) continue;
            svg::Series s;
            s.label = "phase " + std::to_string(p.phase_id);
            for (auto [ratio, asr] : p.asr_ml) {
                csv += "ml," + std::to_string(p.phase_id) + "," + fmt_g(ratio) + "," +
                       fmt_g(asr) + "\n";
                s.points.push_back({ratio, asr});
            }
            for (auto [ratio, asr] : p.asr_true)
                csv += "true," + std::to_string(p.phase_id) + "," + fmt_g(ratio) + "," +
                       fmt_g(asr) + "\n";
            lines.push_back(std::move(s));
            if (!best || (!rep.top_ids.empty() && p.phase_id == rep.top_ids.front()))
                best = &p;
        }
        if (best && !best->asr_true.empty()) {
            svg::Series s;
            s.label = "true labels (phase " + std::to_string(best->phase_id) + ")";
            s.dashed = true;
            for (auto [ratio, asr] : best->asr_true) s.points.push_back({ratio, asr});
            lines.push_back(std::move(s));
        }
        add_file(rep, outdir, "asr_vs_ratio.csv", csv);
        add_file(rep, outdir, "asr_vs_ratio.svg",
                 svg::line_chart("Average secrecy rate vs L-to-E ratio", lines,
                                 "legitimate-to-eavesdropper ratio", "ASR [bps/Hz]"));
    }

    std::string summary = "campaign summary\n================\n";
    summary += "phases: " + std::to_string(rep.phases.size()) + "\n";
    int failed = 0;
    for (const auto& p : rep.phases) failed += p.ok ? 0 : 1;
    if (failed) {
        summary += "FAILED PHASES: " + std::to_string(failed) + " (incomplete run)\n";
        rep.complete = false;
    }
    if (!rep.quartiles.empty())
        summary += "metric-distribution: metric_distribution.csv (+svg)\n";
    if (!rep.exit_rows.empty())
        summary += "early-exit study on phase " + std::to_string(rep.exit_phase) +
                   ": early_exit.csv (+svg)\n";
    if (any_curve) summary += "asr-vs-ratio study: asr_vs_ratio.csv (+svg)\n";
    if (!rep.top_ids.empty()) {
        summary += "top phases by accuracy:";
        for (int id : rep.top_ids) summary += " " + std::to_string(id);
        summary += "\n";
    }
    add_file(rep, outdir, "summary.txt", summary);

    nlohmann::json manifest;
    for (const auto& name : rep.manifest) {
        char hex[32];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(hash_file(outdir / name)));
        manifest[name] = hex;
    }
    atomic_write(outdir / "manifest.json", manifest.dump(2) + "\n");
    rep.manifest.push_back("manifest.json");
}

}  // namespace risfed
