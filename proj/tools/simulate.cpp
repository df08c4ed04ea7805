// Command-line front end: generate -> train -> evaluate -> report, all
// deterministic under (config, seed). Exit codes: 0 success, 1 runtime
// failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "risfed/experiments.hpp"

namespace fs = std::filesystem;
using namespace risfed;

namespace {

struct Options {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out;
    bool full = false;
    int jobs = 1;
    bool print_config = false;

    int phases = 0;  // 0: use the config value
    int top = 0;
    std::vector<double> ratios;
    std::vector<double> cls;
    std::string dataset_path;
    std::string checkpoint_path;
    std::string inspect_path;
    int phase_id = 0;
};

ScenarioConfig effective_config(const Options& opt) {
    ScenarioConfig cfg;
    if (!opt.config_path.empty())
        cfg = load_config(read_file(opt.config_path));
    else
        cfg = load_config("");
    if (opt.seed) cfg.master_seed = *opt.seed;
    return cfg;
}

ScenarioConfig experiment_config(const Options& opt) {
    ScenarioConfig cfg = effective_config(opt);
    if (!opt.full) cfg = desk_scale(cfg);
    if (opt.phases > cfg.n_phase_configs) {
        cfg.n_phase_configs = opt.phases;
        validate_config(cfg);
    }
    return cfg;
}

int sweep_phase_count(const Options& opt, const ScenarioConfig& cfg) {
    return opt.phases > 0 ? opt.phases : cfg.n_phase_configs;
}

struct PipelineArtifacts {
    RisConfiguration theta;
    Association assoc;
    SnrTable table;
    Dataset dataset;
};

PipelineArtifacts build_dataset(const ScenarioConfig& cfg, const RunContext& rc,
                                int phase_id) {
    PipelineArtifacts art;
    art.theta = random_ris_phases(cfg, phase_id);
    ChannelContext ctx(cfg, rc.topo, phase_id);
    art.table = build_snr_table(ctx, art.theta, noise_power_dbm(cfg));
    art.assoc = associate(rc.topo, art.table);
    art.dataset = generate_dataset(cfg, rc.topo, art.assoc, ctx, art.theta);
    return art;
}

// Shared sweep runner for sweep / exit-study / asr / report.
CampaignReport sweep_campaign(const ScenarioConfig& cfg, const RunContext& rc,
                              int n_phases, int jobs, const fs::path& outdir) {
    CampaignReport rep;
    rep.phases = run_phase_sweep(rc, n_phases, jobs, outdir);
    rep.quartiles = metric_distribution(rep.phases);
    rep.top_ids = top_phases_by_accuracy(rep.phases, cfg.top_k);
    for (const auto& p : rep.phases) rep.complete = rep.complete && p.ok;
    return rep;
}

void attach_exit_study(CampaignReport& rep, const ScenarioConfig& cfg,
                       const RunContext& rc, const std::vector<double>& cls) {
    if (rep.top_ids.empty()) return;
    rep.exit_phase = rep.top_ids.front();
    PhaseResult* best = nullptr;
    for (auto& p : rep.phases)
        if (p.phase_id == rep.exit_phase) best = &p;
    if (!best) return;
    PipelineArtifacts art = build_dataset(cfg, rc, rep.exit_phase);
    Rng split_rng = derive_stream(cfg, "split").rng();
    auto [train, test] = split(art.dataset, cfg.split_ratio, split_rng);
    rep.exit_rows = early_exit_study(best->params, arch_for(cfg), test, cls);
}

void attach_asr_study(CampaignReport& rep, const ScenarioConfig& cfg, int top,
                      const std::vector<double>& ratios) {
    rep.ratios = ratios;
    std::vector<int> ids = rep.top_ids;
    if (top > 0 && static_cast<int>(ids.size()) > top) ids.resize(top);
    std::vector<PhaseResult*> selected;
    for (int id : ids)
        for (auto& p : rep.phases)
            if (p.phase_id == id && p.ok) selected.push_back(&p);
    AsrStudy study = asr_vs_ratio_study(cfg, selected, ratios);
    for (double skipped : study.ratios_skipped)
        std::fprintf(stderr, "warning: ratio %.3g skipped (no eavesdroppers)\n", skipped);
}

int cmd_gen_topology(const Options& opt) {
    ScenarioConfig cfg = effective_config(opt);
    RunContext rc = prepare_run(cfg);
    std::ostringstream csv;
    write_topology_csv(rc.topo, cfg, csv);
    fs::path path = fs::path(opt.out) / "topology.csv";
    atomic_write(path, csv.str());
    std::printf("gen-topology: %d APs, %d RIS, %d UEs (%d legit / %d eve) -> %s\n",
                rc.topo.n_ap(), rc.topo.n_ris(), rc.topo.n_ue(), cfg.n_legit(),
                cfg.n_eve(), path.c_str());
    return 0;
}

int cmd_gen_dataset(const Options& opt) {
    ScenarioConfig cfg = effective_config(opt);
    RunContext rc = prepare_run(cfg);
    PipelineArtifacts art = build_dataset(cfg, rc, opt.phase_id);
    fs::path path = fs::path(opt.out) / "dataset.bin";
    save_dataset(art.dataset, path);
    auto counts = art.dataset.class_counts();
    std::printf(
        "gen-dataset: phase %d, %zu samples (%lld legit / %lld eve), hash %016llx -> "
        "%s\n",
        opt.phase_id, art.dataset.samples.size(), static_cast<long long>(counts[0]),
        static_cast<long long>(counts[1]),
        static_cast<unsigned long long>(hash_file(path)), path.c_str());
    return 0;
}

int cmd_train_fl(const Options& opt) {
    ScenarioConfig cfg = effective_config(opt);
    fs::path ds_path = opt.dataset_path.empty() ? fs::path(opt.out) / "dataset.bin"
                                                : fs::path(opt.dataset_path);
    Dataset full = load_dataset(ds_path);
    RunContext rc = prepare_run(cfg);
    Rng split_rng = derive_stream(cfg, "split").rng();
    auto [train, test] = split(full, cfg.split_ratio, split_rng);
    std::vector<ClientShard> shards = partition_clients(train, rc.client_aps, rc.topo);

    FlSetup setup;
    setup.arch = arch_for(cfg);
    setup.client_aps = rc.client_aps;
    for (const auto& s : shards) setup.shards.push_back(s.indices);
    setup.train = &train;
    setup.test = &test;
    RoundState state = run_training(cfg, setup, cfg.rounds, opt.jobs > 1);

    fs::path ckpt = fs::path(opt.out) / "checkpoint.bin";
    save_checkpoint(state.global, ckpt);
    std::ostringstream rounds_csv;
    write_round_log(state.history, rounds_csv);
    atomic_write(fs::path(opt.out) / "rounds.csv", rounds_csv.str());
    double acc = state.history.empty() ? 0.0 : state.history.back().global.accuracy;
    std::printf("train-fl: %d rounds, %zu clients, final test accuracy %.4f -> %s\n",
                cfg.rounds, shards.size(), acc, ckpt.c_str());
    return 0;
}

int cmd_evaluate(const Options& opt) {
    ScenarioConfig cfg = effective_config(opt);
    fs::path ds_path = opt.dataset_path.empty() ? fs::path(opt.out) / "dataset.bin"
                                                : fs::path(opt.dataset_path);
    fs::path ck_path = opt.checkpoint_path.empty() ? fs::path(opt.out) / "checkpoint.bin"
                                                   : fs::path(opt.checkpoint_path);
    Dataset ds = load_dataset(ds_path);
    ModelParams params = load_checkpoint(ck_path);
    Arch arch = arch_for(cfg);
    arch.in_h = ds.n_ant;
    arch.in_w = ds.n_rb;

    std::string csv = "cl,accuracy,precision,recall,f1,exit_rate,mac_ratio\n";
    Metrics base = evaluate(params, arch, ds);
    csv += "full," + fmt_g(base.accuracy) + "," + fmt_g(base.macro_precision) + "," +
           fmt_g(base.macro_recall) + "," + fmt_g(base.macro_f1) + ",0,1\n";
    std::printf("evaluate: n=%lld accuracy %.4f precision %.4f recall %.4f f1 %.4f\n",
                static_cast<long long>(base.n), base.accuracy, base.macro_precision,
                base.macro_recall, base.macro_f1);
    for (double cl : opt.cls) {
        EarlyExitPolicy policy{cl};
        Metrics m = evaluate(params, arch, ds, &policy);
        csv += fmt_g(cl) + "," + fmt_g(m.accuracy) + "," + fmt_g(m.macro_precision) +
               "," + fmt_g(m.macro_recall) + "," + fmt_g(m.macro_f1) + "," +
               fmt_g(m.exit_rate) + "," + fmt_g(m.mac_ratio) + "\n";
        std::printf("evaluate: cl=%.2f accuracy %.4f exit_rate %.3f mac_ratio %.3f\n",
                    cl, m.accuracy, m.exit_rate, m.mac_ratio);
    }
    atomic_write(fs::path(opt.out) / "metrics.csv", csv);
    return 0;
}

int cmd_sweep(const Options& opt) {
    ScenarioConfig cfg = experiment_config(opt);
    RunContext rc = prepare_run(cfg);
    int n = sweep_phase_count(opt, cfg);
    CampaignReport rep = sweep_campaign(cfg, rc, n, opt.jobs, opt.out);
    emit_report(rep, opt.out);
    std::printf("sweep: %d phases (%s), top accuracy phase %d -> %s\n", n,
                rep.complete ? "all ok" : "INCOMPLETE",
                rep.top_ids.empty() ? -1 : rep.top_ids.front(), opt.out.c_str());
    return rep.complete ? 0 : 1;
}

int cmd_exit_study(const Options& opt) {
    ScenarioConfig cfg = experiment_config(opt);
    RunContext rc = prepare_run(cfg);
    int n = sweep_phase_count(opt, cfg);
    CampaignReport rep = sweep_campaign(cfg, rc, n, opt.jobs, opt.out);
    std::vector<double> cls = opt.cls.empty() ? cfg.early_exit_cl : opt.cls;
    attach_exit_study(rep, cfg, rc, cls);
    emit_report(rep, opt.out);
    std::printf("exit-study: best phase %d, %zu confidence levels -> %s\n",
                rep.exit_phase, cls.size(), opt.out.c_str());
    return rep.complete ? 0 : 1;
}

int cmd_asr(const Options& opt) {
    ScenarioConfig cfg = experiment_config(opt);
    RunContext rc = prepare_run(cfg);
    int n = sweep_phase_count(opt, cfg);
    CampaignReport rep = sweep_campaign(cfg, rc, n, opt.jobs, opt.out);
    std::vector<double> ratios = opt.ratios.empty() ? cfg.asr_ratios : opt.ratios;
    int top = opt.top > 0 ? opt.top : cfg.top_k;
    if (static_cast<int>(rep.top_ids.size()) > top) rep.top_ids.resize(top);
    attach_asr_study(rep, cfg, top, ratios);
    emit_report(rep, opt.out);
    std::printf("asr: %zu ratios over top %d phases -> %s\n", ratios.size(), top,
                opt.out.c_str());
    return rep.complete ? 0 : 1;
}

int cmd_report(const Options& opt) {
    ScenarioConfig cfg = experiment_config(opt);
    RunContext rc = prepare_run(cfg);
    int n = sweep_phase_count(opt, cfg);
    CampaignReport rep = sweep_campaign(cfg, rc, n, opt.jobs, opt.out);
    attach_exit_study(rep, cfg, rc, opt.cls.empty() ? cfg.early_exit_cl : opt.cls);
    attach_asr_study(rep, cfg, cfg.top_k,
                     opt.ratios.empty() ? cfg.asr_ratios : opt.ratios);
    emit_report(rep, opt.out);
    std::printf("report: %d phases, %zu files -> %s\n", n, rep.manifest.size(),
                opt.out.c_str());
    return rep.complete ? 0 : 1;
}

int cmd_inspect(const Options& opt) {
    std::string bytes = read_file(opt.inspect_path);
    if (bytes.size() >= 4 && bytes.compare(0, 4, "CSI1") == 0) {
        Dataset ds = dataset_from_bytes(bytes, opt.inspect_path);
        auto counts = ds.class_counts();
        std::printf(
            "dataset: %zu samples, dims %d x %d x %d, split tag %d, %lld legit / %lld "
            "eve, hash %016llx\n",
            ds.samples.size(), ds.n_ant, ds.n_rb, kCsiChannels,
            static_cast<int>(ds.tag), static_cast<long long>(counts[0]),
            static_cast<long long>(counts[1]),
            static_cast<unsigned long long>(content_hash(bytes)));
        return 0;
    }
    if (bytes.size() >= 4 && bytes.compare(0, 4, "CKPT") == 0) {
        ModelParams p = params_from_bytes(bytes, opt.inspect_path);
        std::printf("checkpoint: %zu tensors, %lld values, hash %016llx\n", p.size(),
                    static_cast<long long>(total_values(p)),
                    static_cast<unsigned long long>(content_hash(bytes)));
        for (const auto& [key, t] : p) {
            std::string shape;
            for (size_t i = 0; i < t.shape.size(); ++i)
                shape += (i ? "x" : "") + std::to_string(t.shape[i]);
            std::printf("  %-10s %s\n", key.c_str(), shape.c_str());
        }
        return 0;
    }
    throw FormatError(opt.inspect_path + ": unrecognised file magic");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RIS-assisted cell-free network simulator with federated "
                 "eavesdropper detection"};
    app.require_subcommand(0, 1);
    app.fallthrough();  // global flags may follow the subcommand

    Options opt;
    const char* env_out = std::getenv("RISFED_OUT");
    opt.out = env_out ? env_out : "results";

    app.add_option("--config", opt.config_path, "scenario config file");
    app.add_option("--seed", opt.seed, "override master_seed");
    app.add_option("--out", opt.out, "output directory");
    app.add_flag("--full", opt.full, "full configured scale instead of desk scale");
    app.add_option("--jobs", opt.jobs, "worker threads (never changes results)")
        ->check(CLI::PositiveNumber);
    app.add_flag("--print-config", opt.print_config,
                 "print the effective config and exit");

    auto* topo = app.add_subcommand("gen-topology", "place entities, export CSV");
    auto* gen = app.add_subcommand("gen-dataset", "generate a labeled CSI dataset");
    gen->add_option("--phase", opt.phase_id, "RIS phase configuration id");
    auto* train = app.add_subcommand("train-fl", "federated training on a dataset");
    train->add_option("--dataset", opt.dataset_path, "dataset file");
    auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
    eval->add_option("--dataset", opt.dataset_path, "dataset file");
    eval->add_option("--checkpoint", opt.checkpoint_path, "checkpoint file");
    eval->add_option("--cl", opt.cls, "early-exit confidence levels")->delimiter(',');
    auto* sweep = app.add_subcommand("sweep", "Monte Carlo sweep over RIS phases");
    sweep->add_option("--phases", opt.phases, "number of phase configurations");
    auto* exits = app.add_subcommand("exit-study", "early-exit study on the best phase");
    exits->add_option("--phases", opt.phases, "number of phase configurations");
    exits->add_option("--cl", opt.cls, "confidence levels")->delimiter(',');
    auto* asr = app.add_subcommand("asr", "secrecy-rate curves vs L-to-E ratio");
    asr->add_option("--phases", opt.phases, "number of phase configurations");
    asr->add_option("--top", opt.top, "how many top phases to evaluate");
    asr->add_option("--ratios", opt.ratios, "L-to-E ratios")->delimiter(',');
    auto* report = app.add_subcommand("report", "full campaign with all studies");
    report->add_option("--phases", opt.phases, "number of phase configurations");
    report->add_option("--ratios", opt.ratios, "L-to-E ratios")->delimiter(',');
    report->add_option("--cl", opt.cls, "confidence levels")->delimiter(',');
    auto* inspect = app.add_subcommand("inspect", "print dims, counts and hash");
    inspect->add_option("--path", opt.inspect_path, "dataset or checkpoint file")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (opt.print_config) {
            std::fputs(save_config(effective_config(opt)).c_str(), stdout);
            return 0;
        }
        if (topo->parsed()) return cmd_gen_topology(opt);
        if (gen->parsed()) return cmd_gen_dataset(opt);
        if (train->parsed()) return cmd_train_fl(opt);
        if (eval->parsed()) return cmd_evaluate(opt);
        if (sweep->parsed()) return cmd_sweep(opt);
        if (exits->parsed()) return cmd_exit_study(opt);
        if (asr->parsed()) return cmd_asr(opt);
        if (report->parsed()) return cmd_report(opt);
        if (inspect->parsed()) return cmd_inspect(opt);
        std::fputs(app.help().c_str(), stdout);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
