#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "risfed/core.hpp"
#include "risfed/dataset.hpp"
#include "risfed/nn.hpp"
#include "risfed/rng.hpp"
#include "risfed/scenario.hpp"

namespace risfed {

// The only type a client hands back to the server: weights and
// bookkeeping, never samples.
struct ClientUpdate {
    int client_ap = 0;
    ModelParams params;
    int64_t n_samples = 0;
    int round = 0;
    double mean_loss = 0.0;
};

// Sample-count weighted mean per parameter key. Updates are summed in
// ascending client order, so the result is exactly invariant under
// permutations of the input list.
inline ModelParams fedavg_aggregate(std::vector<ClientUpdate> updates) {
    if (updates.empty()) throw IntegrityError("fedavg_aggregate: no updates");
    std::sort(updates.begin(), updates.end(),
              [](const ClientUpdate& a, const ClientUpdate& b) {
                  return a.client_ap < b.client_ap;
              });
    if (updates.size() == 1) return updates[0].params;

    int64_t total = 0;
    for (const auto& u : updates) {
        if (u.n_samples < 1) throw IntegrityError("fedavg_aggregate: empty client");
        total += u.n_samples;
    }
    const ModelParams& head = updates[0].params;
    for (const auto& u : updates) {
        if (u.params.size() != head.size())
            throw IntegrityError("fedavg_aggregate: key sets differ");
        for (const auto& [key, t] : head) {
            auto it = u.params.find(key);
            if (it == u.params.end() || it->second.shape != t.shape)
                throw IntegrityError("fedavg_aggregate: key mismatch on " + key);
        }
    }
    // Deviation form of the weighted mean: identical updates aggregate to
    // themselves bit-for-bit.
    ModelParams out = head;
    for (size_t c = 1; c < updates.size(); ++c) {
        double w = static_cast<double>(updates[c].n_samples) / static_cast<double>(total);
        for (auto& [key, t] : out) {
            const auto& base = head.at(key).v;
            const auto& src = updates[c].params.at(key).v;
            for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += w * (src[i] - base[i]);
        }
    }
    return out;
}

struct RoundRecord {
    int round = 0;
    std::vector<ClientUpdate> client_meta;  // params cleared, bookkeeping kept
    Metrics global;
};

struct RoundState {
    int round = 0;
    ModelParams global;
    std::vector<RoundRecord> history;
};

struct FlSetup {
    Arch arch;
    std::vector<int> client_aps;          // parallel to shards
    std::vector<std::vector<int>> shards;  // indices into the train set
    const Dataset* train = nullptr;
    const Dataset* test = nullptr;  // optional per-round evaluation
};

// One synchronous round: broadcast -> local training -> aggregate. Model
// weights cross the client boundary through the checkpoint codec in both
// directions, as they would over a wire. Failures leave the input state
// untouched.
inline RoundState run_round(const RoundState& state, const FlSetup& setup,
                            const ScenarioConfig& cfg, bool parallel_clients = false) {
    if (setup.shards.empty() || !setup.train)
        throw IntegrityError("run_round: no shards");
    if (setup.shards.size() != setup.client_aps.size())
        throw IntegrityError("run_round: client/shard mismatch");

    std::string broadcast = checkpoint_bytes(state.global);
    uint64_t shuffle_seed =
        derive_stream(cfg, "shuffle:round_" + std::to_string(state.round)).derived_seed;

    std::vector<ClientUpdate> updates(setup.shards.size());
    std::vector<std::string> errors(setup.shards.size());
    auto run_client = [&](size_t c) {
        try {
            ModelParams local = params_from_bytes(broadcast, "broadcast");
            Rng shuffle_rng(shuffle_seed);
            TrainResult tr =
                train_local(local, setup.arch, *setup.train, setup.shards[c],
                            cfg.local_epochs, cfg.batch_size, cfg.learning_rate,
                            cfg.lambda_aux, shuffle_rng);
            ClientUpdate u;
            u.client_ap = setup.client_aps[c];
            u.params = params_from_bytes(checkpoint_bytes(local), "update");
            u.n_samples = static_cast<int64_t>(setup.shards[c].size());
            u.round = state.round;
            u.mean_loss = tr.epoch_loss.empty() ? 0.0 : tr.epoch_loss.back();
            updates[c] = std::move(u);
        } catch (const std::exception& e) {
            errors[c] = e.what();
        }
    };
    if (parallel_clients) {
        std::vector<std::thread> pool;
        for (size_t c = 0; c < setup.shards.size(); ++c)
            pool.emplace_back(run_client, c);
        for (auto& t : pool) t.join();
    } else {
        for (size_t c = 0; c < setup.shards.size(); ++c) run_client(c);
    }
    for (size_t c = 0; c < errors.size(); ++c)
        if (!errors[c].empty())
            throw IntegrityError("round " + std::to_string(state.round) + " client " +
                                 std::to_string(setup.client_aps[c]) +
                                 " failed: " + errors[c]);

    RoundState next;
    next.global = fedavg_aggregate(updates);
    next.round = state.round + 1;
    next.history = state.history;
    RoundRecord rec;
    rec.round = state.round;
    for (auto& u : updates) {
        ClientUpdate meta = std::move(u);
        meta.params.clear();
        rec.client_meta.push_back(std::move(meta));
    }
    if (setup.test && !setup.test->samples.empty())
        rec.global = evaluate(next.global, setup.arch, *setup.test);
    next.history.push_back(std::move(rec));
    return next;
}

// R synchronous rounds from a fresh init-stream model.
inline RoundState run_training(const ScenarioConfig& cfg, const FlSetup& setup,
                               int rounds, bool parallel_clients = false) {
    RoundState state;
    Rng init_rng = derive_stream(cfg, "init").rng();
    state.global = init_params(setup.arch, init_rng);
    for (int r = 0; r < rounds; ++r)
        state = run_round(state, setup, cfg, parallel_clients);
    return state;
}

// Line-delimited round log: one row per client per round plus the global
// test accuracy of that round.
inline void write_round_log(const std::vector<RoundRecord>& history, std::ostream& os) {
    os << "round,client_ap,n_samples,mean_loss,global_accuracy\n";
    char buf[128];
    for (const auto& rec : history) {
        for (const auto& u : rec.client_meta) {
            std::snprintf(buf, sizeof buf, "%d,%d,%lld,%.8f,%.6f\n", rec.round,
                          u.client_ap, static_cast<long long>(u.n_samples), u.mean_loss,
                          rec.global.accuracy);
            os << buf;
        }
    }
}

}  // namespace risfed
