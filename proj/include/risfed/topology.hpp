#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "risfed/core.hpp"
#include "risfed/rng.hpp"
#include "risfed/scenario.hpp"

namespace risfed {

enum class NodeKind { AP, RIS, UE };

struct NodeId {
    NodeKind kind = NodeKind::UE;
    int index = 0;

    bool operator==(const NodeId&) const = default;
};

struct RisNode {
    Vec3 pos;
    Vec3 normal;  // unit, pointing into the deployment area
};

struct Topology {
    std::vector<Vec3> ap_pos;
    std::vector<RisNode> ris;
    std::vector<Vec3> ue_pos;
    std::vector<uint8_t> ue_is_eve;
    std::vector<double> ue_power_dbm;
    double area_x = 0.0, area_y = 0.0;

    int n_ap() const { return static_cast<int>(ap_pos.size()); }
    int n_ris() const { return static_cast<int>(ris.size()); }
    int n_ue() const { return static_cast<int>(ue_pos.size()); }
    Vec3 area_centroid() const { return {area_x / 2.0, area_y / 2.0, 0.0}; }
};

// Wideband linear SNR per (UE, AP, RIS) triple: `full` is the SNR of the
// combined direct + reflected channel, `contrib` the reflected path alone.
struct SnrTable {
    int n_ue = 0, n_ap = 0, n_ris = 0;
    std::vector<double> full;
    std::vector<double> contrib;

    double& full_at(int u, int a, int r) { return full[(u * n_ap + a) * n_ris + r]; }
    double full_at(int u, int a, int r) const { return full[(u * n_ap + a) * n_ris + r]; }
    double& contrib_at(int u, int a, int r) { return contrib[(u * n_ap + a) * n_ris + r]; }
    double contrib_at(int u, int a, int r) const {
        return contrib[(u * n_ap + a) * n_ris + r];
    }
    // Best SNR over RIS candidates for a UE-AP pair.
    double best(int u, int a) const {
        double m = 0.0;
        for (int r = 0; r < n_ris; ++r) m = std::max(m, full_at(u, a, r));
        return m;
    }
};

struct Association {
    std::vector<int> serving_ap;   // per UE
    std::vector<int> serving_ris;  // per UE
    std::vector<double> rx_snr_db;  // [ue][ap], best over RIS candidates

    double snr_db(int ue, int ap, int n_ap) const { return rx_snr_db[ue * n_ap + ap]; }
};

namespace detail {

// Grid dimensions matching the area aspect ratio, e.g. 18 APs in a
// 120 x 60 hall -> 6 x 3.
inline std::pair<int, int> ap_grid_dims(int n_ap, double ax, double ay) {
    int rows = static_cast<int>(std::llround(std::sqrt(n_ap * ay / ax)));
    rows = std::clamp(rows, 1, n_ap);
    int cols = (n_ap + rows - 1) / rows;
    return {rows, cols};
}

}  // namespace detail

// APs on a jittered grid, RIS panels on the walls at farthest-point
// positions from the APs (and from each other), UEs uniform over the area.
// Draw order from the topology stream: AP jitter, UE positions, the
// eavesdropper subset, then per-eavesdropper transmit powers.
inline Topology place_entities(const ScenarioConfig& cfg, Rng& rng) {
    Topology topo;
    topo.area_x = cfg.area_x();
    topo.area_y = cfg.area_y();

    auto [rows, cols] = detail::ap_grid_dims(cfg.n_ap, cfg.area_x(), cfg.area_y());
    double cell_x = cfg.area_x() / cols;
    double cell_y = cfg.area_y() / rows;
    if (cell_x < 1.0 || cell_y < 1.0)
        throw ConfigError("area too small to host the AP grid (cells below 1 m)");
    for (int i = 0; i < cfg.n_ap; ++i) {
        int r = i / cols, c = i % cols;
        double jx = rng.uniform(-cfg.ap_jitter, cfg.ap_jitter) * cell_x;
        double jy = rng.uniform(-cfg.ap_jitter, cfg.ap_jitter) * cell_y;
        topo.ap_pos.push_back({(c + 0.5) * cell_x + jx, (r + 0.5) * cell_y + jy,
                               cfg.ap_height_m});
    }

    // Wall candidates every metre along the perimeter; greedy max-min
    // placement keeps panels away from APs and from each other.
    std::vector<Vec3> candidates;
    double ax = cfg.area_x(), ay = cfg.area_y();
    for (double x = 0.0; x < ax; x += 1.0) candidates.push_back({x, 0.0, cfg.ris_height_m});
    for (double y = 0.0; y < ay; y += 1.0) candidates.push_back({ax, y, cfg.ris_height_m});
    for (double x = ax; x > 0.0; x -= 1.0) candidates.push_back({x, ay, cfg.ris_height_m});
    for (double y = ay; y > 0.0; y -= 1.0) candidates.push_back({0.0, y, cfg.ris_height_m});
    Vec3 centroid = topo.area_centroid();
    for (int r = 0; r < cfg.n_ris; ++r) {
        int best = -1;
        double best_score = -1.0;
        for (size_t c = 0; c < candidates.size(); ++c) {
            double score = std::numeric_limits<double>::infinity();
            for (const auto& ap : topo.ap_pos)
                score = std::min(score, distance_xy(candidates[c], ap));
            for (const auto& placed : topo.ris)
                score = std::min(score, distance_xy(candidates[c], placed.pos));
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(c);
            }
        }
        Vec3 pos = candidates[best];
        Vec3 inward = Vec3{centroid.x - pos.x, centroid.y - pos.y, 0.0}.unit();
        topo.ris.push_back({pos, inward});
    }

    for (int u = 0; u < cfg.n_ue; ++u)
        topo.ue_pos.push_back(
            {rng.uniform(0.0, ax), rng.uniform(0.0, ay), cfg.ue_height_m});

    // Exact eavesdropper count; a full shuffle keeps the adversary subset
    // nested across legit_fraction values under the same seed.
    int n_eve = cfg.n_eve();
    std::vector<int> order(cfg.n_ue);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    topo.ue_is_eve.assign(cfg.n_ue, 0);
    for (int k = 0; k < n_eve; ++k) topo.ue_is_eve[order[k]] = 1;
    topo.ue_power_dbm.assign(cfg.n_ue, cfg.p_lu_dbm);
    for (int k = 0; k < n_eve; ++k)
        topo.ue_power_dbm[order[k]] =
            rng.uniform(cfg.eve_power_range_dbm[0], cfg.eve_power_range_dbm[1]);
    return topo;
}

// Serving AP by best received SNR; serving RIS by best reflected-path
// contribution at that AP. Ties break toward the lowest index.
inline Association associate(const Topology& topo, const SnrTable& table) {
    if (table.n_ue != topo.n_ue() || table.n_ap != topo.n_ap() ||
        table.n_ris != topo.n_ris() ||
        table.full.size() != static_cast<size_t>(table.n_ue) * table.n_ap * table.n_ris ||
        table.contrib.size() != table.full.size())
        throw IntegrityError("SNR table does not cover all UE/AP/RIS candidates");
    for (double v : table.full)
        if (!finite(v)) throw IntegrityError("SNR table holds a non-finite entry");

    Association assoc;
    assoc.serving_ap.resize(topo.n_ue());
    assoc.serving_ris.resize(topo.n_ue());
    assoc.rx_snr_db.resize(static_cast<size_t>(topo.n_ue()) * topo.n_ap());
    for (int u = 0; u < topo.n_ue(); ++u) {
        int best_ap = 0;
        double best_snr = -1.0;
        for (int a = 0; a < topo.n_ap(); ++a) {
            double snr = table.best(u, a);
            assoc.rx_snr_db[u * topo.n_ap() + a] = linear_to_db(snr);
            if (snr > best_snr) {
                best_snr = snr;
                best_ap = a;
            }
        }
        int best_ris = 0;
        double best_contrib = -1.0;
        for (int r = 0; r < topo.n_ris(); ++r) {
            double c = table.contrib_at(u, best_ap, r);
            if (c > best_contrib) {
                best_contrib = c;
                best_ris = r;
            }
        }
        assoc.serving_ap[u] = best_ap;
        assoc.serving_ris[u] = best_ris;
    }
    return assoc;
}

// The k APs minimising
//   alpha * dist(ap, area centroid) + (1 - alpha) * mean dist(ap, RIS panels),
// horizontal distances, deterministic index tie-break, result sorted.
inline std::vector<int> select_fl_clients(const Topology& topo, int k, double alpha = 0.5,
                                          const std::vector<int>& exclude = {}) {
    if (k > topo.n_ap()) throw IntegrityError("cannot select more clients than APs");
    Vec3 centroid = topo.area_centroid();
    std::vector<std::pair<double, int>> scored;
    for (int a = 0; a < topo.n_ap(); ++a) {
        if (std::find(exclude.begin(), exclude.end(), a) != exclude.end()) continue;
        double mean_ris = 0.0;
        for (const auto& r : topo.ris) mean_ris += distance_xy(topo.ap_pos[a], r.pos);
        if (!topo.ris.empty()) mean_ris /= topo.ris.size();
        double score =
            alpha * distance_xy(topo.ap_pos[a], centroid) + (1.0 - alpha) * mean_ris;
        scored.push_back({score, a});
    }
    if (static_cast<int>(scored.size()) < k)
        throw IntegrityError("not enough APs left after exclusions");
    std::sort(scored.begin(), scored.end());  // ties fall back to index order
    std::vector<int> out;
    for (int i = 0; i < k; ++i) out.push_back(scored[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

// AP closest to the area centroid; hosts the aggregation server.
inline int central_ap(const Topology& topo) {
    Vec3 centroid = topo.area_centroid();
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < topo.n_ap(); ++a) {
        double d = distance_xy(topo.ap_pos[a], centroid);
        if (d < best_d) {
            best_d = d;
            best = a;
        }
    }
    return best;
}

inline void write_topology_csv(const Topology& topo, const ScenarioConfig& cfg,
                               std::ostream& os) {
    os << "kind,index,x,y,z,is_eve,power_dbm\n";
    char buf[160];
    auto row = [&](const char* kind, int idx, const Vec3& p, int eve, double power) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f,%d,%.6f\n", kind, idx, p.x,
                      p.y, p.z, eve, power);
        os << buf;
    };
    for (int a = 0; a < topo.n_ap(); ++a) row("ap", a, topo.ap_pos[a], 0, cfg.p_ap_dbm);
    for (int r = 0; r < topo.n_ris(); ++r) row("ris", r, topo.ris[r].pos, 0, 0.0);
    for (int u = 0; u < topo.n_ue(); ++u)
        row("ue", u, topo.ue_pos[u], topo.ue_is_eve[u], topo.ue_power_dbm[u]);
}

}  // namespace risfed
