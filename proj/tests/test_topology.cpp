#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "risfed/topology.hpp"

using namespace risfed;

namespace {

Topology default_topology(uint64_t seed = 1) {
    ScenarioConfig cfg = load_config("");
    cfg.master_seed = seed;
    Rng rng = derive_stream(cfg, "topology").rng();
    return place_entities(cfg, rng);
}

SnrTable table_from(const std::vector<double>& full, int n_ue, int n_ap, int n_ris) {
    SnrTable t;
    t.n_ue = n_ue;
    t.n_ap = n_ap;
    t.n_ris = n_ris;
    t.full = full;
    t.contrib.assign(full.size(), 0.0);
    return t;
}

}  // namespace

TEST(topology, default_counts_and_heights) {
    Topology topo = default_topology();
    EXPECT_EQ(topo.n_ap(), 18);
    EXPECT_EQ(topo.n_ris(), 3);
    EXPECT_EQ(topo.n_ue(), 500);
    int eves = 0;
    for (auto e : topo.ue_is_eve) eves += e;
    EXPECT_EQ(eves, 150);  // 70% legitimate / 30% eavesdroppers
    for (const auto& p : topo.ap_pos) EXPECT_DOUBLE_EQ(p.z, 8.0);
    for (const auto& p : topo.ue_pos) EXPECT_DOUBLE_EQ(p.z, 1.5);
    for (int u = 0; u < topo.n_ue(); ++u) {
        if (topo.ue_is_eve[u])
            EXPECT_GT(topo.ue_power_dbm[u], 23.0);
        else
            EXPECT_DOUBLE_EQ(topo.ue_power_dbm[u], 23.0);
    }
}

TEST(topology, single_legitimate_ue) {
    ScenarioConfig cfg = load_config("[scenario]\nn_ue = 1\nlegit_fraction = 1.0\n");
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology topo = place_entities(cfg, rng);
    ASSERT_EQ(topo.n_ue(), 1);
    EXPECT_EQ(topo.ue_is_eve[0], 0);
}

TEST(topology, eve_count_is_exact_not_probabilistic) {
    for (int n_ue : {7, 33, 150, 501}) {
        for (double frac : {0.3, 0.5, 0.7, 0.9}) {
            ScenarioConfig cfg = load_config("");
            cfg.n_ue = n_ue;
            cfg.legit_fraction = frac;
            Rng rng = derive_stream(cfg, "topology").rng();
            Topology topo = place_entities(cfg, rng);
            int legit = 0;
            for (auto e : topo.ue_is_eve) legit += (e == 0);
            EXPECT_EQ(legit, static_cast<int>(std::llround(frac * n_ue)));
        }
    }
}

TEST(topology, placement_is_deterministic) {
    Topology a = default_topology(42), b = default_topology(42);
    ASSERT_EQ(a.ue_pos.size(), b.ue_pos.size());
    for (size_t i = 0; i < a.ue_pos.size(); ++i) {
        EXPECT_EQ(a.ue_pos[i].x, b.ue_pos[i].x);
        EXPECT_EQ(a.ue_pos[i].y, b.ue_pos[i].y);
    }
    EXPECT_EQ(a.ue_is_eve, b.ue_is_eve);
    EXPECT_EQ(a.ue_power_dbm, b.ue_power_dbm);
}

TEST(topology, ris_sits_on_the_walls_facing_inward) {
    Topology topo = default_topology();
    for (const auto& r : topo.ris) {
        bool on_wall = r.pos.x == 0.0 || r.pos.y == 0.0 || r.pos.x == topo.area_x ||
                       r.pos.y == topo.area_y;
        EXPECT_TRUE(on_wall);
        Vec3 to_centre = topo.area_centroid() - r.pos;
        EXPECT_GT(to_centre.x * r.normal.x + to_centre.y * r.normal.y, 0.0);
    }
}

TEST(topology, area_too_small_for_grid) {
    ScenarioConfig cfg = load_config("[scenario]\narea_m = [3, 2]\n");
    Rng rng = derive_stream(cfg, "topology").rng();
    EXPECT_THROW(place_entities(cfg, rng), ConfigError);
}

TEST(topology, associate_picks_best_snr) {
    Topology topo;
    topo.ap_pos = {{0, 0, 8}, {10, 0, 8}};
    topo.ris = {{{5, 0, 6}, {0, 1, 0}}};
    topo.ue_pos = {{1, 1, 1.5}};
    topo.ue_is_eve = {0};
    topo.ue_power_dbm = {23.0};
    topo.area_x = 10;
    topo.area_y = 10;
    SnrTable t = table_from({db_to_linear(10.0), db_to_linear(12.0)}, 1, 2, 1);
    Association assoc = associate(topo, t);
    EXPECT_EQ(assoc.serving_ap[0], 1);
    EXPECT_NEAR(assoc.snr_db(0, 1, 2), 12.0, 1e-12);
}

TEST(topology, associate_tie_breaks_to_lowest_index) {
    Topology topo;
    topo.ap_pos = {{0, 0, 8}, {10, 0, 8}};
    topo.ris = {{{5, 0, 6}, {0, 1, 0}}};
    topo.ue_pos = {{1, 1, 1.5}};
    topo.ue_is_eve = {0};
    topo.ue_power_dbm = {23.0};
    SnrTable t = table_from({2.5, 2.5}, 1, 2, 1);
    EXPECT_EQ(associate(topo, t).serving_ap[0], 0);
}

TEST(topology, associate_matches_exhaustive_argmax) {
    Rng rng(123);
    Topology topo;
    const int n_ue = 5, n_ap = 4, n_ris = 2;
    for (int a = 0; a < n_ap; ++a) topo.ap_pos.push_back({a * 10.0, 0, 8});
    for (int r = 0; r < n_ris; ++r) topo.ris.push_back({{r * 20.0, 30, 6}, {0, -1, 0}});
    for (int u = 0; u < n_ue; ++u) {
        topo.ue_pos.push_back({rng.uniform(0, 30), rng.uniform(0, 30), 1.5});
        topo.ue_is_eve.push_back(0);
        topo.ue_power_dbm.push_back(23.0);
    }
    SnrTable t;
    t.n_ue = n_ue;
    t.n_ap = n_ap;
    t.n_ris = n_ris;
    for (int i = 0; i < n_ue * n_ap * n_ris; ++i) {
        t.full.push_back(rng.uniform(0.1, 9.0));
        t.contrib.push_back(rng.uniform(0.0, 1.0));
    }
    Association assoc = associate(topo, t);
    for (int u = 0; u < n_ue; ++u) {
        // brute-force scan over the whole table
        int best_ap = 0;
        double best = -1;
        for (int a = 0; a < n_ap; ++a)
            for (int r = 0; r < n_ris; ++r)
                if (t.full_at(u, a, r) > best) {
                    best = t.full_at(u, a, r);
                    best_ap = a;
                }
        EXPECT_EQ(assoc.serving_ap[u], best_ap);
        // association optimality: no AP strictly better than the serving one
        for (int a = 0; a < n_ap; ++a)
            EXPECT_LE(t.best(u, a), t.best(u, assoc.serving_ap[u]));
    }
}

TEST(topology, associate_rejects_incomplete_table) {
    Topology topo = default_topology();
    SnrTable t = table_from({1.0}, 1, 1, 1);
    EXPECT_THROW(associate(topo, t), IntegrityError);
}

TEST(topology, select_fl_clients_default_count) {
    Topology topo = default_topology();
    auto clients = select_fl_clients(topo, 3);
    EXPECT_EQ(clients.size(), 3u);
    EXPECT_TRUE(std::is_sorted(clients.begin(), clients.end()));
}

TEST(topology, select_fl_clients_all_aps) {
    Topology topo = default_topology();
    auto clients = select_fl_clients(topo, topo.n_ap());
    EXPECT_EQ(static_cast<int>(clients.size()), topo.n_ap());
    for (int a = 0; a < topo.n_ap(); ++a) EXPECT_EQ(clients[a], a);
}

TEST(topology, select_fl_clients_matches_score_sort_oracle) {
    Topology topo;
    topo.area_x = 100;
    topo.area_y = 50;
    topo.ap_pos = {{10, 10, 8}, {50, 25, 8}, {90, 40, 8}, {20, 45, 8}, {70, 5, 8}};
    topo.ris = {{{0, 25, 6}, {1, 0, 0}}, {{100, 25, 6}, {-1, 0, 0}}};
    const double alpha = 0.5;
    auto clients = select_fl_clients(topo, 2, alpha);

    std::vector<std::pair<double, int>> oracle;
    for (int a = 0; a < 5; ++a) {
        double ris_mean = 0;
        for (const auto& r : topo.ris) ris_mean += distance_xy(topo.ap_pos[a], r.pos);
        ris_mean /= 2;
        oracle.push_back(
            {alpha * distance_xy(topo.ap_pos[a], topo.area_centroid()) +
                 (1 - alpha) * ris_mean,
             a});
    }
    std::sort(oracle.begin(), oracle.end());
    std::vector<int> expect = {oracle[0].second, oracle[1].second};
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(clients, expect);
}

TEST(topology, select_fl_clients_permutation_invariant) {
    Topology topo = default_topology();
    auto clients = select_fl_clients(topo, 3);

    // reverse the AP labelling and re-select
    Topology relabeled = topo;
    std::reverse(relabeled.ap_pos.begin(), relabeled.ap_pos.end());
    auto clients2 = select_fl_clients(relabeled, 3);
    std::vector<std::pair<double, double>> pos1, pos2;
    for (int c : clients) pos1.push_back({topo.ap_pos[c].x, topo.ap_pos[c].y});
    for (int c : clients2)
        pos2.push_back({relabeled.ap_pos[c].x, relabeled.ap_pos[c].y});
    std::sort(pos1.begin(), pos1.end());
    std::sort(pos2.begin(), pos2.end());
    EXPECT_EQ(pos1, pos2);
}

TEST(topology, csv_export_covers_every_node) {
    ScenarioConfig cfg = load_config("[scenario]\nn_ue = 10\n");
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology topo = place_entities(cfg, rng);
    std::ostringstream os;
    write_topology_csv(topo, cfg, os);
    std::string text = os.str();
    size_t lines = std::count(text.begin(), text.end(), '\n');
    EXPECT_EQ(lines, 1u + 18 + 3 + 10);
    EXPECT_NE(text.find("kind,index,x,y,z,is_eve,power_dbm"), std::string::npos);
}
