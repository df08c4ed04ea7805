#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "risfed/dataset.hpp"

using namespace risfed;

namespace {

struct Pipeline {
    ScenarioConfig cfg;
    Topology topo;
    Association assoc;
    RisConfiguration ris_cfg;
    Dataset ds;
};

Pipeline build_pipeline(const std::string& overrides) {
    Pipeline p;
    p.cfg = load_config(overrides);
    Rng rng = derive_stream(p.cfg, "topology").rng();
    p.topo = place_entities(p.cfg, rng);
    ChannelContext ctx(p.cfg, p.topo, 0);
    p.ris_cfg = random_ris_phases(p.cfg, 0);
    SnrTable table = build_snr_table(ctx, p.ris_cfg, noise_power_dbm(p.cfg));
    p.assoc = associate(p.topo, table);
    p.ds = generate_dataset(p.cfg, p.topo, p.assoc, ctx, p.ris_cfg);
    return p;
}

const std::string kSmall =
    "[scenario]\nn_ue = 24\nn_ap = 4\nn_ris = 2\nap_antennas = 8\nn_rb = 12\n"
    "ris_rows = 4\nris_cols = 5\nn_fl_clients = 2\narea_m = [60, 30]\n";

}  // namespace

TEST(dataset, csi_image_of_zero_channel_is_zero) {
    CMat h(4, 3);
    auto planes = build_csi_image(h);
    for (float v : planes) EXPECT_EQ(v, 0.0f);
}

TEST(dataset, csi_image_real_channel_identity) {
    CMat h(2, 2);
    h.at(0, 0) = 0.5;
    h.at(0, 1) = -1.5;
    h.at(1, 0) = 2.0;
    h.at(1, 1) = -0.25;
    auto planes = build_csi_image(h);
    size_t n = 4;
    for (size_t i = 0; i < n; ++i) {
        EXPECT_EQ(planes[n + i], 0.0f);                       // imaginary plane
        EXPECT_EQ(planes[2 * n + i], std::abs(planes[i]));    // magnitude plane
    }
}

TEST(dataset, csi_planes_satisfy_pythagoras) {
    Rng rng(3);
    CMat h(8, 6);
    for (auto& z : h.v) z = rng.cnormal();
    auto planes = build_csi_image(h);
    size_t n = h.v.size();
    for (size_t i = 0; i < n; ++i) {
        double lhs = double(planes[2 * n + i]) * planes[2 * n + i];
        double rhs = double(planes[i]) * planes[i] + double(planes[n + i]) * planes[n + i];
        EXPECT_NEAR(lhs, rhs, 1e-6);
        EXPECT_LE(std::abs(planes[i]), 1.0f);
        EXPECT_LE(std::abs(planes[n + i]), 1.0f);
        EXPECT_LE(planes[2 * n + i], 1.0f);
    }
}

TEST(dataset, metadata_planes_have_documented_anchors) {
    Pipeline p = build_pipeline(kSmall);
    p.topo.ue_pos[0] = {0.0, 0.0, 1.5};  // area corner
    auto m = build_metadata_planes(p.cfg, p.topo, 0, 1, 0);
    EXPECT_EQ(m[1], 0.0f);
    EXPECT_EQ(m[2], 0.0f);

    // legitimate transmit power maps to the lower bound of the span
    int legit = -1;
    for (int u = 0; u < p.topo.n_ue(); ++u)
        if (!p.topo.ue_is_eve[u]) {
            legit = u;
            break;
        }
    ASSERT_GE(legit, 0);
    auto ml = build_metadata_planes(p.cfg, p.topo, legit, 0, 0);
    EXPECT_EQ(ml[0], 0.0f);
}

TEST(dataset, ris_plane_knob_swaps_distance_for_x) {
    Pipeline p = build_pipeline(kSmall);
    auto dist_planes = build_metadata_planes(p.cfg, p.topo, 0, 1, 0);
    double diag = std::hypot(p.cfg.area_x(), p.cfg.area_y());
    EXPECT_NEAR(dist_planes[5],
                distance_xy(p.topo.ue_pos[0], p.topo.ris[0].pos) / diag, 1e-6);

    ScenarioConfig alt = p.cfg;
    alt.ris_plane = "ris_x";
    auto x_planes = build_metadata_planes(alt, p.topo, 0, 1, 0);
    EXPECT_NEAR(x_planes[5], p.topo.ris[0].pos.x / alt.area_x(), 1e-6);
}

TEST(dataset, metadata_planes_are_constant_per_sample) {
    Pipeline p = build_pipeline(kSmall);
    size_t pv = p.ds.plane_values();
    for (const auto& s : p.ds.samples)
        for (int c = 3; c < kCsiChannels; ++c) {
            float lo = s.tensor[c * pv], hi = lo;
            for (size_t i = 0; i < pv; ++i) {
                lo = std::min(lo, s.tensor[c * pv + i]);
                hi = std::max(hi, s.tensor[c * pv + i]);
            }
            EXPECT_EQ(hi - lo, 0.0f);
        }
}

TEST(dataset, default_config_class_balance) {
    Pipeline p = build_pipeline("");
    EXPECT_EQ(p.ds.samples.size(), 500u);
    auto counts = p.ds.class_counts();
    EXPECT_EQ(counts[0], 350);
    EXPECT_EQ(counts[1], 150);
    // labels match the topology flags exactly, in UE order
    for (int u = 0; u < p.topo.n_ue(); ++u)
        EXPECT_EQ(p.ds.samples[u].label, p.topo.ue_is_eve[u]);
}

TEST(dataset, minimal_two_user_labels) {
    Pipeline p = build_pipeline(
        "[scenario]\nn_ue = 2\nlegit_fraction = 0.5\nn_ap = 2\nn_ris = 1\n"
        "ap_antennas = 4\nn_rb = 6\nris_rows = 2\nris_cols = 2\nn_fl_clients = 1\n");
    std::multiset<int> labels = {p.ds.samples[0].label, p.ds.samples[1].label};
    EXPECT_EQ(labels, (std::multiset<int>{0, 1}));
}

TEST(dataset, generation_is_deterministic) {
    Pipeline a = build_pipeline(kSmall);
    Pipeline b = build_pipeline(kSmall);
    EXPECT_EQ(content_hash(dataset_bytes(a.ds)), content_hash(dataset_bytes(b.ds)));
}

TEST(dataset, stratified_split_arithmetic) {
    Dataset ds;
    ds.n_ant = 2;
    ds.n_rb = 2;
    for (int i = 0; i < 500; ++i) {
        CsiSample s;
        s.tensor.assign(ds.tensor_values(), 0.0f);
        s.label = i < 350 ? 0 : 1;
        s.meta.ue = i;
        ds.samples.push_back(s);
    }
    Rng rng(derive_stream(uint64_t{1}, "split").derived_seed);
    auto [train, test] = split(ds, 0.8, rng);
    EXPECT_EQ(train.samples.size(), 400u);
    EXPECT_EQ(test.samples.size(), 100u);
    auto tc = train.class_counts(), sc = test.class_counts();
    EXPECT_EQ(tc[0], 280);
    EXPECT_EQ(tc[1], 120);
    EXPECT_EQ(sc[0], 70);
    EXPECT_EQ(sc[1], 30);
}

TEST(dataset, smallest_stratified_split) {
    Dataset ds;
    ds.n_ant = 1;
    ds.n_rb = 1;
    for (int i = 0; i < 4; ++i) {
        CsiSample s;
        s.tensor.assign(ds.tensor_values(), 0.0f);
        s.label = i % 2;
        s.meta.ue = i;
        ds.samples.push_back(s);
    }
    Rng rng(7);
    auto [train, test] = split(ds, 0.5, rng);
    EXPECT_EQ(train.samples.size(), 2u);
    EXPECT_EQ(test.samples.size(), 2u);
    EXPECT_EQ(train.class_counts()[0], 1);
    EXPECT_EQ(train.class_counts()[1], 1);
}

TEST(dataset, split_sides_are_disjoint) {
    Pipeline p = build_pipeline(kSmall);
    Rng rng(derive_stream(p.cfg, "split").derived_seed);
    auto [train, test] = split(p.ds, 0.8, rng);
    std::set<uint32_t> train_ids, test_ids;
    for (const auto& s : train.samples) train_ids.insert(s.meta.ue);
    for (const auto& s : test.samples) test_ids.insert(s.meta.ue);
    for (uint32_t id : test_ids) EXPECT_EQ(train_ids.count(id), 0u);
    EXPECT_EQ(train_ids.size() + test_ids.size(), p.ds.samples.size());
}

TEST(dataset, split_rejects_tiny_classes) {
    Dataset ds;
    ds.n_ant = 1;
    ds.n_rb = 1;
    CsiSample s;
    s.tensor.assign(ds.tensor_values(), 0.0f);
    s.label = 0;
    ds.samples = {s, s, s};  // no class-1 samples at all
    ds.samples[2].label = 1;
    Rng rng(9);
    EXPECT_THROW(split(ds, 0.8, rng), IntegrityError);
}

TEST(dataset, normalization_statistics_come_from_train_only) {
    Pipeline p = build_pipeline(kSmall);
    Rng rng(derive_stream(p.cfg, "split").derived_seed);
    auto [train, test] = split(p.ds, 0.8, rng);
    NormStats recomputed = detail::train_stats(train);
    for (int c = 0; c < kCsiChannels; ++c) {
        EXPECT_EQ(train.stats.mean[c], recomputed.mean[c]);
        EXPECT_EQ(test.stats.mean[c], recomputed.mean[c]);
        EXPECT_EQ(train.stats.stddev[c], recomputed.stddev[c]);
    }
}

TEST(dataset, single_client_owns_everything) {
    Pipeline p = build_pipeline(kSmall);
    auto shards = partition_clients(p.ds, {2}, p.topo);
    ASSERT_EQ(shards.size(), 1u);
    EXPECT_EQ(shards[0].indices.size(), p.ds.samples.size());
}

TEST(dataset, partition_tie_goes_to_lower_index_client) {
    Topology topo;
    topo.ap_pos = {{0, 0, 8}, {10, 0, 8}};
    topo.area_x = 10;
    topo.area_y = 10;
    Dataset train;
    train.n_ant = 1;
    train.n_rb = 1;
    CsiSample mid;
    mid.tensor.assign(train.tensor_values(), 0.0f);
    mid.meta.pos[0] = 5.0f;  // exactly between the two client APs
    mid.meta.pos[1] = 0.0f;
    mid.meta.pos[2] = 8.0f;
    CsiSample right = mid;
    right.meta.pos[0] = 9.5f;
    train.samples = {mid, right};
    auto shards = partition_clients(train, {0, 1}, topo);
    ASSERT_EQ(shards[0].indices.size(), 1u);
    EXPECT_EQ(shards[0].indices[0], 0);  // the tied sample lands on client 0
    EXPECT_EQ(shards[1].indices[0], 1);
}

TEST(dataset, partition_matches_nearest_oracle_and_covers_train) {
    Pipeline p = build_pipeline(kSmall);
    std::vector<int> clients = {0, 2, 3};
    auto shards = partition_clients(p.ds, clients, p.topo);
    size_t total = 0;
    std::set<int> seen;
    for (size_t c = 0; c < shards.size(); ++c) {
        total += shards[c].indices.size();
        for (int i : shards[c].indices) {
            EXPECT_TRUE(seen.insert(i).second);  // disjoint
            const auto& m = p.ds.samples[i].meta;
            Vec3 pos{m.pos[0], m.pos[1], m.pos[2]};
            double mine = distance(pos, p.topo.ap_pos[clients[c]]);
            for (int other : clients)
                EXPECT_LE(mine, distance(pos, p.topo.ap_pos[other]) + 1e-12);
        }
    }
    EXPECT_EQ(total, p.ds.samples.size());
}

TEST(dataset, container_round_trip_is_bitwise) {
    Pipeline p = build_pipeline(kSmall);
    std::string bytes = dataset_bytes(p.ds);
    Dataset loaded = dataset_from_bytes(bytes, "test");
    EXPECT_EQ(dataset_bytes(loaded), bytes);
}

TEST(dataset, container_size_formula) {
    Pipeline p = build_pipeline(kSmall);
    std::string bytes = dataset_bytes(p.ds);
    size_t per_sample = 32 + 1 + 4ull * p.ds.n_ant * p.ds.n_rb * kCsiChannels;
    EXPECT_EQ(bytes.size(), 92 + p.ds.samples.size() * per_sample);
}

TEST(dataset, corrupt_header_is_rejected) {
    Pipeline p = build_pipeline(kSmall);
    std::string bytes = dataset_bytes(p.ds);
    std::string bad_magic = bytes;
    bad_magic[1] = 'X';
    EXPECT_THROW(dataset_from_bytes(bad_magic, "test"), FormatError);
    std::string truncated = bytes.substr(0, bytes.size() - 7);
    EXPECT_THROW(dataset_from_bytes(truncated, "test"), FormatError);

    std::string wrong_count = bytes;
    wrong_count[8] = static_cast<char>(wrong_count[8] + 1);  // n_samples field
    EXPECT_THROW(dataset_from_bytes(wrong_count, "test"), FormatError);
}

TEST(dataset, file_round_trip) {
    Pipeline p = build_pipeline(kSmall);
    auto path = std::filesystem::temp_directory_path() / "risfed_ds_test.bin";
    save_dataset(p.ds, path);
    Dataset loaded = load_dataset(path);
    EXPECT_EQ(dataset_bytes(loaded), dataset_bytes(p.ds));
    std::filesystem::remove(path);
}
