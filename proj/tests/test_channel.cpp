#include <gtest/gtest.h>

#include <complex>

#include "risfed/channel.hpp"
#include "risfed/secrecy.hpp"

using namespace risfed;

namespace {

// Independent brute-force evaluation of
//   h_eff[t,f] = h_dir[t,f] + sum_n conj(G[n,t,f]) e^{j theta_n} h_ue_ris[n,f]
CMat effective_channel_oracle(const LinkChannels& link, const RisConfiguration& rc) {
    int n = link.h_ue_ris.rows, nt = link.h_dir.rows, nf = link.h_dir.cols;
    CMat out(nt, nf);
    for (int t = 0; t < nt; ++t)
        for (int f = 0; f < nf; ++f) {
            cplx acc = link.h_dir.at(t, f);
            for (int e = 0; e < n; ++e)
                acc += std::conj(link.g_ris_ap.at(e, t, f)) *
                       std::polar(1.0, rc.theta[e]) * link.h_ue_ris.at(e, f);
            out.at(t, f) = acc;
        }
    return out;
}

LinkChannels random_link(Rng& rng, int n, int nt, int nf) {
    LinkChannels link;
    link.h_dir = CMat(nt, nf);
    link.h_ue_ris = CMat(n, nf);
    link.g_ris_ap = CTensor3(n, nt, nf);
    for (auto& z : link.h_dir.v) z = rng.cnormal();
    for (auto& z : link.h_ue_ris.v) z = rng.cnormal();
    for (auto& z : link.g_ris_ap.v) z = rng.cnormal();
    return link;
}

ScenarioConfig tiny_config() {
    ScenarioConfig cfg = load_config(
        "[scenario]\n"
        "n_ap = 2\nn_ris = 2\nn_ue = 3\nap_antennas = 4\nn_rb = 3\n"
        "ris_rows = 2\nris_cols = 3\nn_phase_configs = 4\narea_m = [40, 20]\n"
        "legit_fraction = 0.5\nn_fl_clients = 2\n");
    return cfg;
}

}  // namespace

TEST(channel, path_loss_reference_distance_anchor) {
    PathLossModel m;
    EXPECT_NEAR(path_loss_db(m, 1.0, 28.0, true), 32.4 + 20.0 * std::log10(28.0), 1e-12);
}

TEST(channel, path_loss_slope_definition) {
    PathLossModel m;
    m.exponent_los = 2.0;
    double d100 = path_loss_db(m, 100.0, 28.0, true);
    double d10 = path_loss_db(m, 10.0, 28.0, true);
    EXPECT_NEAR(d100 - d10, 20.0, 1e-9);
}

TEST(channel, path_loss_clamps_below_reference) {
    PathLossModel m;
    uint64_t before = path_loss_clamp_count().load();
    EXPECT_EQ(path_loss_db(m, 0.25, 28.0, true), path_loss_db(m, 1.0, 28.0, true));
    EXPECT_EQ(path_loss_clamp_count().load(), before + 1);
}

TEST(channel, shadowing_sample_sigma_matches_config) {
    PathLossModel m;
    m.shadow_nlos_db = 7.0;
    Rng rng(derive_stream(uint64_t{3}, "fading:test").derived_seed);
    double sum = 0, sq = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        double s = m.shadow_sigma(false) * rng.normal();
        sum += s;
        sq += s * s;
    }
    double sigma = std::sqrt(sq / n - (sum / n) * (sum / n));
    EXPECT_NEAR(sigma, 7.0, 0.05 * 7.0);
}

TEST(channel, los_probability_anchors) {
    EXPECT_DOUBLE_EQ(los_probability(0.0), 1.0);
    EXPECT_NEAR(los_probability(25.0, 25.0), std::exp(-1.0), 1e-12);
}

TEST(channel, los_fraction_matches_closed_form) {
    Rng rng(derive_stream(uint64_t{5}, "fading:los").derived_seed);
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += rng.uniform() < los_probability(25.0, 25.0);
    double expected = std::exp(-1.0);
    EXPECT_NEAR(hits / double(n), expected, 0.01 * expected);
}

TEST(channel, rician_degenerates_to_pure_los) {
    Rng rng(7);
    auto taps = small_scale_gain(rng, true, 60.0, 4);
    EXPECT_NEAR(std::abs(taps[0]), 1.0, 0.01);
    for (size_t k = 1; k < taps.size(); ++k) EXPECT_LT(std::abs(taps[k]), 0.01);
}

TEST(channel, nlos_mean_power_is_unit) {
    Rng rng(11);
    double power = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto taps = small_scale_gain(rng, false, 9.0, 4);
        for (const auto& t : taps) power += std::norm(t);
    }
    EXPECT_NEAR(power / n, 1.0, 0.01);
}

TEST(channel, los_mean_power_is_unit) {
    Rng rng(13);
    double power = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto taps = small_scale_gain(rng, true, 9.0, 4);
        for (const auto& t : taps) power += std::norm(t);
    }
    EXPECT_NEAR(power / n, 1.0, 0.01);
}

TEST(channel, single_tap_response_is_flat) {
    Rng rng(17);
    auto taps = small_scale_gain(rng, false, 9.0, 1);
    auto h = frequency_response(taps, 8, 120.0);
    for (const auto& v : h) {
        EXPECT_NEAR(v.real(), h[0].real(), 1e-15);
        EXPECT_NEAR(v.imag(), h[0].imag(), 1e-15);
    }
}

TEST(channel, delta_tap_gives_all_ones) {
    auto h = frequency_response({cplx{1.0, 0.0}}, 6, 120.0);
    for (const auto& v : h) {
        EXPECT_NEAR(v.real(), 1.0, 1e-15);
        EXPECT_NEAR(v.imag(), 0.0, 1e-15);
    }
}

TEST(channel, two_ray_ripple_matches_closed_form) {
    cplx g{0.5, 0.25};
    auto h = frequency_response({g, g}, 16, 120.0);
    for (int f = 0; f < 16; ++f) {
        double expected = std::norm(g) * (2.0 + 2.0 * std::cos(2.0 * kPi * f / 16.0));
        EXPECT_NEAR(std::norm(h[f]), expected, 1e-12);
    }
}

TEST(channel, response_matches_per_bin_summation_oracle) {
    Rng rng(19);
    std::vector<cplx> taps;
    for (int k = 0; k < 5; ++k) taps.push_back(rng.cnormal());
    auto h = frequency_response(taps, 12, 120.0);
    for (int f = 0; f < 12; ++f) {
        cplx acc = 0.0;
        for (int k = 0; k < 5; ++k)
            acc += taps[k] *
                   cplx{std::cos(2 * kPi * k * f / 12.0), -std::sin(2 * kPi * k * f / 12.0)};
        EXPECT_NEAR(std::abs(h[f] - acc), 0.0, 1e-12);
    }
}

TEST(channel, parseval_energy_preserved) {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<cplx> taps;
        for (int k = 0; k < 4; ++k) taps.push_back(rng.cnormal());
        auto h = frequency_response(taps, 60, 120.0);
        double bins = 0.0, time = 0.0;
        for (const auto& v : h) bins += std::norm(v);
        for (const auto& t : taps) time += std::norm(t);
        EXPECT_NEAR(bins / 60.0, time, 1e-9 * time);
    }
}

TEST(channel, broadside_direction_gives_flat_array_phase) {
    // UE displaced along +y from the AP: zero x component, so every ULA
    // element sees the same phase.
    ScenarioConfig cfg = tiny_config();
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology topo = place_entities(cfg, rng);
    topo.ap_pos[0] = {10, 5, 8};
    topo.ue_pos[0] = {10, 15, 8};
    ChannelContext ctx(cfg, topo, 0);
    LinkChannels link = ctx.gen_link_channels(0, 0, 0);
    for (int t = 1; t < link.h_dir.rows; ++t)
        for (int f = 0; f < link.h_dir.cols; ++f)
            EXPECT_NEAR(std::abs(link.h_dir.at(t, f) - link.h_dir.at(0, f)), 0.0, 1e-12);
}

TEST(channel, doubling_distance_scales_by_path_loss_slope) {
    ScenarioConfig cfg = tiny_config();
    cfg.n_ue = 1;
    cfg.legit_fraction = 1.0;
    cfg.d_clutter_m = 1e9;  // force LoS on both draws
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology near_topo = place_entities(cfg, rng);
    near_topo.ap_pos[0] = {0, 10, 8};
    near_topo.ue_pos[0] = {10, 10, 8};
    Topology far_topo = near_topo;
    far_topo.ue_pos[0] = {20, 10, 8};

    ChannelContext near_ctx(cfg, near_topo, 0), far_ctx(cfg, far_topo, 0);
    LinkChannels a = near_ctx.gen_link_channels(0, 0, 0);
    LinkChannels b = far_ctx.gen_link_channels(0, 0, 0);
    ASSERT_TRUE(a.los_dir);
    ASSERT_TRUE(b.los_dir);
    double expected = std::pow(10.0, -cfg.pl_exponent_los * 10.0 * std::log10(2.0) / 20.0);
    for (size_t i = 0; i < a.h_dir.v.size(); ++i) {
        double ratio = std::abs(b.h_dir.v[i]) / std::abs(a.h_dir.v[i]);
        EXPECT_NEAR(ratio, expected, 1e-12);
    }
}

TEST(channel, link_generation_is_deterministic) {
    ScenarioConfig cfg = tiny_config();
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology topo = place_entities(cfg, rng);
    ChannelContext ctx(cfg, topo, 2);
    LinkChannels a = ctx.gen_link_channels(1, 0, 1);
    LinkChannels b = ctx.gen_link_channels(1, 0, 1);
    EXPECT_EQ(a.h_dir.v, b.h_dir.v);
    EXPECT_EQ(a.h_ue_ris.v, b.h_ue_ris.v);
    EXPECT_EQ(a.g_ris_ap.v, b.g_ris_ap.v);
}

TEST(channel, effective_channel_without_ris_is_direct) {
    Rng rng(29);
    LinkChannels link = random_link(rng, 4, 2, 3);
    for (auto& z : link.g_ris_ap.v) z = 0.0;
    RisConfiguration rc{0, std::vector<double>(4, 1.0)};
    CMat h = effective_channel(link, rc);
    EXPECT_EQ(h.v, link.h_dir.v);
}

TEST(channel, destructive_interference_identity) {
    LinkChannels link;
    link.h_dir = CMat(1, 1);
    link.h_dir.at(0, 0) = 1.0;
    link.h_ue_ris = CMat(1, 1);
    link.h_ue_ris.at(0, 0) = 1.0;
    link.g_ris_ap = CTensor3(1, 1, 1);
    link.g_ris_ap.at(0, 0, 0) = 1.0;
    RisConfiguration rc{0, {kPi}};
    CMat h = effective_channel(link, rc);
    EXPECT_LT(std::abs(h.at(0, 0)), 1e-12);
}

TEST(channel, effective_channel_matches_triple_loop_oracle) {
    Rng rng(31);
    for (int trial = 0; trial < 25; ++trial) {
        LinkChannels link = random_link(rng, 4, 2, 3);
        RisConfiguration rc;
        rc.theta.resize(4);
        for (auto& t : rc.theta) t = rng.uniform(0, 2 * kPi);
        CMat got = effective_channel(link, rc);
        CMat want = effective_channel_oracle(link, rc);
        for (size_t i = 0; i < got.v.size(); ++i)
            EXPECT_LT(std::abs(got.v[i] - want.v[i]), 1e-12);
    }
}

TEST(channel, effective_channel_rejects_dimension_mismatch) {
    Rng rng(37);
    LinkChannels link = random_link(rng, 4, 2, 3);
    RisConfiguration rc{0, std::vector<double>(5, 0.0)};  // wrong N
    EXPECT_THROW(effective_channel(link, rc), IntegrityError);
}

// Scaling the additive components (direct and UE-side channels) scales the
// composed channel linearly; the reflection matrix itself is untouched.
TEST(channel, composition_is_linear_in_the_channel_components) {
    Rng rng(41);
    LinkChannels link = random_link(rng, 5, 3, 2);
    RisConfiguration rc;
    rc.theta.resize(5);
    for (auto& t : rc.theta) t = rng.uniform(0, 2 * kPi);
    CMat base = effective_channel(link, rc);
    const double a = 2.75;
    LinkChannels scaled = link;
    for (auto& z : scaled.h_dir.v) z *= a;
    for (auto& z : scaled.h_ue_ris.v) z *= a;
    CMat got = effective_channel(scaled, rc);
    for (size_t i = 0; i < got.v.size(); ++i)
        EXPECT_LT(std::abs(got.v[i] - a * base.v[i]), 1e-12);
}

TEST(channel, ris_phases_have_unit_modulus_and_preserve_magnitudes) {
    ScenarioConfig cfg = load_config("");
    RisConfiguration rc = random_ris_phases(cfg, 3);
    ASSERT_EQ(static_cast<int>(rc.theta.size()), 200);
    Rng rng(43);
    for (double t : rc.theta) {
        EXPECT_LT(std::abs(std::abs(std::polar(1.0, t)) - 1.0), 1e-12);
        cplx h = rng.cnormal();
        EXPECT_NEAR(std::abs(std::polar(1.0, t) * h), std::abs(h), 1e-14);
    }
}

TEST(channel, ris_phase_streams_are_separated_and_deterministic) {
    ScenarioConfig cfg = load_config("");
    EXPECT_EQ(random_ris_phases(cfg, 3).theta, random_ris_phases(cfg, 3).theta);
    EXPECT_NE(random_ris_phases(cfg, 3).theta, random_ris_phases(cfg, 4).theta);
    EXPECT_THROW(random_ris_phases(cfg, cfg.n_phase_configs), IntegrityError);
}

TEST(channel, ris_phase_pool_is_circularly_uniform) {
    ScenarioConfig cfg = load_config("");
    cfg.n_phase_configs = 500;
    double sum = 0.0;
    cplx resultant = 0.0;
    int n = 0;
    for (int p = 0; p < 500; ++p) {
        RisConfiguration rc = random_ris_phases(cfg, p);
        for (double t : rc.theta) {
            sum += t;
            resultant += std::polar(1.0, t);
            ++n;
        }
    }
    EXPECT_NEAR(sum / n, kPi, 0.01 * kPi);
    // Rayleigh statistic z = n * |mean resultant|^2; reject uniformity at
    // 0.01 only when z > -ln(0.01).
    double z = std::norm(resultant / static_cast<double>(n)) * n;
    EXPECT_LT(z, -std::log(0.01));
}

TEST(channel, mean_direct_energy_matches_path_loss) {
    ScenarioConfig cfg = tiny_config();
    cfg.n_ue = 1;
    cfg.legit_fraction = 1.0;
    cfg.shadowing_los_db = 0.0;  // isolate the fading mean
    cfg.d_clutter_m = 1e9;
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology topo = place_entities(cfg, rng);
    topo.ap_pos[0] = {0, 10, 8};
    topo.ue_pos[0] = {30, 10, 8};
    cfg.n_phase_configs = 10000;

    PathLossModel model = PathLossModel::from_config(cfg);
    double pl_lin = std::pow(10.0, -path_loss_db(model, 30.0, cfg.carrier_ghz, true) / 10.0);
    double acc = 0.0;
    int count = 0;
    for (int p = 0; p < 10000; ++p) {
        ChannelContext ctx(cfg, topo, p);
        DirFactors f = ctx.dir_factors(0, 0);
        for (const auto& v : f.fr) {
            acc += cfg.ap_antennas * f.amp * f.amp * std::norm(v);
            ++count;
        }
    }
    double expected = cfg.ap_antennas * pl_lin;
    EXPECT_NEAR(acc / count, expected, 0.02 * expected);
}

// The factored SNR-table path must agree with the dense Eq.-style
// composition through effective_channel + sinr.
TEST(channel, snr_table_matches_dense_path) {
    ScenarioConfig cfg = tiny_config();
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology topo = place_entities(cfg, rng);
    ChannelContext ctx(cfg, topo, 1);
    RisConfiguration rc = random_ris_phases(cfg, 1);
    double noise = noise_power_dbm(cfg);
    SnrTable table = build_snr_table(ctx, rc, noise);

    for (int u = 0; u < topo.n_ue(); ++u)
        for (int a = 0; a < topo.n_ap(); ++a)
            for (int r = 0; r < topo.n_ris(); ++r) {
                LinkChannels link = ctx.gen_link_channels(u, a, r);
                CMat h = effective_channel(link, rc);
                SinrRecord rec = sinr(h, topo.ue_power_dbm[u], noise);
                double got = table.full_at(u, a, r);
                EXPECT_NEAR(got, rec.wideband, 1e-9 * rec.wideband);

                // reflected-path contribution alone
                LinkChannels no_dir = link;
                for (auto& z : no_dir.h_dir.v) z = 0.0;
                CMat hr = effective_channel(no_dir, rc);
                SinrRecord rec_r = sinr(hr, topo.ue_power_dbm[u], noise);
                EXPECT_NEAR(table.contrib_at(u, a, r), rec_r.wideband,
                            1e-9 * std::max(rec_r.wideband, 1e-30));
            }
}

TEST(channel, link_dump_has_declared_layout) {
    ScenarioConfig cfg = tiny_config();
    Rng rng = derive_stream(cfg, "topology").rng();
    Topology topo = place_entities(cfg, rng);
    ChannelContext ctx(cfg, topo, 0);
    LinkChannels link = ctx.gen_link_channels(0, 0, 0);
    auto path = std::filesystem::temp_directory_path() / "risfed_link_dump.bin";
    dump_link(link, path);
    std::string bytes = read_file(path);
    size_t n = cfg.ris_elements(), nt = cfg.ap_antennas, nf = cfg.n_rb;
    EXPECT_EQ(bytes.size(), 16 + 16 * (nt * nf + n * nf + n * nt * nf));
    EXPECT_EQ(bytes.substr(0, 4), "LNK1");
    std::filesystem::remove(path);
}
