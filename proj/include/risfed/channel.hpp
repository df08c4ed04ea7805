#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "risfed/core.hpp"
#include "risfed/io.hpp"
#include "risfed/rng.hpp"
#include "risfed/scenario.hpp"
#include "risfed/topology.hpp"

namespace risfed {

struct CMat {
    int rows = 0, cols = 0;
    std::vector<cplx> v;

    CMat() = default;
    CMat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c) {}
    cplx& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const cplx& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

struct CTensor3 {
    int d0 = 0, d1 = 0, d2 = 0;
    std::vector<cplx> v;

    CTensor3() = default;
    CTensor3(int a, int b, int c)
        : d0(a), d1(b), d2(c), v(static_cast<size_t>(a) * b * c) {}
    cplx& at(int i, int j, int k) {
        return v[(static_cast<size_t>(i) * d1 + j) * d2 + k];
    }
    const cplx& at(int i, int j, int k) const {
        return v[(static_cast<size_t>(i) * d1 + j) * d2 + k];
    }
};

// One phase vector shared by every RIS panel in the scenario; the
// reflection matrix is diag(e^{j theta_n}).
struct RisConfiguration {
    int phase_id = 0;
    std::vector<double> theta;
};

struct PathLossModel {
    double exponent_los = 2.0;
    double exponent_nlos = 3.2;
    double intercept_db = 32.4;
    double shadow_los_db = 3.0;
    double shadow_nlos_db = 7.0;
    double k_factor_db = 9.0;

    static PathLossModel from_config(const ScenarioConfig& c) {
        return {c.pl_exponent_los, c.pl_exponent_nlos, c.pl_intercept_db,
                c.shadowing_los_db, c.shadowing_nlos_db, c.rician_k_db};
    }
    double shadow_sigma(bool los) const { return los ? shadow_los_db : shadow_nlos_db; }
};

// Direct + reflected channel components for one (UE, AP, RIS) triple.
//   h_dir      : N_t x F
//   h_ue_ris   : N x F
//   g_ris_ap   : N x N_t x F
struct LinkChannels {
    CMat h_dir;
    CMat h_ue_ris;
    CTensor3 g_ris_ap;
    bool los_dir = false, los_ue_ris = false, los_ris_ap = false;
};

// Count of sub-reference-distance links clamped to 1 m.
inline std::atomic<uint64_t>& path_loss_clamp_count() {
    static std::atomic<uint64_t> count{0};
    return count;
}

// Close-in path loss: 32.4 + 20 log10(f_GHz) + 10 n log10(d) + shadowing.
inline double path_loss_db(const PathLossModel& model, double distance_m,
                           double carrier_ghz, bool los, double shadow_db = 0.0) {
    if (distance_m < 1.0) {
        path_loss_clamp_count().fetch_add(1, std::memory_order_relaxed);
        distance_m = 1.0;
    }
    double n = los ? model.exponent_los : model.exponent_nlos;
    return model.intercept_db + 20.0 * std::log10(carrier_ghz) +
           10.0 * n * std::log10(distance_m) + shadow_db;
}

// Line-of-sight probability with exponential clutter decay.
inline double los_probability(double distance_m, double d_clutter_m = 25.0) {
    if (distance_m <= 0.0) return 1.0;
    double p = std::exp(-distance_m / d_clutter_m);
    return std::min(1.0, std::max(0.0, p));
}

// Tap vector with exponential power-delay profile and unit mean total
// power. LoS taps are Rician: a deterministic dominant component of power
// K/(K+1) on the first tap plus scaled diffuse taps.
inline std::vector<cplx> small_scale_gain(Rng& rng, bool los, double k_factor_db,
                                          int n_taps, double pdp_decay = 1.0) {
    if (n_taps < 1) throw IntegrityError("small_scale_gain: n_taps must be >= 1");
    std::vector<double> power(n_taps);
    double total = 0.0;
    for (int k = 0; k < n_taps; ++k) {
        power[k] = std::exp(-k / pdp_decay);
        total += power[k];
    }
    for (auto& p : power) p /= total;

    std::vector<cplx> taps(n_taps);
    if (los) {
        double k_lin = db_to_linear(k_factor_db);
        double diffuse = 1.0 / (k_lin + 1.0);
        taps[0] = std::sqrt(k_lin / (k_lin + 1.0)) +
                  rng.cnormal() * std::sqrt(power[0] * diffuse);
        for (int k = 1; k < n_taps; ++k)
            taps[k] = rng.cnormal() * std::sqrt(power[k] * diffuse);
    } else {
        for (int k = 0; k < n_taps; ++k) taps[k] = rng.cnormal() * std::sqrt(power[k]);
    }
    return taps;
}

// DFT of the tap vector at the F resource-block centre frequencies; tap k
// sits on the delay grid k / (F * rb_bandwidth), so the per-bin angle
// reduces to -2 pi k f / F and mean |H|^2 over bins equals total tap power.
inline std::vector<cplx> frequency_response(const std::vector<cplx>& taps, int n_rb,
                                            double scs_khz) {
    (void)scs_khz;  // fixes the implied delay grid; cancels in the bin angles
    if (taps.empty()) throw IntegrityError("frequency_response: empty tap vector");
    std::vector<cplx> h(n_rb);
    for (int f = 0; f < n_rb; ++f) {
        cplx acc = 0.0;
        for (size_t k = 0; k < taps.size(); ++k)
            acc += taps[k] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k) * f /
                                                 n_rb);
        h[f] = acc;
    }
    return h;
}

// AP arrays are half-wavelength ULAs along the global x axis; the phase
// across elements depends on the x component of the unit direction.
inline std::vector<cplx> ula_response(int n, double ux) {
    std::vector<cplx> a(n);
    for (int t = 0; t < n; ++t) a[t] = std::polar(1.0, kPi * t * ux);
    return a;
}

// RIS panels are half-wavelength UPAs: rows stack vertically, columns run
// along the wall.
inline std::vector<cplx> upa_response(int rows, int cols, double u_e1, double u_e2) {
    std::vector<cplx> b(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            b[static_cast<size_t>(r) * cols + c] =
                std::polar(1.0, kPi * (c * u_e1 + r * u_e2));
    return b;
}

// Separable per-link representation: channel = amp * (spatial response) x
// (frequency response). Dense tensors are produced from these factors, and
// the SNR table exploits them directly.
struct DirFactors {
    double amp = 0.0;
    std::vector<cplx> a_ap;  // N_t
    std::vector<cplx> fr;    // F
    bool los = false;
};
struct UeRisFactors {
    double amp = 0.0;
    std::vector<cplx> b_ris;  // N
    std::vector<cplx> fr;
    bool los = false;
};
struct RisApFactors {
    double amp = 0.0;
    std::vector<cplx> b_ris;  // N, toward the AP
    std::vector<cplx> a_ap;   // N_t, toward the RIS
    std::vector<cplx> fr;
    bool los = false;
};

class ChannelContext {
  public:
    ChannelContext(const ScenarioConfig& cfg, const Topology& topo, int phase_id)
        : cfg_(cfg),
          topo_(topo),
          model_(PathLossModel::from_config(cfg)),
          phase_id_(phase_id) {}

    const ScenarioConfig& config() const { return cfg_; }
    const Topology& topology() const { return topo_; }
    const PathLossModel& model() const { return model_; }
    int phase_id() const { return phase_id_; }

    DirFactors dir_factors(int ue, int ap) const {
        Rng rng = link_rng("dir", ap, ue);
        const Vec3& a = topo_.ap_pos[ap];
        const Vec3& u = topo_.ue_pos[ue];
        double d = distance(a, u);
        DirFactors f;
        f.los = draw_los(rng, d);
        f.amp = amp_from_pl(rng, d, f.los);
        f.a_ap = ula_response(cfg_.ap_antennas, (u - a).unit().x);
        f.fr = draw_fr(rng, f.los);
        return f;
    }

    UeRisFactors ue_ris_factors(int ue, int ris) const {
        Rng rng = link_rng("uer", ris, ue);
        const RisNode& r = topo_.ris[ris];
        const Vec3& u = topo_.ue_pos[ue];
        double d = distance(r.pos, u);
        UeRisFactors f;
        f.los = draw_los(rng, d);
        f.amp = amp_from_pl(rng, d, f.los) *
                std::pow(10.0, cfg_.ris_element_gain_db / 20.0);
        Vec3 dir = (u - r.pos).unit();
        f.b_ris = ris_response(r, dir);
        f.fr = draw_fr(rng, f.los);
        return f;
    }

    RisApFactors ris_ap_factors(int ris, int ap) const {
        Rng rng = link_rng("rap", ris, ap);
        const RisNode& r = topo_.ris[ris];
        const Vec3& a = topo_.ap_pos[ap];
        double d = distance(r.pos, a);
        RisApFactors f;
        f.los = draw_los(rng, d);
        f.amp = amp_from_pl(rng, d, f.los);
        f.b_ris = ris_response(r, (a - r.pos).unit());
        f.a_ap = ula_response(cfg_.ap_antennas, (r.pos - a).unit().x);
        f.fr = draw_fr(rng, f.los);
        return f;
    }

    // Dense tensors for one triple; identical draws to the factor path.
    LinkChannels gen_link_channels(int ue, int ap, int ris) const {
        if (ue < 0 || ue >= topo_.n_ue() || ap < 0 || ap >= topo_.n_ap() || ris < 0 ||
            ris >= topo_.n_ris())
            throw IntegrityError("gen_link_channels: node index out of range");
        DirFactors dir = dir_factors(ue, ap);
        UeRisFactors uer = ue_ris_factors(ue, ris);
        RisApFactors rap = ris_ap_factors(ris, ap);

        int nt = cfg_.ap_antennas, nf = cfg_.n_rb, n = cfg_.ris_elements();
        LinkChannels link;
        link.los_dir = dir.los;
        link.los_ue_ris = uer.los;
        link.los_ris_ap = rap.los;
        link.h_dir = CMat(nt, nf);
        for (int t = 0; t < nt; ++t)
            for (int f = 0; f < nf; ++f)
                link.h_dir.at(t, f) = dir.amp * dir.a_ap[t] * dir.fr[f];
        link.h_ue_ris = CMat(n, nf);
        for (int e = 0; e < n; ++e)
            for (int f = 0; f < nf; ++f)
                link.h_ue_ris.at(e, f) = uer.amp * uer.b_ris[e] * uer.fr[f];
        link.g_ris_ap = CTensor3(n, nt, nf);
        for (int e = 0; e < n; ++e)
            for (int t = 0; t < nt; ++t)
                for (int f = 0; f < nf; ++f)
                    link.g_ris_ap.at(e, t, f) =
                        rap.amp * rap.b_ris[e] * rap.a_ap[t] * rap.fr[f];
        debug_check_finite(link.h_dir.v, "h_dir");
        return link;
    }

  private:
    const ScenarioConfig& cfg_;
    const Topology& topo_;
    PathLossModel model_;
    int phase_id_;

    // Per-link fading stream, keyed by phase so channel realisations are
    // i.i.d. across Monte Carlo runs. Draw order per link: LoS uniform,
    // shadowing normal, taps.
    Rng link_rng(const char* kind, int first, int second) const {
        std::string id = "fading:p" + std::to_string(phase_id_) + ":" + kind + ":" +
                         std::to_string(first) + ":" + std::to_string(second);
        return derive_stream(cfg_, id).rng();
    }
    bool draw_los(Rng& rng, double d) const {
        return rng.uniform() < los_probability(d, cfg_.d_clutter_m);
    }
    double amp_from_pl(Rng& rng, double d, bool los) const {
        double shadow = model_.shadow_sigma(los) * rng.normal();
        double pl = path_loss_db(model_, d, cfg_.carrier_ghz, los, shadow);
        return std::pow(10.0, -pl / 20.0);
    }
    std::vector<cplx> draw_fr(Rng& rng, bool los) const {
        auto taps =
            small_scale_gain(rng, los, model_.k_factor_db, cfg_.n_taps, cfg_.pdp_decay);
        return frequency_response(taps, cfg_.n_rb, cfg_.scs_khz);
    }
    std::vector<cplx> ris_response(const RisNode& r, const Vec3& dir) const {
        Vec3 e1{-r.normal.y, r.normal.x, 0.0};  // along the wall
        Vec3 e2{0.0, 0.0, 1.0};
        return upa_response(cfg_.ris_rows, cfg_.ris_cols, dir.dot(e1), dir.dot(e2));
    }
};

// Uplink composition: h_eff[:,f] = h_dir[:,f] + G^H diag(e^{j theta}) h_ue_ris[:,f].
inline CMat effective_channel(const LinkChannels& link, const RisConfiguration& ris_cfg) {
    int n = link.h_ue_ris.rows, nt = link.h_dir.rows, nf = link.h_dir.cols;
    if (static_cast<int>(ris_cfg.theta.size()) != n || link.g_ris_ap.d0 != n ||
        link.g_ris_ap.d1 != nt || link.g_ris_ap.d2 != nf || link.h_ue_ris.cols != nf)
        throw IntegrityError("effective_channel: dimension mismatch");

    CMat out = link.h_dir;
    for (int e = 0; e < n; ++e) {
        cplx phase = std::polar(1.0, ris_cfg.theta[e]);
        for (int t = 0; t < nt; ++t) {
            const cplx* g = &link.g_ris_ap.at(e, t, 0);
            const cplx* h = &link.h_ue_ris.at(e, 0);
            cplx* o = &out.at(t, 0);
            for (int f = 0; f < nf; ++f) o[f] += std::conj(g[f]) * (phase * h[f]);
        }
    }
    return out;
}

// Independent uniform phases in [0, 2pi) from the per-phase stream.
inline RisConfiguration random_ris_phases(const ScenarioConfig& cfg, int phase_id) {
    if (phase_id < 0 || phase_id >= cfg.n_phase_configs)
        throw IntegrityError("phase_id out of range");
    Rng rng = derive_stream(cfg, "channel:phase_" + std::to_string(phase_id)).rng();
    RisConfiguration rc;
    rc.phase_id = phase_id;
    rc.theta.resize(cfg.ris_elements());
    for (auto& t : rc.theta) t = rng.uniform(0.0, 2.0 * kPi);
    return rc;
}

namespace detail {

// Wideband aggregate of per-bin linear SINRs.
inline double wideband_aggregate(const std::vector<double>& bins, bool geometric) {
    if (bins.empty()) return 0.0;
    if (!geometric) {
        double s = 0.0;
        for (double b : bins) s += b;
        return s / bins.size();
    }
    double s = 0.0;
    for (double b : bins) s += std::log(std::max(b, 1e-300));
    return std::exp(s / bins.size());
}

}  // namespace detail

// Full (UE x AP x RIS) wideband SNR table. Uses the separable factor form,
// which matches the dense effective_channel path to floating-point noise:
//   h_eff[t,f] = alpha(f) a_d[t] + beta(f) conj(a_g[t])
// so ||h_eff[:,f]||^2 needs only N_t, |alpha|, |beta| and one inner product.
inline SnrTable build_snr_table(const ChannelContext& ctx, const RisConfiguration& ris_cfg,
                                double noise_dbm) {
    const ScenarioConfig& cfg = ctx.config();
    const Topology& topo = ctx.topology();
    int n_ue = topo.n_ue(), n_ap = topo.n_ap(), n_ris = topo.n_ris();
    int nt = cfg.ap_antennas, nf = cfg.n_rb, n = cfg.ris_elements();
    if (static_cast<int>(ris_cfg.theta.size()) != n)
        throw IntegrityError("build_snr_table: theta length mismatch");
    bool geometric = cfg.wideband_mode == "geometric";
    double noise_mw = dbm_to_mw(noise_dbm);

    std::vector<cplx> phase(n);
    for (int e = 0; e < n; ++e) phase[e] = std::polar(1.0, ris_cfg.theta[e]);

    std::vector<DirFactors> dir(static_cast<size_t>(n_ue) * n_ap);
    for (int u = 0; u < n_ue; ++u)
        for (int a = 0; a < n_ap; ++a) dir[u * n_ap + a] = ctx.dir_factors(u, a);
    std::vector<UeRisFactors> uer(static_cast<size_t>(n_ue) * n_ris);
    for (int u = 0; u < n_ue; ++u)
        for (int r = 0; r < n_ris; ++r) uer[u * n_ris + r] = ctx.ue_ris_factors(u, r);
    std::vector<RisApFactors> rap(static_cast<size_t>(n_ris) * n_ap);
    for (int r = 0; r < n_ris; ++r)
        for (int a = 0; a < n_ap; ++a) rap[r * n_ap + a] = ctx.ris_ap_factors(r, a);

    SnrTable table;
    table.n_ue = n_ue;
    table.n_ap = n_ap;
    table.n_ris = n_ris;
    table.full.resize(static_cast<size_t>(n_ue) * n_ap * n_ris);
    table.contrib.resize(table.full.size());

    std::vector<double> bins_full(nf), bins_contrib(nf);
    for (int u = 0; u < n_ue; ++u) {
        double p_mw = dbm_to_mw(topo.ue_power_dbm[u]);
        for (int a = 0; a < n_ap; ++a) {
            const DirFactors& d = dir[u * n_ap + a];
            for (int r = 0; r < n_ris; ++r) {
                const UeRisFactors& h = uer[u * n_ris + r];
                const RisApFactors& g = rap[r * n_ap + a];
                // S = sum_n conj(b_g[n]) e^{j theta_n} b_h[n]
                cplx s = 0.0;
                for (int e = 0; e < n; ++e)
                    s += std::conj(g.b_ris[e]) * phase[e] * h.b_ris[e];
                // D = sum_t a_d[t] a_g[t]  (reflected AP response is conj(a_g))
                cplx dgap = 0.0;
                for (int t = 0; t < nt; ++t) dgap += d.a_ap[t] * g.a_ap[t];
                cplx beta_base = g.amp * h.amp * s;
                for (int f = 0; f < nf; ++f) {
                    cplx alpha = d.amp * d.fr[f];
                    cplx beta = beta_base * std::conj(g.fr[f]) * h.fr[f];
                    double p_dir = std::norm(alpha) * nt;
                    double p_ris = std::norm(beta) * nt;
                    double cross = 2.0 * (alpha * std::conj(beta) * dgap).real();
                    bins_full[f] = p_mw * (p_dir + p_ris + cross) / noise_mw;
                    bins_contrib[f] = p_mw * p_ris / noise_mw;
                }
                table.full_at(u, a, r) = detail::wideband_aggregate(bins_full, geometric);
                table.contrib_at(u, a, r) =
                    detail::wideband_aggregate(bins_contrib, geometric);
            }
        }
    }
    return table;
}

// Flat binary debug dump of one link: 16-byte header (magic + dims), then
// h_dir, h_ue_ris, g_ris_ap as little-endian complex doubles.
inline void dump_link(const LinkChannels& link, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("LNK1");
    w.u32(static_cast<uint32_t>(link.h_ue_ris.rows));
    w.u32(static_cast<uint32_t>(link.h_dir.rows));
    w.u32(static_cast<uint32_t>(link.h_dir.cols));
    auto dump = [&](const std::vector<cplx>& v) {
        for (const cplx& z : v) {
            w.f64(z.real());
            w.f64(z.imag());
        }
    };
    dump(link.h_dir.v);
    dump(link.h_ue_ris.v);
    dump(link.g_ris_ap.v);
    atomic_write(path, w.bytes);
}

}  // namespace risfed
