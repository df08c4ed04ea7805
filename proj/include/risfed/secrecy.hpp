#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "risfed/channel.hpp"
#include "risfed/core.hpp"
#include "risfed/topology.hpp"

namespace risfed {

struct SinrRecord {
    NodeId ue;
    NodeId ap;
    std::vector<double> per_bin;  // linear
    double wideband = 0.0;        // linear
};

// Maximal-ratio combining at the AP; uplink sounding is orthogonally
// scheduled, so no inter-user interference term appears.
inline SinrRecord sinr(const CMat& h_eff, double p_tx_dbm, double noise_dbm,
                       bool geometric = false) {
    debug_check_finite(h_eff.v, "sinr:h_eff");
    double p_mw = dbm_to_mw(p_tx_dbm);
    double noise_mw = dbm_to_mw(noise_dbm);
    SinrRecord rec;
    rec.per_bin.resize(h_eff.cols);
    for (int f = 0; f < h_eff.cols; ++f) {
        double g = 0.0;
        for (int t = 0; t < h_eff.rows; ++t) g += std::norm(h_eff.at(t, f));
        rec.per_bin[f] = p_mw * g / noise_mw;
    }
    rec.wideband = detail::wideband_aggregate(rec.per_bin, geometric);
    return rec;
}

// SR = [log2(1 + SINR_l) - log2(1 + SINR_e)]^+
inline double secrecy_rate(double sinr_l, double sinr_e) {
    double sr = std::log2(1.0 + sinr_l) - std::log2(1.0 + sinr_e);
    return sr > 0.0 ? sr : 0.0;
}

struct UserSinr {
    int ue = 0;
    int ap = 0;
    double sinr_lin = 0.0;
};

struct PairedRate {
    int ue = 0;
    int ap = 0;
    int paired_eve = -1;  // -1 when no adversary was in range
    double sinr_l = 0.0;
    double sinr_e = 0.0;
    double sr = 0.0;
};

// For each legitimate user, the adversary with the highest SINR toward the
// user's serving AP bounds the secrecy rate (worst case). With an empty
// adversary set the rate equals the legitimate capacity. A user never
// pairs with itself.
inline std::vector<PairedRate> worst_case_pairing(
    const std::vector<UserSinr>& legit, const std::vector<int>& adversary_ids,
    const std::function<double(int ue, int ap)>& sinr_at) {
    std::vector<PairedRate> out;
    out.reserve(legit.size());
    for (const auto& l : legit) {
        PairedRate p;
        p.ue = l.ue;
        p.ap = l.ap;
        p.sinr_l = l.sinr_lin;
        for (int e : adversary_ids) {
            if (e == l.ue) continue;
            double se = sinr_at(e, l.ap);
            if (p.paired_eve < 0 || se > p.sinr_e) {
                p.paired_eve = e;
                p.sinr_e = se;
            }
        }
        p.sr = p.paired_eve < 0 ? std::log2(1.0 + p.sinr_l)
                                : secrecy_rate(p.sinr_l, p.sinr_e);
        out.push_back(p);
    }
    return out;
}

// ASR = (1 / N_AP) * sum over APs and users of SR, exactly as printed; the
// optional flag additionally divides by the user count.
inline double average_secrecy_rate(const std::vector<std::vector<double>>& sr_by_ap,
                                   bool normalize_by_users = false) {
    if (sr_by_ap.empty()) throw IntegrityError("average_secrecy_rate: no AP rows");
    double total = 0.0;
    size_t users = 0;
    for (const auto& row : sr_by_ap) {
        users += row.size();
        for (double sr : row) total += sr;
    }
    double asr = total / static_cast<double>(sr_by_ap.size());
    if (normalize_by_users && users > 0) asr /= static_cast<double>(users);
    return asr;
}

struct SecrecyReport {
    std::vector<PairedRate> rates;  // one row per legitimate user
    double asr = 0.0;
};

// Pipeline composition over a computed SNR table. The adversary mask may
// come from true labels or from classifier predictions; the legitimate
// side always uses the true labels.
inline SecrecyReport evaluate_secrecy(const Topology& topo, const Association& assoc,
                                      const SnrTable& table,
                                      const std::vector<uint8_t>& adversary_mask,
                                      bool normalize_by_users = false) {
    if (static_cast<int>(adversary_mask.size()) != topo.n_ue())
        throw IntegrityError("adversary mask size mismatch");
    std::vector<UserSinr> legit;
    std::vector<int> adversaries;
    for (int u = 0; u < topo.n_ue(); ++u) {
        if (!topo.ue_is_eve[u])
            legit.push_back({u, assoc.serving_ap[u], table.best(u, assoc.serving_ap[u])});
        if (adversary_mask[u]) adversaries.push_back(u);
    }
    SecrecyReport report;
    report.rates = worst_case_pairing(
        legit, adversaries, [&](int ue, int ap) { return table.best(ue, ap); });
    std::vector<std::vector<double>> sr_by_ap(topo.n_ap());
    for (const auto& r : report.rates) sr_by_ap[r.ap].push_back(r.sr);
    report.asr = average_secrecy_rate(sr_by_ap, normalize_by_users);
    return report;
}

inline void write_secrecy_csv(const SecrecyReport& report, int phase_id,
                              std::ostream& os) {
    os << "phase_id,ue,serving_ap,paired_eve,sinr_l_db,sinr_e_db,sr_bpshz\n";
    char buf[160];
    for (const auto& r : report.rates) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.6f,%.6f,%.6f\n", phase_id, r.ue,
                      r.ap, r.paired_eve, linear_to_db(r.sinr_l),
                      r.paired_eve < 0 ? 0.0 : linear_to_db(r.sinr_e), r.sr);
        os << buf;
    }
}

}  // namespace risfed
