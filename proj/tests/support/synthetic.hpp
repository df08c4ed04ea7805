#pragma once

// Test-only helpers: a linearly separable synthetic dataset whose label is
// determined by the power metadata plane (plane 3), plus a round-robin
// sharder. Kept independent of the production dataset pipeline.

#include <vector>

#include "risfed/channel.hpp"
#include "risfed/dataset.hpp"
#include "risfed/rng.hpp"

namespace risfed::testsupport {

inline Dataset synthetic_separable(int n, int n_ant, int n_rb, uint64_t seed) {
    Dataset ds;
    ds.n_ant = n_ant;
    ds.n_rb = n_rb;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        CsiSample s;
        s.label = static_cast<uint8_t>(i % 2);
        // synthetic CSI content: normalised planes of a random channel
        CMat h(n_ant, n_rb);
        for (auto& z : h.v) z = rng.cnormal();
        std::vector<float> csi = build_csi_image(h);
        s.tensor.resize(ds.tensor_values());
        std::copy(csi.begin(), csi.end(), s.tensor.begin());
        // plane 3 carries the separating power value with a 0.3 margin
        double u = s.label ? rng.uniform(0.65, 0.95) : rng.uniform(0.05, 0.35);
        std::fill_n(s.tensor.begin() + 3 * ds.plane_values(), ds.plane_values(),
                    static_cast<float>(u));
        for (int c = 4; c < kCsiChannels; ++c)
            std::fill_n(s.tensor.begin() + c * ds.plane_values(), ds.plane_values(),
                        static_cast<float>(rng.uniform(0.0, 1.0)));
        s.meta.ue = static_cast<uint32_t>(i);
        s.meta.pos[0] = static_cast<float>(rng.uniform(0.0, 100.0));
        s.meta.pos[1] = static_cast<float>(rng.uniform(0.0, 50.0));
        s.meta.pos[2] = 1.5f;
        s.meta.p_tx_dbm = static_cast<float>(23.0 + 7.0 * u);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

inline std::vector<std::vector<int>> round_robin_shards(int n_samples, int k) {
    std::vector<std::vector<int>> shards(k);
    for (int i = 0; i < n_samples; ++i) shards[i % k].push_back(i);
    return shards;
}

}  // namespace risfed::testsupport
