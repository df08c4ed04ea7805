#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "risfed/core.hpp"
#include "risfed/dataset.hpp"
#include "risfed/io.hpp"
#include "risfed/rng.hpp"

namespace risfed {

struct Tensor {
    std::vector<int> shape;  // up to 4 dims
    std::vector<double> v;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape = std::move(shape);
        size_t n = 1;
        for (int d : t.shape) n *= static_cast<size_t>(d);
        t.v.assign(n, 0.0);
        return t;
    }
    int64_t size() const { return static_cast<int64_t>(v.size()); }
};

// Named parameter tensors; map order doubles as the canonical key order for
// initialisation, aggregation and the checkpoint codec.
using ModelParams = std::map<std::string, Tensor>;

// Three 3x3 convolution blocks with an auxiliary logistic head after the
// second block and a two-layer logistic head after the third. Input dims
// are free (toy tests use small images); channel widths are fixed.
struct Arch {
    int in_c = kCsiChannels, in_h = 32, in_w = 60;
    int c1 = 16, c2 = 32, c3 = 64;
    int fc_hidden = 32;

    int h1() const { return in_h / 2; }
    int w1() const { return in_w / 2; }
    int h2() const { return h1() / 2; }
    int w2() const { return w1() / 2; }
    int h3() const { return h2() / 2; }
    int w3() const { return w2() / 2; }

    bool operator==(const Arch&) const = default;
};

inline int64_t param_count(const Arch& a) {
    int64_t conv1 = int64_t{a.c1} * a.in_c * 9 + a.c1;
    int64_t conv2 = int64_t{a.c2} * a.c1 * 9 + a.c2;
    int64_t conv3 = int64_t{a.c3} * a.c2 * 9 + a.c3;
    int64_t aux = a.c2 + 1;
    int64_t fc1 = int64_t{a.fc_hidden} * a.c3 + a.fc_hidden;
    int64_t fc2 = a.fc_hidden + 1;
    return conv1 + conv2 + conv3 + aux + fc1 + fc2;
}

// Pinned at design time from the layer formulas for the default widths.
constexpr int64_t kDefaultParamCount = 26594;

// Multiply-accumulate totals; pooling, ReLU and global averages contribute
// no multiplies. Early exit skips conv3 and the main head.
inline int64_t count_macs(const Arch& a, bool exited) {
    int64_t conv1 = int64_t{a.in_h} * a.in_w * 9 * a.in_c * a.c1;
    int64_t conv2 = int64_t{a.h1()} * a.w1() * 9 * a.c1 * a.c2;
    int64_t aux = a.c2;
    if (exited) return conv1 + conv2 + aux;
    int64_t conv3 = int64_t{a.h2()} * a.w2() * 9 * a.c2 * a.c3;
    int64_t fc = int64_t{a.fc_hidden} * a.c3 + a.fc_hidden;
    return conv1 + conv2 + conv3 + fc;
}

inline ModelParams init_params(const Arch& a, Rng& rng) {
    if (a == Arch{} && param_count(a) != kDefaultParamCount)
        throw IntegrityError("default parameter count drifted from its pin");
    ModelParams p;
    p["conv1.w"] = Tensor::zeros({a.c1, a.in_c, 3, 3});
    p["conv1.b"] = Tensor::zeros({a.c1});
    p["conv2.w"] = Tensor::zeros({a.c2, a.c1, 3, 3});
    p["conv2.b"] = Tensor::zeros({a.c2});
    p["conv3.w"] = Tensor::zeros({a.c3, a.c2, 3, 3});
    p["conv3.b"] = Tensor::zeros({a.c3});
    p["aux.w"] = Tensor::zeros({1, a.c2});
    p["aux.b"] = Tensor::zeros({1});
    p["fc1.w"] = Tensor::zeros({a.fc_hidden, a.c3});
    p["fc1.b"] = Tensor::zeros({a.fc_hidden});
    p["fc2.w"] = Tensor::zeros({1, a.fc_hidden});
    p["fc2.b"] = Tensor::zeros({1});
    // He scaling for ReLU layers, 1/fan_in for the logistic heads; biases
    // stay zero. Draw order follows the (sorted) key order.
    for (auto& [key, t] : p) {
        if (key.ends_with(".b")) continue;
        int fan_in = 1;
        for (size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
        double sigma = (key == "aux.w" || key == "fc2.w") ? std::sqrt(1.0 / fan_in)
                                                          : std::sqrt(2.0 / fan_in);
        for (auto& x : t.v) x = sigma * rng.normal();
    }
    return p;
}

inline int64_t total_values(const ModelParams& p) {
    int64_t n = 0;
    for (const auto& [k, t] : p) n += t.size();
    return n;
}

namespace nn_detail {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// out[oc] = bias[oc] + sum_ic k[oc][ic] * in[ic], same padding, 3x3.
inline void conv3x3_forward(const double* in, int ci, int h, int w, const double* k,
                            const double* bias, int co, double* out) {
    for (int oc = 0; oc < co; ++oc) {
        double* plane = out + static_cast<size_t>(oc) * h * w;
        std::fill(plane, plane + static_cast<size_t>(h) * w, bias[oc]);
        for (int ic = 0; ic < ci; ++ic) {
            const double* src = in + static_cast<size_t>(ic) * h * w;
            const double* kk = k + ((static_cast<size_t>(oc) * ci + ic) * 9);
            for (int kh = 0; kh < 3; ++kh) {
                int dh = kh - 1;
                int oh_lo = std::max(0, -dh), oh_hi = h - std::max(0, dh);
                for (int kw = 0; kw < 3; ++kw) {
                    int dw = kw - 1;
                    int ow_lo = std::max(0, -dw), ow_hi = w - std::max(0, dw);
                    double kv = kk[kh * 3 + kw];
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        double* orow = plane + static_cast<size_t>(oh) * w;
                        const double* irow = src + static_cast<size_t>(oh + dh) * w + dw;
                        for (int ow = ow_lo; ow < ow_hi; ++ow)
                            orow[ow] += kv * irow[ow];
                    }
                }
            }
        }
    }
}

// din[ic] += k^T * dout; din must be pre-zeroed.
inline void conv3x3_backward_data(const double* dout, int co, int h, int w,
                                  const double* k, int ci, double* din) {
    for (int oc = 0; oc < co; ++oc) {
        const double* dplane = dout + static_cast<size_t>(oc) * h * w;
        for (int ic = 0; ic < ci; ++ic) {
            double* dst = din + static_cast<size_t>(ic) * h * w;
            const double* kk = k + ((static_cast<size_t>(oc) * ci + ic) * 9);
            for (int kh = 0; kh < 3; ++kh) {
                int dh = kh - 1;
                int oh_lo = std::max(0, -dh), oh_hi = h - std::max(0, dh);
                for (int kw = 0; kw < 3; ++kw) {
                    int dw = kw - 1;
                    int ow_lo = std::max(0, -dw), ow_hi = w - std::max(0, dw);
                    double kv = kk[kh * 3 + kw];
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        const double* drow = dplane + static_cast<size_t>(oh) * w;
                        double* irow = dst + static_cast<size_t>(oh + dh) * w + dw;
                        for (int ow = ow_lo; ow < ow_hi; ++ow)
                            irow[ow] += kv * drow[ow];
                    }
                }
            }
        }
    }
}

inline void conv3x3_backward_params(const double* in, int ci, int h, int w,
                                    const double* dout, int co, double* dk,
                                    double* db) {
    for (int oc = 0; oc < co; ++oc) {
        const double* dplane = dout + static_cast<size_t>(oc) * h * w;
        double acc = 0.0;
        for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) acc += dplane[i];
        db[oc] += acc;
        for (int ic = 0; ic < ci; ++ic) {
            const double* src = in + static_cast<size_t>(ic) * h * w;
            double* kk = dk + ((static_cast<size_t>(oc) * ci + ic) * 9);
            for (int kh = 0; kh < 3; ++kh) {
                int dh = kh - 1;
                int oh_lo = std::max(0, -dh), oh_hi = h - std::max(0, dh);
                for (int kw = 0; kw < 3; ++kw) {
                    int dw = kw - 1;
                    int ow_lo = std::max(0, -dw), ow_hi = w - std::max(0, dw);
                    double acc_k = 0.0;
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        const double* drow = dplane + static_cast<size_t>(oh) * w;
                        const double* irow = src + static_cast<size_t>(oh + dh) * w + dw;
                        for (int ow = ow_lo; ow < ow_hi; ++ow)
                            acc_k += drow[ow] * irow[ow];
                    }
                    kk[kh * 3 + kw] += acc_k;
                }
            }
        }
    }
}

inline void relu_inplace(double* v, size_t n) {
    for (size_t i = 0; i < n; ++i) v[i] = v[i] > 0.0 ? v[i] : 0.0;
}

// 2x2 max pooling with stride 2 (floor); records the winning input offset
// per output cell.
inline void maxpool2(const double* in, int c, int h, int w, double* out, int32_t* idx) {
    int h2 = h / 2, w2 = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const double* src = in + static_cast<size_t>(ch) * h * w;
        double* dst = out + static_cast<size_t>(ch) * h2 * w2;
        int32_t* id = idx + static_cast<size_t>(ch) * h2 * w2;
        for (int oh = 0; oh < h2; ++oh)
            for (int ow = 0; ow < w2; ++ow) {
                int base = (oh * 2) * w + ow * 2;
                int best = base;
                double bv = src[base];
                for (int dh = 0; dh < 2; ++dh)
                    for (int dw = 0; dw < 2; ++dw) {
                        int off = base + dh * w + dw;
                        if (src[off] > bv) {
                            bv = src[off];
                            best = off;
                        }
                    }
                dst[oh * w2 + ow] = bv;
                id[oh * w2 + ow] = best;
            }
    }
}

struct Act {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    void resize(int n_, int c_, int h_, int w_) {
        n = n_;
        c = c_;
        h = h_;
        w = w_;
        v.assign(static_cast<size_t>(n) * c * h * w, 0.0);
    }
    double* sample(int i) { return v.data() + static_cast<size_t>(i) * c * h * w; }
    const double* sample(int i) const {
        return v.data() + static_cast<size_t>(i) * c * h * w;
    }
    size_t per_sample() const { return static_cast<size_t>(c) * h * w; }
};

}  // namespace nn_detail

struct ForwardCache {
    int n = 0;
    bool has_main = false;
    nn_detail::Act x, a1, p1, a2, p2, a3, p3;
    std::vector<int32_t> idx1, idx2, idx3;
    std::vector<double> gap_aux, p_aux;              // [n][c2], [n]
    std::vector<double> gap_main, fc1_a, p_final;    // [n][c3], [n][fc], [n]
};

namespace nn_detail {

inline const Tensor& at(const ModelParams& p, const char* key) {
    auto it = p.find(key);
    if (it == p.end()) throw IntegrityError(std::string("missing parameter ") + key);
    return it->second;
}

// Parameter tensors must match the architecture before any raw-pointer
// layer code touches them.
inline void validate_shapes(const ModelParams& p, const Arch& a) {
    auto expect = [&](const char* key, std::vector<int> shape) {
        if (at(p, key).shape != shape)
            throw IntegrityError(std::string("parameter ") + key +
                                 " does not match the architecture");
    };
    expect("conv1.w", {a.c1, a.in_c, 3, 3});
    expect("conv1.b", {a.c1});
    expect("conv2.w", {a.c2, a.c1, 3, 3});
    expect("conv2.b", {a.c2});
    expect("conv3.w", {a.c3, a.c2, 3, 3});
    expect("conv3.b", {a.c3});
    expect("aux.w", {1, a.c2});
    expect("aux.b", {1});
    expect("fc1.w", {a.fc_hidden, a.c3});
    expect("fc1.b", {a.fc_hidden});
    expect("fc2.w", {1, a.fc_hidden});
    expect("fc2.b", {1});
}

// Through conv1, conv2 and the auxiliary head.
inline void forward_stage_a(const ModelParams& p, const Arch& a, ForwardCache& fc) {
    int n = fc.n;
    fc.a1.resize(n, a.c1, a.in_h, a.in_w);
    fc.p1.resize(n, a.c1, a.h1(), a.w1());
    fc.idx1.assign(fc.p1.v.size(), 0);
    fc.a2.resize(n, a.c2, a.h1(), a.w1());
    fc.p2.resize(n, a.c2, a.h2(), a.w2());
    fc.idx2.assign(fc.p2.v.size(), 0);
    fc.gap_aux.assign(static_cast<size_t>(n) * a.c2, 0.0);
    fc.p_aux.assign(n, 0.0);

    const Tensor& w1 = at(p, "conv1.w");
    const Tensor& b1 = at(p, "conv1.b");
    const Tensor& w2 = at(p, "conv2.w");
    const Tensor& b2 = at(p, "conv2.b");
    const Tensor& aw = at(p, "aux.w");
    const Tensor& ab = at(p, "aux.b");
    for (int i = 0; i < n; ++i) {
        conv3x3_forward(fc.x.sample(i), a.in_c, a.in_h, a.in_w, w1.v.data(), b1.v.data(),
                        a.c1, fc.a1.sample(i));
        relu_inplace(fc.a1.sample(i), fc.a1.per_sample());
        maxpool2(fc.a1.sample(i), a.c1, a.in_h, a.in_w, fc.p1.sample(i),
                 fc.idx1.data() + static_cast<size_t>(i) * fc.p1.per_sample());
        conv3x3_forward(fc.p1.sample(i), a.c1, a.h1(), a.w1(), w2.v.data(), b2.v.data(),
                        a.c2, fc.a2.sample(i));
        relu_inplace(fc.a2.sample(i), fc.a2.per_sample());
        maxpool2(fc.a2.sample(i), a.c2, a.h1(), a.w1(), fc.p2.sample(i),
                 fc.idx2.data() + static_cast<size_t>(i) * fc.p2.per_sample());

        double* gap = fc.gap_aux.data() + static_cast<size_t>(i) * a.c2;
        const double* p2s = fc.p2.sample(i);
        double inv = 1.0 / (a.h2() * a.w2());
        for (int c = 0; c < a.c2; ++c) {
            double s = 0.0;
            for (int j = 0; j < a.h2() * a.w2(); ++j)
                s += p2s[static_cast<size_t>(c) * a.h2() * a.w2() + j];
            gap[c] = s * inv;
        }
        double z = ab.v[0];
        for (int c = 0; c < a.c2; ++c) z += aw.v[c] * gap[c];
        fc.p_aux[i] = sigmoid(z);
    }
}

// conv3 and the main head, from the cached p2 activations.
inline void forward_stage_b(const ModelParams& p, const Arch& a, ForwardCache& fc) {
    int n = fc.n;
    fc.a3.resize(n, a.c3, a.h2(), a.w2());
    fc.p3.resize(n, a.c3, a.h3(), a.w3());
    fc.idx3.assign(fc.p3.v.size(), 0);
    fc.gap_main.assign(static_cast<size_t>(n) * a.c3, 0.0);
    fc.fc1_a.assign(static_cast<size_t>(n) * a.fc_hidden, 0.0);
    fc.p_final.assign(n, 0.0);

    const Tensor& w3 = at(p, "conv3.w");
    const Tensor& b3 = at(p, "conv3.b");
    const Tensor& f1w = at(p, "fc1.w");
    const Tensor& f1b = at(p, "fc1.b");
    const Tensor& f2w = at(p, "fc2.w");
    const Tensor& f2b = at(p, "fc2.b");
    for (int i = 0; i < n; ++i) {
        conv3x3_forward(fc.p2.sample(i), a.c2, a.h2(), a.w2(), w3.v.data(), b3.v.data(),
                        a.c3, fc.a3.sample(i));
        relu_inplace(fc.a3.sample(i), fc.a3.per_sample());
        maxpool2(fc.a3.sample(i), a.c3, a.h2(), a.w2(), fc.p3.sample(i),
                 fc.idx3.data() + static_cast<size_t>(i) * fc.p3.per_sample());

        double* gap = fc.gap_main.data() + static_cast<size_t>(i) * a.c3;
        const double* p3s = fc.p3.sample(i);
        double inv = 1.0 / (a.h3() * a.w3());
        for (int c = 0; c < a.c3; ++c) {
            double s = 0.0;
            for (int j = 0; j < a.h3() * a.w3(); ++j)
                s += p3s[static_cast<size_t>(c) * a.h3() * a.w3() + j];
            gap[c] = s * inv;
        }
        double* h1 = fc.fc1_a.data() + static_cast<size_t>(i) * a.fc_hidden;
        for (int o = 0; o < a.fc_hidden; ++o) {
            double z = f1b.v[o];
            for (int c = 0; c < a.c3; ++c) z += f1w.v[static_cast<size_t>(o) * a.c3 + c] * gap[c];
            h1[o] = z > 0.0 ? z : 0.0;
        }
        double z = f2b.v[0];
        for (int o = 0; o < a.fc_hidden; ++o) z += f2w.v[o] * h1[o];
        fc.p_final[i] = sigmoid(z);
    }
    fc.has_main = true;
}

}  // namespace nn_detail

// Batch forward; x holds n samples of shape in_c x in_h x in_w.
inline ForwardCache forward_pass(const ModelParams& p, const Arch& a,
                                 std::vector<double> x, int n, bool run_main = true) {
    if (static_cast<size_t>(n) * a.in_c * a.in_h * a.in_w != x.size())
        throw IntegrityError("forward: batch shape mismatch");
    if (a.h3() < 1 || a.w3() < 1)
        throw IntegrityError("forward: input too small for three pooling stages");
    nn_detail::validate_shapes(p, a);
    ForwardCache fc;
    fc.n = n;
    fc.x.n = n;
    fc.x.c = a.in_c;
    fc.x.h = a.in_h;
    fc.x.w = a.in_w;
    fc.x.v = std::move(x);
    nn_detail::forward_stage_a(p, a, fc);
    if (run_main) nn_detail::forward_stage_b(p, a, fc);
    debug_check_finite(fc.p_aux, "p_aux");
    return fc;
}

// (p_aux, p_final) probability pair for a batch.
inline std::pair<std::vector<double>, std::vector<double>> forward(
    const ModelParams& p, const Arch& a, const std::vector<double>& x, int n) {
    ForwardCache fc = forward_pass(p, a, x, n);
    return {fc.p_aux, fc.p_final};
}

constexpr double kProbClip = 1e-7;

// Total (summed over the batch) binary cross-entropy of the main head plus
// lambda times the auxiliary head's.
inline double loss(const std::vector<double>& p_aux, const std::vector<double>& p_final,
                   const std::vector<uint8_t>& labels, double lambda_aux) {
    if (p_aux.size() != labels.size() || p_final.size() != labels.size())
        throw IntegrityError("loss: size mismatch");
    auto bce = [](double p, uint8_t y) {
        p = std::clamp(p, kProbClip, 1.0 - kProbClip);
        return y ? -std::log(p) : -std::log(1.0 - p);
    };
    double total = 0.0;
    for (size_t i = 0; i < labels.size(); ++i)
        total += bce(p_final[i], labels[i]) + lambda_aux * bce(p_aux[i], labels[i]);
    return total;
}

// Gradient of the summed loss for every parameter key (same shapes).
inline ModelParams backward(const ModelParams& p, const Arch& a, const ForwardCache& fc,
                            const std::vector<uint8_t>& labels, double lambda_aux) {
    using namespace nn_detail;
    if (!fc.has_main) throw IntegrityError("backward: main head was not evaluated");
    if (static_cast<int>(labels.size()) != fc.n)
        throw IntegrityError("backward: label count mismatch");

    ModelParams g;
    for (const auto& [key, t] : p) {
        g[key] = Tensor::zeros(t.shape);
    }
    const Tensor& w2t = at(p, "conv2.w");
    const Tensor& w3t = at(p, "conv3.w");
    const Tensor& awt = at(p, "aux.w");
    const Tensor& f1wt = at(p, "fc1.w");
    const Tensor& f2wt = at(p, "fc2.w");

    std::vector<double> dp2(fc.p2.per_sample());
    std::vector<double> da3(fc.a3.per_sample());
    std::vector<double> da2(fc.a2.per_sample());
    std::vector<double> da1(fc.a1.per_sample());
    std::vector<double> dp1(fc.p1.per_sample());

    for (int i = 0; i < fc.n; ++i) {
        double y = labels[i];
        // main head: d(total)/d(z_fc2) = p - y, zero if the clip is active
        double pf = fc.p_final[i];
        double dz2 = (pf < kProbClip || pf > 1.0 - kProbClip) ? 0.0 : pf - y;
        const double* h1 = fc.fc1_a.data() + static_cast<size_t>(i) * a.fc_hidden;
        double* gf2w = g["fc2.w"].v.data();
        for (int o = 0; o < a.fc_hidden; ++o) gf2w[o] += dz2 * h1[o];
        g["fc2.b"].v[0] += dz2;

        std::vector<double> dgap_main(a.c3, 0.0);
        double* gf1w = g["fc1.w"].v.data();
        double* gf1b = g["fc1.b"].v.data();
        const double* gap_main = fc.gap_main.data() + static_cast<size_t>(i) * a.c3;
        for (int o = 0; o < a.fc_hidden; ++o) {
            double dh = dz2 * f2wt.v[o];
            if (h1[o] <= 0.0) continue;  // ReLU gate
            gf1b[o] += dh;
            for (int c = 0; c < a.c3; ++c) {
                gf1w[static_cast<size_t>(o) * a.c3 + c] += dh * gap_main[c];
                dgap_main[c] += dh * f1wt.v[static_cast<size_t>(o) * a.c3 + c];
            }
        }

        // GAP -> pool3 -> relu3 -> conv3, accumulating into d(p2)
        std::fill(dp2.begin(), dp2.end(), 0.0);
        std::fill(da3.begin(), da3.end(), 0.0);
        double inv3 = 1.0 / (a.h3() * a.w3());
        const int32_t* idx3 = fc.idx3.data() + static_cast<size_t>(i) * fc.p3.per_sample();
        const double* a3s = fc.a3.sample(i);
        for (int c = 0; c < a.c3; ++c) {
            double dg = dgap_main[c] * inv3;
            for (int j = 0; j < a.h3() * a.w3(); ++j) {
                int src = idx3[static_cast<size_t>(c) * a.h3() * a.w3() + j];
                da3[static_cast<size_t>(c) * a.h2() * a.w2() + src] += dg;
            }
        }
        for (size_t j = 0; j < da3.size(); ++j)
            if (a3s[j] <= 0.0) da3[j] = 0.0;
        conv3x3_backward_params(fc.p2.sample(i), a.c2, a.h2(), a.w2(), da3.data(), a.c3,
                                g["conv3.w"].v.data(), g["conv3.b"].v.data());
        conv3x3_backward_data(da3.data(), a.c3, a.h2(), a.w2(), w3t.v.data(), a.c2,
                              dp2.data());

        // auxiliary head joins at p2
        double pa = fc.p_aux[i];
        double dza = (pa < kProbClip || pa > 1.0 - kProbClip)
                         ? 0.0
                         : lambda_aux * (pa - y);
        const double* gap_aux = fc.gap_aux.data() + static_cast<size_t>(i) * a.c2;
        double* gaw = g["aux.w"].v.data();
        for (int c = 0; c < a.c2; ++c) gaw[c] += dza * gap_aux[c];
        g["aux.b"].v[0] += dza;
        double inv2 = 1.0 / (a.h2() * a.w2());
        for (int c = 0; c < a.c2; ++c) {
            double dg = dza * awt.v[c] * inv2;
            if (dg == 0.0) continue;
            double* plane = dp2.data() + static_cast<size_t>(c) * a.h2() * a.w2();
            for (int j = 0; j < a.h2() * a.w2(); ++j) plane[j] += dg;
        }

        // pool2 -> relu2 -> conv2
        std::fill(da2.begin(), da2.end(), 0.0);
        const int32_t* idx2 = fc.idx2.data() + static_cast<size_t>(i) * fc.p2.per_sample();
        const double* a2s = fc.a2.sample(i);
        for (int c = 0; c < a.c2; ++c)
            for (int j = 0; j < a.h2() * a.w2(); ++j) {
                int src = idx2[static_cast<size_t>(c) * a.h2() * a.w2() + j];
                da2[static_cast<size_t>(c) * a.h1() * a.w1() + src] +=
                    dp2[static_cast<size_t>(c) * a.h2() * a.w2() + j];
            }
        for (size_t j = 0; j < da2.size(); ++j)
            if (a2s[j] <= 0.0) da2[j] = 0.0;
        conv3x3_backward_params(fc.p1.sample(i), a.c1, a.h1(), a.w1(), da2.data(), a.c2,
                                g["conv2.w"].v.data(), g["conv2.b"].v.data());
        std::fill(dp1.begin(), dp1.end(), 0.0);
        conv3x3_backward_data(da2.data(), a.c2, a.h1(), a.w1(), w2t.v.data(), a.c1,
                              dp1.data());

        // pool1 -> relu1 -> conv1 (no input gradient needed)
        std::fill(da1.begin(), da1.end(), 0.0);
        const int32_t* idx1 = fc.idx1.data() + static_cast<size_t>(i) * fc.p1.per_sample();
        const double* a1s = fc.a1.sample(i);
        for (int c = 0; c < a.c1; ++c)
            for (int j = 0; j < a.h1() * a.w1(); ++j) {
                int src = idx1[static_cast<size_t>(c) * a.h1() * a.w1() + j];
                da1[static_cast<size_t>(c) * a.in_h * a.in_w + src] +=
                    dp1[static_cast<size_t>(c) * a.h1() * a.w1() + j];
            }
        for (size_t j = 0; j < da1.size(); ++j)
            if (a1s[j] <= 0.0) da1[j] = 0.0;
        conv3x3_backward_params(fc.x.sample(i), a.in_c, a.in_h, a.in_w, da1.data(), a.c1,
                                g["conv1.w"].v.data(), g["conv1.b"].v.data());
    }
    return g;
}

struct AdamState {
    ModelParams m, v;
    int64_t step = 0;
};

inline AdamState adam_init(const ModelParams& p) {
    AdamState s;
    for (const auto& [key, t] : p) {
        s.m[key] = Tensor::zeros(t.shape);
        s.v[key] = Tensor::zeros(t.shape);
    }
    return s;
}

inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
    state.step += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (auto& [key, t] : params) {
        auto git = grads.find(key);
        if (git == grads.end()) throw IntegrityError("adam_step: missing gradient " + key);
        auto& m = state.m[key].v;
        auto& v = state.v[key].v;
        const auto& g = git->second.v;
        for (size_t i = 0; i < t.v.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            t.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

inline std::vector<double> batch_from(const Dataset& ds, const std::vector<int>& order,
                                      size_t start, size_t count) {
    std::vector<double> x(count * ds.tensor_values());
    for (size_t i = 0; i < count; ++i) {
        const auto& t = ds.samples[order[start + i]].tensor;
        double* dst = x.data() + i * ds.tensor_values();
        for (size_t j = 0; j < t.size(); ++j) dst[j] = t[j];
    }
    return x;
}

struct TrainResult {
    std::vector<double> epoch_loss;  // mean per-sample loss, recorded only
};

// Plain mini-batch Adam over the shard; the shuffle stream is supplied by
// the caller (one stream per federated round). Optimiser state is local to
// the call.
inline TrainResult train_local(ModelParams& params, const Arch& a, const Dataset& ds,
                               const std::vector<int>& shard, int epochs, int batch_size,
                               double lr, double lambda_aux, Rng& shuffle_rng) {
    if (shard.empty()) throw IntegrityError("train_local: empty shard");
    for (int i : shard)
        if (i < 0 || static_cast<size_t>(i) >= ds.samples.size())
            throw IntegrityError("train_local: shard index out of range");
    const Arch& arch = a;
    TrainResult result;
    AdamState state = adam_init(params);
    for (int e = 0; e < epochs; ++e) {
        std::vector<int> order = shard;
        shuffle_rng.shuffle(order);
        double epoch_total = 0.0;
        for (size_t start = 0; start < order.size(); start += batch_size) {
            size_t count = std::min(static_cast<size_t>(batch_size),
                                    order.size() - start);
            std::vector<double> x = batch_from(ds, order, start, count);
            std::vector<uint8_t> y(count);
            for (size_t i = 0; i < count; ++i)
                y[i] = ds.samples[order[start + i]].label;
            ForwardCache fc = forward_pass(params, arch, std::move(x),
                                           static_cast<int>(count));
            epoch_total += loss(fc.p_aux, fc.p_final, y, lambda_aux);
            ModelParams grads = backward(params, arch, fc, y, lambda_aux);
            for (auto& [key, t] : grads)
                for (auto& v : t.v) v /= static_cast<double>(count);
            adam_step(params, grads, state, lr);
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));
    }
    return result;
}

struct EarlyExitPolicy {
    double cl = 0.7;  // confidence threshold in [0.5, 1)
};

// Confidence max(p, 1-p) at the auxiliary head decides whether conv3 and
// the main head run at all.
inline std::pair<double, bool> predict_early_exit(const ModelParams& p, const Arch& a,
                                                  const std::vector<double>& x,
                                                  const EarlyExitPolicy& policy) {
    if (policy.cl < 0.5 || policy.cl >= 1.0)
        throw IntegrityError("early-exit confidence threshold out of [0.5, 1)");
    ForwardCache fc = forward_pass(p, a, x, 1, /*run_main=*/false);
    double pa = fc.p_aux[0];
    if (std::max(pa, 1.0 - pa) >= policy.cl) return {pa, true};
    nn_detail::forward_stage_b(p, a, fc);
    return {fc.p_final[0], false};
}

struct Metrics {
    int64_t n = 0;
    int64_t confusion[2][2] = {{0, 0}, {0, 0}};  // [true label][prediction]
    double accuracy = 0.0;
    double precision[2] = {0, 0}, recall[2] = {0, 0}, f1[2] = {0, 0};
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double exit_rate = 0.0;
    double mac_ratio = 1.0;  // expected MACs relative to the full model
};

inline Metrics metrics_from_predictions(const std::vector<uint8_t>& truth,
                                        const std::vector<uint8_t>& pred) {
    if (truth.size() != pred.size() || truth.empty())
        throw IntegrityError("metrics: bad prediction vector");
    Metrics m;
    m.n = static_cast<int64_t>(truth.size());
    for (size_t i = 0; i < truth.size(); ++i) m.confusion[truth[i]][pred[i]]++;
    m.accuracy =
        static_cast<double>(m.confusion[0][0] + m.confusion[1][1]) / m.n;
    for (int c = 0; c < 2; ++c) {
        int64_t tp = m.confusion[c][c];
        int64_t fp = m.confusion[1 - c][c];
        int64_t fn = m.confusion[c][1 - c];
        m.precision[c] = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        m.recall[c] = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        m.f1[c] = m.precision[c] + m.recall[c] > 0
                      ? 2.0 * m.precision[c] * m.recall[c] / (m.precision[c] + m.recall[c])
                      : 0.0;
    }
    m.macro_precision = (m.precision[0] + m.precision[1]) / 2.0;
    m.macro_recall = (m.recall[0] + m.recall[1]) / 2.0;
    m.macro_f1 = (m.f1[0] + m.f1[1]) / 2.0;
    return m;
}

// Confusion metrics at decision threshold 0.5; with a policy, exited
// samples are scored on the auxiliary probability and the expected-MAC
// ratio uses the measured exit rate.
inline Metrics evaluate(const ModelParams& p, const Arch& a, const Dataset& ds,
                        const EarlyExitPolicy* policy = nullptr) {
    if (ds.samples.empty()) throw IntegrityError("evaluate: empty dataset");
    std::vector<int> order(ds.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::vector<uint8_t> truth(ds.samples.size()), pred(ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) truth[i] = ds.samples[i].label;

    int64_t exited = 0;
    const size_t chunk = 64;
    for (size_t start = 0; start < order.size(); start += chunk) {
        size_t count = std::min(chunk, order.size() - start);
        std::vector<double> x = batch_from(ds, order, start, count);
        ForwardCache fc =
            forward_pass(p, a, std::move(x), static_cast<int>(count), policy == nullptr);
        if (!policy) {
            for (size_t i = 0; i < count; ++i)
                pred[start + i] = fc.p_final[i] >= 0.5 ? 1 : 0;
            continue;
        }
        // run the main head only for low-confidence samples
        std::vector<int> rest;
        for (size_t i = 0; i < count; ++i) {
            double pa = fc.p_aux[i];
            if (std::max(pa, 1.0 - pa) >= policy->cl) {
                pred[start + i] = pa >= 0.5 ? 1 : 0;
                ++exited;
            } else {
                rest.push_back(static_cast<int>(start + i));
            }
        }
        if (!rest.empty()) {
            std::vector<double> xb = batch_from(ds, rest, 0, rest.size());
            ForwardCache fb = forward_pass(p, a, std::move(xb),
                                           static_cast<int>(rest.size()));
            for (size_t i = 0; i < rest.size(); ++i)
                pred[rest[i]] = fb.p_final[i] >= 0.5 ? 1 : 0;
        }
    }
    Metrics m = metrics_from_predictions(truth, pred);
    if (policy) {
        m.exit_rate = static_cast<double>(exited) / m.n;
        double full = static_cast<double>(count_macs(a, false));
        double exit = static_cast<double>(count_macs(a, true));
        m.mac_ratio = (m.exit_rate * exit + (1.0 - m.exit_rate) * full) / full;
    }
    return m;
}

// Class decisions for a whole dataset, optionally under an early-exit
// policy; mirrors evaluate()'s per-sample choices.
inline std::vector<uint8_t> predict_labels(const ModelParams& p, const Arch& a,
                                           const Dataset& ds,
                                           const EarlyExitPolicy* policy = nullptr) {
    std::vector<uint8_t> pred(ds.samples.size(), 0);
    std::vector<int> order(ds.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    const size_t chunk = 64;
    for (size_t start = 0; start < order.size(); start += chunk) {
        size_t count = std::min(chunk, order.size() - start);
        std::vector<double> x = batch_from(ds, order, start, count);
        ForwardCache fc =
            forward_pass(p, a, std::move(x), static_cast<int>(count), policy == nullptr);
        std::vector<int> rest;
        for (size_t i = 0; i < count; ++i) {
            if (policy) {
                double pa = fc.p_aux[i];
                if (std::max(pa, 1.0 - pa) >= policy->cl)
                    pred[start + i] = pa >= 0.5 ? 1 : 0;
                else
                    rest.push_back(static_cast<int>(start + i));
            } else {
                pred[start + i] = fc.p_final[i] >= 0.5 ? 1 : 0;
            }
        }
        if (!rest.empty()) {
            std::vector<double> xb = batch_from(ds, rest, 0, rest.size());
            ForwardCache fb =
                forward_pass(p, a, std::move(xb), static_cast<int>(rest.size()));
            for (size_t i = 0; i < rest.size(); ++i)
                pred[rest[i]] = fb.p_final[i] >= 0.5 ? 1 : 0;
        }
    }
    return pred;
}

// Checkpoint codec: "CKPT" | u32 version | u32 entries, then per entry
// u16 key length | key | u8 ndim | u32 dims | f32 payload. Values are
// stored in 32-bit precision.
inline std::string checkpoint_bytes(const ModelParams& p) {
    ByteWriter w;
    w.magic("CKPT");
    w.u32(1);
    w.u32(static_cast<uint32_t>(p.size()));
    for (const auto& [key, t] : p) {
        w.u16(static_cast<uint16_t>(key.size()));
        w.raw(key.data(), key.size());
        w.u8(static_cast<uint8_t>(t.shape.size()));
        for (int d : t.shape) w.u32(static_cast<uint32_t>(d));
        for (double v : t.v) w.f32(static_cast<float>(v));
    }
    return std::move(w.bytes);
}

inline ModelParams params_from_bytes(std::string_view bytes, const std::string& context) {
    ByteReader r(bytes, context);
    r.expect_magic("CKPT");
    uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(context + ": unsupported checkpoint version " +
                          std::to_string(version));
    uint32_t entries = r.u32();
    ModelParams p;
    for (uint32_t e = 0; e < entries; ++e) {
        uint16_t klen = r.u16();
        std::string key(klen, '\0');
        r.raw(key.data(), klen);
        uint8_t ndim = r.u8();
        if (ndim > 4) throw FormatError(context + ": tensor rank above 4");
        std::vector<int> shape(ndim);
        size_t total = 1;
        for (auto& d : shape) {
            uint32_t dim = r.u32();
            if (dim == 0 || dim > (1u << 24))
                throw FormatError(context + ": implausible tensor dimension");
            d = static_cast<int>(dim);
            total *= dim;
        }
        if (total * 4 > bytes.size())
            throw FormatError(context + ": tensor payload exceeds the file");
        Tensor t;
        t.shape = shape;
        t.v.resize(total);
        for (auto& v : t.v) v = r.f32();
        p[key] = std::move(t);
    }
    if (!r.exhausted()) throw FormatError(context + ": trailing bytes after payload");
    return p;
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
    atomic_write(path, checkpoint_bytes(p));
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    return params_from_bytes(read_file(path), path.string());
}

}  // namespace risfed
