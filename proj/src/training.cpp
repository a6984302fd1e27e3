#include "shapenet/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "shapenet/error.hpp"
#include "shapenet/inference.hpp"

namespace shapenet {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0) || !(dense_learning_rate >= 0) || !(top_learning_rate >= 0) || !(finetune_learning_rate >= 0) ||
        !(discriminative_learning_rate >= 0) || !(fpcd_fast_lr >= 0))
        throw InvalidArgument("learning rates must be non-negative");
    if (!(momentum >= 0 && momentum < 1) || !(initial_momentum >= 0 && initial_momentum < 1))
        throw InvalidArgument("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0)) throw InvalidArgument("weight_decay must be non-negative");
    if (cd_k < 1) throw InvalidArgument("cd_k must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (epochs_per_layer < 0 || top_epochs < 0 || finetune_epochs < 0 || discriminative_epochs < 0 ||
        momentum_switch_epoch < 0)
        throw InvalidArgument("epoch counts must be non-negative");
    if (!(sparsity_target > 0 && sparsity_target < 1)) throw InvalidArgument("sparsity_target must lie in (0, 1)");
    if (!(sparsity_weight >= 0)) throw InvalidArgument("sparsity_weight must be non-negative");
    if (!(fpcd_fast_decay >= 0 && fpcd_fast_decay < 1)) throw InvalidArgument("fpcd_fast_decay must lie in [0, 1)");
    if (persistent_chains < 1) throw InvalidArgument("persistent_chains must be at least 1");
}

double GradientAccumulator::norm() const {
    double s = 0;
    for (const auto& t : tensors)
        for (double g : t) s += g * g;
    return std::sqrt(s);
}

void GradientAccumulator::clear() {
    for (auto& t : tensors) std::fill(t.begin(), t.end(), 0.0);
    samples = 0;
}

std::vector<std::vector<float>*> parameter_tensors(ConvLayerParams& p) {
    return {&p.filters, &p.hidden_bias, &p.visible_bias};
}
std::vector<std::vector<float>*> parameter_tensors(DenseLayerParams& p) {
    return {&p.weights, &p.hidden_bias, &p.visible_bias};
}
std::vector<std::vector<float>*> parameter_tensors(TopLayerParams& p) {
    return {&p.feature_weights, &p.label_weights, &p.hidden_bias, &p.feature_bias, &p.label_bias};
}

namespace {

template <class L> GradientAccumulator zeros_like(const L& layer) {
    GradientAccumulator g;
    for (auto* t : parameter_tensors(const_cast<L&>(layer))) g.tensors.emplace_back(t->size(), 0.0);
    return g;
}

constexpr double kXentClip = 1e-7;

std::size_t weight_tensor_count(const ConvLayerParams&) { return 1; }
std::size_t weight_tensor_count(const DenseLayerParams&) { return 1; }
std::size_t weight_tensor_count(const TopLayerParams&) { return 2; }

void check_finite(const GradientAccumulator& g) {
    for (const auto& t : g.tensors)
        for (double v : t)
            if (!std::isfinite(v)) throw NumericError("non-finite gradient; batch aborted");
}

// velocity <- momentum * velocity + lr * (grad - decay * w);  w <- w + velocity
template <class L>
void apply_update(L& layer, GradientAccumulator& velocity, const GradientAccumulator& grad, double lr,
                  double momentum, double weight_decay) {
    check_finite(grad);
    auto params = parameter_tensors(layer);
    if (velocity.tensors.size() != params.size()) velocity = zeros_like(layer);
    const std::size_t n_weights = weight_tensor_count(layer);
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& w = *params[t];
        auto& vel = velocity.tensors[t];
        const auto& g = grad.tensors[t];
        const double decay = t < n_weights ? weight_decay : 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            vel[i] = momentum * vel[i] + lr * (g[i] - decay * w[i]);
            if (vel[i] != 0) w[i] = static_cast<float>(w[i] + vel[i]);
        }
    }
}

double cross_entropy(std::span<const double> v, std::span<const double> p, const std::vector<char>* mask,
                     std::size_t& count) {
    double s = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double q = std::clamp(static_cast<double>(p[i]), kXentClip, 1 - kXentClip);
        s -= v[i] * std::log(q) + (1 - v[i]) * std::log(1 - q);
        ++count;
    }
    return s;
}

std::vector<double> sample_vec(const std::vector<double>& probs, Rng& rng) {
    std::vector<double> s(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) s[i] = rng.bernoulli(probs[i]) ? 1.0 : 0.0;
    return s;
}

// Layer-kind helpers used by the generic CD loop.

std::vector<double> hidden_probs(const ConvLayerParams& p, std::span<const double> v) {
    auto x = conv_hidden_input(p, v);
    logistic_inplace(x);
    return x;
}
std::vector<double> visible_probs(const ConvLayerParams& p, std::span<const double> h) {
    auto x = conv_visible_input(p, h);
    logistic_inplace(x);
    return x;
}
std::vector<double> hidden_probs(const DenseLayerParams& p, std::span<const double> v) {
    auto x = dense_hidden_input(p, v);
    logistic_inplace(x);
    return x;
}
std::vector<double> visible_probs(const DenseLayerParams& p, std::span<const double> h) {
    auto x = dense_visible_input(p, h);
    logistic_inplace(x);
    return x;
}

// Adds sign * (v h^T, h, v) to the accumulator.
void accumulate(const ConvLayerParams& p, GradientAccumulator& g, std::span<const double> v,
                std::span<const double> h, double sign) {
    const int n = p.visible_extent, m = p.hidden_extent(), k = p.kernel, s = p.stride;
    const std::size_t n3 = static_cast<std::size_t>(n) * n * n, m3 = static_cast<std::size_t>(m) * m * m;
    const std::size_t kv = p.filter_volume();
    auto& dw = g.tensors[0];
    auto& dc = g.tensors[1];
    auto& db = g.tensors[2];
    for (int f = 0; f < p.out_channels; ++f) {
        const double* hf = h.data() + f * m3;
        double hsum = 0;
        for (int jz = 0; jz < m; ++jz)
            for (int jy = 0; jy < m; ++jy)
                for (int jx = 0; jx < m; ++jx) {
                    const double hv = hf[(static_cast<std::size_t>(jz) * m + jy) * m + jx];
                    if (hv == 0) continue;
                    hsum += hv;
                    const double a = sign * hv;
                    for (int c = 0; c < p.in_channels; ++c) {
                        double* w = dw.data() + (static_cast<std::size_t>(f) * p.in_channels + c) * kv;
                        const double* vc = v.data() + c * n3;
                        for (int oz = 0; oz < k; ++oz)
                            for (int oy = 0; oy < k; ++oy) {
                                const double* row =
                                    vc + (static_cast<std::size_t>(jz * s + oz) * n + (jy * s + oy)) * n + jx * s;
                                double* wr = w + (static_cast<std::size_t>(oz) * k + oy) * k;
                                for (int ox = 0; ox < k; ++ox) wr[ox] += a * row[ox];
                            }
                    }
                }
        dc[f] += sign * hsum;
    }
    for (std::size_t l = 0; l < v.size(); ++l) db[l] += sign * v[l];
}

void accumulate(const DenseLayerParams& p, GradientAccumulator& g, std::span<const double> v,
                std::span<const double> h, double sign) {
    const auto V = static_cast<std::size_t>(p.visible);
    for (std::size_t j = 0; j < h.size(); ++j) {
        if (h[j] == 0) continue;
        const double a = sign * h[j];
        double* row = g.tensors[0].data() + j * V;
        for (std::size_t i = 0; i < V; ++i) row[i] += a * v[i];
        g.tensors[1][j] += a;
    }
    for (std::size_t i = 0; i < V; ++i) g.tensors[2][i] += sign * v[i];
}

void accumulate_top(const TopLayerParams& p, GradientAccumulator& g, std::span<const double> f, int label,
                    std::span<const double> h, double sign) {
    const auto F = static_cast<std::size_t>(p.feature_visible), L = static_cast<std::size_t>(p.label_units());
    const auto d = static_cast<std::size_t>(p.dup), y = static_cast<std::size_t>(label);
    for (std::size_t j = 0; j < h.size(); ++j) {
        if (h[j] == 0) continue;
        const double a = sign * h[j];
        double* row = g.tensors[0].data() + j * F;
        for (std::size_t i = 0; i < F; ++i) row[i] += a * f[i];
        double* lrow = g.tensors[1].data() + j * L + y * d;
        for (std::size_t r = 0; r < d; ++r) lrow[r] += a;
        g.tensors[2][j] += a;
    }
    for (std::size_t i = 0; i < F; ++i) g.tensors[3][i] += sign * f[i];
    for (std::size_t r = 0; r < d; ++r) g.tensors[4][y * d + r] += sign;
}

void check_batch(std::span<const LayerState> batch, std::size_t visible) {
    if (batch.empty()) throw InvalidArgument("empty training batch");
    for (const auto& s : batch)
        if (s.size() != visible) throw InvalidArgument("batch item size does not match the layer");
}

// Divides each tensor by `count` and, for conv layers, the filter and hidden
// bias tensors additionally by the number of hidden positions per channel.
void normalize(GradientAccumulator& g, double count, double shared_positions) {
    for (std::size_t t = 0; t < g.tensors.size(); ++t) {
        const double scale = (t < 2 ? shared_positions : 1.0) * count;
        for (double& x : g.tensors[t]) x /= scale;
    }
}

double positions(const ConvLayerParams& p) {
    const double m = p.hidden_extent();
    return m * m * m;
}
double positions(const DenseLayerParams&) { return 1.0; }

template <class L>
GradientAccumulator cd_statistics(const L& p, std::span<const LayerState> batch, int cd_k, Rng& rng,
                                  CdDiagnostics& diag) {
    GradientAccumulator g = zeros_like(p);
    double xent = 0, hmean = 0;
    std::size_t xcount = 0, hcount = 0;
    for (const auto& item : batch) {
        const auto h0 = hidden_probs(p, item.values);
        accumulate(p, g, item.values, h0, +1.0);
        for (double x : h0) hmean += x;
        hcount += h0.size();

        auto hs = sample_vec(h0, rng);
        std::vector<double> vp, hp;
        for (int step = 1; step <= cd_k; ++step) {
            vp = visible_probs(p, hs);
            const auto vs = step < cd_k ? sample_vec(vp, rng) : vp;
            hp = hidden_probs(p, vs);
            if (step < cd_k) hs = sample_vec(hp, rng);
        }
        accumulate(p, g, vp, hp, -1.0);
        xent += cross_entropy(item.values, vp, nullptr, xcount);
        ++g.samples;
    }
    diag.recon_xent = xcount ? xent / static_cast<double>(xcount) : 0.0;
    diag.mean_hidden = hcount ? hmean / static_cast<double>(hcount) : 0.0;
    diag.active_positions = hcount;
    return g;
}

double layer_rate(const ConvLayerParams&, const TrainConfig& cfg) { return cfg.learning_rate; }
double layer_rate(const DenseLayerParams&, const TrainConfig& cfg) { return cfg.dense_learning_rate; }

template <class L>
CdDiagnostics cd_step_impl(L& layer, GradientAccumulator& velocity, std::span<const LayerState> batch,
                           const TrainConfig& cfg, double momentum, Rng& rng) {
    check_batch(batch, layer.visible_size());
    CdDiagnostics diag;
    GradientAccumulator g = cd_statistics(layer, batch, cfg.cd_k, rng, diag);
    normalize(g, static_cast<double>(batch.size()), positions(layer));
    diag.grad_norm = g.norm();
    apply_update(layer, velocity, g, layer_rate(layer, cfg), momentum, cfg.weight_decay);
    return diag;
}

} // namespace

GradientAccumulator make_accumulator(const ConvLayerParams& p) { return zeros_like(p); }
GradientAccumulator make_accumulator(const DenseLayerParams& p) { return zeros_like(p); }
GradientAccumulator make_accumulator(const TopLayerParams& p) { return zeros_like(p); }

GradientAccumulator cd_gradient(const DenseLayerParams& p, std::span<const LayerState> batch, int cd_k, Rng& rng) {
    check_batch(batch, p.visible_size());
    CdDiagnostics unused;
    return cd_statistics(p, batch, cd_k, rng, unused);
}

CdDiagnostics cd_step(ConvLayerParams& layer, GradientAccumulator& velocity, std::span<const LayerState> batch,
                      const TrainConfig& cfg, double momentum, Rng& rng) {
    return cd_step_impl(layer, velocity, batch, cfg, momentum, rng);
}

CdDiagnostics cd_step(DenseLayerParams& layer, GradientAccumulator& velocity, std::span<const LayerState> batch,
                      const TrainConfig& cfg, double momentum, Rng& rng) {
    return cd_step_impl(layer, velocity, batch, cfg, momentum, rng);
}

CdDiagnostics masked_sparse_cd_step(ConvLayerParams& layer, GradientAccumulator& velocity,
                                    std::span<const LayerState> batch, const TrainConfig& cfg, double momentum,
                                    Rng& rng) {
    check_batch(batch, layer.visible_size());
    const ConvLayerParams& p = layer;
    const int n = p.visible_extent, m = p.hidden_extent(), k = p.kernel, s = p.stride;
    const std::size_t n3 = static_cast<std::size_t>(n) * n * n, m3 = static_cast<std::size_t>(m) * m * m;
    const auto F = static_cast<std::size_t>(p.out_channels);
    const std::size_t kv = p.filter_volume();

    GradientAccumulator g = zeros_like(p);
    std::vector<double> active_per_filter(F, 0.0), q(F, 0.0);
    // Sparsity direction: sum over active positions of h(1-h) v_patch.
    std::vector<double> sparse_dw(g.tensors[0].size(), 0.0);
    std::size_t total_active = 0;
    double xent = 0;
    std::size_t xcount = 0;

    for (const auto& item : batch) {
        const auto& v = item.values;
        std::vector<char> active(m3, 0);
        std::size_t n_active = 0;
        for (int jz = 0; jz < m; ++jz)
            for (int jy = 0; jy < m; ++jy)
                for (int jx = 0; jx < m; ++jx) {
                    bool any = false;
                    for (int c = 0; c < p.in_channels && !any; ++c)
                        for (int oz = 0; oz < k && !any; ++oz)
                            for (int oy = 0; oy < k && !any; ++oy) {
                                const double* row = v.data() + c * n3 +
                                                   (static_cast<std::size_t>(jz * s + oz) * n + (jy * s + oy)) * n +
                                                   jx * s;
                                for (int ox = 0; ox < k; ++ox)
                                    if (row[ox] != 0) {
                                        any = true;
                                        break;
                                    }
                            }
                    if (any) {
                        active[(static_cast<std::size_t>(jz) * m + jy) * m + jx] = 1;
                        ++n_active;
                    }
                }
        if (n_active == 0) continue;
        total_active += n_active;

        auto mask_hidden = [&](std::vector<double>& h) {
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t j = 0; j < m3; ++j)
                    if (!active[j]) h[f * m3 + j] = 0.0;
        };

        auto h0 = hidden_probs(p, v);
        mask_hidden(h0);
        accumulate(p, g, v, h0, +1.0);

        for (std::size_t f = 0; f < F; ++f) {
            double* sw = sparse_dw.data() + f * p.in_channels * kv;
            for (int jz = 0; jz < m; ++jz)
                for (int jy = 0; jy < m; ++jy)
                    for (int jx = 0; jx < m; ++jx) {
                        const std::size_t j = (static_cast<std::size_t>(jz) * m + jy) * m + jx;
                        if (!active[j]) continue;
                        const double hv = h0[f * m3 + j];
                        q[f] += hv;
                        active_per_filter[f] += 1;
                        const double a = hv * (1 - hv);
                        for (int c = 0; c < p.in_channels; ++c)
                            for (int oz = 0; oz < k; ++oz)
                                for (int oy = 0; oy < k; ++oy) {
                                    const double* row =
                                        v.data() + c * n3 +
                                        (static_cast<std::size_t>(jz * s + oz) * n + (jy * s + oy)) * n + jx * s;
                                    double* wr = sw + c * kv + (static_cast<std::size_t>(oz) * k + oy) * k;
                                    for (int ox = 0; ox < k; ++ox) wr[ox] += a * row[ox];
                                }
                    }
        }

        auto hs = sample_vec(h0, rng);
        std::vector<double> vp, hp;
        for (int step = 1; step <= cfg.cd_k; ++step) {
            vp = visible_probs(p, hs);
            const auto vs = step < cfg.cd_k ? sample_vec(vp, rng) : vp;
            hp = hidden_probs(p, vs);
            mask_hidden(hp);
            if (step < cfg.cd_k) hs = sample_vec(hp, rng);
        }
        accumulate(p, g, vp, hp, -1.0);
        xent += cross_entropy(v, vp, nullptr, xcount);
        ++g.samples;
    }

    CdDiagnostics diag;
    if (total_active == 0) return diag; // nothing to learn from

    normalize(g, static_cast<double>(batch.size()), positions(p));
    double hsum = 0;
    for (std::size_t f = 0; f < F; ++f) {
        hsum += q[f];
        if (active_per_filter[f] == 0) continue;
        const double qf = q[f] / active_per_filter[f];
        const double push = cfg.sparsity_weight * (cfg.sparsity_target - qf);
        g.tensors[1][f] += push;
        for (std::size_t i = 0; i < p.in_channels * kv; ++i) {
            const std::size_t idx = f * p.in_channels * kv + i;
            g.tensors[0][idx] += push * sparse_dw[idx] / active_per_filter[f];
        }
    }
    diag.recon_xent = xcount ? xent / static_cast<double>(xcount) : 0.0;
    diag.mean_hidden = hsum / (static_cast<double>(total_active) * static_cast<double>(F));
    diag.active_positions = total_active;
    diag.grad_norm = g.norm();
    apply_update(layer, velocity, g, cfg.learning_rate, momentum, cfg.weight_decay);
    return diag;
}

namespace {

std::vector<double> top_hidden_probs(const TopLayerParams& p, std::span<const double> f, int label) {
    const auto in = top_hidden_input(p, f, label);
    std::vector<double> h(in.size());
    for (std::size_t j = 0; j < in.size(); ++j) h[j] = logistic(in[j]);
    return h;
}

LabelDistribution label_given_hidden(const TopLayerParams& p, std::span<const double> hidden) {
    const auto logits = top_label_input(p, hidden);
    const double mx = *std::max_element(logits.begin(), logits.end());
    LabelDistribution dist;
    dist.probs.resize(logits.size());
    double z = 0;
    for (std::size_t c = 0; c < logits.size(); ++c) z += dist.probs[c] = std::exp(logits[c] - mx);
    for (double& pr : dist.probs) pr /= z;
    return dist;
}

// One negative-phase step from a chain state; returns the hidden probabilities at the new state.
std::vector<double> advance_top_chain(const TopLayerParams& p, TopChain& chain, Rng& rng) {
    const auto hs = sample_vec(top_hidden_probs(p, chain.features, chain.label), rng);
    chain.label = sample_category(label_given_hidden(p, hs), rng);
    chain.features = top_feature_input(p, hs);
    logistic_inplace(chain.features);
    return top_hidden_probs(p, chain.features, chain.label);
}

void check_top_batch(const TopLayerParams& p, std::span<const LayerState> features, std::span<const int> labels) {
    if (features.empty()) throw InvalidArgument("empty training batch");
    if (features.size() != labels.size()) throw InvalidArgument("features and labels differ in length");
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != static_cast<std::size_t>(p.feature_visible))
            throw InvalidArgument("feature vector size does not match the top layer");
        if (labels[i] < 0 || labels[i] >= p.classes) throw InvalidArgument("label out of range");
    }
}

GradientAccumulator top_positive(const TopLayerParams& p, std::span<const LayerState> features,
                                 std::span<const int> labels, double& hmean) {
    GradientAccumulator g = zeros_like(p);
    double hs = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto h = top_hidden_probs(p, features[i].values, labels[i]);
        accumulate_top(p, g, features[i].values, labels[i], h, +1.0);
        for (double x : h) hs += x;
        ++g.samples;
    }
    hmean = hs / (static_cast<double>(features.size()) * p.hidden);
    return g;
}

TopLayerParams add_fast(const TopLayerParams& top, const TopLayerParams& fast) {
    TopLayerParams eff = top;
    auto dst = parameter_tensors(eff);
    auto src = parameter_tensors(const_cast<TopLayerParams&>(fast));
    for (std::size_t t = 0; t < dst.size(); ++t)
        for (std::size_t i = 0; i < dst[t]->size(); ++i) (*dst[t])[i] += (*src[t])[i];
    return eff;
}

} // namespace

CdDiagnostics cd_step(TopLayerParams& top, GradientAccumulator& velocity, std::span<const LayerState> features,
                      std::span<const int> labels, const TrainConfig& cfg, double momentum, Rng& rng) {
    check_top_batch(top, features, labels);
    CdDiagnostics diag;
    GradientAccumulator g = top_positive(top, features, labels, diag.mean_hidden);
    GradientAccumulator neg = zeros_like(top);
    double xent = 0;
    std::size_t xcount = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        TopChain chain{features[i].values, labels[i]};
        std::vector<double> hp;
        for (int step = 0; step < cfg.cd_k; ++step) hp = advance_top_chain(top, chain, rng);
        accumulate_top(top, neg, chain.features, chain.label, hp, +1.0);
        xent += cross_entropy(features[i].values, chain.features, nullptr, xcount);
    }
    const double B = static_cast<double>(features.size());
    for (std::size_t t = 0; t < g.tensors.size(); ++t)
        for (std::size_t i = 0; i < g.tensors[t].size(); ++i) g.tensors[t][i] = (g.tensors[t][i] - neg.tensors[t][i]) / B;
    diag.recon_xent = xcount ? xent / static_cast<double>(xcount) : 0.0;
    diag.grad_norm = g.norm();
    apply_update(top, velocity, g, cfg.top_learning_rate, momentum, cfg.weight_decay);
    return diag;
}

FpcdState init_fpcd_state(const TopLayerParams& top, std::span<const LayerState> features, std::span<const int> labels,
                          int chains, Rng& rng) {
    check_top_batch(top, features, labels);
    if (chains < 1) throw InvalidArgument("need at least one persistent chain");
    FpcdState st;
    st.fast = TopLayerParams(top.hidden, top.feature_visible, top.classes, top.dup);
    st.velocity = zeros_like(top);
    for (int c = 0; c < chains; ++c) {
        const std::size_t i = rng.index(features.size());
        st.chains.push_back({features[i].values, labels[i]});
    }
    return st;
}

void update_fast_weights(TopLayerParams& fast, const GradientAccumulator& grad, const TrainConfig& cfg) {
    check_finite(grad);
    auto params = parameter_tensors(fast);
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& w = *params[t];
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = static_cast<float>(cfg.fpcd_fast_decay * w[i] + cfg.fpcd_fast_lr * grad.tensors[t][i]);
    }
}

CdDiagnostics fpcd_step(TopLayerParams& top, FpcdState& state, std::span<const LayerState> features,
                        std::span<const int> labels, const TrainConfig& cfg, double momentum, Rng& rng,
                        bool reset_chains_to_data) {
    check_top_batch(top, features, labels);
    if (reset_chains_to_data) {
        state.chains.clear();
        for (std::size_t i = 0; i < features.size(); ++i) state.chains.push_back({features[i].values, labels[i]});
    }
    if (state.chains.empty()) throw InvalidArgument("persistent chains are not initialized");
    if (state.fast.hidden != top.hidden) state.fast = TopLayerParams(top.hidden, top.feature_visible, top.classes, top.dup);

    CdDiagnostics diag;
    GradientAccumulator g = top_positive(top, features, labels, diag.mean_hidden);
    const TopLayerParams effective = add_fast(top, state.fast);
    GradientAccumulator neg = zeros_like(top);
    double xent = 0;
    std::size_t xcount = 0;
    for (std::size_t c = 0; c < state.chains.size(); ++c) {
        TopChain& chain = state.chains[c];
        const std::vector<double> before = chain.features;
        std::vector<double> hp;
        for (int step = 0; step < cfg.cd_k; ++step) hp = advance_top_chain(effective, chain, rng);
        accumulate_top(top, neg, chain.features, chain.label, hp, +1.0);
        xent += cross_entropy(before, chain.features, nullptr, xcount);
    }
    const double B = static_cast<double>(features.size()), C = static_cast<double>(state.chains.size());
    for (std::size_t t = 0; t < g.tensors.size(); ++t)
        for (std::size_t i = 0; i < g.tensors[t].size(); ++i)
            g.tensors[t][i] = g.tensors[t][i] / B - neg.tensors[t][i] / C;
    diag.recon_xent = xcount ? xent / static_cast<double>(xcount) : 0.0;
    diag.grad_norm = g.norm();
    apply_update(top, state.velocity, g, cfg.top_learning_rate, momentum, cfg.weight_decay);
    update_fast_weights(state.fast, g, cfg);
    return diag;
}

std::string diagnostics_csv_header() { return "epoch,layer,recon_xent,mean_hidden_act,grad_norm"; }

std::string diagnostics_csv_line(const EpochDiagnostics& d) {
    std::ostringstream s;
    s.precision(9);
    s << d.epoch << ',' << d.layer << ',' << d.recon_xent << ',' << d.mean_hidden_act << ',' << d.grad_norm;
    return s.str();
}

double momentum_for_epoch(const TrainConfig& cfg, int epoch) {
    return epoch <= cfg.momentum_switch_epoch ? cfg.initial_momentum : cfg.momentum;
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    return order;
}

namespace {

void check_dataset(const NetworkParams& net, const std::vector<VoxelGrid>& grids, const std::vector<int>& labels) {
    if (grids.empty()) throw InvalidArgument("training set is empty");
    if (grids.size() != labels.size()) throw InvalidArgument("grids and labels differ in length");
    const int n = net.grid_extent();
    for (const auto& g : grids)
        if (!(g.dims() == Dims3::cube(n))) throw InvalidArgument("training grid does not match the network input");
    for (int y : labels)
        if (y < 0 || y >= net.classes()) throw InvalidArgument("training label out of range");
}

struct EpochMeans {
    double xent = 0, hidden = 0, grad = 0;
    int batches = 0;
    void add(const CdDiagnostics& d) {
        xent += d.recon_xent;
        hidden += d.mean_hidden;
        grad += d.grad_norm;
        ++batches;
    }
    EpochDiagnostics out(int epoch, int layer) const {
        const double b = std::max(1, batches);
        return {epoch, layer, xent / b, hidden / b, grad / b};
    }
};

template <class Step>
void run_epochs(std::size_t n, int epochs, int layer_no, const TrainConfig& cfg, Rng& rng, const DiagnosticsSink& sink,
                Step&& step) {
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const double mom = momentum_for_epoch(cfg, epoch);
        const auto order = shuffled_order(n, rng);
        EpochMeans means;
        for (std::size_t start = 0; start < n; start += B) {
            const std::size_t end = std::min(n, start + B);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            means.add(step(idx, mom));
        }
        if (sink) sink(means.out(epoch, layer_no));
    }
}

std::vector<LayerState> gather(const std::vector<LayerState>& all, const std::vector<std::size_t>& idx) {
    std::vector<LayerState> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

} // namespace

NetworkParams pretrain(NetworkParams net, const std::vector<VoxelGrid>& grids, const std::vector<int>& labels,
                       const TrainConfig& cfg, const DiagnosticsSink& sink) {
    cfg.validate();
    net.validate();
    check_dataset(net, grids, labels);
    const std::size_t N = grids.size();

    std::vector<LayerState> data;
    data.reserve(N);
    for (const auto& g : grids) data.push_back(grid_state(g));

    Rng unused(0);
    int layer_no = 0;
    for (std::size_t l = 0; l < net.convs.size(); ++l) {
        ++layer_no;
        auto& layer = net.convs[l];
        Rng rng(derive_seed(cfg.seed, {0x7e1ULL, l}));
        GradientAccumulator velocity = make_accumulator(layer);
        run_epochs(N, cfg.epochs_per_layer, layer_no, cfg, rng, sink, [&](const std::vector<std::size_t>& idx, double mom) {
            const auto batch = gather(data, idx);
            return l == 0 ? masked_sparse_cd_step(layer, velocity, batch, cfg, mom, rng)
                          : cd_step(layer, velocity, batch, cfg, mom, rng);
        });
        for (auto& d : data) d = propagate_up(layer, d, Propagation::Mean, unused);
    }

    ++layer_no;
    {
        Rng rng(derive_seed(cfg.seed, {0x7e1ULL, net.convs.size()}));
        GradientAccumulator velocity = make_accumulator(net.dense);
        run_epochs(N, cfg.epochs_per_layer, layer_no, cfg, rng, sink, [&](const std::vector<std::size_t>& idx, double mom) {
            return cd_step(net.dense, velocity, gather(data, idx), cfg, mom, rng);
        });
        for (auto& d : data) d = propagate_up(net.dense, d, Propagation::Mean, unused);
    }

    ++layer_no;
    Rng rng(derive_seed(cfg.seed, {0x7e1ULL, net.convs.size() + 1}));
    if (cfg.top_epochs > 0) {
        FpcdState state = init_fpcd_state(net.top, data, labels, cfg.persistent_chains, rng);
        run_epochs(N, cfg.top_epochs, layer_no, cfg, rng, sink, [&](const std::vector<std::size_t>& idx, double mom) {
            std::vector<int> ys;
            for (auto i : idx) ys.push_back(labels[i]);
            return fpcd_step(net.top, state, gather(data, idx), ys, cfg, mom, rng);
        });
    }
    return net;
}

namespace {

struct LayerGrads {
    std::vector<GradientAccumulator> convs;
    GradientAccumulator dense, top;

    explicit LayerGrads(const NetworkParams& net) {
        for (const auto& c : net.convs) convs.push_back(make_accumulator(c));
        dense = make_accumulator(net.dense);
        top = make_accumulator(net.top);
    }
    void clear() {
        for (auto& c : convs) c.clear();
        dense.clear();
        top.clear();
    }
};

void combine(GradientAccumulator& pos, const GradientAccumulator& neg, double np, double nn) {
    for (std::size_t t = 0; t < pos.tensors.size(); ++t)
        for (std::size_t i = 0; i < pos.tensors[t].size(); ++i)
            pos.tensors[t][i] = pos.tensors[t][i] / np - neg.tensors[t][i] / nn;
}

void scale_shared(GradientAccumulator& g, double shared) {
    for (std::size_t t = 0; t < 2; ++t)
        for (double& x : g.tensors[t]) x /= shared;
}

} // namespace

NetworkParams wake_sleep_finetune(NetworkParams net, const std::vector<VoxelGrid>& grids,
                                  const std::vector<int>& labels, const TrainConfig& cfg, const DiagnosticsSink& sink,
                                  WakeSleepTrace* trace) {
    cfg.validate();
    net.validate();
    check_dataset(net, grids, labels);
    const std::size_t N = grids.size();
    const std::size_t L = net.convs.size();
    Rng rng(derive_seed(cfg.seed, {0x5eeULL}));

    if (trace) {
        trace->recognition.clear();
        trace->generation.clear();
    }

    // Persistent fantasy chains start at sampled dense states of random data.
    std::vector<TopChain> chains;
    for (int c = 0; c < cfg.persistent_chains; ++c) {
        const std::size_t i = rng.index(N);
        const auto states = bottom_up(net, grid_state(grids[i]), Propagation::Sample, rng);
        chains.push_back({states.back().values, labels[i]});
    }

    LayerGrads pos(net), neg(net), velocity(net);

    const auto B = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
        const double mom = momentum_for_epoch(cfg, epoch);
        const auto order = shuffled_order(N, rng);
        EpochMeans means;
        for (std::size_t start = 0; start < N; start += B) {
            const std::size_t end = std::min(N, start + B);
            pos.clear();
            neg.clear();
            double hmean = 0;

            // Wake: stochastic recognition pass.
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                LayerState below = grid_state(grids[i]);
                for (std::size_t l = 0; l < L; ++l) {
                    if (trace && trace->recognition.size() < L) trace->recognition.push_back(net.convs[l].filters.data());
                    LayerState h = propagate_up(net.convs[l], below, Propagation::Sample, rng);
                    accumulate(net.convs[l], pos.convs[l], below.values, h.values, +1.0);
                    below = std::move(h);
                }
                if (trace && trace->recognition.size() == L) trace->recognition.push_back(net.dense.weights.data());
                LayerState f = propagate_up(net.dense, below, Propagation::Sample, rng);
                accumulate(net.dense, pos.dense, below.values, f.values, +1.0);
                const auto hp = top_hidden_probs(net.top, f.values, labels[i]);
                const auto hs = sample_vec(hp, rng);
                accumulate_top(net.top, pos.top, f.values, labels[i], hs, +1.0);
                for (double x : hp) hmean += x;
            }

            // Sleep: advance the fantasy chains, then generate top-down.
            for (auto& chain : chains) {
                const auto hs = sample_vec(top_hidden_probs(net.top, chain.features, chain.label), rng);
                chain.label = sample_category(label_given_hidden(net.top, hs), rng);
                auto fp = top_feature_input(net.top, hs);
                logistic_inplace(fp);
                chain.features = sample_vec(fp, rng);
                accumulate_top(net.top, neg.top, chain.features, chain.label, hs, +1.0);

                if (trace && trace->generation.empty()) trace->generation.push_back(net.dense.weights.data());
                LayerState above{chain.features, true};
                LayerState v = propagate_down(net.dense, above, Propagation::Sample, rng);
                accumulate(net.dense, neg.dense, v.values, above.values, +1.0);
                for (std::size_t l = L; l-- > 0;) {
                    if (trace && trace->generation.size() <= L - l) trace->generation.push_back(net.convs[l].filters.data());
                    above = std::move(v);
                    v = propagate_down(net.convs[l], above, Propagation::Sample, rng);
                    accumulate(net.convs[l], neg.convs[l], v.values, above.values, +1.0);
                }
            }

            const double np = static_cast<double>(end - start), nn = static_cast<double>(chains.size());
            double gnorm = 0;
            for (std::size_t l = 0; l < L; ++l) {
                combine(pos.convs[l], neg.convs[l], np, nn);
                scale_shared(pos.convs[l], positions(net.convs[l]));
                gnorm += pos.convs[l].norm();
                apply_update(net.convs[l], velocity.convs[l], pos.convs[l], cfg.finetune_learning_rate, mom,
                             cfg.weight_decay);
            }
            combine(pos.dense, neg.dense, np, nn);
            gnorm += pos.dense.norm();
            apply_update(net.dense, velocity.dense, pos.dense, cfg.finetune_learning_rate, mom, cfg.weight_decay);
            combine(pos.top, neg.top, np, nn);
            gnorm += pos.top.norm();
            apply_update(net.top, velocity.top, pos.top, cfg.finetune_learning_rate, mom, cfg.weight_decay);

            CdDiagnostics d;
            d.mean_hidden = hmean / (np * net.top.hidden);
            d.grad_norm = gnorm;
            means.add(d);
        }
        if (sink) sink(means.out(epoch, static_cast<int>(L) + 2));
    }
    if (trace) {
        // Reverse generation order so both lists read bottom layer first.
        std::reverse(trace->generation.begin(), trace->generation.end());
    }
    return net;
}

} // namespace shapenet
