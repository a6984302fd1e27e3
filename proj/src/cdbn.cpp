#include "shapenet/cdbn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "shapenet/error.hpp"

namespace shapenet {

bool LayerState::valid() const {
    if (sampled) return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0 || v == 1.0; });
    return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

ConvLayerParams::ConvLayerParams(int out, int in, int k, int s, int n)
    : out_channels(out), in_channels(in), kernel(k), stride(s), visible_extent(n) {
    if (out <= 0 || in <= 0 || k <= 0 || s <= 0 || n <= 0) throw InvalidArgument("conv layer sizes must be positive");
    if (k > n) throw InvalidArgument("filter larger than the visible extent");
    if ((n - k) % s != 0)
        throw InvalidArgument("stride " + std::to_string(s) + " does not tile extent " + std::to_string(n) +
                              " with kernel " + std::to_string(k));
    filters.assign(static_cast<std::size_t>(out) * in * filter_volume(), 0.0f);
    hidden_bias.assign(static_cast<std::size_t>(out), 0.0f);
    visible_bias.assign(visible_size(), 0.0f);
}

DenseLayerParams::DenseLayerParams(int h, int v) : hidden(h), visible(v) {
    if (h <= 0 || v <= 0) throw InvalidArgument("dense layer sizes must be positive");
    weights.assign(static_cast<std::size_t>(h) * v, 0.0f);
    hidden_bias.assign(static_cast<std::size_t>(h), 0.0f);
    visible_bias.assign(static_cast<std::size_t>(v), 0.0f);
}

TopLayerParams::TopLayerParams(int h, int fv, int k, int d) : hidden(h), feature_visible(fv), classes(k), dup(d) {
    if (h <= 0 || fv <= 0 || k <= 0) throw InvalidArgument("top layer sizes must be positive");
    if (d < 1) throw InvalidArgument("label duplication must be at least 1");
    feature_weights.assign(static_cast<std::size_t>(h) * fv, 0.0f);
    label_weights.assign(static_cast<std::size_t>(h) * label_units(), 0.0f);
    hidden_bias.assign(static_cast<std::size_t>(h), 0.0f);
    feature_bias.assign(static_cast<std::size_t>(fv), 0.0f);
    label_bias.assign(static_cast<std::size_t>(label_units()), 0.0f);
}

Architecture Architecture::paper(int classes) {
    return {30, {{48, 6, 2}, {160, 5, 2}, {512, 4, 1}}, 1200, 4000, classes, 10};
}

Architecture Architecture::desk(int classes) { return {16, {{8, 4, 2}, {16, 3, 1}}, 64, 128, classes, 10}; }

void NetworkParams::validate() const {
    if (convs.empty()) throw InvalidArgument("network needs at least one conv layer");
    if (convs.front().in_channels != 1) throw InvalidArgument("first conv layer must read one channel");
    for (std::size_t i = 1; i < convs.size(); ++i) {
        if (convs[i].in_channels != convs[i - 1].out_channels ||
            convs[i].visible_extent != convs[i - 1].hidden_extent())
            throw InvalidArgument("conv layer " + std::to_string(i) + " does not compose with its input");
    }
    if (dense.visible_size() != convs.back().hidden_size())
        throw InvalidArgument("dense layer does not match the last conv layer");
    if (top.feature_visible != dense.hidden) throw InvalidArgument("top layer does not match the dense layer");
    if (head && (head->inputs != dense.hidden || head->classes != top.classes))
        throw InvalidArgument("classifier head does not match the network");
}

Architecture NetworkParams::architecture() const {
    Architecture a;
    a.grid_extent = grid_extent();
    a.convs.clear();
    for (const auto& c : convs) a.convs.push_back({c.out_channels, c.kernel, c.stride});
    a.dense_hidden = dense.hidden;
    a.top_hidden = top.hidden;
    a.classes = top.classes;
    a.dup = top.dup;
    return a;
}

NetworkParams make_network(const Architecture& arch, std::uint64_t seed, double weight_std) {
    if (arch.convs.empty()) throw InvalidArgument("architecture needs at least one conv layer");
    Rng rng(derive_seed(seed, {0x1417ULL}));
    auto fill = [&](std::vector<float>& w) {
        for (auto& x : w) x = static_cast<float>(rng.normal(0.0, weight_std));
    };
    NetworkParams net;
    int extent = arch.grid_extent, channels = 1;
    for (const auto& c : arch.convs) {
        ConvLayerParams layer(c.filters, channels, c.kernel, c.stride, extent);
        fill(layer.filters);
        extent = layer.hidden_extent();
        channels = c.filters;
        net.convs.push_back(std::move(layer));
    }
    net.dense = DenseLayerParams(arch.dense_hidden, static_cast<int>(net.convs.back().hidden_size()));
    fill(net.dense.weights);
    net.top = TopLayerParams(arch.top_hidden, arch.dense_hidden, arch.classes, arch.dup);
    fill(net.top.feature_weights);
    fill(net.top.label_weights);
    net.validate();
    return net;
}

int LabelDistribution::argmax() const {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

void LabelDistribution::validate() const {
    if (probs.empty()) throw InvalidArgument("empty label distribution");
    double sum = 0;
    for (double p : probs) {
        if (!(p >= 0)) throw InvalidArgument("negative or NaN probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw InvalidArgument("probabilities do not sum to 1");
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void logistic_inplace(std::vector<double>& x) {
    for (auto& v : x) v = 1.0 / (1.0 + std::exp(-v));
}

LayerState activate(std::vector<double> probs, Propagation mode, Rng& rng) {
    LayerState s{std::move(probs), mode == Propagation::Sample};
    if (s.sampled)
        for (auto& v : s.values) v = rng.uniform() < v ? 1.0 : 0.0;
    return s;
}

namespace {

void require_size(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
        throw InvalidArgument(std::string(what) + " has " + std::to_string(got) + " units, expected " +
                              std::to_string(want));
}

// Hidden positions j along one axis that see visible coordinate p.
struct AxisRange {
    int lo, hi;
};

std::vector<AxisRange> receptive_ranges(int n, int k, int s, int m) {
    std::vector<AxisRange> r(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) {
        const int lo = p - k + 1 > 0 ? (p - k + 1 + s - 1) / s : 0;
        r[static_cast<std::size_t>(p)] = {lo, std::min(m - 1, p / s)};
    }
    return r;
}

double dot4(const float* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

} // namespace

std::vector<double> conv_hidden_input(const ConvLayerParams& p, std::span<const double> v) {
    require_size(v.size(), p.visible_size(), "conv visible state");
    const int n = p.visible_extent, k = p.kernel, s = p.stride, m = p.hidden_extent();
    const int F = p.out_channels, C = p.in_channels;
    const std::size_t k3 = p.filter_volume(), n3 = static_cast<std::size_t>(n) * n * n;
    const std::size_t m3 = static_cast<std::size_t>(m) * m * m;

    // Filters transposed to [c][offset][f] so the innermost loop runs over channels.
    std::vector<double> wt(p.filters.size());
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < C; ++c)
            for (std::size_t o = 0; o < k3; ++o)
                wt[(c * k3 + o) * F + f] = p.filters[(static_cast<std::size_t>(f) * C + c) * k3 + o];

    const auto ranges = receptive_ranges(n, k, s, m);
    std::vector<double> acc(m3 * F, 0.0);
    for (int c = 0; c < C; ++c)
        for (int pz = 0; pz < n; ++pz)
            for (int py = 0; py < n; ++py)
                for (int px = 0; px < n; ++px) {
                    const double val = v[c * n3 + (static_cast<std::size_t>(pz) * n + py) * n + px];
                    if (val == 0.0) continue;
                    const auto rz = ranges[pz], ry = ranges[py], rx = ranges[px];
                    for (int jz = rz.lo; jz <= rz.hi; ++jz)
                        for (int jy = ry.lo; jy <= ry.hi; ++jy)
                            for (int jx = rx.lo; jx <= rx.hi; ++jx) {
                                const std::size_t o =
                                    (static_cast<std::size_t>(pz - jz * s) * k + (py - jy * s)) * k + (px - jx * s);
                                const double* w = &wt[(c * k3 + o) * F];
                                double* a = &acc[((static_cast<std::size_t>(jz) * m + jy) * m + jx) * F];
                                for (int f = 0; f < F; ++f) a[f] += val * w[f];
                            }
                }
    std::vector<double> out(m3 * F);
    for (int f = 0; f < F; ++f)
        for (std::size_t j = 0; j < m3; ++j) out[f * m3 + j] = acc[j * F + f] + p.hidden_bias[f];
    return out;
}

std::vector<double> conv_visible_input(const ConvLayerParams& p, std::span<const double> h) {
    require_size(h.size(), p.hidden_size(), "conv hidden state");
    const int n = p.visible_extent, k = p.kernel, s = p.stride, m = p.hidden_extent();
    const int F = p.out_channels, C = p.in_channels;
    const std::size_t k3 = p.filter_volume(), n3 = static_cast<std::size_t>(n) * n * n;
    const std::size_t m3 = static_cast<std::size_t>(m) * m * m;
    std::vector<double> out(p.visible_bias.begin(), p.visible_bias.end());
    for (int f = 0; f < F; ++f)
        for (int jz = 0; jz < m; ++jz)
            for (int jy = 0; jy < m; ++jy)
                for (int jx = 0; jx < m; ++jx) {
                    const double hv = h[f * m3 + (static_cast<std::size_t>(jz) * m + jy) * m + jx];
                    if (hv == 0.0) continue;
                    for (int c = 0; c < C; ++c) {
                        const float* w = &p.filters[(static_cast<std::size_t>(f) * C + c) * k3];
                        double* base = &out[c * n3];
                        for (int oz = 0; oz < k; ++oz)
                            for (int oy = 0; oy < k; ++oy) {
                                double* row = base + (static_cast<std::size_t>(jz * s + oz) * n + (jy * s + oy)) * n + jx * s;
                                const float* wrow = w + (static_cast<std::size_t>(oz) * k + oy) * k;
                                for (int ox = 0; ox < k; ++ox) row[ox] += hv * wrow[ox];
                            }
                    }
                }
    return out;
}

std::vector<double> dense_hidden_input(const DenseLayerParams& p, std::span<const double> v) {
    require_size(v.size(), p.visible_size(), "dense visible state");
    std::vector<double> out(p.hidden_size());
    for (int h = 0; h < p.hidden; ++h)
        out[h] = p.hidden_bias[h] + dot4(&p.weights[static_cast<std::size_t>(h) * p.visible], v.data(), v.size());
    return out;
}

std::vector<double> dense_visible_input(const DenseLayerParams& p, std::span<const double> hs) {
    require_size(hs.size(), p.hidden_size(), "dense hidden state");
    std::vector<double> out(p.visible_bias.begin(), p.visible_bias.end());
    for (int h = 0; h < p.hidden; ++h) {
        const double hv = hs[h];
        if (hv == 0.0) continue;
        const float* w = &p.weights[static_cast<std::size_t>(h) * p.visible];
        for (int i = 0; i < p.visible; ++i) out[i] += hv * w[i];
    }
    return out;
}

double conv_energy(const ConvLayerParams& p, const LayerState& v, const LayerState& h) {
    require_size(v.size(), p.visible_size(), "conv visible state");
    require_size(h.size(), p.hidden_size(), "conv hidden state");
    const int n = p.visible_extent, k = p.kernel, s = p.stride, m = p.hidden_extent();
    const int C = p.in_channels;
    const std::size_t k3 = p.filter_volume(), n3 = static_cast<std::size_t>(n) * n * n;
    const std::size_t m3 = static_cast<std::size_t>(m) * m * m;
    double e = 0;
    for (int f = 0; f < p.out_channels; ++f)
        for (std::size_t j = 0; j < m3; ++j) {
            const double hv = h.values[f * m3 + j];
            if (hv == 0) continue;
            const int jx = static_cast<int>(j % m), jy = static_cast<int>((j / m) % m), jz = static_cast<int>(j / (m * m));
            double conv = 0;
            for (int c = 0; c < C; ++c)
                for (int oz = 0; oz < k; ++oz)
                    for (int oy = 0; oy < k; ++oy)
                        for (int ox = 0; ox < k; ++ox)
                            conv += static_cast<double>(p.filters[(static_cast<std::size_t>(f) * C + c) * k3 +
                                                                  (static_cast<std::size_t>(oz) * k + oy) * k + ox]) *
                                    v.values[c * n3 + (static_cast<std::size_t>(jz * s + oz) * n + (jy * s + oy)) * n +
                                             (jx * s + ox)];
            e -= hv * (conv + p.hidden_bias[f]);
        }
    for (std::size_t l = 0; l < v.size(); ++l) e -= static_cast<double>(p.visible_bias[l]) * v.values[l];
    return e;
}

double dense_energy(const DenseLayerParams& p, const LayerState& v, const LayerState& h) {
    require_size(v.size(), p.visible_size(), "dense visible state");
    require_size(h.size(), p.hidden_size(), "dense hidden state");
    double e = 0;
    for (int j = 0; j < p.hidden; ++j) {
        double a = p.hidden_bias[j];
        for (int i = 0; i < p.visible; ++i)
            a += static_cast<double>(p.weights[static_cast<std::size_t>(j) * p.visible + i]) * v.values[i];
        e -= h.values[j] * a;
    }
    for (int i = 0; i < p.visible; ++i) e -= static_cast<double>(p.visible_bias[i]) * v.values[i];
    return e;
}

LayerState propagate_up(const ConvLayerParams& p, const LayerState& v, Propagation mode, Rng& rng) {
    auto x = conv_hidden_input(p, v.values);
    logistic_inplace(x);
    return activate(std::move(x), mode, rng);
}

LayerState propagate_up(const DenseLayerParams& p, const LayerState& v, Propagation mode, Rng& rng) {
    auto x = dense_hidden_input(p, v.values);
    logistic_inplace(x);
    return activate(std::move(x), mode, rng);
}

LayerState propagate_down(const ConvLayerParams& p, const LayerState& h, Propagation mode, Rng& rng) {
    auto x = conv_visible_input(p, h.values);
    logistic_inplace(x);
    return activate(std::move(x), mode, rng);
}

LayerState propagate_down(const DenseLayerParams& p, const LayerState& h, Propagation mode, Rng& rng) {
    auto x = dense_visible_input(p, h.values);
    logistic_inplace(x);
    return activate(std::move(x), mode, rng);
}

std::vector<double> top_hidden_input(const TopLayerParams& p, std::span<const double> features,
                                     std::optional<int> label) {
    require_size(features.size(), static_cast<std::size_t>(p.feature_visible), "top feature state");
    if (label && (*label < 0 || *label >= p.classes))
        throw InvalidArgument("label " + std::to_string(*label) + " outside [0, " + std::to_string(p.classes) + ")");
    const std::size_t L = static_cast<std::size_t>(p.label_units());
    std::vector<double> out(static_cast<std::size_t>(p.hidden));
    for (int j = 0; j < p.hidden; ++j) {
        double a = p.hidden_bias[j] +
                   dot4(&p.feature_weights[static_cast<std::size_t>(j) * p.feature_visible], features.data(),
                        features.size());
        if (label) {
            const float* u = &p.label_weights[j * L + static_cast<std::size_t>(*label) * p.dup];
            for (int d = 0; d < p.dup; ++d) a += u[d];
        }
        out[j] = a;
    }
    return out;
}

std::vector<double> top_label_input(const TopLayerParams& p, std::span<const double> hidden) {
    require_size(hidden.size(), static_cast<std::size_t>(p.hidden), "top hidden state");
    const std::size_t L = static_cast<std::size_t>(p.label_units());
    std::vector<double> unit(L);
    for (std::size_t u = 0; u < L; ++u) unit[u] = p.label_bias[u];
    for (int j = 0; j < p.hidden; ++j) {
        const double hv = hidden[j];
        if (hv == 0) continue;
        const float* w = &p.label_weights[j * L];
        for (std::size_t u = 0; u < L; ++u) unit[u] += hv * w[u];
    }
    std::vector<double> group(static_cast<std::size_t>(p.classes), 0.0);
    for (std::size_t u = 0; u < L; ++u) group[u / p.dup] += unit[u];
    return group;
}

std::vector<double> top_feature_input(const TopLayerParams& p, std::span<const double> hidden) {
    require_size(hidden.size(), static_cast<std::size_t>(p.hidden), "top hidden state");
    std::vector<double> out(p.feature_bias.begin(), p.feature_bias.end());
    for (int j = 0; j < p.hidden; ++j) {
        const double hv = hidden[j];
        if (hv == 0.0) continue;
        const float* w = &p.feature_weights[static_cast<std::size_t>(j) * p.feature_visible];
        for (int i = 0; i < p.feature_visible; ++i) out[i] += hv * w[i];
    }
    return out;
}

namespace {

LabelDistribution softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    LabelDistribution d{std::vector<double>(logits.size())};
    double sum = 0;
    for (std::size_t k = 0; k < logits.size(); ++k) sum += d.probs[k] = std::exp(logits[k] - mx);
    for (auto& p : d.probs) p /= sum;
    return d;
}

// log of the unnormalized p(y = k, features) with hidden units summed out,
// excluding the feature-bias term shared by all classes.
std::vector<double> label_log_scores(const TopLayerParams& p, std::span<const double> features) {
    const auto base = top_hidden_input(p, features, std::nullopt);
    const std::size_t L = static_cast<std::size_t>(p.label_units());
    std::vector<double> scores(static_cast<std::size_t>(p.classes), 0.0);
    for (int k = 0; k < p.classes; ++k) {
        double s = 0;
        for (int d = 0; d < p.dup; ++d) s += p.label_bias[static_cast<std::size_t>(k) * p.dup + d];
        for (int j = 0; j < p.hidden; ++j) {
            double a = base[j];
            const float* u = &p.label_weights[j * L + static_cast<std::size_t>(k) * p.dup];
            for (int d = 0; d < p.dup; ++d) a += u[d];
            s += softplus(a);
        }
        scores[k] = s;
    }
    return scores;
}

} // namespace

LabelDistribution label_posterior(const TopLayerParams& p, std::span<const double> features) {
    return softmax(label_log_scores(p, features));
}

double top_free_energy(const TopLayerParams& p, std::span<const double> features) {
    const auto scores = label_log_scores(p, features);
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0;
    for (double s : scores) sum += std::exp(s - mx);
    double bias_term = 0;
    for (int i = 0; i < p.feature_visible; ++i) bias_term += static_cast<double>(p.feature_bias[i]) * features[i];
    return -bias_term - (mx + std::log(sum));
}

int sample_category(const LabelDistribution& dist, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0;
    for (int k = 0; k < dist.classes(); ++k) {
        acc += dist.probs[k];
        if (u < acc) return k;
    }
    return dist.classes() - 1;
}

TopStep top_joint_step(const TopLayerParams& p, const LayerState& features, std::optional<int> label,
                       bool clamp_label, Rng& rng) {
    if (clamp_label && !label) throw InvalidArgument("cannot clamp a missing label");
    auto hin = top_hidden_input(p, features.values, label);
    std::vector<double> hprob(hin.size());
    for (std::size_t j = 0; j < hin.size(); ++j) hprob[j] = logistic(hin[j]);
    TopStep step;
    step.hidden = activate(std::move(hprob), Propagation::Sample, rng);
    step.dist = softmax(top_label_input(p, step.hidden.values));
    if (clamp_label) {
        step.label = *label;
    } else {
        step.label = sample_category(step.dist, rng);
    }
    auto fin = top_feature_input(p, step.hidden.values);
    logistic_inplace(fin);
    step.features = activate(std::move(fin), Propagation::Sample, rng);
    return step;
}

} // namespace shapenet
