#include "shapenet/discriminative.hpp"

#include <algorithm>
#include <cmath>

#include "shapenet/error.hpp"

namespace shapenet {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

void narrow(const std::vector<double>& src, std::vector<float>& dst) {
    dst.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
}

std::vector<double> conv_forward(const FeedForwardModel::Conv& c, const std::vector<double>& a) {
    const int n = c.extent, m = c.hidden_extent(), k = c.kernel, s = c.stride;
    const std::size_t n3 = static_cast<std::size_t>(n) * n * n, m3 = static_cast<std::size_t>(m) * m * m;
    const std::size_t kv = static_cast<std::size_t>(k) * k * k;
    std::vector<double> z(static_cast<std::size_t>(c.out) * m3);
    for (int f = 0; f < c.out; ++f)
        for (int jz = 0; jz < m; ++jz)
            for (int jy = 0; jy < m; ++jy)
                for (int jx = 0; jx < m; ++jx) {
                    double acc = c.b[f];
                    for (int ch = 0; ch < c.in; ++ch) {
                        const double* w = c.w.data() + (static_cast<std::size_t>(f) * c.in + ch) * kv;
                        const double* src = a.data() + ch * n3;
                        for (int oz = 0; oz < k; ++oz)
                            for (int oy = 0; oy < k; ++oy) {
                                const double* row =
                                    src + (static_cast<std::size_t>(jz * s + oz) * n + (jy * s + oy)) * n + jx * s;
                                const double* wr = w + (static_cast<std::size_t>(oz) * k + oy) * k;
                                for (int ox = 0; ox < k; ++ox) acc += wr[ox] * row[ox];
                            }
                    }
                    z[f * m3 + (static_cast<std::size_t>(jz) * m + jy) * m + jx] = sigmoid(acc);
                }
    return z;
}

// Given dL/dz for the conv pre-activations, adds weight and bias gradients and
// returns dL/da for the layer input (when wanted).
std::vector<double> conv_backward(const FeedForwardModel::Conv& c, const std::vector<double>& a,
                                  const std::vector<double>& dz, std::vector<double>& gw, std::vector<double>& gb,
                                  bool need_input_grad) {
    const int n = c.extent, m = c.hidden_extent(), k = c.kernel, s = c.stride;
    const std::size_t n3 = static_cast<std::size_t>(n) * n * n, m3 = static_cast<std::size_t>(m) * m * m;
    const std::size_t kv = static_cast<std::size_t>(k) * k * k;
    std::vector<double> da(need_input_grad ? a.size() : 0, 0.0);
    for (int f = 0; f < c.out; ++f)
        for (int jz = 0; jz < m; ++jz)
            for (int jy = 0; jy < m; ++jy)
                for (int jx = 0; jx < m; ++jx) {
                    const double d = dz[f * m3 + (static_cast<std::size_t>(jz) * m + jy) * m + jx];
                    if (d == 0) continue;
                    gb[f] += d;
                    for (int ch = 0; ch < c.in; ++ch) {
                        const std::size_t wbase = (static_cast<std::size_t>(f) * c.in + ch) * kv;
                        for (int oz = 0; oz < k; ++oz)
                            for (int oy = 0; oy < k; ++oy) {
                                const std::size_t abase =
                                    ch * n3 + (static_cast<std::size_t>(jz * s + oz) * n + (jy * s + oy)) * n + jx * s;
                                const std::size_t wr = wbase + (static_cast<std::size_t>(oz) * k + oy) * k;
                                for (int ox = 0; ox < k; ++ox) {
                                    gw[wr + ox] += d * a[abase + ox];
                                    if (need_input_grad) da[abase + ox] += d * c.w[wr + ox];
                                }
                            }
                    }
                }
    return da;
}

std::vector<double> dense_forward(const FeedForwardModel::Dense& d, std::span<const double> a, bool logistic) {
    std::vector<double> z(static_cast<std::size_t>(d.out));
    for (int j = 0; j < d.out; ++j) {
        const double* row = d.w.data() + static_cast<std::size_t>(j) * d.in;
        double acc = d.b[j];
        for (int i = 0; i < d.in; ++i) acc += row[i] * a[i];
        z[j] = logistic ? sigmoid(acc) : acc;
    }
    return z;
}

std::vector<double> dense_backward(const FeedForwardModel::Dense& d, std::span<const double> a,
                                   const std::vector<double>& dz, std::vector<double>& gw, std::vector<double>& gb) {
    std::vector<double> da(static_cast<std::size_t>(d.in), 0.0);
    for (int j = 0; j < d.out; ++j) {
        const double g = dz[j];
        if (g == 0) continue;
        gb[j] += g;
        const double* row = d.w.data() + static_cast<std::size_t>(j) * d.in;
        double* grow = gw.data() + static_cast<std::size_t>(j) * d.in;
        for (int i = 0; i < d.in; ++i) {
            grow[i] += g * a[i];
            da[i] += g * row[i];
        }
    }
    return da;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0;
    for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
    for (double& x : p) x /= z;
    return p;
}

struct Activations {
    std::vector<std::vector<double>> layers; // input, conv outputs..., dense output
    std::vector<double> probs;
};

Activations forward(const FeedForwardModel& m, std::span<const double> input) {
    const std::size_t expected = m.convs.empty() ? 0
                                                 : static_cast<std::size_t>(m.convs.front().in) * m.convs.front().extent *
                                                       m.convs.front().extent * m.convs.front().extent;
    if (input.size() != expected) throw InvalidArgument("input size does not match the network");
    Activations act;
    act.layers.emplace_back(input.begin(), input.end());
    for (const auto& c : m.convs) act.layers.push_back(conv_forward(c, act.layers.back()));
    act.layers.push_back(dense_forward(m.dense, act.layers.back(), true));
    act.probs = softmax(dense_forward(m.head, act.layers.back(), false));
    return act;
}

} // namespace

FeedForwardModel FeedForwardModel::from_network(const NetworkParams& net, std::uint64_t head_seed) {
    net.validate();
    FeedForwardModel m;
    for (const auto& c : net.convs)
        m.convs.push_back({c.out_channels, c.in_channels, c.kernel, c.stride, c.visible_extent, widen(c.filters),
                           widen(c.hidden_bias)});
    m.dense = {net.dense.hidden, net.dense.visible, widen(net.dense.weights), widen(net.dense.hidden_bias)};
    if (net.head) {
        if (net.head->classes != net.classes() || net.head->inputs != net.dense.hidden)
            throw InvalidArgument("classifier head does not match the network");
        m.head = {net.head->classes, net.head->inputs, widen(net.head->weights), widen(net.head->bias)};
    } else {
        Rng rng(derive_seed(head_seed, {0x4eadULL}));
        m.head.out = net.classes();
        m.head.in = net.dense.hidden;
        m.head.w.resize(static_cast<std::size_t>(m.head.out) * m.head.in);
        for (double& w : m.head.w) w = static_cast<float>(rng.normal(0.0, 0.01));
        m.head.b.assign(static_cast<std::size_t>(m.head.out), 0.0);
    }
    return m;
}

void FeedForwardModel::write_to(NetworkParams& net) const {
    for (std::size_t l = 0; l < convs.size(); ++l) {
        narrow(convs[l].w, net.convs[l].filters);
        narrow(convs[l].b, net.convs[l].hidden_bias);
    }
    narrow(dense.w, net.dense.weights);
    narrow(dense.b, net.dense.hidden_bias);
    ClassifierHead h;
    h.classes = head.out;
    h.inputs = head.in;
    narrow(head.w, h.weights);
    narrow(head.b, h.bias);
    net.head = std::move(h);
}

std::vector<std::vector<double>*> FeedForwardModel::tensors() {
    std::vector<std::vector<double>*> t;
    for (auto& c : convs) {
        t.push_back(&c.w);
        t.push_back(&c.b);
    }
    t.insert(t.end(), {&dense.w, &dense.b, &head.w, &head.b});
    return t;
}

std::vector<const std::vector<double>*> FeedForwardModel::tensors() const {
    auto t = const_cast<FeedForwardModel*>(this)->tensors();
    return {t.begin(), t.end()};
}

std::vector<double> binarize_observation(const ObservationGrid& obs) {
    std::vector<double> x(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) x[i] = obs[i] == VoxelState::Surface ? 1.0 : 0.0;
    return x;
}

std::vector<double> feedforward_probs(const FeedForwardModel& m, std::span<const double> input) {
    return forward(m, input).probs;
}

double feedforward_loss(const FeedForwardModel& m, std::span<const double> input, int label, Gradients* grad) {
    if (label < 0 || label >= m.head.out) throw InvalidArgument("label out of range");
    const Activations act = forward(m, input);
    const double loss = -std::log(std::max(act.probs[label], 1e-300));
    if (!grad) return loss;

    if (grad->empty())
        for (const auto* t : m.tensors()) grad->emplace_back(t->size(), 0.0);
    const std::size_t L = m.convs.size();
    auto& g = *grad;

    std::vector<double> dz = act.probs;
    dz[label] -= 1.0;
    std::vector<double> da = dense_backward(m.head, act.layers[L + 1], dz, g[2 * L + 2], g[2 * L + 3]);

    const auto& hd = act.layers[L + 1];
    for (std::size_t j = 0; j < da.size(); ++j) da[j] *= hd[j] * (1 - hd[j]);
    da = dense_backward(m.dense, act.layers[L], da, g[2 * L], g[2 * L + 1]);

    for (std::size_t l = L; l-- > 0;) {
        const auto& out = act.layers[l + 1];
        for (std::size_t j = 0; j < da.size(); ++j) da[j] *= out[j] * (1 - out[j]);
        da = conv_backward(m.convs[l], act.layers[l], da, g[2 * l], g[2 * l + 1], l > 0);
    }
    return loss;
}

NetworkParams discriminative_finetune(NetworkParams net, const std::vector<ObservationGrid>& observations,
                                      const std::vector<int>& labels, const TrainConfig& cfg,
                                      const DiagnosticsSink& sink) {
    cfg.validate();
    if (observations.empty()) throw InvalidArgument("no labeled observations");
    if (observations.size() != labels.size()) throw InvalidArgument("observations and labels differ in length");
    const int n = net.grid_extent();
    for (const auto& o : observations)
        if (!(o.dims() == Dims3::cube(n))) throw InvalidArgument("observation does not match the network input");

    FeedForwardModel model = FeedForwardModel::from_network(net, cfg.seed);
    std::vector<std::vector<double>> inputs;
    for (const auto& o : observations) inputs.push_back(binarize_observation(o));

    Rng rng(derive_seed(cfg.seed, {0xd15cULL}));
    auto params = model.tensors();
    Gradients velocity;
    for (auto* t : params) velocity.emplace_back(t->size(), 0.0);

    const std::size_t N = inputs.size(), B = static_cast<std::size_t>(cfg.batch_size);
    const int layer_no = static_cast<int>(net.convs.size()) + 3;
    for (int epoch = 1; epoch <= cfg.discriminative_epochs; ++epoch) {
        const double mom = momentum_for_epoch(cfg, epoch);
        const auto order = shuffled_order(N, rng);
        double loss_sum = 0, grad_sum = 0;
        int batches = 0;
        for (std::size_t start = 0; start < N; start += B) {
            const std::size_t end = std::min(N, start + B);
            Gradients g;
            for (std::size_t b = start; b < end; ++b) loss_sum += feedforward_loss(model, inputs[order[b]], labels[order[b]], &g);
            if (!std::isfinite(loss_sum)) throw NumericError("non-finite loss in discriminative fine-tuning");
            double norm = 0;
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t t = 0; t < params.size(); ++t)
                for (std::size_t i = 0; i < params[t]->size(); ++i) {
                    const double gi = g[t][i] * scale;
                    if (!std::isfinite(gi)) throw NumericError("non-finite gradient in discriminative fine-tuning");
                    norm += gi * gi;
                    velocity[t][i] = mom * velocity[t][i] - cfg.discriminative_learning_rate * gi;
                    (*params[t])[i] += velocity[t][i];
                }
            grad_sum += std::sqrt(norm);
            ++batches;
        }
        if (sink) sink({epoch, layer_no, loss_sum / static_cast<double>(N), 0.0, grad_sum / std::max(1, batches)});
    }
    model.write_to(net);
    return net;
}

LabelDistribution discriminative_predict(const NetworkParams& net, const ObservationGrid& obs) {
    if (!net.head) throw InvalidArgument("network has no classifier head");
    const auto model = FeedForwardModel::from_network(net, 0);
    return {feedforward_probs(model, binarize_observation(obs))};
}

std::vector<float> feedforward_features(const NetworkParams& net, const ObservationGrid& obs) {
    const auto model = FeedForwardModel::from_network(net, 0);
    const auto act = forward(model, binarize_observation(obs));
    const auto& d = act.layers.back();
    return {d.begin(), d.end()};
}

} // namespace shapenet
