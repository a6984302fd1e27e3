#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "shapenet/rng.hpp"

namespace shapenet {

/// Unit activations of one layer: binary samples or real-valued means.
struct LayerState {
    std::vector<double> values;
    bool sampled = false;

    std::size_t size() const { return values.size(); }
    /// Binary states must be 0/1, means must lie in [0, 1].
    bool valid() const;
};

enum class Propagation { Mean, Sample };

/// One convolutional RBM. Visible units form `in_channels` cubes of side
/// `visible_extent`; hidden units form `out_channels` cubes of side
/// (visible_extent - kernel) / stride + 1. Filters are applied as
/// cross-correlation; every visible unit has its own bias, hidden units share
/// one bias per channel.
struct ConvLayerParams {
    int out_channels = 0;
    int in_channels = 0;
    int kernel = 0;
    int stride = 1;
    int visible_extent = 0;
    std::vector<float> filters;      ///< [out][in][k][k][k], x fastest
    std::vector<float> hidden_bias;  ///< one per output channel
    std::vector<float> visible_bias; ///< one per visible unit

    ConvLayerParams() = default;
    /// Throws InvalidArgument unless the stride tiles the visible extent exactly.
    ConvLayerParams(int out_channels, int in_channels, int kernel, int stride, int visible_extent);

    int hidden_extent() const { return (visible_extent - kernel) / stride + 1; }
    std::size_t filter_volume() const { return static_cast<std::size_t>(kernel) * kernel * kernel; }
    std::size_t visible_size() const {
        return static_cast<std::size_t>(in_channels) * visible_extent * visible_extent * visible_extent;
    }
    std::size_t hidden_size() const {
        const auto m = static_cast<std::size_t>(hidden_extent());
        return static_cast<std::size_t>(out_channels) * m * m * m;
    }
    bool operator==(const ConvLayerParams&) const = default;
};

/// Fully connected RBM; weights are [hidden][visible].
struct DenseLayerParams {
    int hidden = 0;
    int visible = 0;
    std::vector<float> weights;
    std::vector<float> hidden_bias;
    std::vector<float> visible_bias;

    DenseLayerParams() = default;
    DenseLayerParams(int hidden, int visible);

    std::size_t visible_size() const { return static_cast<std::size_t>(visible); }
    std::size_t hidden_size() const { return static_cast<std::size_t>(hidden); }
    bool operator==(const DenseLayerParams&) const = default;
};

/// Top associative RBM over Bernoulli features and a one-of-K label whose
/// units are replicated `dup` times. The replicas of a class share one value
/// but keep their own weights and biases.
struct TopLayerParams {
    int hidden = 0;
    int feature_visible = 0;
    int classes = 0;
    int dup = 1;
    std::vector<float> feature_weights; ///< [hidden][feature_visible]
    std::vector<float> label_weights;   ///< [hidden][classes * dup]
    std::vector<float> hidden_bias;
    std::vector<float> feature_bias;
    std::vector<float> label_bias;      ///< [classes * dup]

    TopLayerParams() = default;
    TopLayerParams(int hidden, int feature_visible, int classes, int dup);

    int label_units() const { return classes * dup; }
    bool operator==(const TopLayerParams&) const = default;
};

/// Softmax classifier used by discriminative fine-tuning; weights are [classes][inputs].
struct ClassifierHead {
    int classes = 0;
    int inputs = 0;
    std::vector<float> weights;
    std::vector<float> bias;

    bool operator==(const ClassifierHead&) const = default;
};

struct ConvSpec {
    int filters;
    int kernel;
    int stride;
};

struct Architecture {
    int grid_extent = 30;
    std::vector<ConvSpec> convs;
    int dense_hidden = 1200;
    int top_hidden = 4000;
    int classes = 10;
    int dup = 10;

    /// 30^3 input; 48 filters 6^3 stride 2, 160 filters 5^3 stride 2,
    /// 512 filters 4^3 stride 1, 1200 dense units, 4000 top units.
    static Architecture paper(int classes);
    /// 16^3 input; 8 filters 4^3 stride 2, 16 filters 3^3 stride 1, 64 dense, 128 top.
    static Architecture desk(int classes);
};

struct NetworkParams {
    std::vector<ConvLayerParams> convs;
    DenseLayerParams dense;
    TopLayerParams top;
    std::optional<ClassifierHead> head;

    int classes() const { return top.classes; }
    int grid_extent() const { return convs.empty() ? 0 : convs.front().visible_extent; }
    /// Throws InvalidArgument unless adjacent layers compose.
    void validate() const;
    Architecture architecture() const;
    bool operator==(const NetworkParams&) const = default;
};

/// Weights drawn from Normal(0, weight_std), biases zero.
NetworkParams make_network(const Architecture& arch, std::uint64_t seed, double weight_std = 0.01);

struct LabelDistribution {
    std::vector<double> probs;

    int classes() const { return static_cast<int>(probs.size()); }
    /// Lowest index among the maxima.
    int argmax() const;
    /// Throws unless probabilities are non-negative and sum to 1 within 1e-6.
    void validate() const;
};

// Raw pre-activations (net inputs including biases).
std::vector<double> conv_hidden_input(const ConvLayerParams& p, std::span<const double> visible);
std::vector<double> conv_visible_input(const ConvLayerParams& p, std::span<const double> hidden);
std::vector<double> dense_hidden_input(const DenseLayerParams& p, std::span<const double> visible);
std::vector<double> dense_visible_input(const DenseLayerParams& p, std::span<const double> hidden);

/// Energy of a convolutional layer: -sum_f sum_j h_j^f ((W^f * v)_j + c^f) - sum_l b_l v_l.
double conv_energy(const ConvLayerParams& p, const LayerState& v, const LayerState& h);
double dense_energy(const DenseLayerParams& p, const LayerState& v, const LayerState& h);

/// Hidden probabilities logistic(W * v + c); Sample mode draws Bernoulli states.
LayerState propagate_up(const ConvLayerParams& p, const LayerState& v, Propagation mode, Rng& rng);
LayerState propagate_up(const DenseLayerParams& p, const LayerState& v, Propagation mode, Rng& rng);
/// Visible probabilities logistic(sum_f W^f (x) h^f + b), the transposed strided convolution.
LayerState propagate_down(const ConvLayerParams& p, const LayerState& h, Propagation mode, Rng& rng);
LayerState propagate_down(const DenseLayerParams& p, const LayerState& h, Propagation mode, Rng& rng);

/// Converts probabilities into a LayerState, sampling when requested.
LayerState activate(std::vector<double> probs, Propagation mode, Rng& rng);
/// In-place logistic over net inputs.
void logistic_inplace(std::vector<double>& x);

/// Top-layer hidden net input, with the label block contributing only when given.
std::vector<double> top_hidden_input(const TopLayerParams& p, std::span<const double> features,
                                     std::optional<int> label);
/// Per-class input of the label groups given hidden states, summed over replicas.
std::vector<double> top_label_input(const TopLayerParams& p, std::span<const double> hidden);
std::vector<double> top_feature_input(const TopLayerParams& p, std::span<const double> hidden);

/// p(y | features) with the top hidden units summed out analytically.
LabelDistribution label_posterior(const TopLayerParams& p, std::span<const double> features);
/// Free energy of the features with the label marginalized.
double top_free_energy(const TopLayerParams& p, std::span<const double> features);

/// Draws one category index from the distribution.
int sample_category(const LabelDistribution& dist, Rng& rng);

struct TopStep {
    LayerState hidden;      ///< sampled top hidden units
    LayerState features;    ///< sampled feature units
    LabelDistribution dist; ///< softmax over the label groups given `hidden`
    int label = 0;
};

/// One alternating Gibbs step on the top RBM: sample hidden units from
/// (features, label), then the label as one multinomial over the K groups and
/// the features. With clamp_label the label stays fixed.
TopStep top_joint_step(const TopLayerParams& p, const LayerState& features, std::optional<int> label,
                       bool clamp_label, Rng& rng);

double logistic(double x);
double softplus(double x);

} // namespace shapenet
