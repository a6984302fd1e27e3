#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shapenet/cdbn.hpp"
#include "shapenet/training.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

/// The generative stack read as a feed-forward logistic network
/// (conv layers, dense layer, softmax head), held in double precision.
struct FeedForwardModel {
    struct Conv {
        int out = 0, in = 0, kernel = 0, stride = 1, extent = 0;
        std::vector<double> w; ///< [out][in][k^3]
        std::vector<double> b; ///< [out]
        int hidden_extent() const { return (extent - kernel) / stride + 1; }
    };
    struct Dense {
        int out = 0, in = 0;
        std::vector<double> w; ///< [out][in]
        std::vector<double> b;
    };

    std::vector<Conv> convs;
    Dense dense;
    Dense head;

    /// Copies recognition weights and hidden biases. Without a stored head,
    /// one is drawn from Normal(0, 0.01) using head_seed.
    static FeedForwardModel from_network(const NetworkParams& net, std::uint64_t head_seed);
    void write_to(NetworkParams& net) const;

    /// Every trainable tensor, bottom layer first, weights before biases.
    std::vector<std::vector<double>*> tensors();
    std::vector<const std::vector<double>*> tensors() const;
};

using Gradients = std::vector<std::vector<double>>;

/// Surface = 1, Free and Unknown = 0.
std::vector<double> binarize_observation(const ObservationGrid& obs);

std::vector<double> feedforward_probs(const FeedForwardModel& m, std::span<const double> input);
/// Cross-entropy -ln p(label | input); fills `grad` (same layout as tensors()) when given.
double feedforward_loss(const FeedForwardModel& m, std::span<const double> input, int label, Gradients* grad = nullptr);

/// Minibatch gradient descent on the cross-entropy of the labeled observations.
NetworkParams discriminative_finetune(NetworkParams net, const std::vector<ObservationGrid>& observations,
                                      const std::vector<int>& labels, const TrainConfig& cfg,
                                      const DiagnosticsSink& sink = {});

/// Softmax output of the fine-tuned network; needs a classifier head.
LabelDistribution discriminative_predict(const NetworkParams& net, const ObservationGrid& obs);

/// Dense-layer activations of the feed-forward network for a binarized observation.
std::vector<float> feedforward_features(const NetworkParams& net, const ObservationGrid& obs);

} // namespace shapenet
