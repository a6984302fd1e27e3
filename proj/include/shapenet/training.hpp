#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shapenet/cdbn.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

struct TrainConfig {
    double learning_rate = 0.01;     // conv layers
    double dense_learning_rate = 0.01;
    double top_learning_rate = 0.001;
    double momentum = 0.9;
    double initial_momentum = 0.5;
    int momentum_switch_epoch = 5;   // epochs run with initial_momentum
    double weight_decay = 1e-4;
    int cd_k = 1;
    int batch_size = 32;
    int epochs_per_layer = 10;
    int top_epochs = 10;
    double sparsity_target = 0.02;
    double sparsity_weight = 0.1;
    double fpcd_fast_decay = 0.95;
    double fpcd_fast_lr = 0.001;
    int persistent_chains = 32;
    int finetune_epochs = 5;
    double finetune_learning_rate = 0.001;
    int discriminative_epochs = 10;
    double discriminative_learning_rate = 0.05;
    std::uint64_t seed = 1;

    /// Throws InvalidArgument on out-of-range values.
    void validate() const;
};

/// Per-tensor sums in double mirroring one layer's parameter vectors.
struct GradientAccumulator {
    std::vector<std::vector<double>> tensors;
    std::size_t samples = 0;

    double norm() const;
    void clear();
};

// Parameter tensors in a fixed order: weights first, then biases.
std::vector<std::vector<float>*> parameter_tensors(ConvLayerParams& p);
std::vector<std::vector<float>*> parameter_tensors(DenseLayerParams& p);
std::vector<std::vector<float>*> parameter_tensors(TopLayerParams& p);

GradientAccumulator make_accumulator(const ConvLayerParams& p);
GradientAccumulator make_accumulator(const DenseLayerParams& p);
GradientAccumulator make_accumulator(const TopLayerParams& p);

struct CdDiagnostics {
    double recon_xent = 0;
    double mean_hidden = 0;
    double grad_norm = 0;
    std::size_t active_positions = 0;
};

/// Unnormalized <v h>_data - <v h>_recon after k Gibbs steps.
GradientAccumulator cd_gradient(const DenseLayerParams& p, std::span<const LayerState> batch, int cd_k, Rng& rng);

/// CD-k on one batch. `velocity` carries momentum across calls.
CdDiagnostics cd_step(ConvLayerParams& layer, GradientAccumulator& velocity, std::span<const LayerState> batch,
                      const TrainConfig& cfg, double momentum, Rng& rng);
CdDiagnostics cd_step(DenseLayerParams& layer, GradientAccumulator& velocity, std::span<const LayerState> batch,
                      const TrainConfig& cfg, double momentum, Rng& rng);

/// CD-k for the first conv layer: hidden positions whose receptive field is
/// all zero are masked out of both phases, and the sparsity penalty pulls the
/// mean activation of each filter toward cfg.sparsity_target.
CdDiagnostics masked_sparse_cd_step(ConvLayerParams& layer, GradientAccumulator& velocity,
                                    std::span<const LayerState> batch, const TrainConfig& cfg, double momentum,
                                    Rng& rng);

struct TopChain {
    std::vector<double> features;
    int label = 0;
};

/// CD-k on the top RBM with the learning rate cfg.top_learning_rate.
CdDiagnostics cd_step(TopLayerParams& top, GradientAccumulator& velocity, std::span<const LayerState> features,
                      std::span<const int> labels, const TrainConfig& cfg, double momentum, Rng& rng);

struct FpcdState {
    TopLayerParams fast;
    std::vector<TopChain> chains;
    GradientAccumulator velocity;
};

/// Zero fast weights and `chains` persistent chains started at random data items.
FpcdState init_fpcd_state(const TopLayerParams& top, std::span<const LayerState> features, std::span<const int> labels,
                          int chains, Rng& rng);

/// fast <- decay * fast + fast_lr * grad, where grad is normalized per tensor.
void update_fast_weights(TopLayerParams& fast, const GradientAccumulator& grad, const TrainConfig& cfg);

/// Positive statistics from the batch, negative statistics from the
/// persistent chains advanced one step under (regular + fast) weights.
/// With reset_chains_to_data the chains restart at the batch.
CdDiagnostics fpcd_step(TopLayerParams& top, FpcdState& state, std::span<const LayerState> features,
                        std::span<const int> labels, const TrainConfig& cfg, double momentum, Rng& rng,
                        bool reset_chains_to_data = false);

struct EpochDiagnostics {
    int epoch = 0; // 1-based
    int layer = 0; // 1-based, the top RBM is last
    double recon_xent = 0;
    double mean_hidden_act = 0;
    double grad_norm = 0;
};

using DiagnosticsSink = std::function<void(const EpochDiagnostics&)>;

std::string diagnostics_csv_header();
std::string diagnostics_csv_line(const EpochDiagnostics& d);

double momentum_for_epoch(const TrainConfig& cfg, int epoch);

/// Greedy layer-wise pretraining: layer 1 with masked sparse CD, the other
/// conv layers and the dense layer with CD on the means of the layer below,
/// and the top RBM with FPCD on (dense means, labels).
NetworkParams pretrain(NetworkParams net, const std::vector<VoxelGrid>& grids, const std::vector<int>& labels,
                       const TrainConfig& cfg, const DiagnosticsSink& sink = {});

/// Tensors read by the recognition and generation passes, recorded for the tied-weight check.
struct WakeSleepTrace {
    std::vector<const float*> recognition;
    std::vector<const float*> generation;
};

/// Tied-weight wake-sleep: a stochastic bottom-up pass gives positive
/// statistics, persistent top chains plus a stochastic top-down pass give
/// negative statistics, and one weight set per layer receives the difference.
NetworkParams wake_sleep_finetune(NetworkParams net, const std::vector<VoxelGrid>& grids,
                                  const std::vector<int>& labels, const TrainConfig& cfg,
                                  const DiagnosticsSink& sink = {}, WakeSleepTrace* trace = nullptr);

/// Shuffled visiting order for one epoch.
std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng);

} // namespace shapenet
