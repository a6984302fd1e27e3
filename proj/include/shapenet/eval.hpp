#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "shapenet/camera.hpp"
#include "shapenet/cdbn.hpp"
#include "shapenet/nbv.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

using FeatureMatrix = std::vector<std::vector<float>>;

struct SvmConfig {
    double lambda = 1e-4; // regularization, roughly 1 / (C * n)
    int epochs = 60;
    std::uint64_t seed = 1;
};

/// One-vs-rest linear max-margin classifier trained by hinge-loss
/// subgradient descent on standardized features.
class LinearSvm {
public:
    static LinearSvm train(const FeatureMatrix& x, const std::vector<int>& y, int classes, const SvmConfig& cfg);

    std::vector<double> scores(std::span<const float> x) const;
    /// Highest score, lowest index on ties.
    int predict(std::span<const float> x) const;
    int classes() const { return static_cast<int>(weights_.size()); }

private:
    std::vector<double> mean_, scale_;
    std::vector<std::vector<double>> weights_; // [class][dim + 1], bias last
};

struct ClassificationResult {
    std::vector<double> per_category;  ///< accuracy per class present in the test set, NaN otherwise
    double mean_category_accuracy = 0; ///< average over present classes
    double instance_accuracy = 0;
    std::vector<int> predictions;
};

/// Scores predictions against the truth, averaging over categories.
ClassificationResult score_predictions(const std::vector<int>& predictions, const std::vector<int>& truth, int classes);

/// Trains the SVM on the training split and scores the test split.
ClassificationResult eval_classification(const FeatureMatrix& train_x, const std::vector<int>& train_y,
                                         const FeatureMatrix& test_x, const std::vector<int>& test_y, int classes,
                                         const SvmConfig& cfg = {});

struct RankedRetrieval {
    std::size_t query = 0;
    std::vector<std::size_t> ranked; ///< gallery ids, nearest first
    std::vector<double> distances;   ///< non-decreasing
    std::vector<char> relevant;      ///< same category as the query, in ranked order
};

/// Ranks every other item by ascending L2 distance (ties by id).
RankedRetrieval rank_gallery(const FeatureMatrix& features, const std::vector<int>& labels, std::size_t query);

/// Mean of the precision at each relevant position; needs at least one relevant item.
double average_precision(const std::vector<char>& relevant);

/// Recall levels 0.05, 0.10, ..., 1.00.
std::vector<double> standard_recall_levels();
/// Precision at each standard recall level r: the maximum precision at any recall >= r.
std::vector<double> interpolated_precision(const std::vector<char>& relevant);
/// Trapezoid area under the interpolated curve over [0.05, 1], divided by 0.95.
double interpolated_auc(const std::vector<double>& curve);

struct RetrievalResult {
    double auc = 0;
    double map = 0;
    std::size_t queries = 0;
    std::size_t excluded = 0; ///< queries without any relevant item
    std::map<int, std::vector<double>> class_curves; ///< mean interpolated curve per query class
};

RetrievalResult eval_retrieval(const FeatureMatrix& features, const std::vector<int>& labels, int threads = 1);

/// Two-column CSV (recall, precision).
std::string pr_curve_csv(const std::vector<double>& curve);

/// Hamming-distance nearest neighbours over bit-packed training grids.
class KnnVoxelIndex {
public:
    KnnVoxelIndex(const std::vector<VoxelGrid>& train, const std::vector<int>& labels);

    /// Majority label of the k nearest grids; neighbours with equal distance
    /// are taken in training order and label ties go to the lower index.
    int classify(const ObservationGrid& test, std::size_t k) const;
    std::size_t size() const { return labels_.size(); }

private:
    Dims3 dims_;
    std::size_t words_ = 0;
    std::vector<std::uint64_t> bits_;
    std::vector<int> labels_;
};

int knn_voxel_baseline(const std::vector<VoxelGrid>& train, const std::vector<int>& labels,
                       const ObservationGrid& test, std::size_t k);

struct NbvEpisodeSpec {
    VoxelGrid shape;
    int label = 0;
    CameraPose initial;
    std::vector<CameraPose> candidates;
};

struct NbvRow {
    Strategy strategy = Strategy::Random;
    double accuracy = 0;
    std::vector<char> correct;
    std::vector<std::size_t> choices;
};

struct NbvTable {
    std::size_t episodes = 0;
    double single_view_accuracy = 0;
    std::vector<char> single_correct;
    std::vector<NbvRow> rows;
};

/// Random initial view and candidate set per episode, drawn from the
/// candidate generator; `per_class` episodes for each class in order.
std::vector<NbvEpisodeSpec> make_nbv_episodes(const std::vector<VoxelGrid>& shapes, const std::vector<int>& labels,
                                              std::size_t per_class, std::size_t candidates, const GridSpec& spec,
                                              std::uint64_t seed);

/// Two-view accuracy per strategy. Every strategy sees the same initial view
/// and candidate set, and the final classification uses the same seed.
NbvTable eval_nbv(const NetworkParams& net, const std::vector<NbvEpisodeSpec>& episodes,
                  const std::vector<Strategy>& strategies, const NbvBudget& budget, const Intrinsics& in,
                  std::uint64_t seed, int threads = 1);

struct MetricsReport {
    std::vector<double> per_category_accuracy;
    double mean_category_accuracy = 0;
    double retrieval_auc = 0;
    double retrieval_map = 0;
    std::map<std::string, double> nbv_accuracy;
    std::map<std::string, double> extra; ///< additional named scalars
    std::string failed_stage;            ///< empty when every stage completed

    std::string to_json() const;
    std::string to_csv() const;
};

} // namespace shapenet
