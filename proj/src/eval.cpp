#include "shapenet/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "shapenet/error.hpp"
#include "shapenet/inference.hpp"
#include "shapenet/parallel.hpp"
#include <json.hpp>

namespace shapenet {

LinearSvm LinearSvm::train(const FeatureMatrix& x, const std::vector<int>& y, int classes, const SvmConfig& cfg) {
    if (x.empty() || x.size() != y.size()) throw InvalidArgument("SVM needs matching non-empty features and labels");
    if (classes < 2) throw InvalidArgument("classification needs at least two classes");
    if (!(cfg.lambda > 0) || cfg.epochs < 1) throw InvalidArgument("SVM lambda must be positive and epochs >= 1");
    const std::size_t D = x.front().size(), N = x.size();
    std::vector<char> present(static_cast<std::size_t>(classes), 0);
    for (std::size_t i = 0; i < N; ++i) {
        if (x[i].size() != D) throw InvalidArgument("feature vectors differ in length");
        if (y[i] < 0 || y[i] >= classes) throw InvalidArgument("label out of range");
        present[static_cast<std::size_t>(y[i])] = 1;
    }
    for (int k = 0; k < classes; ++k)
        if (!present[static_cast<std::size_t>(k)])
            throw InvalidArgument("class " + std::to_string(k) + " is absent from the training split");

    LinearSvm svm;
    svm.mean_.assign(D, 0.0);
    svm.scale_.assign(D, 1.0);
    for (const auto& row : x)
        for (std::size_t d = 0; d < D; ++d) svm.mean_[d] += row[d];
    for (double& m : svm.mean_) m /= static_cast<double>(N);
    std::vector<double> var(D, 0.0);
    for (const auto& row : x)
        for (std::size_t d = 0; d < D; ++d) var[d] += (row[d] - svm.mean_[d]) * (row[d] - svm.mean_[d]);
    for (std::size_t d = 0; d < D; ++d) {
        const double sd = std::sqrt(var[d] / static_cast<double>(N));
        svm.scale_[d] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    std::vector<std::vector<double>> z(N, std::vector<double>(D + 1, 1.0));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t d = 0; d < D; ++d) z[i][d] = (x[i][d] - svm.mean_[d]) * svm.scale_[d];

    Rng rng(derive_seed(cfg.seed, {0x5f3ULL}));
    svm.weights_.assign(static_cast<std::size_t>(classes), std::vector<double>(D + 1, 0.0));
    for (int k = 0; k < classes; ++k) {
        auto& w = svm.weights_[static_cast<std::size_t>(k)];
        std::uint64_t t = 0;
        for (int e = 0; e < cfg.epochs; ++e) {
            std::vector<std::size_t> order(N);
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = N; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
            for (std::size_t i : order) {
                ++t;
                const double eta = 1.0 / (cfg.lambda * static_cast<double>(t));
                const double target = y[i] == k ? 1.0 : -1.0;
                double margin = 0;
                for (std::size_t d = 0; d <= D; ++d) margin += w[d] * z[i][d];
                margin *= target;
                const double shrink = 1.0 - eta * cfg.lambda;
                for (double& wd : w) wd *= shrink;
                if (margin < 1)
                    for (std::size_t d = 0; d <= D; ++d) w[d] += eta * target * z[i][d];
            }
        }
    }
    return svm;
}

std::vector<double> LinearSvm::scores(std::span<const float> x) const {
    if (x.size() != mean_.size()) throw InvalidArgument("feature length does not match the classifier");
    std::vector<double> s;
    for (const auto& w : weights_) {
        double acc = w.back();
        for (std::size_t d = 0; d < x.size(); ++d) acc += w[d] * (x[d] - mean_[d]) * scale_[d];
        s.push_back(acc);
    }
    return s;
}

int LinearSvm::predict(std::span<const float> x) const {
    const auto s = scores(x);
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

ClassificationResult score_predictions(const std::vector<int>& predictions, const std::vector<int>& truth, int classes) {
    if (predictions.size() != truth.size() || truth.empty())
        throw InvalidArgument("predictions and truth must be non-empty and equal in length");
    std::vector<std::size_t> hit(static_cast<std::size_t>(classes), 0), total(static_cast<std::size_t>(classes), 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= classes) throw InvalidArgument("label out of range");
        ++total[static_cast<std::size_t>(truth[i])];
        if (predictions[i] == truth[i]) {
            ++hit[static_cast<std::size_t>(truth[i])];
            ++correct;
        }
    }
    ClassificationResult r;
    r.predictions = predictions;
    double sum = 0;
    int present = 0;
    for (std::size_t k = 0; k < total.size(); ++k) {
        if (total[k] == 0) {
            r.per_category.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double a = static_cast<double>(hit[k]) / static_cast<double>(total[k]);
        r.per_category.push_back(a);
        sum += a;
        ++present;
    }
    r.mean_category_accuracy = sum / present;
    r.instance_accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    return r;
}

ClassificationResult eval_classification(const FeatureMatrix& train_x, const std::vector<int>& train_y,
                                         const FeatureMatrix& test_x, const std::vector<int>& test_y, int classes,
                                         const SvmConfig& cfg) {
    const LinearSvm svm = LinearSvm::train(train_x, train_y, classes, cfg);
    std::vector<int> pred;
    pred.reserve(test_x.size());
    for (const auto& row : test_x) pred.push_back(svm.predict(row));
    return score_predictions(pred, test_y, classes);
}

RankedRetrieval rank_gallery(const FeatureMatrix& features, const std::vector<int>& labels, std::size_t query) {
    if (features.size() != labels.size()) throw InvalidArgument("features and labels differ in length");
    if (query >= features.size()) throw InvalidArgument("query index out of range");
    const auto& q = features[query];
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (i == query) continue;
        if (features[i].size() != q.size()) throw InvalidArgument("feature vectors differ in length");
        double s = 0;
        for (std::size_t k = 0; k < q.size(); ++k) {
            const double diff = static_cast<double>(features[i][k]) - q[k];
            s += diff * diff;
        }
        d.emplace_back(std::sqrt(s), i);
    }
    std::sort(d.begin(), d.end());
    RankedRetrieval r;
    r.query = query;
    for (const auto& [dist, id] : d) {
        r.ranked.push_back(id);
        r.distances.push_back(dist);
        r.relevant.push_back(labels[id] == labels[query] ? 1 : 0);
    }
    return r;
}

double average_precision(const std::vector<char>& relevant) {
    double sum = 0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < relevant.size(); ++i)
        if (relevant[i]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    if (hits == 0) throw InvalidArgument("average precision needs at least one relevant item");
    return sum / static_cast<double>(hits);
}

std::vector<double> standard_recall_levels() {
    std::vector<double> r;
    for (int i = 1; i <= 20; ++i) r.push_back(i * 0.05);
    return r;
}

std::vector<double> interpolated_precision(const std::vector<char>& relevant) {
    const auto total = static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), 1));
    if (total == 0) throw InvalidArgument("precision-recall needs at least one relevant item");
    // (recall, precision) at each hit; precision only peaks at hits.
    std::vector<std::pair<double, double>> points;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < relevant.size(); ++i)
        if (relevant[i]) {
            ++hits;
            points.emplace_back(static_cast<double>(hits) / static_cast<double>(total),
                                static_cast<double>(hits) / static_cast<double>(i + 1));
        }
    std::vector<double> curve;
    for (double level : standard_recall_levels()) {
        double best = 0;
        for (const auto& [rec, prec] : points)
            if (rec >= level - 1e-12) best = std::max(best, prec);
        curve.push_back(best);
    }
    return curve;
}

double interpolated_auc(const std::vector<double>& curve) {
    const auto levels = standard_recall_levels();
    if (curve.size() != levels.size()) throw InvalidArgument("curve must have one value per recall level");
    double area = 0;
    for (std::size_t i = 1; i < curve.size(); ++i) area += 0.5 * (curve[i] + curve[i - 1]) * (levels[i] - levels[i - 1]);
    return area / (levels.back() - levels.front());
}

RetrievalResult eval_retrieval(const FeatureMatrix& features, const std::vector<int>& labels, int threads) {
    if (features.size() < 2) throw InvalidArgument("retrieval needs at least two items");
    const std::size_t N = features.size();
    std::vector<double> ap(N, -1), auc(N, -1);
    std::vector<std::vector<double>> curves(N);
    parallel_for(N, threads, [&](std::size_t q) {
        const auto r = rank_gallery(features, labels, q);
        if (std::find(r.relevant.begin(), r.relevant.end(), 1) == r.relevant.end()) return;
        ap[q] = average_precision(r.relevant);
        curves[q] = interpolated_precision(r.relevant);
        auc[q] = interpolated_auc(curves[q]);
    });
    RetrievalResult out;
    std::map<int, std::size_t> per_class;
    for (std::size_t q = 0; q < N; ++q) {
        if (ap[q] < 0) {
            ++out.excluded;
            continue;
        }
        ++out.queries;
        out.map += ap[q];
        out.auc += auc[q];
        auto& c = out.class_curves[labels[q]];
        if (c.empty()) c.assign(curves[q].size(), 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += curves[q][i];
        ++per_class[labels[q]];
    }
    if (out.queries == 0) throw InvalidArgument("no query has a relevant gallery item");
    out.map /= static_cast<double>(out.queries);
    out.auc /= static_cast<double>(out.queries);
    for (auto& [label, c] : out.class_curves)
        for (double& v : c) v /= static_cast<double>(per_class[label]);
    return out;
}

std::string pr_curve_csv(const std::vector<double>& curve) {
    const auto levels = standard_recall_levels();
    std::ostringstream s;
    s.precision(9);
    s << "recall,precision\n";
    for (std::size_t i = 0; i < curve.size() && i < levels.size(); ++i) s << levels[i] << ',' << curve[i] << '\n';
    return s.str();
}

KnnVoxelIndex::KnnVoxelIndex(const std::vector<VoxelGrid>& train, const std::vector<int>& labels) : labels_(labels) {
    if (train.empty()) throw InvalidArgument("k-NN needs a non-empty training set");
    if (train.size() != labels.size()) throw InvalidArgument("grids and labels differ in length");
    dims_ = train.front().dims();
    words_ = (dims_.volume() + 63) / 64;
    bits_.assign(words_ * train.size(), 0);
    for (std::size_t t = 0; t < train.size(); ++t) {
        if (!(train[t].dims() == dims_)) throw InvalidArgument("training grids differ in dims");
        std::uint64_t* row = bits_.data() + t * words_;
        for (std::size_t i = 0; i < train[t].size(); ++i)
            if (train[t][i]) row[i / 64] |= std::uint64_t{1} << (i % 64);
    }
}

int KnnVoxelIndex::classify(const ObservationGrid& test, std::size_t k) const {
    if (!(test.dims() == dims_)) throw InvalidArgument("test observation dims differ from the training grids");
    if (k < 1 || k > labels_.size()) throw InvalidArgument("k must lie in [1, training size]");
    std::vector<std::uint64_t> q(words_, 0);
    for (std::size_t i = 0; i < test.size(); ++i)
        if (test[i] == VoxelState::Surface) q[i / 64] |= std::uint64_t{1} << (i % 64);
    std::vector<std::pair<std::size_t, std::size_t>> dist(labels_.size());
    for (std::size_t t = 0; t < labels_.size(); ++t) {
        const std::uint64_t* row = bits_.data() + t * words_;
        std::size_t d = 0;
        for (std::size_t w = 0; w < words_; ++w) d += static_cast<std::size_t>(std::popcount(row[w] ^ q[w]));
        dist[t] = {d, t};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < k; ++i) ++votes[labels_[dist[i].second]];
    int best = votes.begin()->first;
    std::size_t best_votes = 0;
    for (const auto& [label, v] : votes)
        if (v > best_votes) best = label, best_votes = v;
    return best;
}

int knn_voxel_baseline(const std::vector<VoxelGrid>& train, const std::vector<int>& labels,
                       const ObservationGrid& test, std::size_t k) {
    return KnnVoxelIndex(train, labels).classify(test, k);
}

std::vector<NbvEpisodeSpec> make_nbv_episodes(const std::vector<VoxelGrid>& shapes, const std::vector<int>& labels,
                                              std::size_t per_class, std::size_t candidates, const GridSpec& spec,
                                              std::uint64_t seed) {
    if (shapes.size() != labels.size() || shapes.empty()) throw InvalidArgument("need matching shapes and labels");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    const double radius = default_view_radius(spec);
    std::vector<NbvEpisodeSpec> out;
    std::uint64_t e = 0;
    for (const auto& [label, ids] : by_class)
        for (std::size_t r = 0; r < per_class; ++r, ++e) {
            NbvEpisodeSpec ep;
            ep.shape = shapes[ids[r % ids.size()]];
            ep.label = label;
            ep.initial = generate_view_candidates(1, radius, derive_seed(seed, {e, 1}), spec).front();
            ep.candidates = generate_view_candidates(candidates, radius, derive_seed(seed, {e, 2}), spec);
            out.push_back(std::move(ep));
        }
    return out;
}

NbvTable eval_nbv(const NetworkParams& net, const std::vector<NbvEpisodeSpec>& episodes,
                  const std::vector<Strategy>& strategies, const NbvBudget& budget, const Intrinsics& in,
                  std::uint64_t seed, int threads) {
    if (episodes.empty()) throw InvalidArgument("need at least one NBV episode");
    if (strategies.empty()) throw InvalidArgument("need at least one strategy");
    budget.validate();
    const std::size_t E = episodes.size(), S = strategies.size();
    NbvTable table;
    table.episodes = E;
    table.single_correct.assign(E, 0);
    std::vector<char> correct(E * S, 0);
    std::vector<std::size_t> choice(E * S, 0);

    parallel_for(E, threads, [&](std::size_t e) {
        const auto& ep = episodes[e];
        const auto eu = static_cast<std::uint64_t>(e);
        const ObservationGrid first = observe(ep.shape, ep.initial, in);
        const std::uint64_t classify_seed = derive_seed(seed, {eu, 7});
        const auto single = classify(net, first, budget.classify_particles, budget.classify_iterations, classify_seed);
        table.single_correct[e] = single.argmax() == ep.label;
        for (std::size_t s = 0; s < S; ++s) {
            const std::uint64_t pick_seed = derive_seed(seed, {eu, 8});
            std::size_t c = 0;
            switch (strategies[s]) {
            case Strategy::MutualInformation:
                c = choose_next_view(net, first, ep.candidates, budget, in, pick_seed).best;
                break;
            case Strategy::Oracle:
                c = oracle_select(net, ep.shape, first, ep.candidates, budget, in, pick_seed);
                break;
            default: c = baseline_select(strategies[s], first, ep.candidates, ep.initial, pick_seed, in); break;
            }
            const auto merged = merge_observations(first, observe(ep.shape, ep.candidates[c], in)).merged;
            const auto dist = classify(net, merged, budget.classify_particles, budget.classify_iterations, classify_seed);
            correct[e * S + s] = dist.argmax() == ep.label;
            choice[e * S + s] = c;
        }
    });

    table.single_view_accuracy =
        static_cast<double>(std::count(table.single_correct.begin(), table.single_correct.end(), 1)) /
        static_cast<double>(E);
    for (std::size_t s = 0; s < S; ++s) {
        NbvRow row;
        row.strategy = strategies[s];
        std::size_t hits = 0;
        for (std::size_t e = 0; e < E; ++e) {
            row.correct.push_back(correct[e * S + s]);
            row.choices.push_back(choice[e * S + s]);
            hits += correct[e * S + s] ? 1 : 0;
        }
        row.accuracy = static_cast<double>(hits) / static_cast<double>(E);
        table.rows.push_back(std::move(row));
    }
    return table;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

} // namespace

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["classification"]["per_category_accuracy"] = nlohmann::json::array();
    for (double a : per_category_accuracy) j["classification"]["per_category_accuracy"].push_back(number_or_null(a));
    j["classification"]["mean_category_accuracy"] = number_or_null(mean_category_accuracy);
    j["retrieval"]["auc"] = number_or_null(retrieval_auc);
    j["retrieval"]["map"] = number_or_null(retrieval_map);
    j["nbv"] = nlohmann::json::object();
    for (const auto& [k, v] : nbv_accuracy) j["nbv"][k] = number_or_null(v);
    j["extra"] = nlohmann::json::object();
    for (const auto& [k, v] : extra) j["extra"][k] = number_or_null(v);
    j["failed_stage"] = failed_stage.empty() ? nlohmann::json(nullptr) : nlohmann::json(failed_stage);
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
    std::ostringstream s;
    s.precision(9);
    s << "metric,value\n";
    for (std::size_t k = 0; k < per_category_accuracy.size(); ++k)
        s << "classification.category_" << k << ',' << per_category_accuracy[k] << '\n';
    s << "classification.mean_category_accuracy," << mean_category_accuracy << '\n';
    s << "retrieval.auc," << retrieval_auc << '\n';
    s << "retrieval.map," << retrieval_map << '\n';
    for (const auto& [k, v] : nbv_accuracy) s << "nbv." << k << ',' << v << '\n';
    for (const auto& [k, v] : extra) s << "extra." << k << ',' << v << '\n';
    if (!failed_stage.empty()) s << "failed_stage," << failed_stage << '\n';
    return s.str();
}

} // namespace shapenet
