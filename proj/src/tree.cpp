#include "edl/tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edl {

namespace {

double gini(std::span<const int> counts, int total) {
    double g = 1.0;
    for (int c : counts) {
        const double p = static_cast<double>(c) / total;
        g -= p * p;
    }
    return g;
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

struct Builder {
    const TabularDataset& data;
    int max_depth;
    int features_per_split;
    SeededRng& rng;
    std::vector<TreeNode> nodes;
    int depth_reached = 0;

    int make_leaf(std::span<const std::size_t> indices) {
        std::vector<double> freqs(data.num_classes, 0.0);
        for (std::size_t i : indices) freqs[data.labels[i]] += 1.0;
        for (double& f : freqs) f /= static_cast<double>(indices.size());
        pad_row(freqs, kLeafPadEpsilon);
        TreeNode node;
        node.leaf_probs = std::move(freqs);
        nodes.push_back(std::move(node));
        return static_cast<int>(nodes.size()) - 1;
    }

    SplitChoice best_split(std::span<const std::size_t> indices) {
        const int total = static_cast<int>(indices.size());
        std::vector<int> counts(data.num_classes, 0);
        for (std::size_t i : indices) ++counts[data.labels[i]];
        const double parent_impurity = gini(counts, total);

        std::vector<std::size_t> feats =
            rng.sample_without_replacement(data.num_features(), features_per_split);
        std::sort(feats.begin(), feats.end());  // scan order fixes the tie-break

        SplitChoice best;
        std::vector<std::pair<double, int>> sorted(total);
        std::vector<int> left_counts(data.num_classes);
        for (std::size_t f : feats) {
            for (int i = 0; i < total; ++i)
                sorted[i] = {data.features.at(indices[i], f), data.labels[indices[i]]};
            std::sort(sorted.begin(), sorted.end());
            std::fill(left_counts.begin(), left_counts.end(), 0);
            for (int i = 0; i + 1 < total; ++i) {
                ++left_counts[sorted[i].second];
                const double a = sorted[i].first;
                const double b = sorted[i + 1].first;
                if (a == b) continue;
                double threshold = a + 0.5 * (b - a);
                if (threshold >= b) threshold = a;  // midpoint rounded up to b
                const int n_left = i + 1;
                const int n_right = total - n_left;
                double left_impurity = 1.0, right_impurity = 1.0;
                for (int c = 0; c < data.num_classes; ++c) {
                    const double pl = static_cast<double>(left_counts[c]) / n_left;
                    const double pr = static_cast<double>(counts[c] - left_counts[c]) / n_right;
                    left_impurity -= pl * pl;
                    right_impurity -= pr * pr;
                }
                const double gain = parent_impurity -
                                    (n_left * left_impurity + n_right * right_impurity) / total;
                if (gain > best.gain + 1e-12) {
                    best = {true, static_cast<int>(f), threshold, gain};
                }
            }
        }
        if (best.gain <= 1e-12) best.found = false;
        return best;
    }

    int build(std::vector<std::size_t> indices, int depth) {
        depth_reached = std::max(depth_reached, depth);
        bool pure = true;
        for (std::size_t i : indices)
            if (data.labels[i] != data.labels[indices[0]]) {
                pure = false;
                break;
            }
        if (pure || depth >= max_depth || indices.size() < 2) return make_leaf(indices);

        const SplitChoice split = best_split(indices);
        if (!split.found) return make_leaf(indices);

        std::vector<std::size_t> left, right;
        for (std::size_t i : indices) {
            if (data.features.at(i, split.feature) <= split.threshold) left.push_back(i);
            else right.push_back(i);
        }
        indices.clear();
        indices.shrink_to_fit();

        TreeNode node;
        node.feature = split.feature;
        node.threshold = split.threshold;
        nodes.push_back(std::move(node));
        const int self = static_cast<int>(nodes.size()) - 1;
        nodes[self].left = build(std::move(left), depth + 1);
        nodes[self].right = build(std::move(right), depth + 1);
        return self;
    }
};

}  // namespace

DecisionTree fit_tree(const TabularDataset& data, int max_depth, double feature_fraction,
                      SeededRng& rng) {
    data.validate();
    if (data.num_points() < 1) throw std::invalid_argument("fit_tree: empty dataset");
    if (max_depth < 0) throw std::invalid_argument("fit_tree: max_depth must be >= 0");
    if (!(feature_fraction > 0.0 && feature_fraction <= 1.0))
        throw std::invalid_argument("fit_tree: feature_fraction must lie in (0, 1]");

    Builder builder{data, max_depth,
                    std::max(1, static_cast<int>(std::ceil(feature_fraction *
                                                           data.num_features()))),
                    rng, {}, 0};
    std::vector<std::size_t> all(data.num_points());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const int root = builder.build(std::move(all), 0);
    if (root != 0) {
        // build() appends parents before children, so the root is node 0 by
        // construction; keep the check as a structural guard.
        throw std::logic_error("fit_tree: unexpected node layout");
    }
    DecisionTree tree;
    tree.nodes_ = std::move(builder.nodes);
    tree.num_classes_ = data.num_classes;
    tree.depth_ = builder.depth_reached;
    return tree;
}

std::span<const double> DecisionTree::predict_row(std::span<const double> features) const {
    int node = 0;
    while (nodes_[node].feature >= 0) {
        node = features[nodes_[node].feature] <= nodes_[node].threshold ? nodes_[node].left
                                                                        : nodes_[node].right;
    }
    return nodes_[node].leaf_probs;
}

Matrix tree_predict(const DecisionTree& tree, const Matrix& features) {
    Matrix out(features.rows(), tree.num_classes());
    for (std::size_t n = 0; n < features.rows(); ++n) {
        const auto probs = tree.predict_row(features.row(n));
        std::copy(probs.begin(), probs.end(), out.row(n).begin());
    }
    return out;
}

std::vector<DecisionTree> fit_forest(const TabularDataset& data, int num_trees, int max_depth,
                                     double feature_fraction, SeededRng& rng) {
    if (num_trees < 1) throw std::invalid_argument("fit_forest: need at least one tree");
    std::vector<DecisionTree> trees;
    trees.reserve(num_trees);
    for (int t = 0; t < num_trees; ++t) {
        SeededRng tree_rng = rng.child(t);
        trees.push_back(fit_tree(data, max_depth, feature_fraction, tree_rng));
    }
    return trees;
}

PredictionSet forest_predict(std::span<const DecisionTree> trees, const Matrix& features,
                             const std::vector<int>* labels) {
    if (trees.empty()) throw std::invalid_argument("forest_predict: empty forest");
    PredictionSet preds(static_cast<int>(trees.size()), static_cast<int>(features.rows()),
                        trees[0].num_classes());
    for (std::size_t t = 0; t < trees.size(); ++t)
        for (std::size_t n = 0; n < features.rows(); ++n) {
            const auto probs = trees[t].predict_row(features.row(n));
            std::copy(probs.begin(), probs.end(),
                      preds.row(static_cast<int>(t), static_cast<int>(n)).begin());
        }
    if (labels != nullptr) preds.set_labels(*labels);
    return preds;
}

}  // namespace edl
