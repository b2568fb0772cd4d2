#pragma once

#include <span>
#include <vector>

#include "edl/rng.hpp"
#include "edl/simplex.hpp"

namespace edl {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> leaf_probs;  // padded class frequencies, leaves only
};

/// Greedy CART classifier with Gini impurity. Candidate thresholds are
/// midpoints between consecutive sorted distinct feature values; split ties
/// break toward the lowest feature index, then the lowest threshold. At each
/// split ceil(feature_fraction * F) features are sampled without replacement.
/// Leaf frequency vectors are padded with 1e-10 and renormalized.
class DecisionTree {
  public:
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    int num_classes() const { return num_classes_; }
    int depth() const { return depth_; }

    std::span<const double> predict_row(std::span<const double> features) const;

    friend DecisionTree fit_tree(const TabularDataset& data, int max_depth,
                                 double feature_fraction, SeededRng& rng);

  private:
    std::vector<TreeNode> nodes_;
    int num_classes_ = 0;
    int depth_ = 0;
};

inline constexpr double kLeafPadEpsilon = 1e-10;

DecisionTree fit_tree(const TabularDataset& data, int max_depth, double feature_fraction,
                      SeededRng& rng);

/// N x C leaf probabilities for every row.
Matrix tree_predict(const DecisionTree& tree, const Matrix& features);

/// Trees fit on the full dataset with per-tree child RNG streams (tree i
/// draws from rng.child(i)), differing only in their feature subsamples.
std::vector<DecisionTree> fit_forest(const TabularDataset& data, int num_trees, int max_depth,
                                     double feature_fraction, SeededRng& rng);

/// Each tree becomes one ensemble member.
PredictionSet forest_predict(std::span<const DecisionTree> trees, const Matrix& features,
                             const std::vector<int>* labels = nullptr);

}  // namespace edl
