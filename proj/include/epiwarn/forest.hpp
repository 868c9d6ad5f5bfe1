#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "epiwarn/io_util.hpp"
#include "epiwarn/prng.hpp"

namespace epiwarn {

struct ForestHyper {
    int n_trees = 300;
    int min_leaf = 2; // nodes with fewer samples become leaves

    void validate() const {
        if (n_trees < 1) throw ConfigError("earlywarn.n_trees: must be >= 1");
        if (min_leaf < 1) throw ConfigError("earlywarn.min_leaf: must be >= 1");
    }
};

// feature < 0 marks a leaf; counts hold the bootstrap class totals there.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double n0 = 0.0;
    double n1 = 0.0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
};

struct ForestModel {
    std::string version = "epiwarn-forest-1";
    ForestHyper hyper;
    std::uint64_t seed = 0;
    int n_features = 0;
    std::vector<std::string> feature_names;
    std::vector<DecisionTree> trees;
};

inline double gini_impurity(double c0, double c1) {
    const double n = c0 + c1;
    if (n <= 0.0) return 0.0;
    const double p0 = c0 / n, p1 = c1 / n;
    return 1.0 - (p0 * p0 + p1 * p1);
}

namespace detail {

struct TreeBuilder {
    const std::vector<std::vector<double>>& x;
    const std::vector<int>& y;
    int n_features;
    int mtry;
    int min_leaf;
    Pcg32& rng;
    DecisionTree tree;
    std::vector<int> feature_pool;

    // Nodes are created in DFS order, left subtree first; every random draw
    // is tied to that order, so trees are a pure function of their seed.
    int build(std::vector<int>& samples) {
        double c0 = 0.0, c1 = 0.0;
        for (int idx : samples) (y[static_cast<std::size_t>(idx)] == 1 ? c1 : c0) += 1.0;

        const int node_index = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        tree.nodes[static_cast<std::size_t>(node_index)].n0 = c0;
        tree.nodes[static_cast<std::size_t>(node_index)].n1 = c1;
        if (c0 == 0.0 || c1 == 0.0 || static_cast<int>(samples.size()) < min_leaf)
            return node_index;

        // mtry candidate features without replacement, scanned in ascending
        // index order so ties resolve to the lowest feature, then the lowest
        // threshold.
        for (int i = 0; i < mtry; ++i) {
            const int j = i + static_cast<int>(rng.bounded(static_cast<std::uint32_t>(n_features - i)));
            std::swap(feature_pool[static_cast<std::size_t>(i)], feature_pool[static_cast<std::size_t>(j)]);
        }
        std::vector<int> candidates(feature_pool.begin(), feature_pool.begin() + mtry);
        std::sort(candidates.begin(), candidates.end());

        const double parent_gini = gini_impurity(c0, c1);
        const double n = c0 + c1;
        int best_feature = -1;
        double best_threshold = 0.0;
        double best_decrease = 0.0;

        std::vector<std::pair<double, int>> sorted;
        sorted.reserve(samples.size());
        for (int f : candidates) {
            sorted.clear();
            for (int idx : samples)
                sorted.emplace_back(x[static_cast<std::size_t>(idx)][static_cast<std::size_t>(f)],
                                    y[static_cast<std::size_t>(idx)]);
            std::sort(sorted.begin(), sorted.end());
            double l0 = 0.0, l1 = 0.0;
            for (std::size_t i = 1; i < sorted.size(); ++i) {
                (sorted[i - 1].second == 1 ? l1 : l0) += 1.0;
                if (sorted[i].first == sorted[i - 1].first) continue;
                const double r0 = c0 - l0, r1 = c1 - l1;
                const double nl = l0 + l1, nr = r0 + r1;
                const double decrease = parent_gini - (nl / n) * gini_impurity(l0, l1) -
                                        (nr / n) * gini_impurity(r0, r1);
                if (decrease > best_decrease) {
                    best_decrease = decrease;
                    best_feature = f;
                    best_threshold = 0.5 * (sorted[i - 1].first + sorted[i].first);
                }
            }
        }
        if (best_feature < 0) return node_index; // no impurity-reducing split

        std::vector<int> left, right;
        for (int idx : samples)
            (x[static_cast<std::size_t>(idx)][static_cast<std::size_t>(best_feature)] <= best_threshold
                 ? left
                 : right)
                .push_back(idx);
        samples.clear();
        samples.shrink_to_fit();
        const int left_index = build(left);
        const int right_index = build(right);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left_index;
        node.right = right_index;
        return node_index;
    }
};

} // namespace detail

// Bootstrap-aggregated Gini trees; each tree's randomness derives only from
// (seed, tree index), so training is reproducible and trees are independent.
inline ForestModel train_forest(const std::vector<std::vector<double>>& x,
                                const std::vector<int>& y, const ForestHyper& hyper,
                                std::uint64_t seed, std::vector<std::string> feature_names) {
    hyper.validate();
    if (x.size() != y.size()) throw DataError("train_forest: feature/label size mismatch");
    if (x.size() < 2) throw DataError("train_forest: need at least 2 samples");
    const int n = static_cast<int>(x.size());
    const int f_count = static_cast<int>(x[0].size());
    for (const auto& row : x)
        if (static_cast<int>(row.size()) != f_count)
            throw DataError("train_forest: ragged feature matrix");
    if (!feature_names.empty() && static_cast<int>(feature_names.size()) != f_count)
        throw DataError("train_forest: feature name count mismatch");
    bool has0 = false, has1 = false;
    for (int label : y) {
        if (label == 0) has0 = true;
        else if (label == 1) has1 = true;
        else throw DataError("train_forest: labels must be 0/1");
    }
    if (!has0 || !has1) throw DataError("train_forest: single-class training set");

    ForestModel model;
    model.hyper = hyper;
    model.seed = seed;
    model.n_features = f_count;
    model.feature_names = std::move(feature_names);
    model.trees.resize(static_cast<std::size_t>(hyper.n_trees));

    const int mtry = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(f_count)))));
    for (int t = 0; t < hyper.n_trees; ++t) {
        Pcg32 rng(derive_seed(seed, static_cast<std::uint64_t>(t), 0xF0857u));
        std::vector<int> bootstrap(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            bootstrap[static_cast<std::size_t>(i)] =
                static_cast<int>(rng.bounded(static_cast<std::uint32_t>(n)));
        detail::TreeBuilder builder{x, y, f_count, mtry, hyper.min_leaf, rng, {}, {}};
        builder.feature_pool.resize(static_cast<std::size_t>(f_count));
        std::iota(builder.feature_pool.begin(), builder.feature_pool.end(), 0);
        builder.build(bootstrap);
        model.trees[static_cast<std::size_t>(t)] = std::move(builder.tree);
    }
    return model;
}

inline double tree_positive_fraction(const DecisionTree& tree, std::span<const double> features) {
    int node = 0;
    while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
        node = features[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(node)];
    return leaf.n1 / (leaf.n0 + leaf.n1);
}

// Mean over trees of the leaf positive-class frequency.
inline double predict_proba(const ForestModel& model, std::span<const double> features) {
    if (static_cast<int>(features.size()) != model.n_features)
        throw DataError("predict_proba: feature length mismatch");
    double sum = 0.0;
    for (const DecisionTree& tree : model.trees) sum += tree_positive_fraction(tree, features);
    return sum / static_cast<double>(model.trees.size());
}

// Gini impurity decrease weighted by node sample fraction, averaged over
// trees and normalized to sum 1 across all features.
inline std::vector<double> feature_importances(const ForestModel& model) {
    std::vector<double> imp(static_cast<std::size_t>(model.n_features), 0.0);
    for (const DecisionTree& tree : model.trees) {
        if (tree.nodes.empty()) continue;
        const double n_root = tree.nodes[0].n0 + tree.nodes[0].n1;
        for (const TreeNode& node : tree.nodes) {
            if (node.feature < 0) continue;
            const TreeNode& l = tree.nodes[static_cast<std::size_t>(node.left)];
            const TreeNode& r = tree.nodes[static_cast<std::size_t>(node.right)];
            const double n = node.n0 + node.n1;
            const double decrease =
                gini_impurity(node.n0, node.n1) -
                ((l.n0 + l.n1) / n) * gini_impurity(l.n0, l.n1) -
                ((r.n0 + r.n1) / n) * gini_impurity(r.n0, r.n1);
            imp[static_cast<std::size_t>(node.feature)] += (n / n_root) * decrease;
        }
    }
    for (double& v : imp) v /= static_cast<double>(model.trees.size());
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0)
        for (double& v : imp) v /= total;
    return imp;
}

// Forest file: version, hyperparameters, feature names, and flattened node
// arrays [feature, threshold, left, right, n0, n1] per tree; thresholds keep
// 17 significant digits.
inline std::string forest_to_json(const ForestModel& model) {
    std::string out = "{\n";
    out += "  \"version\": \"" + model.version + "\",\n";
    out += "  \"n_trees\": " + std::to_string(model.hyper.n_trees) + ",\n";
    out += "  \"min_leaf\": " + std::to_string(model.hyper.min_leaf) + ",\n";
    out += "  \"seed\": " + std::to_string(model.seed) + ",\n";
    out += "  \"n_features\": " + std::to_string(model.n_features) + ",\n";
    out += "  \"feature_names\": [";
    for (std::size_t i = 0; i < model.feature_names.size(); ++i)
        out += (i ? ", \"" : "\"") + model.feature_names[i] + "\"";
    out += "],\n";
    out += "  \"trees\": [\n";
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        out += "    [";
        const auto& nodes = model.trees[t].nodes;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const TreeNode& nd = nodes[i];
            out += i ? ", [" : "[";
            out += std::to_string(nd.feature) + ", " + fmt_g17(nd.threshold) + ", " +
                   std::to_string(nd.left) + ", " + std::to_string(nd.right) + ", " +
                   fmt_g17(nd.n0) + ", " + fmt_g17(nd.n1) + "]";
        }
        out += t + 1 < model.trees.size() ? "],\n" : "]\n";
    }
    out += "  ]\n}\n";
    return out;
}

inline void save_forest(const std::filesystem::path& path, const ForestModel& model) {
    write_text_file(path, forest_to_json(model));
}

inline ForestModel load_forest(const std::filesystem::path& path) {
    const nlohmann::json j = load_json_file(path);
    ForestModel model;
    try {
        model.version = j.at("version").get<std::string>();
        model.hyper.n_trees = j.at("n_trees").get<int>();
        model.hyper.min_leaf = j.at("min_leaf").get<int>();
        model.seed = j.at("seed").get<std::uint64_t>();
        model.n_features = j.at("n_features").get<int>();
        model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        for (const auto& tj : j.at("trees")) {
            DecisionTree tree;
            for (const auto& nj : tj) {
                TreeNode nd;
                nd.feature = nj.at(0).get<int>();
                nd.threshold = nj.at(1).get<double>();
                nd.left = nj.at(2).get<int>();
                nd.right = nj.at(3).get<int>();
                nd.n0 = nj.at(4).get<double>();
                nd.n1 = nj.at(5).get<double>();
                tree.nodes.push_back(nd);
            }
            if (tree.nodes.empty()) throw DataError("forest file: empty tree");
            model.trees.push_back(std::move(tree));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("forest file " + path.string() + ": " + e.what());
    }
    if (static_cast<int>(model.trees.size()) != model.hyper.n_trees)
        throw DataError("forest file " + path.string() + ": tree count mismatch");
    return model;
}

} // namespace epiwarn
