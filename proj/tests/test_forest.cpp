#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <vector>

#include "epiwarn/earlywarn.hpp"
#include "epiwarn/forest.hpp"
#include "epiwarn/prng.hpp"

using namespace epiwarn;

namespace {

// 1-D threshold data with a margin: class 0 in [0, 0.4], class 1 in [0.6, 1].
void separable_toy(std::vector<std::vector<double>>& x, std::vector<int>& y) {
    Pcg32 rng(17);
    for (int i = 0; i < 100; ++i) {
        const int label = i % 2;
        const double v = label == 0 ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0);
        x.push_back({v});
        y.push_back(label);
    }
}

} // namespace

TEST(Gini, WorkedExample) {
    EXPECT_DOUBLE_EQ(gini_impurity(3.0, 1.0), 0.375);
    EXPECT_DOUBLE_EQ(gini_impurity(2.0, 2.0), 0.5);
    EXPECT_DOUBLE_EQ(gini_impurity(4.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(gini_impurity(0.0, 0.0), 0.0);
}

TEST(TrainForest, SeparableToySetPerfectTrainingAccuracy) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_toy(x, y);
    ForestHyper hyper;
    hyper.n_trees = 50;
    const ForestModel model = train_forest(x, y, hyper, 5, {"v"});
    int correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        correct += (predict_proba(model, x[i]) >= 0.5 ? 1 : 0) == y[i];
    EXPECT_EQ(correct, 100);
}

TEST(TrainForest, SeededRetrainingIsByteIdentical) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_toy(x, y);
    ForestHyper hyper;
    hyper.n_trees = 20;
    const ForestModel a = train_forest(x, y, hyper, 9, {"v"});
    const ForestModel b = train_forest(x, y, hyper, 9, {"v"});
    EXPECT_EQ(forest_to_json(a), forest_to_json(b));
    const ForestModel c = train_forest(x, y, hyper, 10, {"v"});
    EXPECT_NE(forest_to_json(a), forest_to_json(c));
}

TEST(TrainForest, TreesDependOnlyOnSeedAndIndex) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_toy(x, y);
    ForestHyper small;
    small.n_trees = 3;
    ForestHyper big;
    big.n_trees = 6;
    const ForestModel a = train_forest(x, y, small, 11, {"v"});
    const ForestModel b = train_forest(x, y, big, 11, {"v"});
    for (int t = 0; t < 3; ++t) {
        const auto& ta = a.trees[static_cast<std::size_t>(t)].nodes;
        const auto& tb = b.trees[static_cast<std::size_t>(t)].nodes;
        ASSERT_EQ(ta.size(), tb.size());
        for (std::size_t i = 0; i < ta.size(); ++i) {
            EXPECT_EQ(ta[i].feature, tb[i].feature);
            EXPECT_EQ(ta[i].threshold, tb[i].threshold);
            EXPECT_EQ(ta[i].n0, tb[i].n0);
            EXPECT_EQ(ta[i].n1, tb[i].n1);
        }
    }
}

TEST(TrainForest, InternalNodesRespectMinLeaf) {
    Pcg32 rng(23);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
        x.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        y.push_back(static_cast<int>(rng.bounded(2)));
    }
    ForestHyper hyper;
    hyper.n_trees = 10;
    hyper.min_leaf = 5;
    const ForestModel model = train_forest(x, y, hyper, 3, {});
    for (const DecisionTree& tree : model.trees)
        for (const TreeNode& node : tree.nodes)
            if (node.feature >= 0) EXPECT_GE(node.n0 + node.n1, 5.0);
}

TEST(TrainForest, RejectsDegenerateInputs) {
    ForestHyper hyper;
    EXPECT_THROW(train_forest({{1.0}}, {1}, hyper, 1, {}), DataError);
    EXPECT_THROW(train_forest({{1.0}, {2.0}}, {1, 1}, hyper, 1, {}), DataError);
    EXPECT_THROW(train_forest({{1.0}, {2.0, 3.0}}, {1, 0}, hyper, 1, {}), DataError);
    EXPECT_THROW(train_forest({{1.0}, {2.0}}, {1, 2}, hyper, 1, {}), DataError);
    EXPECT_THROW(train_forest({{1.0}, {2.0}}, {1, 0}, hyper, 1, {"a", "b"}), DataError);
}

TEST(PredictProba, PureLeavesAndTwoTreeMean) {
    ForestModel model;
    model.hyper.n_trees = 2;
    model.n_features = 1;
    DecisionTree t1, t2;
    t1.nodes.push_back({-1, 0.0, -1, -1, 8.0, 2.0}); // 0.2
    t2.nodes.push_back({-1, 0.0, -1, -1, 4.0, 6.0}); // 0.6
    model.trees = {t1, t2};
    const std::vector<double> x = {0.5};
    EXPECT_DOUBLE_EQ(predict_proba(model, x), 0.4);

    ForestModel pure;
    pure.hyper.n_trees = 3;
    pure.n_features = 1;
    DecisionTree leaf;
    leaf.nodes.push_back({-1, 0.0, -1, -1, 0.0, 5.0});
    pure.trees = {leaf, leaf, leaf};
    EXPECT_DOUBLE_EQ(predict_proba(pure, x), 1.0);

    const std::vector<double> wrong = {0.5, 0.1};
    EXPECT_THROW(predict_proba(model, wrong), DataError);
}

TEST(PredictProba, InvariantToTreeOrder) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_toy(x, y);
    ForestHyper hyper;
    hyper.n_trees = 15;
    ForestModel model = train_forest(x, y, hyper, 21, {"v"});
    const std::vector<double> probe = {0.47};
    const double before = predict_proba(model, probe);
    std::reverse(model.trees.begin(), model.trees.end());
    EXPECT_NEAR(predict_proba(model, probe), before, 1e-12);
}

TEST(Importances, SumToOneAndConcentrateOnInformativeFeature) {
    Pcg32 rng(77);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 150; ++i) {
        const int label = i % 2;
        const double informative = label == 0 ? rng.uniform(0.0, 0.45) : rng.uniform(0.55, 1.0);
        x.push_back({rng.uniform(), informative, rng.uniform()});
        y.push_back(label);
    }
    ForestHyper hyper;
    hyper.n_trees = 40;
    const ForestModel model = train_forest(x, y, hyper, 8, {});
    const auto imp = feature_importances(model);
    ASSERT_EQ(imp.size(), 3u);
    EXPECT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), 1.0, 1e-9);
    EXPECT_GT(imp[1], imp[0]);
    EXPECT_GT(imp[1], imp[2]);
    EXPECT_GT(imp[1], 0.5);
}

TEST(ForestFile, RoundTripPreservesPredictions) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_toy(x, y);
    ForestHyper hyper;
    hyper.n_trees = 12;
    const ForestModel model = train_forest(x, y, hyper, 33, {"v"});
    const auto path = std::filesystem::temp_directory_path() / "epiwarn_forest_rt.json";
    save_forest(path, model);
    const ForestModel back = load_forest(path);
    EXPECT_EQ(forest_to_json(back), forest_to_json(model));
    for (const auto& row : x) EXPECT_EQ(predict_proba(back, row), predict_proba(model, row));
    std::filesystem::remove(path);
}

// Trees reference features by index, so columns appended after training are
// never consulted.
TEST(ForestModel, AppendedColumnsDoNotAffectPredictions) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_toy(x, y);
    ForestHyper hyper;
    hyper.n_trees = 10;
    ForestModel model = train_forest(x, y, hyper, 4, {"v"});
    const std::vector<double> probe = {0.3};
    const double before = predict_proba(model, probe);
    ForestModel widened = model;
    widened.n_features = 2;
    const std::vector<double> probe2 = {0.3, 123.0};
    EXPECT_EQ(predict_proba(widened, probe2), before);
}

namespace {

std::vector<Window> labeled_windows(int count, std::uint64_t seed) {
    Pcg32 rng(seed);
    std::vector<Window> out;
    for (int i = 0; i < count; ++i) {
        Window w;
        w.run_id = "r" + std::to_string(i);
        w.end_day = 4 + static_cast<int>(rng.bounded(9));
        w.label = i % 2;
        w.rho = w.label ? 0.7 : 0.01;
        w.s_lo = 1.3;
        w.s_hi = 1.3005;
        for (int d = 0; d < 5; ++d)
            for (int j = 0; j < kObservableCount; ++j) {
                double v = rng.uniform(0.0, 3.0);
                if (j == 1) v = w.label ? rng.uniform(8.0, 20.0) : rng.uniform(0.0, 4.0);
                w.values.push_back(v);
            }
        out.push_back(std::move(w));
    }
    return out;
}

} // namespace

TEST(EarlyWarning, TrainsAndEvaluatesOnSeparableWindows) {
    const auto train = labeled_windows(120, 1);
    const auto test = labeled_windows(60, 2);
    EarlyWarnHyper hyper;
    hyper.forest.n_trees = 60;
    hyper.seed = 12;
    const ForestModel forest = train_early_warning(train, nullptr, hyper);
    EXPECT_EQ(forest.n_features, 38);
    const EvalReport report = evaluate_ew(forest, nullptr, test, hyper.features);
    EXPECT_GT(report.overall.accuracy, 0.9);
    ASSERT_TRUE(report.overall.roc_auc.has_value());
    EXPECT_GT(*report.overall.roc_auc, 0.95);
    EXPECT_GT(report.outbreak.precision, 0.8);
    EXPECT_GT(report.contained.recall, 0.8);

    int total_windows = 0;
    for (const EndDayRow& row : report.per_end_day) total_windows += row.windows;
    EXPECT_EQ(total_windows, 60);
    EXPECT_EQ(report.overall.confusion.total(), 60);

    double family_sum = 0.0;
    for (const auto& [name, value] : report.family_importance) family_sum += value;
    EXPECT_NEAR(family_sum, 1.0, 1e-9);

    const std::string csv = per_end_day_csv(report);
    EXPECT_NE(csv.find("end_day,windows,accuracy,auc"), std::string::npos);
    const std::string fam_csv = family_importance_csv(report);
    EXPECT_NE(fam_csv.find("family,importance"), std::string::npos);
}
