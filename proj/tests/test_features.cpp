#include <gtest/gtest.h>

#include <vector>

#include "epiwarn/features.hpp"

using namespace epiwarn;

namespace {

// Window with a chosen I column; other columns constant.
Window window_with_I(std::vector<double> I_series) {
    Window w;
    w.run_id = "r";
    w.end_day = 8;
    w.label = 1;
    w.rho = 0.4;
    w.s_lo = 1.3;
    w.s_hi = 1.31;
    const int k = static_cast<int>(I_series.size());
    for (int d = 0; d < k; ++d)
        for (int j = 0; j < kObservableCount; ++j)
            w.values.push_back(j == 1 ? I_series[static_cast<std::size_t>(d)] : 2.0);
    return w;
}

int count_family(const FeatureLayout& layout, const std::string& family) {
    int n = 0;
    for (const auto& f : layout.families)
        if (f == family) ++n;
    return n;
}

} // namespace

TEST(FeatureLayout, SizesWithAndWithoutKoopman) {
    const FeatureOptions options;
    const FeatureLayout without = feature_layout(false, options);
    const FeatureLayout with = feature_layout(true, options);
    EXPECT_EQ(without.size(), 38u);
    EXPECT_EQ(with.size(), 51u);
    EXPECT_EQ(without.names.size(), without.families.size());
    EXPECT_EQ(count_family(with, "susceptible"), 5);
    EXPECT_EQ(count_family(with, "infected"), 5);
    EXPECT_EQ(count_family(with, "incidence"), 5);
    EXPECT_EQ(count_family(with, "other"), 20);
    EXPECT_EQ(count_family(with, "koopman"), 13);
    EXPECT_EQ(count_family(with, "susceptibility"), 2);
    EXPECT_EQ(count_family(with, "end_day"), 1);
}

TEST(FeatureLayout, EndDayRemovableByConfig) {
    FeatureOptions options;
    options.include_end_day = false;
    EXPECT_EQ(feature_layout(false, options).size(), 37u);
    EXPECT_EQ(feature_layout(true, options).size(), 50u);
}

TEST(BuildFeatures, ConstantSeries) {
    const Window w = window_with_I({3.0, 3.0, 3.0, 3.0, 3.0});
    const FeatureOptions options;
    const auto x = build_features(w, nullptr, options);
    const FeatureLayout layout = feature_layout(false, options);
    ASSERT_EQ(x.size(), layout.size());
    // infected series block: last, mean, max, change, slope
    EXPECT_DOUBLE_EQ(x[5], 3.0);
    EXPECT_DOUBLE_EQ(x[6], 3.0);
    EXPECT_DOUBLE_EQ(x[7], 3.0);
    EXPECT_DOUBLE_EQ(x[8], 0.0);
    EXPECT_DOUBLE_EQ(x[9], 0.0);
}

TEST(BuildFeatures, WorkedInfectedSeries) {
    const Window w = window_with_I({1.0, 1.0, 2.0, 3.0, 5.0});
    const FeatureOptions options;
    const auto x = build_features(w, nullptr, options);
    EXPECT_DOUBLE_EQ(x[5], 5.0); // last
    EXPECT_DOUBLE_EQ(x[6], 2.4); // mean
    EXPECT_DOUBLE_EQ(x[7], 5.0); // max
    EXPECT_DOUBLE_EQ(x[8], 4.0); // total change
    EXPECT_DOUBLE_EQ(x[9], 1.0); // mean daily change
}

TEST(BuildFeatures, TailHoldsBoundsAndEndDay) {
    const Window w = window_with_I({1.0, 1.0, 2.0, 3.0, 5.0});
    const FeatureOptions options;
    const auto x = build_features(w, nullptr, options);
    ASSERT_EQ(x.size(), 38u);
    EXPECT_DOUBLE_EQ(x[35], 1.3);  // s_lo
    EXPECT_DOUBLE_EQ(x[36], 1.31); // s_hi
    EXPECT_DOUBLE_EQ(x[37], 8.0);  // end_day
}

TEST(BuildFeatures, KoopmanBlockMatchesModelOutputs) {
    const Window w = window_with_I({1.0, 2.0, 3.0, 4.0, 5.0});
    KoopmanHyper h;
    const KoopmanModel model = init_koopman_model(h, 500);
    const FeatureOptions options;
    const auto x = build_features(w, &model, options);
    ASSERT_EQ(x.size(), 51u);

    const auto z = encode(model, model.normalize(w.values));
    for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(x[static_cast<std::size_t>(35 + i)], z[static_cast<std::size_t>(i)]);
    const auto f = forecast(model, w.values, 5);
    double dsum = 0.0;
    for (int step = 0; step < 5; ++step) {
        EXPECT_DOUBLE_EQ(x[static_cast<std::size_t>(41 + step)], f[static_cast<std::size_t>(step)][1]);
        dsum += f[static_cast<std::size_t>(step)][4];
    }
    EXPECT_DOUBLE_EQ(x[46], dsum);
    EXPECT_DOUBLE_EQ(x[47], predict_heads(model, z).second);
    EXPECT_DOUBLE_EQ(x[48], 1.3);
    EXPECT_DOUBLE_EQ(x[49], 1.31);
    EXPECT_DOUBLE_EQ(x[50], 8.0);
}

TEST(BuildFeatures, MalformedWindowThrows) {
    Window w;
    w.values = {1.0, 2.0, 3.0};
    EXPECT_THROW(build_features(w, nullptr, FeatureOptions{}), DataError);
}
