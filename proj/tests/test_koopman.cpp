#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "epiwarn/koopman.hpp"

#include "koopman_fixtures.hpp"

using namespace epiwarn;

namespace {

KoopmanHyper small_hyper() {
    KoopmanHyper h;
    h.window_days = 2;
    h.horizon = 3;
    h.latent_dim = 4;
    h.hidden_width = 8;
    h.seed = 31;
    return h;
}

// Random but reproducible samples in normalized scale.
std::vector<KoopmanSample> random_samples(int count, const KoopmanHyper& h, std::uint64_t seed) {
    Pcg32 rng(seed);
    std::vector<KoopmanSample> out;
    for (int i = 0; i < count; ++i) {
        KoopmanSample s;
        s.run_id = "r" + std::to_string(i);
        s.end_day = 4 + i;
        const int km = h.window_days * kObservableCount;
        for (int j = 0; j < km; ++j) s.window.push_back(rng.uniform());
        for (int j = 0; j < km; ++j) s.next_window.push_back(rng.uniform());
        for (int j = 0; j < h.horizon * kObservableCount; ++j) s.targets.push_back(rng.uniform());
        s.target_padded.assign(static_cast<std::size_t>(h.horizon), 0);
        s.rho = rng.uniform();
        s.label = static_cast<int>(rng.bounded(2));
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<const KoopmanSample*> view(const std::vector<KoopmanSample>& v) {
    std::vector<const KoopmanSample*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

// Straightforward re-implementation of the loss definitions with plain
// nested vectors; shares nothing with the production path.
struct NaiveNet {
    int in, w, r, m, h;
    std::vector<std::vector<double>> W1, W2, W3, A, V1, V2;
    std::vector<double> b1, b2, b3, c1, c2, arw, clsw;
    double arb, clsb;
    double wrec, wlin, wpred, war, wcls;

    static std::vector<std::vector<double>> take_matrix(const std::vector<double>& p, int& off,
                                                        int rows, int cols) {
        std::vector<std::vector<double>> out(static_cast<std::size_t>(rows));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                out[static_cast<std::size_t>(i)].push_back(
                    p[static_cast<std::size_t>(off + i * cols + j)]);
        off += rows * cols;
        return out;
    }
    static std::vector<double> take_vector(const std::vector<double>& p, int& off, int count) {
        std::vector<double> out;
        for (int j = 0; j < count; ++j) out.push_back(p[static_cast<std::size_t>(off + j)]);
        off += count;
        return out;
    }

    explicit NaiveNet(const KoopmanModel& model) {
        in = model.input_dim();
        w = model.hidden_width;
        r = model.latent_dim;
        m = model.obs_dim;
        h = model.horizon;
        wrec = model.w_rec;
        wlin = model.w_lin;
        wpred = model.w_pred;
        war = model.w_ar;
        wcls = model.w_cls;
        int off = 0;
        W1 = take_matrix(model.params, off, w, in);
        b1 = take_vector(model.params, off, w);
        W2 = take_matrix(model.params, off, w, w);
        b2 = take_vector(model.params, off, w);
        W3 = take_matrix(model.params, off, r, w);
        b3 = take_vector(model.params, off, r);
        A = take_matrix(model.params, off, r, r);
        V1 = take_matrix(model.params, off, w, r);
        c1 = take_vector(model.params, off, w);
        V2 = take_matrix(model.params, off, m, w);
        c2 = take_vector(model.params, off, m);
        arw = take_vector(model.params, off, r);
        arb = take_vector(model.params, off, 1)[0];
        clsw = take_vector(model.params, off, r);
        clsb = take_vector(model.params, off, 1)[0];
    }

    static std::vector<double> apply(const std::vector<std::vector<double>>& M,
                                     const std::vector<double>& b, const std::vector<double>& x,
                                     bool tanh_out) {
        std::vector<double> y;
        for (std::size_t i = 0; i < M.size(); ++i) {
            double acc = b.empty() ? 0.0 : b[i];
            for (std::size_t j = 0; j < x.size(); ++j) acc += M[i][j] * x[j];
            y.push_back(tanh_out ? std::tanh(acc) : acc);
        }
        return y;
    }

    std::vector<double> enc(const std::vector<double>& x) const {
        return apply(W3, b3, apply(W2, b2, apply(W1, b1, x, true), true), false);
    }
    std::vector<double> dec(const std::vector<double>& z) const {
        return apply(V2, c2, apply(V1, c1, z, true), false);
    }

    KoopmanLoss loss(const std::vector<KoopmanSample>& batch) const {
        KoopmanLoss out;
        const double B = static_cast<double>(batch.size());
        for (const KoopmanSample& s : batch) {
            const auto z = enc(s.window);
            const auto zn = enc(s.next_window);
            const auto rec = dec(z);
            for (int j = 0; j < m; ++j) {
                const double e = rec[static_cast<std::size_t>(j)] -
                                 s.window[static_cast<std::size_t>(in - m + j)];
                out.rec += e * e / (B * m);
            }
            std::vector<double> zc = z;
            std::vector<double> az = apply(A, {}, zc, false);
            double linsq = 0.0;
            for (int i = 0; i < r; ++i) {
                const double d = zn[static_cast<std::size_t>(i)] - az[static_cast<std::size_t>(i)];
                linsq += d * d;
            }
            out.lin += linsq / B;
            std::vector<double> cur = z;
            for (int step = 1; step <= h; ++step) {
                cur = apply(A, {}, cur, false);
                const auto y = dec(cur);
                double sq = 0.0;
                for (int j = 0; j < m; ++j) {
                    const double e = y[static_cast<std::size_t>(j)] -
                                     s.targets[static_cast<std::size_t>((step - 1) * m + j)];
                    sq += e * e;
                }
                out.pred += sq / (B * h * m);
            }
            double arp = arb, clp = clsb;
            for (int i = 0; i < r; ++i) {
                arp += arw[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
                clp += clsw[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
            }
            const double a = 1.0 / (1.0 + std::exp(-arp));
            const double p = std::clamp(1.0 / (1.0 + std::exp(-clp)), 1e-12, 1.0 - 1e-12);
            out.ar += (a - s.rho) * (a - s.rho) / B;
            out.cls += (s.label == 1 ? -std::log(p) : -std::log(1.0 - p)) / B;
        }
        out.total = wrec * out.rec + wlin * out.lin + wpred * out.pred + war * out.ar + wcls * out.cls;
        return out;
    }
};

} // namespace

TEST(Encode, ShapeAndDeterminism) {
    const KoopmanModel model = init_koopman_model(KoopmanHyper{}, 500);
    std::vector<double> window(45, 0.3);
    const auto z1 = encode(model, window);
    const auto z2 = encode(model, window);
    ASSERT_EQ(z1.size(), 6u);
    EXPECT_EQ(z1, z2);
    std::vector<double> bad(44, 0.1);
    EXPECT_THROW(encode(model, bad), DataError);
}

TEST(Encode, ZeroModelMapsToZeroLatent) {
    KoopmanModel model = init_koopman_model(KoopmanHyper{}, 500);
    std::fill(model.params.begin(), model.params.end(), 0.0);
    std::vector<double> window(45, 0.7);
    for (double z : encode(model, window)) EXPECT_EQ(z, 0.0);
}

TEST(Advance, IdentityAndScalarMatrix) {
    KoopmanHyper h = small_hyper();
    KoopmanModel model = init_koopman_model(h, 100);
    const auto l = model.layout();
    // A = identity
    for (int i = 0; i < h.latent_dim; ++i)
        for (int j = 0; j < h.latent_dim; ++j)
            model.params[static_cast<std::size_t>(l.op_a + i * h.latent_dim + j)] =
                i == j ? 1.0 : 0.0;
    const std::vector<double> z = {1.0, -2.0, 3.0, 0.5};
    EXPECT_EQ(advance(model, z, 5), z);
    EXPECT_EQ(advance(model, z, 0), z);
    // A = 2I
    for (int i = 0; i < h.latent_dim; ++i)
        model.params[static_cast<std::size_t>(l.op_a + i * h.latent_dim + i)] = 2.0;
    const std::vector<double> ones(4, 1.0);
    const auto z3 = advance(model, ones, 3);
    for (double v : z3) EXPECT_DOUBLE_EQ(v, 8.0);
}

TEST(Advance, CompositionIsExact) {
    const KoopmanHyper h = small_hyper();
    Pcg32 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        KoopmanHyper ht = h;
        ht.seed = 100 + static_cast<std::uint64_t>(trial);
        KoopmanModel model = init_koopman_model(ht, 100);
        std::vector<double> z(static_cast<std::size_t>(h.latent_dim));
        for (double& v : z) v = rng.uniform(-2.0, 2.0);
        const auto ab = advance(model, advance(model, z, 2), 3);
        const auto a5 = advance(model, z, 5);
        EXPECT_EQ(ab, a5) << "trial " << trial;
    }
}

TEST(Forecast, ShapesAndEmptyHorizon) {
    const KoopmanModel model = init_koopman_model(KoopmanHyper{}, 500);
    std::vector<double> window(45, 10.0);
    const auto f = forecast(model, window, 5);
    ASSERT_EQ(f.size(), 5u);
    for (const auto& day : f) EXPECT_EQ(day.size(), 9u);
    EXPECT_TRUE(forecast(model, window, 0).empty());
}

TEST(Forecast, ConstantDecoderReproducesConstant) {
    KoopmanHyper h = small_hyper();
    KoopmanModel model = init_koopman_model(h, 100);
    model.norm_scale.assign(static_cast<std::size_t>(model.obs_dim), 1.0);
    const auto l = model.layout();
    // zero decoder weights, bias = c
    for (int i = 0; i < model.obs_dim * model.hidden_width; ++i)
        model.params[static_cast<std::size_t>(l.dec_w2 + i)] = 0.0;
    for (int j = 0; j < model.obs_dim; ++j)
        model.params[static_cast<std::size_t>(l.dec_b2 + j)] = 3.25 + j;
    std::vector<double> window(static_cast<std::size_t>(model.input_dim()), 0.4);
    for (const auto& day : forecast(model, window, 4))
        for (int j = 0; j < model.obs_dim; ++j)
            EXPECT_DOUBLE_EQ(day[static_cast<std::size_t>(j)], 3.25 + j);
}

TEST(PredictHeads, LogisticMidpointAndBounds) {
    KoopmanHyper h = small_hyper();
    KoopmanModel model = init_koopman_model(h, 100);
    std::fill(model.params.begin(), model.params.end(), 0.0);
    const std::vector<double> z = {0.4, -0.2, 1.0, 0.0};
    const auto [ar, prob] = predict_heads(model, z);
    EXPECT_DOUBLE_EQ(ar, 0.5);
    EXPECT_DOUBLE_EQ(prob, 0.5);

    const KoopmanModel random_model = init_koopman_model(h, 100);
    Pcg32 rng(77);
    for (int i = 0; i < 10000; ++i) {
        std::vector<double> zz(static_cast<std::size_t>(h.latent_dim));
        for (double& v : zz) v = rng.uniform(-50.0, 50.0);
        const auto [a, p] = predict_heads(random_model, zz);
        ASSERT_GE(a, 0.0);
        ASSERT_LE(a, 1.0);
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
    }
}

TEST(PredictHeads, MonotoneInLogit) {
    KoopmanHyper h = small_hyper();
    KoopmanModel model = init_koopman_model(h, 100);
    const std::vector<double> z = {0.3, 0.1, -0.4, 0.9};
    const double p0 = predict_heads(model, z).second;
    const auto l = model.layout();
    model.params[static_cast<std::size_t>(l.cls_b)] += 1.0;
    EXPECT_GT(predict_heads(model, z).second, p0);
}

TEST(ComputeLoss, MatchesNaiveReimplementation) {
    const KoopmanHyper h = small_hyper();
    const KoopmanModel model = init_koopman_model(h, 100);
    const auto samples = random_samples(7, h, 99);
    const KoopmanLoss fast = compute_loss(model, view(samples));
    const KoopmanLoss naive = NaiveNet(model).loss(samples);
    EXPECT_NEAR(fast.rec, naive.rec, 1e-10);
    EXPECT_NEAR(fast.lin, naive.lin, 1e-10);
    EXPECT_NEAR(fast.pred, naive.pred, 1e-10);
    EXPECT_NEAR(fast.ar, naive.ar, 1e-10);
    EXPECT_NEAR(fast.cls, naive.cls, 1e-10);
    EXPECT_NEAR(fast.total, naive.total, 1e-10);
}

TEST(ComputeLoss, TermsNonNegativeAndTotalIsWeightedSum) {
    KoopmanHyper h = small_hyper();
    h.w_cls = 0.37;
    h.w_lin = 2.0;
    const KoopmanModel model = init_koopman_model(h, 100);
    const auto samples = random_samples(5, h, 8);
    const KoopmanLoss loss = compute_loss(model, view(samples));
    EXPECT_GE(loss.rec, 0.0);
    EXPECT_GE(loss.lin, 0.0);
    EXPECT_GE(loss.pred, 0.0);
    EXPECT_GE(loss.ar, 0.0);
    EXPECT_GE(loss.cls, 0.0);
    const double expected = model.w_rec * loss.rec + model.w_lin * loss.lin +
                            model.w_pred * loss.pred + model.w_ar * loss.ar +
                            model.w_cls * loss.cls;
    EXPECT_NEAR(loss.total, expected, 1e-12);
}

TEST(ComputeLoss, DuplicatedSampleEqualsSingleton) {
    const KoopmanHyper h = small_hyper();
    const KoopmanModel model = init_koopman_model(h, 100);
    const auto samples = random_samples(1, h, 12);
    const std::vector<KoopmanSample> twice = {samples[0], samples[0]};
    const KoopmanLoss one = compute_loss(model, view(samples));
    const KoopmanLoss two = compute_loss(model, view(twice));
    EXPECT_NEAR(one.rec, two.rec, 1e-12);
    EXPECT_NEAR(one.lin, two.lin, 1e-12);
    EXPECT_NEAR(one.pred, two.pred, 1e-12);
    EXPECT_NEAR(one.ar, two.ar, 1e-12);
    EXPECT_NEAR(one.cls, two.cls, 1e-12);
    EXPECT_NEAR(one.total, two.total, 1e-12);
}

TEST(ComputeLoss, ExactModelHasVanishingTerms) {
    KoopmanHyper h = small_hyper();
    KoopmanModel model = init_koopman_model(h, 100);
    std::fill(model.params.begin(), model.params.end(), 0.0);
    const auto l = model.layout();
    model.params[static_cast<std::size_t>(l.cls_b)] = 60.0; // saturated positive head
    KoopmanSample s;
    const int km = h.window_days * kObservableCount;
    s.window.assign(static_cast<std::size_t>(km), 0.0);
    s.next_window.assign(static_cast<std::size_t>(km), 0.0);
    s.targets.assign(static_cast<std::size_t>(h.horizon * kObservableCount), 0.0);
    s.target_padded.assign(static_cast<std::size_t>(h.horizon), 0);
    s.rho = 0.5; // sigmoid(0)
    s.label = 1;
    const std::vector<KoopmanSample> batch = {s};
    const KoopmanLoss loss = compute_loss(model, view(batch));
    EXPECT_EQ(loss.rec, 0.0);
    EXPECT_EQ(loss.lin, 0.0);
    EXPECT_EQ(loss.pred, 0.0);
    EXPECT_EQ(loss.ar, 0.0);
    EXPECT_LT(loss.cls, 1e-10);
    EXPECT_LT(loss.total, 1e-10);
}

// Analytic gradient vs central finite differences on randomly chosen
// parameters.
TEST(Gradient, MatchesCentralFiniteDifferences) {
    const KoopmanHyper h = small_hyper();
    KoopmanModel model = init_koopman_model(h, 100);
    const auto samples = random_samples(6, h, 55);
    const auto batch = view(samples);
    std::vector<double> grad;
    compute_loss_and_gradient(model, batch, grad);
    ASSERT_EQ(grad.size(), model.params.size());

    Pcg32 rng(2718);
    const double step = 1e-5;
    double max_rel_err = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        const auto idx = static_cast<std::size_t>(rng.bounded(static_cast<std::uint32_t>(model.params.size())));
        const double saved = model.params[idx];
        model.params[idx] = saved + step;
        const double up = compute_loss(model, batch).total;
        model.params[idx] = saved - step;
        const double down = compute_loss(model, batch).total;
        model.params[idx] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::fabs(numeric), std::fabs(grad[idx]), 1e-8});
        max_rel_err = std::max(max_rel_err, std::fabs(numeric - grad[idx]) / denom);
    }
    EXPECT_LT(max_rel_err, 1e-4);
}

TEST(Gradient, MaskedPaddedTargetsMatchFiniteDifferences) {
    KoopmanHyper h = small_hyper();
    h.mask_padded = true;
    KoopmanModel model = init_koopman_model(h, 100);
    auto samples = random_samples(4, h, 66);
    samples[1].target_padded = {0, 1, 1};
    samples[1].next_padded = true;
    samples[3].target_padded = {0, 0, 1};
    const auto batch = view(samples);
    std::vector<double> grad;
    compute_loss_and_gradient(model, batch, grad);
    Pcg32 rng(31415);
    const double step = 1e-5;
    for (int trial = 0; trial < 25; ++trial) {
        const auto idx = static_cast<std::size_t>(rng.bounded(static_cast<std::uint32_t>(model.params.size())));
        const double saved = model.params[idx];
        model.params[idx] = saved + step;
        const double up = compute_loss(model, batch).total;
        model.params[idx] = saved - step;
        const double down = compute_loss(model, batch).total;
        model.params[idx] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::fabs(numeric), std::fabs(grad[idx]), 1e-8});
        EXPECT_LT(std::fabs(numeric - grad[idx]) / denom, 1e-4);
    }
}

TEST(Normalization, RoundTrip) {
    const KoopmanModel model = init_koopman_model(KoopmanHyper{}, 500);
    std::vector<double> window;
    for (int i = 0; i < 45; ++i) window.push_back(3.0 * i + 1.0);
    const auto back = model.denormalize(model.normalize(window));
    ASSERT_EQ(back.size(), window.size());
    for (std::size_t i = 0; i < window.size(); ++i) EXPECT_NEAR(back[i], window[i], 1e-9);
}

TEST(Training, DeterministicGivenSeed) {
    KoopmanHyper h = small_hyper();
    h.epochs = 3;
    h.batch_size = 4;
    const auto train = random_samples(24, h, 1001);
    const auto val = random_samples(8, h, 1002);
    const KoopmanTrainResult a = train_koopman(train, val, h, 100);
    const KoopmanTrainResult b = train_koopman(train, val, h, 100);
    EXPECT_EQ(a.model.params, b.model.params);
    EXPECT_EQ(a.report.selected_epoch, b.report.selected_epoch);
    ASSERT_EQ(a.report.val_epochs.size(), 4u); // epoch 0 + 3
    for (std::size_t i = 0; i < a.report.val_epochs.size(); ++i)
        EXPECT_EQ(a.report.val_epochs[i].total, b.report.val_epochs[i].total);
}

TEST(Training, SelectedEpochMinimizesValidation) {
    KoopmanHyper h = small_hyper();
    h.epochs = 5;
    h.batch_size = 8;
    const auto train = random_samples(32, h, 2001);
    const auto val = random_samples(12, h, 2002);
    const KoopmanTrainResult r = train_koopman(train, val, h, 100);
    double best = r.report.val_epochs[0].total;
    for (const EpochStats& e : r.report.val_epochs) best = std::min(best, e.total);
    EXPECT_DOUBLE_EQ(r.report.val_epochs[static_cast<std::size_t>(r.report.selected_epoch)].total,
                     best);
    EXPECT_LT(best, r.report.val_epochs[0].total); // training actually helped
}

// Windows generated by a linear factor system are exactly representable by
// the latent linear model; training must fit them well.
TEST(Training, LearnsSyntheticLinearSystem) {
    const testutil::LinearSystemData data = testutil::make_linear_system_samples(60, 404);
    const KoopmanHyper h = testutil::linear_system_hyper();
    const KoopmanTrainResult r = train_koopman(data.train, data.val, h, 1);
    EXPECT_LT(testutil::forecast_mse_over_variance(r.model, data.val), 0.1);
}

TEST(ModelFile, RoundTripIsBitExact) {
    KoopmanHyper h = small_hyper();
    const KoopmanModel model = init_koopman_model(h, 250);
    const auto path = std::filesystem::temp_directory_path() / "epiwarn_koopman_rt.json";
    save_koopman_model(path, model);
    const KoopmanModel back = load_koopman_model(path);
    EXPECT_EQ(back.params, model.params);
    EXPECT_EQ(back.norm_scale, model.norm_scale);
    EXPECT_EQ(back.window_days, model.window_days);
    EXPECT_EQ(back.latent_dim, model.latent_dim);
    EXPECT_EQ(back.w_cls, model.w_cls);
    // saving again is byte-identical
    const std::string first = read_text_file(path);
    save_koopman_model(path, back);
    EXPECT_EQ(read_text_file(path), first);
    std::filesystem::remove(path);
}

TEST(EvaluateKoopman, RunLevelUsesLastWindow) {
    KoopmanHyper h;
    KoopmanModel model = init_koopman_model(h, 500);
    std::fill(model.params.begin(), model.params.end(), 0.0);
    std::vector<Window> windows;
    for (int run = 0; run < 2; ++run)
        for (int e = 4; e <= 6; ++e) {
            Window w;
            w.run_id = "run" + std::to_string(run);
            w.end_day = e;
            w.values.assign(45, 1.0);
            w.label = run;
            windows.push_back(std::move(w));
        }
    const KoopmanEval ev = evaluate_koopman(model, windows);
    EXPECT_EQ(ev.window_count, 6);
    EXPECT_EQ(ev.run_count, 2);
    // constant 0.5 scores: ties everywhere
    ASSERT_TRUE(ev.window_metrics.roc_auc.has_value());
    EXPECT_DOUBLE_EQ(*ev.window_metrics.roc_auc, 0.5);
    EXPECT_DOUBLE_EQ(*ev.run_metrics.roc_auc, 0.5);
}
