#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "epiwarn/dataset.hpp"
#include "epiwarn/io_util.hpp"
#include "epiwarn/metrics.hpp"
#include "epiwarn/prng.hpp"

namespace epiwarn {

struct KoopmanHyper {
    int window_days = 5;   // k
    int horizon = 5;       // h
    int latent_dim = 6;    // r
    int hidden_width = 64; // w
    double w_rec = 1.0, w_lin = 1.0, w_pred = 1.0, w_ar = 1.0, w_cls = 0.1;
    double learning_rate = 1e-3;
    int batch_size = 64;
    int epochs = 100;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    bool mask_padded = false;
    std::uint64_t seed = 1;

    void validate() const {
        if (window_days < 1) throw ConfigError("koopman.window_days: must be >= 1");
        if (horizon < 1) throw ConfigError("koopman.horizon: must be >= 1");
        if (latent_dim < 1) throw ConfigError("koopman.latent_dim: must be >= 1");
        if (hidden_width < 1) throw ConfigError("koopman.hidden_width: must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("koopman.learning_rate: must be > 0");
        if (batch_size < 1) throw ConfigError("koopman.batch_size: must be >= 1");
        if (epochs < 1) throw ConfigError("koopman.epochs: must be >= 1");
    }
};

// Encoder psi (two tanh hidden layers, linear latent output), latent operator
// A, decoder Gamma (one tanh hidden layer, linear output), and logistic
// attack-rate / outbreak heads. All parameters live in one flat vector with a
// fixed block layout; gradients and the optimizer share the layout.
struct KoopmanModel {
    std::string version = "epiwarn-koopman-1";
    int window_days = 5;
    int obs_dim = kObservableCount;
    int latent_dim = 6;
    int hidden_width = 64;
    int horizon = 5;
    std::vector<double> norm_scale; // per-observable divisor (counts / N)
    double w_rec = 1.0, w_lin = 1.0, w_pred = 1.0, w_ar = 1.0, w_cls = 0.1;
    bool mask_padded = false; // exclude padded targets from the loss means
    std::vector<double> params;

    int input_dim() const { return window_days * obs_dim; }

    // Block offsets in params, in serialization order.
    struct Layout {
        int enc_w1, enc_b1, enc_w2, enc_b2, enc_w3, enc_b3;
        int op_a;
        int dec_w1, dec_b1, dec_w2, dec_b2;
        int ar_w, ar_b, cls_w, cls_b;
        int total;
    };

    Layout layout() const {
        Layout l{};
        const int in = input_dim(), w = hidden_width, r = latent_dim, m = obs_dim;
        int off = 0;
        l.enc_w1 = off; off += w * in;
        l.enc_b1 = off; off += w;
        l.enc_w2 = off; off += w * w;
        l.enc_b2 = off; off += w;
        l.enc_w3 = off; off += r * w;
        l.enc_b3 = off; off += r;
        l.op_a = off; off += r * r;
        l.dec_w1 = off; off += w * r;
        l.dec_b1 = off; off += w;
        l.dec_w2 = off; off += m * w;
        l.dec_b2 = off; off += m;
        l.ar_w = off; off += r;
        l.ar_b = off; off += 1;
        l.cls_w = off; off += r;
        l.cls_b = off; off += 1;
        l.total = off;
        return l;
    }

    void normalize_inplace(std::span<double> window) const {
        for (std::size_t i = 0; i < window.size(); ++i)
            window[i] /= norm_scale[i % static_cast<std::size_t>(obs_dim)];
    }

    std::vector<double> normalize(std::span<const double> window) const {
        std::vector<double> out(window.begin(), window.end());
        normalize_inplace(out);
        return out;
    }

    std::vector<double> denormalize(std::span<const double> obs) const {
        std::vector<double> out(obs.begin(), obs.end());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] *= norm_scale[i % static_cast<std::size_t>(obs_dim)];
        return out;
    }
};

namespace nnet {

// y = W x + b with W row-major (rows x cols)
inline void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                   std::span<double> y, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(i)];
        const double* wi = w.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(cols);
        for (int j = 0; j < cols; ++j) acc += wi[j] * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = acc;
    }
}

inline void tanh_inplace(std::span<double> v) {
    for (double& x : v) x = std::tanh(x);
}

// accumulate dW += dy x^T, db += dy, dx += W^T dy
inline void affine_backward(std::span<const double> w, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw, std::span<double> db,
                            std::span<double> dx, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double g = dy[static_cast<std::size_t>(i)];
        if (!db.empty()) db[static_cast<std::size_t>(i)] += g;
        const double* wi = w.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(cols);
        double* dwi = dw.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(cols);
        for (int j = 0; j < cols; ++j) {
            dwi[j] += g * x[static_cast<std::size_t>(j)];
            if (!dx.empty()) dx[static_cast<std::size_t>(j)] += wi[j] * g;
        }
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace nnet

// z = psi(window); the window must already be normalized per model constants.
inline std::vector<double> encode(const KoopmanModel& model, std::span<const double> window) {
    if (static_cast<int>(window.size()) != model.input_dim())
        throw DataError("encode: window size mismatch");
    const auto l = model.layout();
    const auto& p = model.params;
    const int in = model.input_dim(), w = model.hidden_width, r = model.latent_dim;
    std::vector<double> h1(static_cast<std::size_t>(w)), h2(static_cast<std::size_t>(w)),
        z(static_cast<std::size_t>(r));
    nnet::affine({p.data() + l.enc_w1, static_cast<std::size_t>(w * in)},
                 {p.data() + l.enc_b1, static_cast<std::size_t>(w)}, window, h1, w, in);
    nnet::tanh_inplace(h1);
    nnet::affine({p.data() + l.enc_w2, static_cast<std::size_t>(w * w)},
                 {p.data() + l.enc_b2, static_cast<std::size_t>(w)}, h1, h2, w, w);
    nnet::tanh_inplace(h2);
    nnet::affine({p.data() + l.enc_w3, static_cast<std::size_t>(r * w)},
                 {p.data() + l.enc_b3, static_cast<std::size_t>(r)}, h2, z, r, w);
    return z;
}

// Gamma(z), in normalized observable scale.
inline std::vector<double> decode(const KoopmanModel& model, std::span<const double> z) {
    const auto l = model.layout();
    const auto& p = model.params;
    const int w = model.hidden_width, r = model.latent_dim, m = model.obs_dim;
    std::vector<double> g1(static_cast<std::size_t>(w)), y(static_cast<std::size_t>(m));
    nnet::affine({p.data() + l.dec_w1, static_cast<std::size_t>(w * r)},
                 {p.data() + l.dec_b1, static_cast<std::size_t>(w)}, z, g1, w, r);
    nnet::tanh_inplace(g1);
    nnet::affine({p.data() + l.dec_w2, static_cast<std::size_t>(m * w)},
                 {p.data() + l.dec_b2, static_cast<std::size_t>(m)}, g1, y, m, w);
    return y;
}

// A applied `steps` times; steps = 0 is the identity. Iterative, so
// advance(advance(z, a), b) is bitwise advance(z, a+b).
inline std::vector<double> advance(const KoopmanModel& model, std::span<const double> z,
                                   int steps) {
    if (static_cast<int>(z.size()) != model.latent_dim) throw DataError("advance: latent size mismatch");
    if (steps < 0) throw DataError("advance: steps must be >= 0");
    const auto l = model.layout();
    const int r = model.latent_dim;
    std::vector<double> cur(z.begin(), z.end()), next(static_cast<std::size_t>(r));
    for (int s = 0; s < steps; ++s) {
        nnet::affine({model.params.data() + l.op_a, static_cast<std::size_t>(r * r)}, {}, cur,
                     next, r, r);
        std::swap(cur, next);
    }
    return cur;
}

// (attack-rate estimate, outbreak probability), both in [0,1].
inline std::pair<double, double> predict_heads(const KoopmanModel& model,
                                               std::span<const double> z) {
    if (static_cast<int>(z.size()) != model.latent_dim)
        throw DataError("predict_heads: latent size mismatch");
    const auto l = model.layout();
    const auto& p = model.params;
    double ar = p[static_cast<std::size_t>(l.ar_b)];
    double cls = p[static_cast<std::size_t>(l.cls_b)];
    for (int i = 0; i < model.latent_dim; ++i) {
        ar += p[static_cast<std::size_t>(l.ar_w + i)] * z[static_cast<std::size_t>(i)];
        cls += p[static_cast<std::size_t>(l.cls_w + i)] * z[static_cast<std::size_t>(i)];
    }
    return {nnet::sigmoid(ar), nnet::sigmoid(cls)};
}

// h one-day-ahead observable vectors Gamma(A^l z), de-normalized to count
// scale. The window is taken in count scale.
inline std::vector<std::vector<double>> forecast(const KoopmanModel& model,
                                                 std::span<const double> window, int horizon) {
    if (horizon < 0) throw DataError("forecast: horizon must be >= 0");
    const std::vector<double> normalized = model.normalize(window);
    std::vector<double> z = encode(model, normalized);
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int step = 1; step <= horizon; ++step) {
        z = advance(model, z, 1);
        out.push_back(model.denormalize(decode(model, z)));
    }
    return out;
}

// One training example: a normalized window, its one-day-shifted successor,
// h future normalized targets (padded with the final recorded day when the
// run ends early), and the run outcome.
struct KoopmanSample {
    std::string run_id;
    int end_day = 0;
    std::vector<double> window;      // k*m, normalized
    std::vector<double> next_window; // k*m, normalized
    std::vector<double> targets;     // h*m, normalized
    std::vector<char> target_padded; // h
    bool next_padded = false;
    double rho = 0.0;
    int label = 0;
};

struct KoopmanLoss {
    double rec = 0.0, lin = 0.0, pred = 0.0, ar = 0.0, cls = 0.0;
    double total = 0.0;
    double cls_accuracy = 0.0;
};

namespace detail {

// Forward + (optionally) backward over a batch. Gradient accumulation order
// is fixed for bit-level reproducibility.
inline KoopmanLoss koopman_loss_impl(const KoopmanModel& model,
                                     std::span<const KoopmanSample* const> batch,
                                     std::vector<double>* grad) {
    if (batch.empty()) throw DataError("koopman loss: empty batch");
    const auto l = model.layout();
    const auto& p = model.params;
    const int in = model.input_dim(), w = model.hidden_width, r = model.latent_dim,
              m = model.obs_dim, h = model.horizon;
    const double B = static_cast<double>(batch.size());
    if (grad) grad->assign(p.size(), 0.0);

    KoopmanLoss loss;
    int cls_correct = 0;
    // per-term denominators; with mask_padded only unpadded entries count
    double lin_count = 0.0;
    std::vector<double> pred_count(static_cast<std::size_t>(h), 0.0);
    for (const KoopmanSample* s : batch) {
        if (!model.mask_padded || !s->next_padded) lin_count += 1.0;
        for (int step = 0; step < h; ++step)
            if (!model.mask_padded || !s->target_padded[static_cast<std::size_t>(step)])
                pred_count[static_cast<std::size_t>(step)] += 1.0;
    }
    std::vector<double> pred_sum(static_cast<std::size_t>(h), 0.0);

    struct EncCache {
        std::vector<double> h1, h2, z;
    };
    auto enc_forward = [&](std::span<const double> x, EncCache& c) {
        c.h1.assign(static_cast<std::size_t>(w), 0.0);
        c.h2.assign(static_cast<std::size_t>(w), 0.0);
        c.z.assign(static_cast<std::size_t>(r), 0.0);
        nnet::affine({p.data() + l.enc_w1, static_cast<std::size_t>(w * in)},
                     {p.data() + l.enc_b1, static_cast<std::size_t>(w)}, x, c.h1, w, in);
        nnet::tanh_inplace(c.h1);
        nnet::affine({p.data() + l.enc_w2, static_cast<std::size_t>(w * w)},
                     {p.data() + l.enc_b2, static_cast<std::size_t>(w)}, c.h1, c.h2, w, w);
        nnet::tanh_inplace(c.h2);
        nnet::affine({p.data() + l.enc_w3, static_cast<std::size_t>(r * w)},
                     {p.data() + l.enc_b3, static_cast<std::size_t>(r)}, c.h2, c.z, r, w);
    };
    auto enc_backward = [&](std::span<const double> x, const EncCache& c,
                            std::span<const double> dz) {
        std::vector<double> dpre2(static_cast<std::size_t>(w), 0.0),
            dh1(static_cast<std::size_t>(w), 0.0), dpre1(static_cast<std::size_t>(w), 0.0);
        std::vector<double> dh2(static_cast<std::size_t>(w), 0.0);
        nnet::affine_backward({p.data() + l.enc_w3, static_cast<std::size_t>(r * w)}, c.h2, dz,
                              {grad->data() + l.enc_w3, static_cast<std::size_t>(r * w)},
                              {grad->data() + l.enc_b3, static_cast<std::size_t>(r)}, dh2, r, w);
        for (int i = 0; i < w; ++i)
            dpre2[static_cast<std::size_t>(i)] =
                dh2[static_cast<std::size_t>(i)] *
                (1.0 - c.h2[static_cast<std::size_t>(i)] * c.h2[static_cast<std::size_t>(i)]);
        nnet::affine_backward({p.data() + l.enc_w2, static_cast<std::size_t>(w * w)}, c.h1, dpre2,
                              {grad->data() + l.enc_w2, static_cast<std::size_t>(w * w)},
                              {grad->data() + l.enc_b2, static_cast<std::size_t>(w)}, dh1, w, w);
        for (int i = 0; i < w; ++i)
            dpre1[static_cast<std::size_t>(i)] =
                dh1[static_cast<std::size_t>(i)] *
                (1.0 - c.h1[static_cast<std::size_t>(i)] * c.h1[static_cast<std::size_t>(i)]);
        nnet::affine_backward({p.data() + l.enc_w1, static_cast<std::size_t>(w * in)}, x, dpre1,
                              {grad->data() + l.enc_w1, static_cast<std::size_t>(w * in)},
                              {grad->data() + l.enc_b1, static_cast<std::size_t>(w)}, {}, w, in);
    };

    struct DecCache {
        std::vector<double> g1, y;
    };
    auto dec_forward = [&](std::span<const double> z, DecCache& c) {
        c.g1.assign(static_cast<std::size_t>(w), 0.0);
        c.y.assign(static_cast<std::size_t>(m), 0.0);
        nnet::affine({p.data() + l.dec_w1, static_cast<std::size_t>(w * r)},
                     {p.data() + l.dec_b1, static_cast<std::size_t>(w)}, z, c.g1, w, r);
        nnet::tanh_inplace(c.g1);
        nnet::affine({p.data() + l.dec_w2, static_cast<std::size_t>(m * w)},
                     {p.data() + l.dec_b2, static_cast<std::size_t>(m)}, c.g1, c.y, m, w);
    };
    auto dec_backward = [&](std::span<const double> z, const DecCache& c,
                            std::span<const double> dy, std::span<double> dz) {
        std::vector<double> dg1(static_cast<std::size_t>(w), 0.0),
            dpre(static_cast<std::size_t>(w), 0.0);
        nnet::affine_backward({p.data() + l.dec_w2, static_cast<std::size_t>(m * w)}, c.g1, dy,
                              {grad->data() + l.dec_w2, static_cast<std::size_t>(m * w)},
                              {grad->data() + l.dec_b2, static_cast<std::size_t>(m)}, dg1, m, w);
        for (int i = 0; i < w; ++i)
            dpre[static_cast<std::size_t>(i)] =
                dg1[static_cast<std::size_t>(i)] *
                (1.0 - c.g1[static_cast<std::size_t>(i)] * c.g1[static_cast<std::size_t>(i)]);
        nnet::affine_backward({p.data() + l.dec_w1, static_cast<std::size_t>(w * r)}, z, dpre,
                              {grad->data() + l.dec_w1, static_cast<std::size_t>(w * r)},
                              {grad->data() + l.dec_b1, static_cast<std::size_t>(w)}, dz, w, r);
    };

    const std::span<const double> A{p.data() + l.op_a, static_cast<std::size_t>(r * r)};

    for (const KoopmanSample* s : batch) {
        EncCache enc_cur, enc_next;
        enc_forward(s->window, enc_cur);
        enc_forward(s->next_window, enc_next);

        // latent chain z_0 .. z_h
        std::vector<std::vector<double>> zs(static_cast<std::size_t>(h) + 1);
        zs[0] = enc_cur.z;
        for (int step = 1; step <= h; ++step) {
            zs[static_cast<std::size_t>(step)].assign(static_cast<std::size_t>(r), 0.0);
            nnet::affine(A, {}, zs[static_cast<std::size_t>(step - 1)],
                         zs[static_cast<std::size_t>(step)], r, r);
        }

        // reconstruction of the window's own last day
        DecCache dec_rec;
        dec_forward(zs[0], dec_rec);
        const std::span<const double> last_day{s->window.data() + (in - m),
                                               static_cast<std::size_t>(m)};
        for (int j = 0; j < m; ++j) {
            const double e = dec_rec.y[static_cast<std::size_t>(j)] - last_day[static_cast<std::size_t>(j)];
            loss.rec += e * e;
        }

        // one-step latent linearity
        const bool lin_active = !model.mask_padded || !s->next_padded;
        std::vector<double> lin_diff(static_cast<std::size_t>(r));
        for (int i = 0; i < r; ++i)
            lin_diff[static_cast<std::size_t>(i)] =
                enc_next.z[static_cast<std::size_t>(i)] - zs[1][static_cast<std::size_t>(i)];
        if (lin_active) {
            double lin_sq = 0.0;
            for (double d : lin_diff) lin_sq += d * d;
            loss.lin += lin_sq;
        }

        // multi-step forecasts
        std::vector<DecCache> dec_pred(static_cast<std::size_t>(h));
        for (int step = 1; step <= h; ++step) {
            dec_forward(zs[static_cast<std::size_t>(step)], dec_pred[static_cast<std::size_t>(step - 1)]);
            if (model.mask_padded && s->target_padded[static_cast<std::size_t>(step - 1)]) continue;
            const double* target = s->targets.data() + static_cast<std::size_t>(step - 1) * m;
            double sq = 0.0;
            for (int j = 0; j < m; ++j) {
                const double e =
                    dec_pred[static_cast<std::size_t>(step - 1)].y[static_cast<std::size_t>(j)] -
                    target[j];
                sq += e * e;
            }
            pred_sum[static_cast<std::size_t>(step - 1)] += sq / static_cast<double>(m);
        }

        // heads
        const auto [ar_out, cls_out] = predict_heads(model, zs[0]);
        const double ar_err = ar_out - s->rho;
        loss.ar += ar_err * ar_err;
        const double pc = std::clamp(cls_out, 1e-12, 1.0 - 1e-12);
        loss.cls += s->label == 1 ? -std::log(pc) : -std::log(1.0 - pc);
        if ((cls_out >= 0.5) == (s->label == 1)) ++cls_correct;

        if (!grad) continue;

        // ----- backward -----
        std::vector<double> dz0(static_cast<std::size_t>(r), 0.0);

        // reconstruction
        std::vector<double> dy(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j)
            dy[static_cast<std::size_t>(j)] =
                model.w_rec * 2.0 / (B * m) *
                (dec_rec.y[static_cast<std::size_t>(j)] - last_day[static_cast<std::size_t>(j)]);
        dec_backward(zs[0], dec_rec, dy, dz0);

        // forecasts: decoder grads enter the latent chain at each depth
        std::vector<std::vector<double>> dzs(static_cast<std::size_t>(h) + 1);
        for (int step = 0; step <= h; ++step)
            dzs[static_cast<std::size_t>(step)].assign(static_cast<std::size_t>(r), 0.0);
        for (int step = 1; step <= h; ++step) {
            if (model.mask_padded && s->target_padded[static_cast<std::size_t>(step - 1)]) continue;
            const double denom =
                static_cast<double>(h) * pred_count[static_cast<std::size_t>(step - 1)] * m;
            const double* target = s->targets.data() + static_cast<std::size_t>(step - 1) * m;
            for (int j = 0; j < m; ++j)
                dy[static_cast<std::size_t>(j)] =
                    model.w_pred * 2.0 / denom *
                    (dec_pred[static_cast<std::size_t>(step - 1)].y[static_cast<std::size_t>(j)] -
                     target[j]);
            dec_backward(zs[static_cast<std::size_t>(step)], dec_pred[static_cast<std::size_t>(step - 1)],
                         dy, dzs[static_cast<std::size_t>(step)]);
        }

        // latent linearity: d/dzn = 2c*diff, d/d(A z) = -2c*diff
        std::vector<double> dzn(static_cast<std::size_t>(r), 0.0);
        if (lin_active) {
            const double lin_c = model.w_lin * 2.0 / lin_count;
            for (int i = 0; i < r; ++i) {
                dzn[static_cast<std::size_t>(i)] = lin_c * lin_diff[static_cast<std::size_t>(i)];
                dzs[1][static_cast<std::size_t>(i)] -= lin_c * lin_diff[static_cast<std::size_t>(i)];
            }
        }

        // chain rule through the A powers, deepest first
        for (int step = h; step >= 1; --step) {
            nnet::affine_backward(A, zs[static_cast<std::size_t>(step - 1)],
                                  dzs[static_cast<std::size_t>(step)],
                                  {grad->data() + l.op_a, static_cast<std::size_t>(r * r)}, {},
                                  dzs[static_cast<std::size_t>(step - 1)], r, r);
        }
        for (int i = 0; i < r; ++i) dz0[static_cast<std::size_t>(i)] += dzs[0][static_cast<std::size_t>(i)];

        // heads
        const double dar_pre = model.w_ar * (2.0 / B) * ar_err * ar_out * (1.0 - ar_out);
        const double dcls_pre = model.w_cls * (cls_out - static_cast<double>(s->label)) / B;
        for (int i = 0; i < r; ++i) {
            (*grad)[static_cast<std::size_t>(l.ar_w + i)] += dar_pre * zs[0][static_cast<std::size_t>(i)];
            (*grad)[static_cast<std::size_t>(l.cls_w + i)] += dcls_pre * zs[0][static_cast<std::size_t>(i)];
            dz0[static_cast<std::size_t>(i)] += dar_pre * p[static_cast<std::size_t>(l.ar_w + i)] +
                                                dcls_pre * p[static_cast<std::size_t>(l.cls_w + i)];
        }
        (*grad)[static_cast<std::size_t>(l.ar_b)] += dar_pre;
        (*grad)[static_cast<std::size_t>(l.cls_b)] += dcls_pre;

        // encoders
        enc_backward(s->window, enc_cur, dz0);
        enc_backward(s->next_window, enc_next, dzn);
    }

    loss.rec /= B * m;
    loss.lin = lin_count > 0.0 ? loss.lin / lin_count : 0.0;
    for (int step = 0; step < h; ++step)
        if (pred_count[static_cast<std::size_t>(step)] > 0.0)
            loss.pred += pred_sum[static_cast<std::size_t>(step)] /
                         pred_count[static_cast<std::size_t>(step)];
    loss.pred /= static_cast<double>(h);
    loss.ar /= B;
    loss.cls /= B;
    loss.total = model.w_rec * loss.rec + model.w_lin * loss.lin + model.w_pred * loss.pred +
                 model.w_ar * loss.ar + model.w_cls * loss.cls;
    loss.cls_accuracy = static_cast<double>(cls_correct) / B;
    return loss;
}

} // namespace detail

// Loss terms over a batch; every term is a mean (see definitions in the
// implementation) and total is their weighted sum.
inline KoopmanLoss compute_loss(const KoopmanModel& model,
                                std::span<const KoopmanSample* const> batch) {
    return detail::koopman_loss_impl(model, batch, nullptr);
}

inline KoopmanLoss compute_loss_and_gradient(const KoopmanModel& model,
                                             std::span<const KoopmanSample* const> batch,
                                             std::vector<double>& grad) {
    return detail::koopman_loss_impl(model, batch, &grad);
}

// Fan-in-scaled uniform init from the seeded PRNG; biases zero; A starts at
// identity plus small noise.
inline KoopmanModel init_koopman_model(const KoopmanHyper& hyper, int n_agents) {
    hyper.validate();
    KoopmanModel model;
    model.window_days = hyper.window_days;
    model.latent_dim = hyper.latent_dim;
    model.hidden_width = hyper.hidden_width;
    model.horizon = hyper.horizon;
    model.w_rec = hyper.w_rec;
    model.w_lin = hyper.w_lin;
    model.w_pred = hyper.w_pred;
    model.w_ar = hyper.w_ar;
    model.w_cls = hyper.w_cls;
    model.mask_padded = hyper.mask_padded;
    model.norm_scale.assign(static_cast<std::size_t>(model.obs_dim),
                            static_cast<double>(n_agents));
    const auto l = model.layout();
    model.params.assign(static_cast<std::size_t>(l.total), 0.0);

    Pcg32 rng(hyper.seed);
    const auto fill_uniform = [&](int offset, int count, int fan_in) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < count; ++i)
            model.params[static_cast<std::size_t>(offset + i)] = rng.uniform(-s, s);
    };
    const int in = model.input_dim(), w = model.hidden_width, r = model.latent_dim,
              m = model.obs_dim;
    fill_uniform(l.enc_w1, w * in, in);
    fill_uniform(l.enc_w2, w * w, w);
    fill_uniform(l.enc_w3, r * w, w);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
            model.params[static_cast<std::size_t>(l.op_a + i * r + j)] =
                (i == j ? 1.0 : 0.0) + rng.uniform(-0.01, 0.01);
    fill_uniform(l.dec_w1, w * r, r);
    fill_uniform(l.dec_w2, m * w, w);
    fill_uniform(l.ar_w, r, r);
    fill_uniform(l.cls_w, r, r);
    return model;
}

struct EpochStats {
    double total = 0.0, rec = 0.0, lin = 0.0, pred = 0.0, ar = 0.0, cls = 0.0;
    double cls_accuracy = 0.0;
};

inline EpochStats to_epoch_stats(const KoopmanLoss& l) {
    return {l.total, l.rec, l.lin, l.pred, l.ar, l.cls, l.cls_accuracy};
}

// Epoch 0 is the pre-training evaluation; epochs 1..E follow each pass.
// selected_epoch is the argmin of validation total loss.
struct TrainReport {
    std::vector<EpochStats> train_epochs;
    std::vector<EpochStats> val_epochs;
    int selected_epoch = 0;
};

struct KoopmanTrainResult {
    KoopmanModel model;
    TrainReport report;
};

inline KoopmanLoss evaluate_samples(const KoopmanModel& model,
                                    const std::vector<KoopmanSample>& samples, int batch_size) {
    if (samples.empty()) throw DataError("evaluate_samples: empty set");
    KoopmanLoss acc;
    int correct_weighted = 0;
    std::vector<const KoopmanSample*> batch;
    for (std::size_t begin = 0; begin < samples.size();) {
        const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
        batch.clear();
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&samples[i]);
        const KoopmanLoss b = compute_loss(model, batch);
        const double wgt = static_cast<double>(end - begin);
        acc.rec += b.rec * wgt;
        acc.lin += b.lin * wgt;
        acc.pred += b.pred * wgt;
        acc.ar += b.ar * wgt;
        acc.cls += b.cls * wgt;
        correct_weighted += static_cast<int>(std::lround(b.cls_accuracy * wgt));
        begin = end;
    }
    const double n = static_cast<double>(samples.size());
    acc.rec /= n;
    acc.lin /= n;
    acc.pred /= n;
    acc.ar /= n;
    acc.cls /= n;
    acc.total = model.w_rec * acc.rec + model.w_lin * acc.lin + model.w_pred * acc.pred +
                model.w_ar * acc.ar + model.w_cls * acc.cls;
    acc.cls_accuracy = correct_weighted / n;
    return acc;
}

// Mini-batch Adam; deterministic given (data, hyper.seed): fixed init, fixed
// shuffle stream, sequential updates.
inline KoopmanTrainResult train_koopman(const std::vector<KoopmanSample>& train_samples,
                                        const std::vector<KoopmanSample>& val_samples,
                                        const KoopmanHyper& hyper, int n_agents) {
    if (train_samples.empty() || val_samples.empty())
        throw DataError("train_koopman: train and validation sets must be nonempty");
    KoopmanModel model = init_koopman_model(hyper, n_agents);

    KoopmanTrainResult result;
    result.report.train_epochs.push_back(
        to_epoch_stats(evaluate_samples(model, train_samples, hyper.batch_size)));
    result.report.val_epochs.push_back(
        to_epoch_stats(evaluate_samples(model, val_samples, hyper.batch_size)));
    double best_val = result.report.val_epochs.back().total;
    result.report.selected_epoch = 0;
    result.model = model;

    std::vector<double> grad, adam_m(model.params.size(), 0.0), adam_v(model.params.size(), 0.0);
    Pcg32 shuffle_rng(derive_seed(hyper.seed, 0x5u, 0xADAu));
    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0u);
    std::vector<const KoopmanSample*> batch;
    std::int64_t step_count = 0;

    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size();) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(hyper.batch_size));
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_samples[order[i]]);
            const KoopmanLoss bl = compute_loss_and_gradient(model, batch, grad);
            if (!std::isfinite(bl.total))
                throw DataError("train_koopman: non-finite loss at epoch " + std::to_string(epoch));
            ++step_count;
            const double bc1 = 1.0 - std::pow(hyper.adam_beta1, static_cast<double>(step_count));
            const double bc2 = 1.0 - std::pow(hyper.adam_beta2, static_cast<double>(step_count));
            for (std::size_t i = 0; i < model.params.size(); ++i) {
                adam_m[i] = hyper.adam_beta1 * adam_m[i] + (1.0 - hyper.adam_beta1) * grad[i];
                adam_v[i] = hyper.adam_beta2 * adam_v[i] + (1.0 - hyper.adam_beta2) * grad[i] * grad[i];
                const double mhat = adam_m[i] / bc1;
                const double vhat = adam_v[i] / bc2;
                model.params[i] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.adam_eps);
            }
            begin = end;
        }
        const KoopmanLoss train_eval = evaluate_samples(model, train_samples, hyper.batch_size);
        const KoopmanLoss val_eval = evaluate_samples(model, val_samples, hyper.batch_size);
        if (!std::isfinite(val_eval.total))
            throw DataError("train_koopman: non-finite validation loss at epoch " +
                            std::to_string(epoch));
        result.report.train_epochs.push_back(to_epoch_stats(train_eval));
        result.report.val_epochs.push_back(to_epoch_stats(val_eval));
        if (val_eval.total < best_val) {
            best_val = val_eval.total;
            result.report.selected_epoch = epoch;
            result.model = model;
        }
    }
    return result;
}

// Builds training samples from stored runs. Targets beyond the last recorded
// day repeat the final record and are flagged as padded.
inline std::vector<KoopmanSample> build_koopman_samples(const Dataset& ds,
                                                        std::span<const std::string> run_ids,
                                                        int k, int h, int end_day_min,
                                                        int end_day_max) {
    const double n = static_cast<double>(ds.spec.base_config.n_agents);
    std::vector<KoopmanSample> out;
    for (const std::string& id : run_ids) {
        const auto it = std::find_if(ds.runs.begin(), ds.runs.end(),
                                     [&](const RunRecord& r) { return r.run_id == id; });
        if (it == ds.runs.end()) throw DataError("build_koopman_samples: unknown run id " + id);
        const std::vector<DailyRecord> days = load_run_days(ds, *it);
        const int last = static_cast<int>(days.size()) - 1;
        const auto day_at = [&](int d) -> const DailyRecord& {
            return days[static_cast<std::size_t>(std::min(d, last))];
        };
        for (int e = end_day_min; e <= end_day_max && e <= last; ++e) {
            KoopmanSample s;
            s.run_id = id;
            s.end_day = e;
            s.rho = it->outcome.attack_rate;
            s.label = it->outcome.label;
            const auto push_day = [&](std::vector<double>& dst, int d) {
                const DailyRecord& r = day_at(d);
                for (int j = 0; j < kObservableCount; ++j)
                    dst.push_back(observable_value(r, j) / n);
            };
            for (int d = e - k + 1; d <= e; ++d) push_day(s.window, d);
            for (int d = e - k + 2; d <= e + 1; ++d) push_day(s.next_window, d);
            s.next_padded = e + 1 > last;
            for (int step = 1; step <= h; ++step) {
                push_day(s.targets, e + step);
                s.target_padded.push_back(e + step > last ? 1 : 0);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

// Window/run-level discrimination of the outbreak head. Run level uses each
// run's last early window.
struct KoopmanEval {
    BinaryMetrics window_metrics;
    BinaryMetrics run_metrics;
    std::int64_t window_count = 0;
    std::int64_t run_count = 0;
};

inline double window_outbreak_probability(const KoopmanModel& model, const Window& w) {
    const std::vector<double> normalized = model.normalize(w.values);
    const std::vector<double> z = encode(model, normalized);
    return predict_heads(model, z).second;
}

// Model file: JSON with version, dimensions, normalization constants, loss
// weights, and all parameter blocks as nested row-major arrays. Doubles are
// emitted with 17 significant digits so reloads are bit-exact.
inline std::string koopman_model_to_json(const KoopmanModel& model) {
    const auto l = model.layout();
    std::string out = "{\n";
    out += "  \"version\": \"" + model.version + "\",\n";
    out += "  \"window_days\": " + std::to_string(model.window_days) + ",\n";
    out += "  \"obs_dim\": " + std::to_string(model.obs_dim) + ",\n";
    out += "  \"latent_dim\": " + std::to_string(model.latent_dim) + ",\n";
    out += "  \"hidden_width\": " + std::to_string(model.hidden_width) + ",\n";
    out += "  \"horizon\": " + std::to_string(model.horizon) + ",\n";
    out += std::string("  \"mask_padded\": ") + (model.mask_padded ? "true" : "false") + ",\n";
    out += "  \"norm_scale\": [";
    for (int j = 0; j < model.obs_dim; ++j)
        out += (j ? ", " : "") + fmt_g17(model.norm_scale[static_cast<std::size_t>(j)]);
    out += "],\n";
    out += "  \"loss_weights\": {\"rec\": " + fmt_g17(model.w_rec) + ", \"lin\": " +
           fmt_g17(model.w_lin) + ", \"pred\": " + fmt_g17(model.w_pred) + ", \"ar\": " +
           fmt_g17(model.w_ar) + ", \"cls\": " + fmt_g17(model.w_cls) + "},\n";
    out += "  \"parameters\": {\n";

    const auto emit_matrix = [&](const char* name, int offset, int rows, int cols, bool last) {
        out += std::string("    \"") + name + "\": [";
        for (int i = 0; i < rows; ++i) {
            out += i ? ", [" : "[";
            for (int j = 0; j < cols; ++j)
                out += (j ? ", " : "") +
                       fmt_g17(model.params[static_cast<std::size_t>(offset + i * cols + j)]);
            out += "]";
        }
        out += last ? "]\n" : "],\n";
    };
    const auto emit_vector = [&](const char* name, int offset, int count, bool last) {
        out += std::string("    \"") + name + "\": [";
        for (int j = 0; j < count; ++j)
            out += (j ? ", " : "") + fmt_g17(model.params[static_cast<std::size_t>(offset + j)]);
        out += last ? "]\n" : "],\n";
    };
    const auto emit_scalar = [&](const char* name, int offset, bool last) {
        out += std::string("    \"") + name + "\": " +
               fmt_g17(model.params[static_cast<std::size_t>(offset)]) + (last ? "\n" : ",\n");
    };

    const int in = model.input_dim(), w = model.hidden_width, r = model.latent_dim,
              m = model.obs_dim;
    emit_matrix("enc_w1", l.enc_w1, w, in, false);
    emit_vector("enc_b1", l.enc_b1, w, false);
    emit_matrix("enc_w2", l.enc_w2, w, w, false);
    emit_vector("enc_b2", l.enc_b2, w, false);
    emit_matrix("enc_w3", l.enc_w3, r, w, false);
    emit_vector("enc_b3", l.enc_b3, r, false);
    emit_matrix("A", l.op_a, r, r, false);
    emit_matrix("dec_w1", l.dec_w1, w, r, false);
    emit_vector("dec_b1", l.dec_b1, w, false);
    emit_matrix("dec_w2", l.dec_w2, m, w, false);
    emit_vector("dec_b2", l.dec_b2, m, false);
    emit_vector("ar_w", l.ar_w, r, false);
    emit_scalar("ar_b", l.ar_b, false);
    emit_vector("cls_w", l.cls_w, r, false);
    emit_scalar("cls_b", l.cls_b, true);
    out += "  }\n}\n";
    return out;
}

inline void save_koopman_model(const std::filesystem::path& path, const KoopmanModel& model) {
    write_text_file(path, koopman_model_to_json(model));
}

inline KoopmanModel load_koopman_model(const std::filesystem::path& path) {
    const nlohmann::json j = load_json_file(path);
    KoopmanModel model;
    try {
        model.version = j.at("version").get<std::string>();
        model.window_days = j.at("window_days").get<int>();
        model.obs_dim = j.at("obs_dim").get<int>();
        model.latent_dim = j.at("latent_dim").get<int>();
        model.hidden_width = j.at("hidden_width").get<int>();
        model.horizon = j.at("horizon").get<int>();
        model.mask_padded = j.at("mask_padded").get<bool>();
        model.norm_scale = j.at("norm_scale").get<std::vector<double>>();
        const auto& lw = j.at("loss_weights");
        model.w_rec = lw.at("rec").get<double>();
        model.w_lin = lw.at("lin").get<double>();
        model.w_pred = lw.at("pred").get<double>();
        model.w_ar = lw.at("ar").get<double>();
        model.w_cls = lw.at("cls").get<double>();
        const auto l = model.layout();
        model.params.assign(static_cast<std::size_t>(l.total), 0.0);
        const auto& pj = j.at("parameters");
        const auto read_matrix = [&](const char* name, int offset, int rows, int cols) {
            const auto& mj = pj.at(name);
            if (static_cast<int>(mj.size()) != rows)
                throw DataError(std::string("model parameter ") + name + ": wrong row count");
            for (int i = 0; i < rows; ++i) {
                const auto& row = mj.at(static_cast<std::size_t>(i));
                if (static_cast<int>(row.size()) != cols)
                    throw DataError(std::string("model parameter ") + name + ": wrong column count");
                for (int jj = 0; jj < cols; ++jj)
                    model.params[static_cast<std::size_t>(offset + i * cols + jj)] =
                        row.at(static_cast<std::size_t>(jj)).get<double>();
            }
        };
        const auto read_vector = [&](const char* name, int offset, int count) {
            const auto v = pj.at(name).get<std::vector<double>>();
            if (static_cast<int>(v.size()) != count)
                throw DataError(std::string("model parameter ") + name + ": wrong length");
            std::copy(v.begin(), v.end(), model.params.begin() + offset);
        };
        const int in = model.input_dim(), w = model.hidden_width, r = model.latent_dim,
                  m = model.obs_dim;
        read_matrix("enc_w1", l.enc_w1, w, in);
        read_vector("enc_b1", l.enc_b1, w);
        read_matrix("enc_w2", l.enc_w2, w, w);
        read_vector("enc_b2", l.enc_b2, w);
        read_matrix("enc_w3", l.enc_w3, r, w);
        read_vector("enc_b3", l.enc_b3, r);
        read_matrix("A", l.op_a, r, r);
        read_matrix("dec_w1", l.dec_w1, w, r);
        read_vector("dec_b1", l.dec_b1, w);
        read_matrix("dec_w2", l.dec_w2, m, w);
        read_vector("dec_b2", l.dec_b2, m);
        read_vector("ar_w", l.ar_w, r);
        model.params[static_cast<std::size_t>(l.ar_b)] = pj.at("ar_b").get<double>();
        read_vector("cls_w", l.cls_w, r);
        model.params[static_cast<std::size_t>(l.cls_b)] = pj.at("cls_b").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model file " + path.string() + ": " + e.what());
    }
    for (double v : model.params)
        if (!std::isfinite(v)) throw DataError("model file " + path.string() + ": non-finite parameter");
    return model;
}

inline nlohmann::ordered_json train_report_to_json(const TrainReport& report) {
    nlohmann::ordered_json j;
    j["selected_epoch"] = report.selected_epoch;
    const auto epochs_json = [](const std::vector<EpochStats>& v) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const EpochStats& e : v) {
            nlohmann::ordered_json o;
            o["total"] = e.total;
            o["reconstruction"] = e.rec;
            o["linearity"] = e.lin;
            o["forecast"] = e.pred;
            o["attack_rate"] = e.ar;
            o["classification"] = e.cls;
            o["classification_accuracy"] = e.cls_accuracy;
            arr.push_back(std::move(o));
        }
        return arr;
    };
    j["train"] = epochs_json(report.train_epochs);
    j["validation"] = epochs_json(report.val_epochs);
    return j;
}

inline KoopmanEval evaluate_koopman(const KoopmanModel& model, const std::vector<Window>& windows,
                                    double threshold = 0.5) {
    if (windows.empty()) throw DataError("evaluate_koopman: no windows");
    std::vector<int> labels;
    std::vector<double> scores;
    struct RunSlot {
        int end_day = -1;
        double prob = 0.0;
        int label = 0;
    };
    std::map<std::string, RunSlot> per_run;
    for (const Window& w : windows) {
        const double prob = window_outbreak_probability(model, w);
        labels.push_back(w.label);
        scores.push_back(prob);
        RunSlot& slot = per_run[w.run_id];
        if (w.end_day > slot.end_day) {
            slot.end_day = w.end_day;
            slot.prob = prob;
            slot.label = w.label;
        }
    }
    KoopmanEval ev;
    ev.window_metrics = compute_metrics(labels, scores, threshold);
    ev.window_count = static_cast<std::int64_t>(labels.size());
    std::vector<int> run_labels;
    std::vector<double> run_scores;
    for (const auto& [id, slot] : per_run) {
        run_labels.push_back(slot.label);
        run_scores.push_back(slot.prob);
    }
    ev.run_metrics = compute_metrics(run_labels, run_scores, threshold);
    ev.run_count = static_cast<std::int64_t>(run_labels.size());
    return ev;
}

} // namespace epiwarn
