#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "adlah/errors.hpp"
#include "adlah/rng.hpp"
#include "adlah/textio.hpp"

// Minimal differentiable building blocks with analytic gradients: dense,
// LSTM cell, batch normalization, dropout, dueling head, Huber loss and Adam
// with global-norm gradient clipping. Everything is double precision and the
// backward passes are verified against central finite differences in the
// test suite.

namespace adlah::nn {

using Vec = std::vector<double>;

struct ParamView {
    std::string name;
    Vec* value;
    Vec* grad;
};

enum class Activation { linear, relu, tanh };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Glorot-uniform kernel init: +/- sqrt(6 / (fan_in + fan_out)).
inline void glorot_init(Vec& w, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    for (auto& x : w) x = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

class Dense {
  public:
    Dense(int in, int out, Activation act)
        : in_(in), out_(out), act_(act), w_(std::size_t(in) * out, 0.0), b_(out, 0.0),
          gw_(w_.size(), 0.0), gb_(out, 0.0) {}

    void init(Rng& rng) { glorot_init(w_, in_, out_, rng); }

    struct Cache {
        Vec x;  // batch x in
        Vec z;  // batch x out, pre-activation
        int batch = 0;
    };

    // x: batch x in (row-major); returns batch x out.
    Vec forward(const Vec& x, int batch, Cache* cache) const {
        Vec y(std::size_t(batch) * out_);
        Vec z(std::size_t(batch) * out_);
        for (int bi = 0; bi < batch; ++bi) {
            const double* xb = x.data() + std::size_t(bi) * in_;
            double* zb = z.data() + std::size_t(bi) * out_;
            for (int o = 0; o < out_; ++o) {
                const double* wr = w_.data() + std::size_t(o) * in_;
                double acc = b_[o];
                for (int i = 0; i < in_; ++i) acc += wr[i] * xb[i];
                zb[o] = acc;
            }
        }
        for (std::size_t k = 0; k < z.size(); ++k) y[k] = activate(z[k]);
        if (cache) {
            cache->x = x;
            cache->z = std::move(z);
            cache->batch = batch;
        }
        return y;
    }

    // Accumulates parameter gradients, returns dL/dx.
    Vec backward(const Cache& cache, const Vec& dy) {
        const int batch = cache.batch;
        Vec dx(std::size_t(batch) * in_, 0.0);
        for (int bi = 0; bi < batch; ++bi) {
            const double* xb = cache.x.data() + std::size_t(bi) * in_;
            const double* zb = cache.z.data() + std::size_t(bi) * out_;
            const double* dyb = dy.data() + std::size_t(bi) * out_;
            double* dxb = dx.data() + std::size_t(bi) * in_;
            for (int o = 0; o < out_; ++o) {
                const double dz = dyb[o] * activate_grad(zb[o]);
                gb_[o] += dz;
                double* gwr = gw_.data() + std::size_t(o) * in_;
                const double* wr = w_.data() + std::size_t(o) * in_;
                for (int i = 0; i < in_; ++i) {
                    gwr[i] += dz * xb[i];
                    dxb[i] += dz * wr[i];
                }
            }
        }
        return dx;
    }

    void zero_grad() {
        std::fill(gw_.begin(), gw_.end(), 0.0);
        std::fill(gb_.begin(), gb_.end(), 0.0);
    }

    std::vector<ParamView> params(const std::string& prefix) {
        return {{prefix + ".w", &w_, &gw_}, {prefix + ".b", &b_, &gb_}};
    }

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }
    Vec& weights() { return w_; }
    Vec& bias() { return b_; }

  private:
    double activate(double z) const {
        switch (act_) {
            case Activation::linear: return z;
            case Activation::relu: return z > 0.0 ? z : 0.0;
            case Activation::tanh: return std::tanh(z);
        }
        return z;
    }
    // ReLU uses subgradient 0 at exactly z == 0.
    double activate_grad(double z) const {
        switch (act_) {
            case Activation::linear: return 1.0;
            case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
            case Activation::tanh: {
                const double t = std::tanh(z);
                return 1.0 - t * t;
            }
        }
        return 1.0;
    }

    int in_, out_;
    Activation act_;
    Vec w_, b_;
    Vec gw_, gb_;
};

// ---------------------------------------------------------------------------
// LSTM (single layer; final hidden state is the output)
// ---------------------------------------------------------------------------

class Lstm {
  public:
    Lstm(int in, int hidden)
        : in_(in), hidden_(hidden), wx_(std::size_t(4) * hidden * in, 0.0),
          wh_(std::size_t(4) * hidden * hidden, 0.0), b_(std::size_t(4) * hidden, 0.0),
          gwx_(wx_.size(), 0.0), gwh_(wh_.size(), 0.0), gb_(b_.size(), 0.0) {}

    void init(Rng& rng) {
        glorot_init(wx_, in_, hidden_, rng);
        glorot_init(wh_, hidden_, hidden_, rng);
        // forget-gate bias starts at 1 so early training does not flush state
        for (int h = 0; h < hidden_; ++h) b_[hidden_ + h] = 1.0;
    }

    struct Cache {
        int batch = 0, steps = 0;
        Vec x;                      // batch x steps x in
        std::vector<std::uint8_t> mask;  // batch x steps
        // gate activations and states per (batch, step); masked steps are zero
        Vec gi, gf, gg, go, c, h, tanh_c;  // each batch x steps x hidden
    };

    // Masked timesteps carry h and c through unchanged, so their row content
    // never influences the result.
    Vec forward(const Vec& x, const std::vector<std::uint8_t>& mask, int batch, int steps,
                Cache* cache) const {
        const std::size_t bh = std::size_t(batch) * hidden_;
        const std::size_t bth = bh * steps;
        Vec gi(bth, 0.0), gf(bth, 0.0), gg(bth, 0.0), go(bth, 0.0);
        Vec c(bth, 0.0), h(bth, 0.0), tanh_c(bth, 0.0);
        Vec h_final(bh, 0.0);

        Vec z(std::size_t(4) * hidden_);
        Vec c_prev(hidden_), h_prev(hidden_);
        for (int bi = 0; bi < batch; ++bi) {
            std::fill(c_prev.begin(), c_prev.end(), 0.0);
            std::fill(h_prev.begin(), h_prev.end(), 0.0);
            for (int t = 0; t < steps; ++t) {
                const std::size_t bt = (std::size_t(bi) * steps + t) * hidden_;
                if (!mask[std::size_t(bi) * steps + t]) {
                    // carry-through; cache rows stay zero
                    if (t > 0) {
                        const std::size_t prev = bt - hidden_;
                        for (int k = 0; k < hidden_; ++k) {
                            c[bt + k] = c[prev + k];
                            h[bt + k] = h[prev + k];
                        }
                    }
                    continue;
                }
                const double* xt = x.data() + (std::size_t(bi) * steps + t) * in_;
                for (int r = 0; r < 4 * hidden_; ++r) {
                    const double* wxr = wx_.data() + std::size_t(r) * in_;
                    const double* whr = wh_.data() + std::size_t(r) * hidden_;
                    double acc = b_[r];
                    for (int i = 0; i < in_; ++i) acc += wxr[i] * xt[i];
                    for (int k = 0; k < hidden_; ++k) acc += whr[k] * h_prev[k];
                    z[r] = acc;
                }
                for (int k = 0; k < hidden_; ++k) {
                    const double iv = sigmoid(z[k]);
                    const double fv = sigmoid(z[hidden_ + k]);
                    const double gv = std::tanh(z[2 * hidden_ + k]);
                    const double ov = sigmoid(z[3 * hidden_ + k]);
                    const double cv = fv * c_prev[k] + iv * gv;
                    const double tc = std::tanh(cv);
                    gi[bt + k] = iv;
                    gf[bt + k] = fv;
                    gg[bt + k] = gv;
                    go[bt + k] = ov;
                    c[bt + k] = cv;
                    tanh_c[bt + k] = tc;
                    h[bt + k] = ov * tc;
                }
                for (int k = 0; k < hidden_; ++k) {
                    c_prev[k] = c[bt + k];
                    h_prev[k] = h[bt + k];
                }
            }
            for (int k = 0; k < hidden_; ++k) h_final[std::size_t(bi) * hidden_ + k] = h_prev[k];
        }

        if (cache) {
            cache->batch = batch;
            cache->steps = steps;
            cache->x = x;
            cache->mask = mask;
            cache->gi = std::move(gi);
            cache->gf = std::move(gf);
            cache->gg = std::move(gg);
            cache->go = std::move(go);
            cache->c = std::move(c);
            cache->h = std::move(h);
            cache->tanh_c = std::move(tanh_c);
        }
        return h_final;
    }

    // dh_final: batch x hidden. Returns dL/dx (batch x steps x in) when
    // want_dx is set; otherwise an empty vector (training does not need it).
    Vec backward(const Cache& cc, const Vec& dh_final, bool want_dx = false) {
        const int batch = cc.batch, steps = cc.steps;
        Vec dx;
        if (want_dx) dx.assign(std::size_t(batch) * steps * in_, 0.0);

        Vec dh(hidden_), dc(hidden_), dz(std::size_t(4) * hidden_);
        for (int bi = 0; bi < batch; ++bi) {
            for (int k = 0; k < hidden_; ++k) dh[k] = dh_final[std::size_t(bi) * hidden_ + k];
            std::fill(dc.begin(), dc.end(), 0.0);
            for (int t = steps - 1; t >= 0; --t) {
                if (!cc.mask[std::size_t(bi) * steps + t]) continue;
                const std::size_t bt = (std::size_t(bi) * steps + t) * hidden_;
                // previous real state for this item (cache rows carry through)
                const double* c_prev_row = nullptr;
                const double* h_prev_row = nullptr;
                if (t > 0) {
                    c_prev_row = cc.c.data() + bt - hidden_;
                    h_prev_row = cc.h.data() + bt - hidden_;
                }
                for (int k = 0; k < hidden_; ++k) {
                    const double iv = cc.gi[bt + k], fv = cc.gf[bt + k];
                    const double gv = cc.gg[bt + k], ov = cc.go[bt + k];
                    const double tc = cc.tanh_c[bt + k];
                    const double cprev = c_prev_row ? c_prev_row[k] : 0.0;

                    const double dtc = dh[k] * ov;
                    const double dcv = dc[k] + dtc * (1.0 - tc * tc);
                    const double dov = dh[k] * tc;
                    const double div = dcv * gv;
                    const double dgv = dcv * iv;
                    const double dfv = dcv * cprev;

                    dz[k] = div * iv * (1.0 - iv);
                    dz[hidden_ + k] = dfv * fv * (1.0 - fv);
                    dz[2 * hidden_ + k] = dgv * (1.0 - gv * gv);
                    dz[3 * hidden_ + k] = dov * ov * (1.0 - ov);
                    dc[k] = dcv * fv;
                }
                const double* xt = cc.x.data() + (std::size_t(bi) * steps + t) * in_;
                std::fill(dh.begin(), dh.end(), 0.0);
                for (int r = 0; r < 4 * hidden_; ++r) {
                    const double d = dz[r];
                    if (d == 0.0) continue;
                    double* gxr = gwx_.data() + std::size_t(r) * in_;
                    for (int i = 0; i < in_; ++i) gxr[i] += d * xt[i];
                    double* ghr = gwh_.data() + std::size_t(r) * hidden_;
                    const double* whr = wh_.data() + std::size_t(r) * hidden_;
                    if (h_prev_row) {
                        for (int k = 0; k < hidden_; ++k) ghr[k] += d * h_prev_row[k];
                    }
                    for (int k = 0; k < hidden_; ++k) dh[k] += d * whr[k];
                    gb_[r] += d;
                    if (want_dx) {
                        double* dxt = dx.data() + (std::size_t(bi) * steps + t) * in_;
                        const double* wxr = wx_.data() + std::size_t(r) * in_;
                        for (int i = 0; i < in_; ++i) dxt[i] += d * wxr[i];
                    }
                }
            }
        }
        return dx;
    }

    void zero_grad() {
        std::fill(gwx_.begin(), gwx_.end(), 0.0);
        std::fill(gwh_.begin(), gwh_.end(), 0.0);
        std::fill(gb_.begin(), gb_.end(), 0.0);
    }

    std::vector<ParamView> params(const std::string& prefix) {
        return {{prefix + ".wx", &wx_, &gwx_},
                {prefix + ".wh", &wh_, &gwh_},
                {prefix + ".b", &b_, &gb_}};
    }

    int hidden_dim() const { return hidden_; }

  private:
    int in_, hidden_;
    Vec wx_, wh_, b_;
    Vec gwx_, gwh_, gb_;
};

// ---------------------------------------------------------------------------
// Batch normalization (over the feature axis of a batch x dim tensor)
// ---------------------------------------------------------------------------

class BatchNorm {
  public:
    explicit BatchNorm(int dim, double momentum = 0.99, double eps = 1e-5)
        : dim_(dim), momentum_(momentum), eps_(eps), gamma_(dim, 1.0), beta_(dim, 0.0),
          running_mean_(dim, 0.0), running_var_(dim, 1.0), ggamma_(dim, 0.0),
          gbeta_(dim, 0.0) {}

    struct Cache {
        Vec xhat;     // batch x dim
        Vec x_mu;     // batch x dim
        Vec inv_std;  // dim
        int batch = 0;
    };

    // Train mode uses batch statistics and folds them into the running
    // estimates; eval mode reads the running estimates and never writes.
    Vec forward(const Vec& x, int batch, bool train, Cache* cache) {
        Vec y(x.size());
        if (!train) {
            for (int bi = 0; bi < batch; ++bi)
                for (int d = 0; d < dim_; ++d) {
                    const std::size_t k = std::size_t(bi) * dim_ + d;
                    y[k] = gamma_[d] * (x[k] - running_mean_[d]) /
                               std::sqrt(running_var_[d] + eps_) +
                           beta_[d];
                }
            return y;
        }
        Vec mu(dim_, 0.0), var(dim_, 0.0), inv_std(dim_);
        for (int bi = 0; bi < batch; ++bi)
            for (int d = 0; d < dim_; ++d) mu[d] += x[std::size_t(bi) * dim_ + d];
        for (int d = 0; d < dim_; ++d) mu[d] /= double(batch);
        for (int bi = 0; bi < batch; ++bi)
            for (int d = 0; d < dim_; ++d) {
                const double dev = x[std::size_t(bi) * dim_ + d] - mu[d];
                var[d] += dev * dev;
            }
        for (int d = 0; d < dim_; ++d) {
            var[d] /= double(batch);
            inv_std[d] = 1.0 / std::sqrt(var[d] + eps_);
            running_mean_[d] = momentum_ * running_mean_[d] + (1.0 - momentum_) * mu[d];
            running_var_[d] = momentum_ * running_var_[d] + (1.0 - momentum_) * var[d];
        }
        Vec xhat(x.size()), x_mu(x.size());
        for (int bi = 0; bi < batch; ++bi)
            for (int d = 0; d < dim_; ++d) {
                const std::size_t k = std::size_t(bi) * dim_ + d;
                x_mu[k] = x[k] - mu[d];
                xhat[k] = x_mu[k] * inv_std[d];
                y[k] = gamma_[d] * xhat[k] + beta_[d];
            }
        if (cache) {
            cache->xhat = std::move(xhat);
            cache->x_mu = std::move(x_mu);
            cache->inv_std = std::move(inv_std);
            cache->batch = batch;
        }
        return y;
    }

    // Backward through the train-mode path.
    Vec backward(const Cache& cc, const Vec& dy) {
        const int B = cc.batch;
        Vec dx(dy.size(), 0.0);
        for (int d = 0; d < dim_; ++d) {
            double sum_dxhat = 0.0, sum_dxhat_xmu = 0.0;
            for (int bi = 0; bi < B; ++bi) {
                const std::size_t k = std::size_t(bi) * dim_ + d;
                const double dxhat = dy[k] * gamma_[d];
                sum_dxhat += dxhat;
                sum_dxhat_xmu += dxhat * cc.x_mu[k];
                ggamma_[d] += dy[k] * cc.xhat[k];
                gbeta_[d] += dy[k];
            }
            const double istd = cc.inv_std[d];
            const double dvar = sum_dxhat_xmu * (-0.5) * istd * istd * istd;
            double dmu = -sum_dxhat * istd;
            double sum_xmu = 0.0;
            for (int bi = 0; bi < B; ++bi) sum_xmu += cc.x_mu[std::size_t(bi) * dim_ + d];
            dmu += dvar * (-2.0 / double(B)) * sum_xmu;
            for (int bi = 0; bi < B; ++bi) {
                const std::size_t k = std::size_t(bi) * dim_ + d;
                const double dxhat = dy[k] * gamma_[d];
                dx[k] = dxhat * istd + dvar * 2.0 * cc.x_mu[k] / double(B) + dmu / double(B);
            }
        }
        return dx;
    }

    void zero_grad() {
        std::fill(ggamma_.begin(), ggamma_.end(), 0.0);
        std::fill(gbeta_.begin(), gbeta_.end(), 0.0);
    }

    std::vector<ParamView> params(const std::string& prefix) {
        return {{prefix + ".gamma", &gamma_, &ggamma_}, {prefix + ".beta", &beta_, &gbeta_}};
    }

    Vec& running_mean() { return running_mean_; }
    Vec& running_var() { return running_var_; }

  private:
    int dim_;
    double momentum_, eps_;
    Vec gamma_, beta_, running_mean_, running_var_;
    Vec ggamma_, gbeta_;
};

// ---------------------------------------------------------------------------
// Dropout (inverted scaling; identity in eval mode)
// ---------------------------------------------------------------------------

class Dropout {
  public:
    explicit Dropout(double rate) : rate_(rate) {}

    struct Cache {
        std::vector<std::uint8_t> keep;
    };

    Vec forward(const Vec& x, bool train, Rng* rng, Cache* cache) const {
        if (!train || rate_ <= 0.0) {
            if (cache) cache->keep.assign(x.size(), 1);
            return x;
        }
        Vec y(x.size());
        std::vector<std::uint8_t> keep(x.size());
        const double scale = 1.0 / (1.0 - rate_);
        for (std::size_t k = 0; k < x.size(); ++k) {
            keep[k] = rng->uniform() >= rate_ ? 1 : 0;
            y[k] = keep[k] ? x[k] * scale : 0.0;
        }
        if (cache) cache->keep = std::move(keep);
        return y;
    }

    Vec backward(const Cache& cc, const Vec& dy) const {
        Vec dx(dy.size());
        const double scale = rate_ > 0.0 ? 1.0 / (1.0 - rate_) : 1.0;
        for (std::size_t k = 0; k < dy.size(); ++k)
            dx[k] = cc.keep[k] ? dy[k] * scale : 0.0;
        return dx;
    }

  private:
    double rate_;
};

// ---------------------------------------------------------------------------
// Dueling head: Q(s,a) = V(s) + A(s,a) - mean_a' A(s,a')
// ---------------------------------------------------------------------------

class DuelingHead {
  public:
    DuelingHead(int in, int n_actions)
        : n_actions_(n_actions), value_(in, 1, Activation::linear),
          adv_(in, n_actions, Activation::linear) {}

    void init(Rng& rng) {
        value_.init(rng);
        adv_.init(rng);
    }

    struct Cache {
        Dense::Cache vc, ac;
        int batch = 0;
    };

    Vec forward(const Vec& h, int batch, Cache* cache) const {
        Dense::Cache vc, ac;
        const Vec v = value_.forward(h, batch, cache ? &vc : nullptr);
        const Vec a = adv_.forward(h, batch, cache ? &ac : nullptr);
        Vec q(std::size_t(batch) * n_actions_);
        for (int bi = 0; bi < batch; ++bi) {
            double mean_a = 0.0;
            for (int k = 0; k < n_actions_; ++k) mean_a += a[std::size_t(bi) * n_actions_ + k];
            mean_a /= double(n_actions_);
            for (int k = 0; k < n_actions_; ++k)
                q[std::size_t(bi) * n_actions_ + k] =
                    v[bi] + a[std::size_t(bi) * n_actions_ + k] - mean_a;
        }
        if (cache) {
            cache->vc = std::move(vc);
            cache->ac = std::move(ac);
            cache->batch = batch;
        }
        return q;
    }

    Vec backward(Cache& cc, const Vec& dq) {
        const int batch = cc.batch;
        Vec dv(batch), da(std::size_t(batch) * n_actions_);
        for (int bi = 0; bi < batch; ++bi) {
            double sum = 0.0;
            for (int k = 0; k < n_actions_; ++k) sum += dq[std::size_t(bi) * n_actions_ + k];
            dv[bi] = sum;
            for (int k = 0; k < n_actions_; ++k)
                da[std::size_t(bi) * n_actions_ + k] =
                    dq[std::size_t(bi) * n_actions_ + k] - sum / double(n_actions_);
        }
        Vec dh = value_.backward(cc.vc, dv);
        const Vec dh2 = adv_.backward(cc.ac, da);
        for (std::size_t k = 0; k < dh.size(); ++k) dh[k] += dh2[k];
        return dh;
    }

    void zero_grad() {
        value_.zero_grad();
        adv_.zero_grad();
    }

    std::vector<ParamView> params(const std::string& prefix) {
        auto out = value_.params(prefix + ".value");
        auto a = adv_.params(prefix + ".adv");
        out.insert(out.end(), a.begin(), a.end());
        return out;
    }

  private:
    int n_actions_;
    Dense value_, adv_;
};

// ---------------------------------------------------------------------------
// Huber loss
// ---------------------------------------------------------------------------

inline double huber(double prediction, double target, double delta = 1.0) {
    const double e = prediction - target;
    const double a = std::abs(e);
    return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

inline double huber_grad(double prediction, double target, double delta = 1.0) {
    const double e = prediction - target;
    if (std::abs(e) <= delta) return e;
    return e > 0.0 ? delta : -delta;
}

// ---------------------------------------------------------------------------
// Adam with global-norm gradient clipping
// ---------------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 10.0;  // global L2 norm
};

class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    std::uint64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    void apply(const std::vector<ParamView>& params) {
        std::size_t total = 0;
        for (const auto& p : params) total += p.value->size();
        if (m_.empty()) {
            m_.assign(total, 0.0);
            v_.assign(total, 0.0);
        } else if (m_.size() != total) {
            throw ConsistencyError("adam: parameter count changed between steps");
        }

        double norm_sq = 0.0;
        for (const auto& p : params)
            for (double g : *p.grad) {
                if (!std::isfinite(g))
                    throw ValidationError("adam: non-finite gradient in " + p.name);
                norm_sq += g * g;
            }
        const double norm = std::sqrt(norm_sq);
        const double scale =
            (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
        std::size_t k = 0;
        for (const auto& p : params) {
            Vec& w = *p.value;
            const Vec& g = *p.grad;
            for (std::size_t i = 0; i < w.size(); ++i, ++k) {
                const double gc = g[i] * scale;
                m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * gc;
                v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * gc * gc;
                const double mhat = m_[k] / bc1;
                const double vhat = v_[k] / bc2;
                w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    Vec& moment1() { return m_; }
    Vec& moment2() { return v_; }
    void set_step(std::uint64_t s) { step_ = s; }

  private:
    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    Vec m_, v_;
};

// ---------------------------------------------------------------------------
// Text serialization of named arrays (hex floats, exact round-trip)
// ---------------------------------------------------------------------------

namespace io {

using textio::read_double;

inline void write_array(std::ostream& os, const std::string& name, const Vec& v) {
    os << "array " << name << " " << v.size() << "\n";
    char buf[40];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", v[i]);
        os << buf << (i % 8 == 7 ? '\n' : ' ');
    }
    if (!v.empty() && v.size() % 8 != 0) os << "\n";
}

inline Vec read_array(std::istream& is, const std::string& expected_name) {
    std::string tag, name;
    std::size_t n = 0;
    if (!(is >> tag >> name >> n) || tag != "array" || name != expected_name)
        throw IoError("checkpoint: expected array '" + expected_name + "', found '" + tag +
                      " " + name + "'");
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = read_double(is, ("array " + expected_name).c_str());
    return v;
}

}  // namespace io

// ---------------------------------------------------------------------------
// The deployment-decision network:
//   masking -> LSTM(64) -> batch-norm -> concat(runtime) -> dense(64, ReLU)
//   -> dropout(0.2) -> dueling head -> Q(wait), Q(deploy)
// ---------------------------------------------------------------------------

struct NetworkSpec {
    int feature_dim = 163;
    int seq_len = 10;
    int lstm_units = 64;
    int runtime_dim = 3;
    int dense_units = 64;
    int n_actions = 2;
    double dropout_rate = 0.2;
    double bn_momentum = 0.99;

    bool operator==(const NetworkSpec&) const = default;
};

struct Batch {
    Vec seq;                         // batch x seq_len x feature_dim
    std::vector<std::uint8_t> mask;  // batch x seq_len
    Vec runtime;                     // batch x runtime_dim
    int batch = 0;
};

class QNetwork {
  public:
    explicit QNetwork(NetworkSpec spec = {})
        : spec_(spec), lstm_(spec.feature_dim, spec.lstm_units),
          bn_(spec.lstm_units, spec.bn_momentum),
          dense_(spec.lstm_units + spec.runtime_dim, spec.dense_units, Activation::relu),
          dropout_(spec.dropout_rate), head_(spec.dense_units, spec.n_actions) {}

    const NetworkSpec& spec() const { return spec_; }

    void init(Rng& rng) {
        lstm_.init(rng);
        dense_.init(rng);
        head_.init(rng);
    }

    struct Cache {
        Lstm::Cache lstm;
        BatchNorm::Cache bn;
        Dense::Cache dense;
        Dropout::Cache dropout;
        DuelingHead::Cache head;
        Vec runtime;
        int batch = 0;
        bool train = false;
    };

    void check_shapes(const Batch& in) const {
        const std::size_t b = in.batch;
        if (in.seq.size() != b * spec_.seq_len * spec_.feature_dim)
            throw ValidationError("forward: sequence tensor shape mismatch");
        if (in.mask.size() != b * spec_.seq_len)
            throw ValidationError("forward: mask shape mismatch");
        if (in.runtime.size() != b * spec_.runtime_dim)
            throw ValidationError("forward: runtime feature shape mismatch");
    }

    // Training forward: batch statistics in batch-norm (running stats are
    // folded), dropout active. rng drives the dropout mask.
    Vec forward_train(const Batch& in, Rng& rng, Cache* cache) {
        return forward_impl(in, true, &rng, cache);
    }

    // Eval forward: running batch-norm statistics, no dropout, no state
    // mutation. Used for action selection and target computation.
    Vec forward_eval(const Batch& in) const {
        return const_cast<QNetwork*>(this)->forward_impl(in, false, nullptr, nullptr);
    }

    // dq: batch x n_actions upstream gradient. Accumulates into layer grads.
    void backward(Cache& cc, const Vec& dq, bool want_dx = false, Vec* dx_out = nullptr) {
        Vec d_drop = head_.backward(cc.head, dq);
        Vec d_dense_in = dense_.backward(cc.dense, dropout_.backward(cc.dropout, d_drop));
        // split the concat: first lstm_units go through batch-norm
        const int H = spec_.lstm_units, R = spec_.runtime_dim;
        Vec d_bn(std::size_t(cc.batch) * H);
        for (int bi = 0; bi < cc.batch; ++bi)
            for (int k = 0; k < H; ++k)
                d_bn[std::size_t(bi) * H + k] = d_dense_in[std::size_t(bi) * (H + R) + k];
        Vec d_h = bn_.backward(cc.bn, d_bn);
        Vec dx = lstm_.backward(cc.lstm, d_h, want_dx);
        if (want_dx && dx_out) *dx_out = std::move(dx);
    }

    void zero_grad() {
        lstm_.zero_grad();
        bn_.zero_grad();
        dense_.zero_grad();
        head_.zero_grad();
    }

    std::vector<ParamView> params() {
        std::vector<ParamView> out = lstm_.params("lstm");
        for (auto& p : bn_.params("bn")) out.push_back(p);
        for (auto& p : dense_.params("dense")) out.push_back(p);
        for (auto& p : head_.params("head")) out.push_back(p);
        return out;
    }

    // Trainable parameters plus batch-norm running statistics; the full
    // state that target-network syncs and checkpoints must carry.
    std::vector<std::pair<std::string, Vec*>> state_arrays() {
        std::vector<std::pair<std::string, Vec*>> out;
        for (auto& p : params()) out.emplace_back(p.name, p.value);
        out.emplace_back("bn.running_mean", &bn_.running_mean());
        out.emplace_back("bn.running_var", &bn_.running_var());
        return out;
    }

    void copy_from(QNetwork& other) {
        if (!(spec_ == other.spec_)) throw ConsistencyError("copy_from: spec mismatch");
        auto dst = state_arrays();
        auto src = other.state_arrays();
        for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].second = *src[i].second;
    }

    void save(std::ostream& os) {
        os << "adlah-qnet v1\n";
        os << "spec " << spec_.feature_dim << " " << spec_.seq_len << " " << spec_.lstm_units
           << " " << spec_.runtime_dim << " " << spec_.dense_units << " " << spec_.n_actions;
        char buf[64];
        std::snprintf(buf, sizeof buf, " %a %a\n", spec_.dropout_rate, spec_.bn_momentum);
        os << buf;
        for (auto& [name, vec] : state_arrays()) io::write_array(os, name, *vec);
    }

    static QNetwork load(std::istream& is) {
        std::string magic, version;
        is >> magic >> version;
        if (magic != "adlah-qnet" || version != "v1")
            throw IoError("checkpoint: bad network header '" + magic + " " + version + "'");
        std::string tag;
        NetworkSpec spec;
        is >> tag >> spec.feature_dim >> spec.seq_len >> spec.lstm_units >> spec.runtime_dim >>
            spec.dense_units >> spec.n_actions;
        if (tag != "spec") throw IoError("checkpoint: missing network spec");
        spec.dropout_rate = io::read_double(is, "spec.dropout_rate");
        spec.bn_momentum = io::read_double(is, "spec.bn_momentum");
        QNetwork net(spec);
        for (auto& [name, vec] : net.state_arrays()) *vec = io::read_array(is, name);
        return net;
    }

  private:
    Vec forward_impl(const Batch& in, bool train, Rng* rng, Cache* cache) {
        check_shapes(in);
        Lstm::Cache lc;
        const Vec h = lstm_.forward(in.seq, in.mask, in.batch, spec_.seq_len,
                                    cache ? &lc : nullptr);
        BatchNorm::Cache bc;
        const Vec hn = bn_.forward(h, in.batch, train, cache ? &bc : nullptr);
        const int H = spec_.lstm_units, R = spec_.runtime_dim;
        Vec cat(std::size_t(in.batch) * (H + R));
        for (int bi = 0; bi < in.batch; ++bi) {
            for (int k = 0; k < H; ++k)
                cat[std::size_t(bi) * (H + R) + k] = hn[std::size_t(bi) * H + k];
            for (int r = 0; r < R; ++r)
                cat[std::size_t(bi) * (H + R) + H + r] =
                    in.runtime[std::size_t(bi) * R + r];
        }
        Dense::Cache dc;
        const Vec z = dense_.forward(cat, in.batch, cache ? &dc : nullptr);
        Dropout::Cache oc;
        const Vec zd = dropout_.forward(z, train, rng, cache ? &oc : nullptr);
        DuelingHead::Cache hc;
        Vec q = head_.forward(zd, in.batch, cache ? &hc : nullptr);
        if (cache) {
            cache->lstm = std::move(lc);
            cache->bn = std::move(bc);
            cache->dense = std::move(dc);
            cache->dropout = std::move(oc);
            cache->head = std::move(hc);
            cache->runtime = in.runtime;
            cache->batch = in.batch;
            cache->train = train;
        }
        return q;
    }

    NetworkSpec spec_;
    Lstm lstm_;
    BatchNorm bn_;
    Dense dense_;
    Dropout dropout_;
    DuelingHead head_;
};

}  // namespace adlah::nn
