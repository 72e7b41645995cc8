#include "qlab/net.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "qlab/rng.hpp"

namespace qlab {

namespace {

constexpr const char* kFormatTag = "dueling-mlp/1";

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_mask(double z) { return z > 0.0 ? 1.0 : 0.0; }

/// y = W x + b with W row-major (rows x cols).
void dense(const double* w, const double* b, const double* x, double* y, int rows,
           int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        double acc = b[r];
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

void ensure(std::vector<double>& v, int n) { v.resize(static_cast<std::size_t>(n)); }

}  // namespace

DuelingMlp::DuelingMlp(int d_in, int n_actions, int hidden)
    : d_in_(d_in), n_actions_(n_actions), hidden_(hidden) {
    require(d_in > 0 && n_actions > 0 && hidden > 0, "DuelingMlp: bad shape");
    Layout& l = layout_;
    l.w1 = 0;
    l.b1 = l.w1 + hidden * d_in;
    l.w2 = l.b1 + hidden;
    l.b2 = l.w2 + hidden * hidden;
    l.wv = l.b2 + hidden;
    l.bv = l.wv + hidden;
    l.wa = l.bv + 1;
    l.ba = l.wa + n_actions * hidden;
    l.total = l.ba + n_actions;
    params_.assign(static_cast<std::size_t>(l.total), 0.0);
}

DuelingMlp DuelingMlp::initialized(int d_in, int n_actions, std::uint64_t seed,
                                   int hidden) {
    DuelingMlp net(d_in, n_actions, hidden);
    Rng rng(seed);
    auto fill = [&](int offset, int count, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (int i = 0; i < count; ++i)
            net.params_[static_cast<std::size_t>(offset + i)] =
                rng.uniform(-limit, limit);
    };
    const Layout l = net.layout_;
    fill(l.w1, hidden * d_in, d_in, hidden);
    fill(l.w2, hidden * hidden, hidden, hidden);
    fill(l.wv, hidden, hidden, 1);
    fill(l.wa, n_actions * hidden, hidden, n_actions);
    // biases stay zero
    return net;
}

void DuelingMlp::forward(std::span<const double> obs, std::span<double> q_out,
                         MlpWorkspace& ws) const {
    require(static_cast<int>(obs.size()) == d_in_, "forward: observation length");
    for (double x : obs)
        require(std::isfinite(x), "forward: non-finite observation entry");
    const int h = hidden_, n = n_actions_;
    const double* th = params_.data();
    const Layout& l = layout_;
    ensure(ws.z1, h); ensure(ws.h1, h); ensure(ws.z2, h); ensure(ws.h2, h);
    ensure(ws.adv, n);

    dense(th + l.w1, th + l.b1, obs.data(), ws.z1.data(), h, d_in_);
    for (int i = 0; i < h; ++i) ws.h1[static_cast<std::size_t>(i)] = relu(ws.z1[static_cast<std::size_t>(i)]);
    dense(th + l.w2, th + l.b2, ws.h1.data(), ws.z2.data(), h, h);
    for (int i = 0; i < h; ++i) ws.h2[static_cast<std::size_t>(i)] = relu(ws.z2[static_cast<std::size_t>(i)]);

    double value = th[l.bv];
    for (int i = 0; i < h; ++i) value += th[l.wv + i] * ws.h2[static_cast<std::size_t>(i)];
    dense(th + l.wa, th + l.ba, ws.h2.data(), ws.adv.data(), n, h);

    double adv_mean = 0.0;
    for (int a = 0; a < n; ++a) adv_mean += ws.adv[static_cast<std::size_t>(a)];
    adv_mean /= n;
    for (int a = 0; a < n; ++a)
        q_out[static_cast<std::size_t>(a)] = value + ws.adv[static_cast<std::size_t>(a)] - adv_mean;
}

std::vector<double> DuelingMlp::forward(std::span<const double> obs) const {
    MlpWorkspace ws;
    std::vector<double> q(static_cast<std::size_t>(n_actions_));
    forward(obs, q, ws);
    return q;
}

void DuelingMlp::grad_q(std::span<const double> obs, ActionId a,
                        std::span<double> grad_out, MlpWorkspace& ws) const {
    require(a >= 0 && a < n_actions_, "grad_q: action out of range");
    require(grad_out.size() == params_.size(), "grad_q: gradient length");
    const int h = hidden_, n = n_actions_;
    const double* th = params_.data();
    const Layout& l = layout_;

    // Forward pass (fills ws.z1/h1/z2/h2/adv).
    ensure(ws.adv, n);
    std::vector<double>& q_tmp = ws.g_adv;  // reuse as scratch for q
    ensure(q_tmp, n);
    forward(obs, q_tmp, ws);

    std::fill(grad_out.begin(), grad_out.end(), 0.0);
    double* g = grad_out.data();

    // Heads: dQ/dV = 1, dQ/dA_j = [j == a] - 1/n.
    g[l.bv] = 1.0;
    for (int i = 0; i < h; ++i) g[l.wv + i] = ws.h2[static_cast<std::size_t>(i)];

    ensure(ws.g_h2, h);
    for (int i = 0; i < h; ++i) ws.g_h2[static_cast<std::size_t>(i)] = th[l.wv + i];
    const double inv_n = 1.0 / n;
    for (int j = 0; j < n; ++j) {
        const double gj = (j == a ? 1.0 : 0.0) - inv_n;
        g[l.ba + j] = gj;
        double* gw = g + l.wa + static_cast<std::size_t>(j) * h;
        const double* wj = th + l.wa + static_cast<std::size_t>(j) * h;
        for (int i = 0; i < h; ++i) {
            gw[i] = gj * ws.h2[static_cast<std::size_t>(i)];
            ws.g_h2[static_cast<std::size_t>(i)] += gj * wj[i];
        }
    }

    // Trunk layer 2.
    ensure(ws.g_z2, h);
    for (int i = 0; i < h; ++i)
        ws.g_z2[static_cast<std::size_t>(i)] =
            ws.g_h2[static_cast<std::size_t>(i)] * relu_mask(ws.z2[static_cast<std::size_t>(i)]);
    ensure(ws.g_h1, h);
    std::fill(ws.g_h1.begin(), ws.g_h1.end(), 0.0);
    for (int r = 0; r < h; ++r) {
        const double gz = ws.g_z2[static_cast<std::size_t>(r)];
        g[l.b2 + r] = gz;
        double* gw = g + l.w2 + static_cast<std::size_t>(r) * h;
        const double* wr = th + l.w2 + static_cast<std::size_t>(r) * h;
        if (gz == 0.0) continue;
        for (int c = 0; c < h; ++c) {
            gw[c] = gz * ws.h1[static_cast<std::size_t>(c)];
            ws.g_h1[static_cast<std::size_t>(c)] += gz * wr[c];
        }
    }

    // Trunk layer 1.
    ensure(ws.g_z1, h);
    for (int i = 0; i < h; ++i)
        ws.g_z1[static_cast<std::size_t>(i)] =
            ws.g_h1[static_cast<std::size_t>(i)] * relu_mask(ws.z1[static_cast<std::size_t>(i)]);
    for (int r = 0; r < h; ++r) {
        const double gz = ws.g_z1[static_cast<std::size_t>(r)];
        g[l.b1 + r] = gz;
        if (gz == 0.0) continue;
        double* gw = g + l.w1 + static_cast<std::size_t>(r) * d_in_;
        for (int c = 0; c < d_in_; ++c) gw[c] = gz * obs[static_cast<std::size_t>(c)];
    }
}

std::vector<double> DuelingMlp::grad_q(std::span<const double> obs, ActionId a) const {
    MlpWorkspace ws;
    std::vector<double> g(params_.size());
    grad_q(obs, a, g, ws);
    return g;
}

std::string DuelingMlp::to_json() const {
    nlohmann::json j;
    j["format"] = kFormatTag;
    j["d_in"] = d_in_;
    j["hidden"] = hidden_;
    j["n_actions"] = n_actions_;
    j["activation"] = "relu";
    j["params"] = params_;
    return j.dump();
}

DuelingMlp DuelingMlp::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    require(j.at("format").get<std::string>() == kFormatTag,
            "DuelingMlp: unknown serialization format");
    DuelingMlp net(j.at("d_in").get<int>(), j.at("n_actions").get<int>(),
                   j.at("hidden").get<int>());
    auto params = j.at("params").get<std::vector<double>>();
    require(params.size() == net.params_.size(), "DuelingMlp: parameter count mismatch");
    net.params_ = std::move(params);
    return net;
}

// --------------------------------------------------------------------------

namespace {

inline double loss_slope(double residual, LossKind kind) {
    if (kind == LossKind::Mse) return residual;
    return std::clamp(residual, -1.0, 1.0);  // huber, delta = 1
}

}  // namespace

void loss_grad(const DuelingMlp& net, std::span<const LossSample> batch, LossKind kind,
               Exec exec, LossGrad& out, std::vector<double>& scratch) {
    require(!batch.empty(), "loss_grad: empty batch");
    const int b = static_cast<int>(batch.size());
    const int p = net.param_count();
    out.grad.assign(static_cast<std::size_t>(p), 0.0);
    out.residuals.resize(static_cast<std::size_t>(b));
    const double inv_b = 1.0 / b;

    if (exec == Exec::Parallel) {
        // Per-element gradient rows, then a fixed-order blockwise
        // reduction per coordinate; identical arithmetic to the serial
        // path for any thread count.
        scratch.resize(static_cast<std::size_t>(b) * p);
        std::vector<double> coef(static_cast<std::size_t>(b));
        constexpr int kBlock = 512;
        const int n_blocks = (p + kBlock - 1) / kBlock;
#pragma omp parallel
        {
            MlpWorkspace ws;
            std::vector<double> q;
#pragma omp for schedule(static)
            for (int i = 0; i < b; ++i) {
                const LossSample& s = batch[static_cast<std::size_t>(i)];
                q.resize(static_cast<std::size_t>(net.n_actions()));
                net.forward(s.obs, q, ws);
                const double r = q[static_cast<std::size_t>(s.action)] - s.target;
                out.residuals[static_cast<std::size_t>(i)] = r;
                coef[static_cast<std::size_t>(i)] = loss_slope(r, kind) * inv_b;
                net.grad_q(s.obs, s.action,
                           {scratch.data() + static_cast<std::size_t>(i) * p,
                            static_cast<std::size_t>(p)},
                           ws);
            }
#pragma omp for schedule(static)
            for (int blk = 0; blk < n_blocks; ++blk) {
                const int k0 = blk * kBlock;
                const int k1 = std::min(p, k0 + kBlock);
                double* g = out.grad.data();
                for (int i = 0; i < b; ++i) {
                    const double c = coef[static_cast<std::size_t>(i)];
                    const double* row = scratch.data() + static_cast<std::size_t>(i) * p;
                    for (int k = k0; k < k1; ++k) g[k] += c * row[k];
                }
            }
        }
    } else {
        MlpWorkspace ws;
        std::vector<double> q(static_cast<std::size_t>(net.n_actions()));
        scratch.resize(static_cast<std::size_t>(p));
        for (int i = 0; i < b; ++i) {
            const LossSample& s = batch[static_cast<std::size_t>(i)];
            net.forward(s.obs, q, ws);
            out.residuals[static_cast<std::size_t>(i)] =
                q[static_cast<std::size_t>(s.action)] - s.target;
            net.grad_q(s.obs, s.action, {scratch.data(), static_cast<std::size_t>(p)}, ws);
            const double c = loss_slope(out.residuals[static_cast<std::size_t>(i)], kind) * inv_b;
            for (int k = 0; k < p; ++k)
                out.grad[static_cast<std::size_t>(k)] += c * scratch[static_cast<std::size_t>(k)];
        }
    }
}

LossGrad loss_grad(const DuelingMlp& net, std::span<const LossSample> batch,
                   LossKind kind, Exec exec) {
    LossGrad out;
    std::vector<double> scratch;
    loss_grad(net, batch, kind, exec, out, scratch);
    return out;
}

OptimizerState OptimizerState::sgd(double learning_rate) {
    OptimizerState s;
    s.kind = OptimizerKind::Sgd;
    s.learning_rate = learning_rate;
    return s;
}

OptimizerState OptimizerState::adam(double learning_rate, int param_count) {
    OptimizerState s;
    s.kind = OptimizerKind::Adam;
    s.learning_rate = learning_rate;
    s.m.assign(static_cast<std::size_t>(param_count), 0.0);
    s.v.assign(static_cast<std::size_t>(param_count), 0.0);
    return s;
}

void optimizer_step(DuelingMlp& net, OptimizerState& opt, std::span<const double> grad,
                    Exec exec) {
    require(grad.size() == net.params().size(), "optimizer_step: gradient length");
    const int p = net.param_count();
    double* th = net.params().data();
    const double* g = grad.data();
    opt.step += 1;

    if (opt.kind == OptimizerKind::Sgd) {
        const double lr = opt.learning_rate;
        if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
            for (int k = 0; k < p; ++k) th[k] -= lr * g[k];
        } else {
            for (int k = 0; k < p; ++k) th[k] -= lr * g[k];
        }
        return;
    }

    require(opt.m.size() == grad.size(), "optimizer_step: adam moment length");
    const double b1 = opt.beta1, b2 = opt.beta2, eps = opt.eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
    const double lr = opt.learning_rate;
    double* m = opt.m.data();
    double* v = opt.v.data();
    auto update = [&](int k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        th[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    };
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int k = 0; k < p; ++k) update(k);
    } else {
        for (int k = 0; k < p; ++k) update(k);
    }
}

}  // namespace qlab
