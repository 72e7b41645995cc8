#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qlab/types.hpp"

namespace qlab {

enum class LossKind { Mse, Huber };
enum class OptimizerKind { Sgd, Adam };

/// Scratch buffers for forward/backward passes, reusable across calls.
struct MlpWorkspace {
    std::vector<double> z1, h1, z2, h2, adv;
    std::vector<double> g_h2, g_z2, g_h1, g_z1, g_adv;
};

/// Dueling multilayer perceptron with two 64-wide rectified hidden layers,
/// a scalar value head and an n_actions advantage head:
///   Q(s, a) = V(h) + A(h, a) - mean_a' A(h, a').
/// All parameters live in one flat vector; the layout is fixed (w1, b1,
/// w2, b2, wv, bv, wa, ba, weights row-major) and versioned in the JSON
/// serialization. Gradients are hand-derived reverse mode for exactly this
/// architecture; the rectifier subgradient at 0 is 0.
class DuelingMlp {
public:
    struct Layout {
        int w1, b1, w2, b2, wv, bv, wa, ba;  // offsets into the flat vector
        int total;
    };

    DuelingMlp() = default;
    DuelingMlp(int d_in, int n_actions, int hidden = 64);

    /// Fan-in/fan-out scaled uniform weights (+-sqrt(6/(fan_in+fan_out))),
    /// zero biases. Deterministic per seed.
    static DuelingMlp initialized(int d_in, int n_actions, std::uint64_t seed,
                                  int hidden = 64);

    int d_in() const { return d_in_; }
    int n_actions() const { return n_actions_; }
    int hidden() const { return hidden_; }
    int param_count() const { return layout_.total; }
    Layout layout() const { return layout_; }

    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }

    /// Q(s, .) for one observation. obs.size() must equal d_in.
    void forward(std::span<const double> obs, std::span<double> q_out,
                 MlpWorkspace& ws) const;
    std::vector<double> forward(std::span<const double> obs) const;

    /// Exact gradient of the scalar Q(s, a) with respect to the flat
    /// parameter vector. grad_out.size() must equal param_count().
    void grad_q(std::span<const double> obs, ActionId a, std::span<double> grad_out,
                MlpWorkspace& ws) const;
    std::vector<double> grad_q(std::span<const double> obs, ActionId a) const;

    /// Serializes architecture + flat parameters; format tag "dueling-mlp/1".
    std::string to_json() const;
    static DuelingMlp from_json(const std::string& text);

    bool operator==(const DuelingMlp& other) const = default;

private:
    int d_in_ = 0, n_actions_ = 0, hidden_ = 0;
    Layout layout_{};
    std::vector<double> params_;
};

/// One supervised sample of the batched TD regression.
struct LossSample {
    std::span<const double> obs;
    ActionId action = 0;
    double target = 0.0;
};

struct LossGrad {
    std::vector<double> grad;       // d/dtheta of (1/b) sum L(Q(s,a) - target)
    std::vector<double> residuals;  // per element Q(s,a) - target
};

/// Gradient of the mean per-element loss over a batch. Mse: L(e) = e^2/2;
/// Huber: quadratic for |e| <= 1, linear beyond. The reduction order over
/// elements is fixed, so Serial and Parallel agree bitwise.
LossGrad loss_grad(const DuelingMlp& net, std::span<const LossSample> batch,
                   LossKind kind, Exec exec = Exec::Parallel);

/// Hot-path variant with caller-owned buffers (out and scratch keep their
/// capacity across iterations).
void loss_grad(const DuelingMlp& net, std::span<const LossSample> batch, LossKind kind,
               Exec exec, LossGrad& out, std::vector<double>& scratch);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Sgd;
    double learning_rate = 0.0005;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;  // adam moments, length P; empty for sgd

    static OptimizerState sgd(double learning_rate);
    static OptimizerState adam(double learning_rate, int param_count);
};

/// Applies one descent step to net.params() in place and advances opt.
/// Sgd: theta -= lr * g. Adam: bias-corrected moment update.
void optimizer_step(DuelingMlp& net, OptimizerState& opt, std::span<const double> grad,
                    Exec exec = Exec::Parallel);

}  // namespace qlab
