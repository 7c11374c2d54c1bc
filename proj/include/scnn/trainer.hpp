#ifndef SCNN_TRAINER_HPP
#define SCNN_TRAINER_HPP

// Supervised training of the excitatory/inhibitory weights by projected gradient
// descent on the mean squared error between the output neuron's excitation
// probability and a target in [0, 1].
//
// Gradients come from implicit differentiation of the steady state. With
// N_j = Lambda_j + sum_i q_i wPlus(i,j) and D_j = r_j + lambda_j + sum_i q_i wNeg(i,j),
// the Jacobian of the map is J(j,i) = (wPlus(i,j) - q_j wNeg(i,j)) / D_j, and the
// adjoint g solves (I - J)^T g = dE/dq. Since r_a = sum(out_a) / (1 - d_a) every
// outgoing weight of a also moves D_a.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scnn/core.hpp"
#include "scnn/error.hpp"
#include "scnn/solver.hpp"

namespace scnn {

struct Sample {
    std::vector<double> rf;
    std::vector<double> lcf;
    std::vector<double> ucf;
    double target = 0.0;
    std::size_t environment = 0; // provenance tag; not fed to the network

    bool operator==(const Sample&) const = default;
};

struct EncodeOptions {
    std::array<double, kStreamCount> rateScale{0.5, 0.5, 0.5};       // Lambda = feature * scale, per stream
    std::array<double, kStreamCount> inhibitoryScale{0.0, 0.0, 0.0}; // lambda = feature * scale, per stream
};

/// Maps sample features onto the network's input neurons, stream by stream in id order.
/// A stream with no input neurons (pruned) ignores its features.
inline ExogenousDrive encode_sample(const Network& net, const Sample& sample, const EncodeOptions& enc = {}) {
    auto drive = ExogenousDrive::zeros(net.size());
    const std::array<const std::vector<double>*, kStreamCount> features{&sample.rf, &sample.lcf, &sample.ucf};
    for (std::size_t s = 0; s < kStreamCount; ++s) {
        const auto ids = net.ids_of(stream_field(s));
        if (ids.empty()) continue;
        const auto& f = *features[s];
        if (f.size() != ids.size())
            throw ValidationError("encode: " + std::string(to_string(stream_field(s))) + " has " +
                                  std::to_string(f.size()) + " features but the network has " +
                                  std::to_string(ids.size()) + " inputs");
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!(f[k] >= 0.0))
                throw ValidationError("encode: negative " + std::string(to_string(stream_field(s))) + " feature at " +
                                      std::to_string(k));
            const auto id = static_cast<Eigen::Index>(ids[k]);
            drive.lambdaPlus(id) = f[k] * enc.rateScale[s];
            drive.lambdaNeg(id) = f[k] * enc.inhibitoryScale[s];
        }
    }
    return drive;
}

inline std::size_t designated_output(const Network& net) {
    const auto outs = net.outputs();
    if (outs.empty()) throw ValidationError("network has no output neuron");
    return outs.front();
}

inline double predict(const Network& net, const ExogenousDrive& drive, const SolverOptions& opts = {}) {
    const auto ss = solve_steady_state(net, drive, opts);
    return ss.q(static_cast<Eigen::Index>(designated_output(net)));
}

inline double predict(const Network& net, const Sample& sample, const EncodeOptions& enc = {},
                      const SolverOptions& opts = {}) {
    return predict(net, encode_sample(net, sample, enc), opts);
}

enum class GradientMode { Analytic, FiniteDifference };

struct Gradient {
    double loss = 0.0; // (q_out - target)^2
    double prediction = 0.0;
    Matrix dWPlus;
    Matrix dWNeg;
    Vector dLambdaPlus;
    Vector dLambdaNeg;
    Vector state; // steady state q the gradient was taken at
};

inline constexpr double kFiniteDifferenceStep = 1e-6;

/// Solver settings for finite-difference probes: the central difference divides solver
/// noise by 2h, so the fixed point must be resolved close to machine precision.
inline SolverOptions finite_difference_solver(SolverOptions opts) {
    opts.tolerance = 1e-15;
    opts.maxIterations = std::max<std::size_t>(opts.maxIterations, 100000);
    return opts;
}

namespace detail {

inline Gradient analytic_gradient(const Network& net, const ExogenousDrive& drive, double target,
                                  const SolverOptions& opts) {
    const auto ss = solve_steady_state(net, drive, opts);
    if (ss.is_saturated())
        throw SaturationError("gradient: neuron " + std::to_string(ss.saturated.front().index) + " is saturated");
    const auto n = static_cast<Eigen::Index>(net.size());
    const auto out = static_cast<Eigen::Index>(designated_output(net));
    const Vector& q = ss.q;
    const auto s = signal_rates(net, drive, q);
    const Vector invD = s.denom.cwiseInverse();

    // J = diag(1/D) (wPlus^T - diag(q) wNeg^T)
    Matrix J = invD.asDiagonal() * (Matrix(net.wPlus.transpose()) - q.asDiagonal() * Matrix(net.wNeg.transpose()));
    Matrix A = Matrix::Identity(n, n) - J;
    Vector b = Vector::Zero(n);
    b(out) = 2.0 * (q(out) - target);
    const Vector g = A.transpose().partialPivLu().solve(b);

    // Sensitivity of F_a to r_a, pushed through r_a = sum(out_a) / (1 - d_a).
    Vector rateTerm = Vector::Zero(n);
    Vector plusOverD2(n);
    for (Eigen::Index a = 0; a < n; ++a) {
        plusOverD2(a) = s.plus(a) * invD(a) * invD(a);
        if (!net.is_sink(static_cast<std::size_t>(a))) rateTerm(a) = g(a) * plusOverD2(a) / (1.0 - net.d(a));
    }

    Gradient grad;
    grad.loss = (q(out) - target) * (q(out) - target);
    grad.prediction = q(out);
    grad.dWPlus = Matrix::Zero(n, n);
    grad.dWNeg = Matrix::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!connected(net.neurons[a], net.neurons[j])) continue;
            grad.dWPlus(a, j) = g(j) * q(a) * invD(j) - rateTerm(a);
            grad.dWNeg(a, j) = -g(j) * q(a) * plusOverD2(j) - rateTerm(a);
        }
    grad.dLambdaPlus = g.cwiseProduct(invD);
    grad.dLambdaNeg = -g.cwiseProduct(plusOverD2);
    grad.state = ss.q;
    return grad;
}

inline double squared_error(const Network& net, const ExogenousDrive& drive, double target, const SolverOptions& opts) {
    const double p = predict(net, drive, opts);
    return (p - target) * (p - target);
}

inline Gradient finite_difference_gradient(const Network& net, const ExogenousDrive& drive, double target,
                                           const SolverOptions& base) {
    const auto opts = finite_difference_solver(base);
    const double h = kFiniteDifferenceStep;
    const auto n = static_cast<Eigen::Index>(net.size());
    Gradient grad;
    grad.state = solve_steady_state(net, drive, opts).q;
    grad.prediction = grad.state(static_cast<Eigen::Index>(designated_output(net)));
    grad.loss = (grad.prediction - target) * (grad.prediction - target);
    grad.dWPlus = Matrix::Zero(n, n);
    grad.dWNeg = Matrix::Zero(n, n);

    auto weight_partial = [&](bool plus, Eigen::Index a, Eigen::Index j) {
        Network probe = net;
        Matrix& w = plus ? probe.wPlus : probe.wNeg;
        const double w0 = w(a, j);
        w(a, j) = w0 + h;
        rederive_rates(probe);
        const double up = squared_error(probe, drive, target, opts);
        w(a, j) = w0 - h;
        rederive_rates(probe);
        const double down = squared_error(probe, drive, target, opts);
        return (up - down) / (2.0 * h);
    };
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!connected(net.neurons[a], net.neurons[j])) continue;
            grad.dWPlus(a, j) = weight_partial(true, a, j);
            grad.dWNeg(a, j) = weight_partial(false, a, j);
        }

    grad.dLambdaPlus = Vector::Zero(n);
    grad.dLambdaNeg = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!net.neurons[i].is_input()) continue;
        for (bool plus : {true, false}) {
            ExogenousDrive probe = drive;
            Vector& rate = plus ? probe.lambdaPlus : probe.lambdaNeg;
            const double x0 = rate(i);
            if (x0 < h) continue; // one-sided region; rate must stay nonnegative
            rate(i) = x0 + h;
            const double up = squared_error(net, probe, target, opts);
            rate(i) = x0 - h;
            const double down = squared_error(net, probe, target, opts);
            (plus ? grad.dLambdaPlus : grad.dLambdaNeg)(i) = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

} // namespace detail

/// Partials of (q_out - target)^2 with respect to every structural weight and exogenous rate.
inline Gradient gradient(const Network& net, const ExogenousDrive& drive, double target,
                         GradientMode mode = GradientMode::Analytic, const SolverOptions& opts = {}) {
    return mode == GradientMode::Analytic ? detail::analytic_gradient(net, drive, target, opts)
                                          : detail::finite_difference_gradient(net, drive, target, opts);
}

inline Gradient gradient(const Network& net, const Sample& sample, GradientMode mode = GradientMode::Analytic,
                         const EncodeOptions& enc = {}, const SolverOptions& opts = {}) {
    return gradient(net, encode_sample(net, sample, enc), sample.target, mode, opts);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learningRate = 1.0;
    std::size_t epochs = 200;
    std::uint64_t seed = 0; // network initialisation seed when the caller builds the network
    GradientMode mode = GradientMode::Analytic;
    double weightFloor = 1e-6;
    // Lower bound on each neuron's total outgoing rate, as a fraction of its value when
    // training starts. 0 disables; 1 forbids shrinking r below its initial value.
    double minRateFraction = 1.0;
    std::size_t maxStepHalvings = 5;
    std::array<double, kStreamCount> fieldRateMultiplier{1.0, 1.0, 1.0}; // by source stream (RF, LCF, UCF)
    EncodeOptions encoding;
    SolverOptions solver;

    void check() const {
        if (!(learningRate > 0.0)) throw ValidationError("train: learning rate must be > 0");
        if (!(weightFloor >= 0.0)) throw ValidationError("train: weight floor must be >= 0");
        if (!(minRateFraction >= 0.0)) throw ValidationError("train: min rate fraction must be >= 0");
        for (double m : fieldRateMultiplier)
            if (!(m >= 0.0)) throw ValidationError("train: field rate multipliers must be >= 0");
    }
};

struct TrainResult {
    Network network;
    double initialLoss = 0.0;
    std::vector<double> lossCurve; // training MSE after each epoch's update
    std::size_t rejectedSteps = 0; // trial steps discarded by backtracking
    std::size_t rejectedSaturated = 0;
    std::size_t rejectedUnconverged = 0;
};

struct BatchEvaluation {
    double mse = 0.0;
    Matrix dWPlus;
    Matrix dWNeg;
    std::vector<Vector> states; // per-sample steady states, reused as warm starts
};

/// Mean loss and mean gradient over the dataset, accumulated in sample order. When `warm`
/// holds one state per sample, each solve starts from it instead of q = 0.
inline BatchEvaluation evaluate_batch(const Network& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                                      const std::vector<Vector>* warm = nullptr) {
    const auto n = static_cast<Eigen::Index>(net.size());
    BatchEvaluation out{0.0, Matrix::Zero(n, n), Matrix::Zero(n, n), {}};
    out.states.reserve(data.size());
    SolverOptions opts = cfg.solver;
    for (std::size_t k = 0; k < data.size(); ++k) {
        if (warm && warm->size() == data.size()) opts.initialGuess = (*warm)[k];
        Gradient g;
        try {
            g = gradient(net, data[k], cfg.mode, cfg.encoding, opts);
        } catch (const NonConvergence& e) {
            throw NonConvergence(e.iterations(), e.residual(), "sample " + std::to_string(k));
        } catch (const SaturationError& e) {
            throw SaturationError("sample " + std::to_string(k) + ": " + e.what());
        }
        out.mse += g.loss;
        out.dWPlus += g.dWPlus;
        out.dWNeg += g.dWNeg;
        out.states.push_back(std::move(g.state));
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    out.mse *= inv;
    out.dWPlus *= inv;
    out.dWNeg *= inv;
    return out;
}

inline double mean_squared_error(const Network& net, const std::vector<Sample>& data, const EncodeOptions& enc = {},
                                 const SolverOptions& opts = {}) {
    double sum = 0.0;
    for (const auto& s : data) {
        const double e = predict(net, s, enc, opts) - s.target;
        sum += e * e;
    }
    return data.empty() ? 0.0 : sum / static_cast<double>(data.size());
}

/// Euclidean projection of `w` onto {x : x >= floor, sum(x) >= total}: x = max(floor, w + tau)
/// with the smallest tau >= 0 that meets the sum.
inline void project_row(std::vector<double>& w, double floor, double total) {
    const std::vector<double> orig = w;
    double sum = 0.0;
    for (auto& x : w) sum += (x = std::max(floor, x));
    if (sum >= total || w.empty()) return;
    // The sum is piecewise linear in tau; the `active` smallest entries sit at the floor.
    std::vector<double> sorted = orig;
    std::sort(sorted.begin(), sorted.end());
    const auto m = sorted.size();
    double tail = 0.0;
    for (double x : sorted) tail += x;
    double tau = 0.0;
    for (std::size_t active = 0; active < m; ++active) {
        tau = (total - floor * static_cast<double>(active) - tail) / static_cast<double>(m - active);
        if (sorted[active] + tau >= floor) break;
        tail -= sorted[active];
    }
    for (std::size_t k = 0; k < m; ++k) w[k] = std::max(floor, orig[k] + tau);
}

/// One projected step W <- P(W - step * multiplier * dW) on structural synapses, followed by
/// rate re-derivation. P clamps at the weight floor and keeps each neuron's total outgoing
/// rate at least minOutgoing(a).
inline Network projected_step(const Network& net, const BatchEvaluation& eval, double step, const TrainConfig& cfg,
                              const Vector& minOutgoing) {
    Network next = net;
    const auto n = static_cast<Eigen::Index>(net.size());
    std::vector<double> row;
    std::vector<Eigen::Index> cols;
    for (Eigen::Index a = 0; a < n; ++a) {
        const auto& src = net.neurons[a];
        if (src.stream < 0) continue;
        const double rate = step * cfg.fieldRateMultiplier[static_cast<std::size_t>(src.stream)];
        row.clear();
        cols.clear();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!connected(src, net.neurons[j])) continue;
            cols.push_back(j);
            row.push_back(net.wPlus(a, j) - rate * eval.dWPlus(a, j));
            row.push_back(net.wNeg(a, j) - rate * eval.dWNeg(a, j));
        }
        project_row(row, cfg.weightFloor, minOutgoing(a));
        for (std::size_t k = 0; k < cols.size(); ++k) {
            next.wPlus(a, cols[k]) = row[2 * k];
            next.wNeg(a, cols[k]) = row[2 * k + 1];
        }
    }
    rederive_rates(next);
    return next;
}

inline TrainResult train(Network net, const std::vector<Sample>& data, const TrainConfig& cfg) {
    cfg.check();
    if (data.empty()) throw ValidationError("train: dataset is empty");
    require_valid(net);

    Vector minOutgoing(static_cast<Eigen::Index>(net.size()));
    for (std::size_t i = 0; i < net.size(); ++i)
        minOutgoing(static_cast<Eigen::Index>(i)) = cfg.minRateFraction * outgoing_rate(net, i);

    TrainResult result;
    BatchEvaluation current = evaluate_batch(net, data, cfg);
    result.initialLoss = current.mse;
    result.lossCurve.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double step = cfg.learningRate;
        for (std::size_t attempt = 0; attempt <= cfg.maxStepHalvings; ++attempt, step *= 0.5) {
            Network trial = projected_step(net, current, step, cfg, minOutgoing);
            std::optional<BatchEvaluation> eval;
            try {
                eval = evaluate_batch(trial, data, cfg, &current.states);
            } catch (const NonConvergence&) {
                ++result.rejectedUnconverged;
            } catch (const SaturationError&) {
                ++result.rejectedSaturated;
            }
            if (eval && eval->mse <= current.mse) {
                net = std::move(trial);
                current = std::move(*eval);
                break;
            }
            ++result.rejectedSteps;
        }
        result.lossCurve.push_back(current.mse);
    }
    result.network = std::move(net);
    return result;
}

} // namespace scnn

#endif // SCNN_TRAINER_HPP
