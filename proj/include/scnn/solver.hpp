#ifndef SCNN_SOLVER_HPP
#define SCNN_SOLVER_HPP

// Steady-state excitation probabilities of the network:
//
//   q_j = Q+_j / (r_j + Q-_j)
//   Q+_j = Lambda_j + sum_i q_i wPlus(i, j)
//   Q-_j = lambda_j + sum_i q_i wNeg(i, j)
//
// solved by damped successive substitution, from q = 0 unless a warm start is given.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "scnn/core.hpp"
#include "scnn/error.hpp"

namespace scnn {

enum class Sweep { Jacobi, GaussSeidel };

struct SolverOptions {
    double tolerance = 1e-10; // max-norm of the fixed-point defect
    std::size_t maxIterations = 10000;
    double damping = 0.5; // q <- (1 - damping) q + damping F(q)
    Sweep sweep = Sweep::Jacobi;
    std::optional<Vector> initialGuess; // defaults to q = 0; entries must lie in [0, 1]
};

enum class SolveStatus { Converged, ConvergedSaturated };

struct SteadyState {
    Vector q;
    double residual = 0.0;
    std::size_t iterations = 0;
    std::vector<NeuronId> saturated;
    SolveStatus status = SolveStatus::Converged;

    bool is_saturated() const { return status == SolveStatus::ConvergedSaturated; }
};

/// Numerator Q+ and denominator r + Q- of the fixed-point map at q.
struct SignalRates {
    Vector plus;
    Vector denom;
};

inline SignalRates signal_rates(const Network& net, const ExogenousDrive& drive, const Vector& q) {
    return {drive.lambdaPlus + net.wPlus.transpose() * q, net.r + drive.lambdaNeg + net.wNeg.transpose() * q};
}

namespace detail {

inline double excitation(double plus, double denom) {
    if (denom > 0.0) return plus / denom;
    return plus > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

inline double max_clamped_defect(const Vector& q, const SignalRates& s) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < q.size(); ++j)
        worst = std::max(worst, std::abs(q(j) - std::min(1.0, excitation(s.plus(j), s.denom(j)))));
    return worst;
}

} // namespace detail

/// defect_i = q_i - Q+_i / (r_i + Q-_i), unclamped.
inline Vector fixed_point_residual(const Network& net, const ExogenousDrive& drive, const Vector& q) {
    const auto s = signal_rates(net, drive, q);
    Vector defect(q.size());
    for (Eigen::Index j = 0; j < q.size(); ++j) defect(j) = q(j) - detail::excitation(s.plus(j), s.denom(j));
    return defect;
}

inline SteadyState solve_steady_state(const Network& net, const ExogenousDrive& drive, const SolverOptions& opts = {}) {
    validate_drive(net, drive);
    if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw ValidationError("solver: damping must be in (0, 1]");
    if (!(opts.tolerance > 0.0)) throw ValidationError("solver: tolerance must be > 0");

    const auto n = static_cast<Eigen::Index>(net.size());
    const double alpha = opts.damping;
    Vector q = Vector::Zero(n);
    if (opts.initialGuess) {
        if (opts.initialGuess->size() != n) throw ValidationError("solver: initial guess has wrong size");
        q = opts.initialGuess->cwiseMax(0.0).cwiseMin(1.0);
    }
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;

    // One iteration = one evaluation of the map; the defect at q is checked before q moves.
    while (it < opts.maxIterations) {
        ++it;
        if (opts.sweep == Sweep::Jacobi) {
            const auto s = signal_rates(net, drive, q);
            residual = detail::max_clamped_defect(q, s);
            if (residual <= opts.tolerance) break;
            for (Eigen::Index j = 0; j < n; ++j)
                q(j) = (1.0 - alpha) * q(j) + alpha * std::min(1.0, detail::excitation(s.plus(j), s.denom(j)));
        } else {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double plus = drive.lambdaPlus(j) + net.wPlus.col(j).dot(q);
                const double denom = net.r(j) + drive.lambdaNeg(j) + net.wNeg.col(j).dot(q);
                q(j) = (1.0 - alpha) * q(j) + alpha * std::min(1.0, detail::excitation(plus, denom));
            }
            residual = detail::max_clamped_defect(q, signal_rates(net, drive, q));
            if (residual <= opts.tolerance) break;
        }
    }
    if (!(residual <= opts.tolerance)) throw NonConvergence(it, residual);

    SteadyState out;
    const auto s = signal_rates(net, drive, q);
    out.residual = detail::max_clamped_defect(q, s);
    out.iterations = it;
    for (Eigen::Index j = 0; j < n; ++j)
        if (detail::excitation(s.plus(j), s.denom(j)) > 1.0) out.saturated.push_back(NeuronId{static_cast<std::size_t>(j)});
    out.status = out.saturated.empty() ? SolveStatus::Converged : SolveStatus::ConvergedSaturated;
    out.q = std::move(q);
    return out;
}

inline nlohmann::json to_json(const SteadyState& s) {
    std::vector<std::size_t> sat;
    for (auto id : s.saturated) sat.push_back(id.index);
    return {{"q", std::vector<double>(s.q.data(), s.q.data() + s.q.size())},
            {"residual", s.residual},
            {"iterations", s.iterations},
            {"saturated", sat}};
}

} // namespace scnn

#endif // SCNN_SOLVER_HPP
