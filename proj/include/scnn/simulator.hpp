#ifndef SCNN_SIMULATOR_HPP
#define SCNN_SIMULATOR_HPP

// Exact event-driven simulation of the spiking network as a continuous-time Markov chain.
// Each neuron holds an integer potential. Exogenous excitatory spikes raise it, inhibitory
// ones lower it (absorbed at 0). An excited neuron fires at rate r, loses one unit and sends
// the spike to j as excitatory with probability wPlus(i,j)/r, as inhibitory with wNeg(i,j)/r,
// or out of the network with probability d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "json.hpp"
#include "scnn/core.hpp"
#include "scnn/error.hpp"
#include "scnn/solver.hpp"

namespace scnn {

struct SimOptions {
    double burnInFraction = 0.1;   // leading share of the horizon excluded from statistics
    std::size_t histogramLevels = 64; // levels 0..L-2 kept exactly, the last bin absorbs the tail
    std::size_t batches = 20;      // batch means for the standard error of empiricalQ
    double snapshotInterval = 20.0; // spacing of potential snapshots used for goodness-of-fit; 0 disables

    void check() const {
        if (!(burnInFraction >= 0.0 && burnInFraction < 1.0)) throw ValidationError("simulate: burn-in fraction must be in [0, 1)");
        if (histogramLevels < 2) throw ValidationError("simulate: need at least 2 histogram levels");
        if (batches < 2) throw ValidationError("simulate: need at least 2 batches");
        if (!(snapshotInterval >= 0.0)) throw ValidationError("simulate: snapshot interval must be >= 0");
    }
};

struct EventCounts {
    std::uint64_t exogenousExcitatory = 0;
    std::uint64_t exogenousInhibitory = 0;
    std::uint64_t absorbed = 0; // inhibitory spikes that met a zero potential
    std::uint64_t firings = 0;
    std::uint64_t routedExcitatory = 0;
    std::uint64_t routedInhibitory = 0;
    std::uint64_t departures = 0;

    std::uint64_t total() const { return exogenousExcitatory + exogenousInhibitory + firings; }
    bool operator==(const EventCounts&) const = default;
};

struct SimResult {
    Vector empiricalQ;
    Vector stdErr;
    std::vector<std::vector<double>> marginalHist; // time-weighted, per neuron, sums to 1
    std::vector<std::vector<std::uint64_t>> snapshotCounts;
    EventCounts counts;
    std::uint64_t events = 0;
    double horizon = 0.0;
    double burnIn = 0.0;
    double nowCounted = 0.0; // observed time after burn-in

    bool operator==(const SimResult&) const = default;
};

namespace detail {

// Portable draws: the standard distributions are implementation-defined.
inline double unit_open(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

struct Route {
    double cumulative;
    std::size_t target;
    bool excitatory;
};

} // namespace detail

inline SimResult simulate(const Network& net, const ExogenousDrive& drive, double horizon, std::uint64_t seed,
                          const SimOptions& opts = {}) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("simulate: horizon must be finite and > 0");
    opts.check();
    validate_drive(net, drive);
    const std::size_t n = net.size();
    const std::size_t levels = opts.histogramLevels;

    std::vector<std::vector<detail::Route>> routes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!(net.r(ii) > 0.0)) continue;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            if (net.wPlus(ii, jj) > 0.0) routes[i].push_back({acc += net.wPlus(ii, jj) / net.r(ii), j, true});
            if (net.wNeg(ii, jj) > 0.0) routes[i].push_back({acc += net.wNeg(ii, jj) / net.r(ii), j, false});
        }
    }

    SimResult out;
    out.horizon = horizon;
    out.burnIn = opts.burnInFraction * horizon;
    out.nowCounted = horizon - out.burnIn;
    out.marginalHist.assign(n, std::vector<double>(levels, 0.0));
    out.snapshotCounts.assign(n, std::vector<std::uint64_t>(levels, 0));
    const double batchLength = out.nowCounted / static_cast<double>(opts.batches);
    std::vector<std::vector<double>> busyByBatch(n, std::vector<double>(opts.batches, 0.0));

    std::vector<std::uint64_t> potential(n, 0);
    std::vector<double> lastChange(n, 0.0);

    // Credits the interval [lastChange, t) at the current potential of neuron j.
    auto settle = [&](std::size_t j, double t) {
        const double from = std::max(lastChange[j], out.burnIn);
        lastChange[j] = t;
        if (t <= from) return;
        out.marginalHist[j][std::min<std::uint64_t>(potential[j], levels - 1)] += t - from;
        if (potential[j] == 0) return;
        double a = from;
        while (a < t) {
            const auto b = std::min(opts.batches - 1, static_cast<std::size_t>((a - out.burnIn) / batchLength));
            const double end = b + 1 == opts.batches ? t : std::min(t, out.burnIn + batchLength * static_cast<double>(b + 1));
            busyByBatch[j][b] += end - a;
            if (end <= a) break;
            a = end;
        }
    };

    std::mt19937_64 rng(seed);
    double exoTotal = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        exoTotal += drive.lambdaPlus(static_cast<Eigen::Index>(j)) + drive.lambdaNeg(static_cast<Eigen::Index>(j));
    double activeRate = 0.0;
    double nextSnapshot = opts.snapshotInterval > 0.0 ? out.burnIn + opts.snapshotInterval : std::numeric_limits<double>::infinity();
    double t = 0.0;

    auto excite = [&](std::size_t j, double now) {
        settle(j, now);
        if (potential[j]++ == 0) activeRate += net.r(static_cast<Eigen::Index>(j));
    };
    auto inhibit = [&](std::size_t j, double now) {
        if (potential[j] == 0) {
            ++out.counts.absorbed;
            return;
        }
        settle(j, now);
        if (--potential[j] == 0) activeRate -= net.r(static_cast<Eigen::Index>(j));
    };

    while (true) {
        // Recomputed from scratch periodically to stop floating-point drift in the running sum.
        if ((out.events & 0xFFFF) == 0) {
            activeRate = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (potential[j] > 0) activeRate += net.r(static_cast<Eigen::Index>(j));
        }
        const double total = exoTotal + activeRate;
        const double next = total > 0.0 ? t - std::log(detail::unit_open(rng)) / total : std::numeric_limits<double>::infinity();
        while (nextSnapshot <= std::min(next, horizon)) {
            for (std::size_t j = 0; j < n; ++j) ++out.snapshotCounts[j][std::min<std::uint64_t>(potential[j], levels - 1)];
            nextSnapshot += opts.snapshotInterval;
        }
        if (next > horizon) break;
        t = next;
        ++out.events;

        // Pick the event by a linear scan over neurons: exogenous +, exogenous -, then firing.
        double u = detail::unit_open(rng) * total;
        std::size_t who = n;
        int kind = 0;
        for (std::size_t j = 0; j < n && who == n; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double rates[3] = {drive.lambdaPlus(jj), drive.lambdaNeg(jj), potential[j] > 0 ? net.r(jj) : 0.0};
            for (int k = 0; k < 3; ++k) {
                if (u < rates[k]) {
                    who = j;
                    kind = k;
                    break;
                }
                u -= rates[k];
            }
        }
        if (who == n) {
            // Rounding left u past the last rate; fall back to the last eligible event.
            for (std::size_t j = n; j-- > 0 && who == n;) {
                const auto jj = static_cast<Eigen::Index>(j);
                if (potential[j] > 0 && net.r(jj) > 0.0) who = j, kind = 2;
                else if (drive.lambdaNeg(jj) > 0.0) who = j, kind = 1;
                else if (drive.lambdaPlus(jj) > 0.0) who = j, kind = 0;
            }
        }

        if (kind == 0) {
            ++out.counts.exogenousExcitatory;
            excite(who, t);
        } else if (kind == 1) {
            ++out.counts.exogenousInhibitory;
            inhibit(who, t);
        } else {
            ++out.counts.firings;
            settle(who, t);
            if (--potential[who] == 0) activeRate -= net.r(static_cast<Eigen::Index>(who));
            const double v = detail::unit_open(rng);
            const auto& table = routes[who];
            const auto it = std::upper_bound(table.begin(), table.end(), v,
                                             [](double x, const detail::Route& r) { return x < r.cumulative; });
            if (it == table.end()) {
                ++out.counts.departures;
            } else if (it->excitatory) {
                ++out.counts.routedExcitatory;
                excite(it->target, t);
            } else {
                ++out.counts.routedInhibitory;
                inhibit(it->target, t);
            }
        }
    }

    out.empiricalQ = Vector::Zero(static_cast<Eigen::Index>(n));
    out.stdErr = Vector::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        settle(j, horizon);
        auto& hist = out.marginalHist[j];
        double mass = 0.0;
        for (double h : hist) mass += h;
        if (mass > 0.0)
            for (double& h : hist) h /= mass;
        const auto jj = static_cast<Eigen::Index>(j);
        out.empiricalQ(jj) = std::clamp(1.0 - hist[0], 0.0, 1.0);
        double mean = 0.0, sq = 0.0;
        for (double b : busyByBatch[j]) mean += b / batchLength;
        mean /= static_cast<double>(opts.batches);
        for (double b : busyByBatch[j]) sq += (b / batchLength - mean) * (b / batchLength - mean);
        const double bCount = static_cast<double>(opts.batches);
        out.stdErr(jj) = std::sqrt(sq / (bCount - 1.0) / bCount);
    }
    return out;
}

/// Expected model time for about `events` events at the analytic steady state.
inline double horizon_for_events(const Network& net, const ExogenousDrive& drive, const Vector& q, double events) {
    const double rate = drive.lambdaPlus.sum() + drive.lambdaNeg.sum() + q.cwiseMin(1.0).dot(net.r);
    if (!(rate > 0.0)) throw ValidationError("horizon_for_events: network has no activity");
    return events / rate;
}

struct OracleComparison {
    Vector gap;      // |q_sim - q|
    Vector sigma;    // batch-means standard error
    std::vector<bool> within; // gap <= k sigma
    double maxGap = 0.0;
    std::size_t failures = 0;

    bool passed() const { return failures == 0; }
};

inline OracleComparison compare_to_analytic(const SimResult& sim, const Vector& q, double sigmas = 3.0) {
    if (sim.empiricalQ.size() != q.size())
        throw ValidationError("compare_to_analytic: simulation has " + std::to_string(sim.empiricalQ.size()) +
                              " neurons, steady state has " + std::to_string(q.size()));
    if (!(sim.nowCounted > 0.0)) throw ValidationError("compare_to_analytic: simulation has no observed time");
    OracleComparison out;
    out.gap = (sim.empiricalQ - q).cwiseAbs();
    out.sigma = sim.stdErr;
    for (Eigen::Index j = 0; j < q.size(); ++j) {
        const bool ok = out.gap(j) <= sigmas * out.sigma(j) || out.gap(j) == 0.0;
        out.within.push_back(ok);
        if (!ok) ++out.failures;
    }
    out.maxGap = q.size() > 0 ? out.gap.maxCoeff() : 0.0;
    return out;
}

inline OracleComparison compare_to_analytic(const SimResult& sim, const SteadyState& state, double sigmas = 3.0) {
    return compare_to_analytic(sim, state.q, sigmas);
}

struct GeometricFit {
    double statistic = 0.0;
    std::size_t degreesOfFreedom = 0;
    double pValue = 0.0;
    std::uint64_t samples = 0;
};

/// Pearson chi-square of the snapshot occupancy of one neuron against (1-q) q^n.
/// Levels are pooled from the top until every bin expects at least `minExpected`.
inline GeometricFit geometric_fit(const SimResult& sim, std::size_t neuron, double q, double minExpected = 5.0) {
    if (neuron >= sim.snapshotCounts.size()) throw ValidationError("geometric_fit: neuron index out of range");
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("geometric_fit: q must be in (0, 1)");
    const auto& counts = sim.snapshotCounts[neuron];
    GeometricFit fit;
    for (auto c : counts) fit.samples += c;
    if (fit.samples == 0) throw ValidationError("geometric_fit: no snapshots recorded");
    const double total = static_cast<double>(fit.samples);

    // Bins 0..k-1 are exact levels; bin k collects the tail n >= k.
    std::size_t k = 0;
    while (k + 1 < counts.size() && total * (1.0 - q) * std::pow(q, static_cast<double>(k)) >= minExpected &&
           total * std::pow(q, static_cast<double>(k + 1)) >= minExpected)
        ++k;
    if (k == 0) throw ValidationError("geometric_fit: too few snapshots for a chi-square test");
    double stat = 0.0;
    std::uint64_t tail = 0;
    for (std::size_t level = 0; level < counts.size(); ++level) {
        if (level < k) {
            const double expected = total * (1.0 - q) * std::pow(q, static_cast<double>(level));
            const double diff = static_cast<double>(counts[level]) - expected;
            stat += diff * diff / expected;
        } else {
            tail += counts[level];
        }
    }
    const double expectedTail = total * std::pow(q, static_cast<double>(k));
    stat += (static_cast<double>(tail) - expectedTail) * (static_cast<double>(tail) - expectedTail) / expectedTail;
    fit.statistic = stat;
    fit.degreesOfFreedom = k; // k + 1 bins, q supplied rather than fitted
    boost::math::chi_squared dist(static_cast<double>(fit.degreesOfFreedom));
    fit.pValue = boost::math::cdf(boost::math::complement(dist, stat));
    return fit;
}

inline nlohmann::json to_json(const SimResult& s) {
    const auto& c = s.counts;
    return {{"empiricalQ", std::vector<double>(s.empiricalQ.data(), s.empiricalQ.data() + s.empiricalQ.size())},
            {"stdErr", std::vector<double>(s.stdErr.data(), s.stdErr.data() + s.stdErr.size())},
            {"marginalHist", s.marginalHist},
            {"events", s.events},
            {"horizon", s.horizon},
            {"burnIn", s.burnIn},
            {"counts",
             {{"exogenousExcitatory", c.exogenousExcitatory},
              {"exogenousInhibitory", c.exogenousInhibitory},
              {"absorbed", c.absorbed},
              {"firings", c.firings},
              {"routedExcitatory", c.routedExcitatory},
              {"routedInhibitory", c.routedInhibitory},
              {"departures", c.departures}}}};
}

} // namespace scnn

#endif // SCNN_SIMULATOR_HPP
