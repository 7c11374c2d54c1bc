#ifndef SCNN_TEST_NETWORKS_HPP
#define SCNN_TEST_NETWORKS_HPP

// Hand-built networks shared by the tests, with reference values produced by
// tests/oracles/reference_values.py (50-digit mpmath, scipy).

#include <random>

#include "scnn/core.hpp"

namespace scnn::test {

/// One RF input with no synapses: a sink with free rate r.
inline Network single_neuron(double r = 1.0) {
    Network net;
    net.neurons = {{NeuronId{0}, FieldKind::RF, 0, 0}};
    net.wPlus = Matrix::Zero(1, 1);
    net.wNeg = Matrix::Zero(1, 1);
    net.r = Vector::Constant(1, r);
    net.d = Vector::Constant(1, 1.0);
    return net;
}

inline ExogenousDrive single_drive(double lambdaPlus = 0.3, double lambdaNeg = 0.1) {
    return {Vector::Constant(1, lambdaPlus), Vector::Constant(1, lambdaNeg)};
}

/// Input -> output with w+ = 0.5, input r = 0.5 (d = 0), output r = 1.
inline Network two_neuron_chain() {
    Network net;
    net.neurons = {{NeuronId{0}, FieldKind::RF, 0, 0}, {NeuronId{1}, FieldKind::Output, 1, -1}};
    net.wPlus = Matrix::Zero(2, 2);
    net.wNeg = Matrix::Zero(2, 2);
    net.wPlus(0, 1) = 0.5;
    net.r = Vector(2);
    net.r << 0.5, 1.0;
    net.d = Vector(2);
    net.d << 0.0, 1.0;
    return net;
}

inline ExogenousDrive chain_drive() {
    auto d = ExogenousDrive::zeros(2);
    d.lambdaPlus(0) = 0.4;
    return d;
}

/// RF and LCF inputs with lateral links, one internal neuron and an output sink.
inline Network four_neuron_network() {
    Network net;
    net.neurons = {{NeuronId{0}, FieldKind::RF, 0, 0},
                   {NeuronId{1}, FieldKind::LCF, 0, 1},
                   {NeuronId{2}, FieldKind::Internal, 1, 0},
                   {NeuronId{3}, FieldKind::Output, 2, -1}};
    net.wPlus = Matrix::Zero(4, 4);
    net.wNeg = Matrix::Zero(4, 4);
    auto edge = [&](int i, int j, double p, double n) {
        net.wPlus(i, j) = p;
        net.wNeg(i, j) = n;
    };
    edge(0, 1, 0.10, 0.05);
    edge(1, 0, 0.07, 0.12);
    edge(0, 2, 0.30, 0.04);
    edge(1, 2, 0.15, 0.20);
    edge(2, 3, 0.45, 0.10);
    net.d = Vector(4);
    net.d << 0.1, 0.2, 0.0, 1.0;
    net.r = Vector::Constant(4, 1.0);
    rederive_rates(net);
    return net;
}

inline ExogenousDrive four_neuron_drive() {
    auto d = ExogenousDrive::zeros(4);
    d.lambdaPlus(0) = 0.4;
    d.lambdaPlus(1) = 0.3;
    d.lambdaNeg(0) = 0.05;
    d.lambdaNeg(1) = 0.1;
    return d;
}

inline constexpr double kFourNeuronTarget = 0.3;
inline constexpr double kFourNeuronRates[4] = {0.54444444444444444, 0.675, 0.55, 1.0};
inline constexpr double kFourNeuronQ[4] = {0.66538572791404682, 0.45348571195362646, 0.40106928386307998,
                                           0.17352175320896733};
// d loss / d parameter at the reference point, with rates re-derived from the weights.
inline constexpr double kFourNeuronDWPlus02 = -0.052777656632457987;
inline constexpr double kFourNeuronDWNeg12 = 0.035908680370442727;
inline constexpr double kFourNeuronDWPlus23 = -0.034300921734417633;
inline constexpr double kFourNeuronDWNeg01 = 0.055988207015946878;
inline constexpr double kFourNeuronDLambdaPlus0 = -0.070523839913544007;
inline constexpr double kFourNeuronDLambdaNeg1 = 0.0057841633354267506;

/// Uniform random drive on input neurons.
inline ExogenousDrive random_input_drive(const Network& net, std::uint64_t seed, double lo = 0.1, double hi = 0.5) {
    auto d = ExogenousDrive::zeros(net.size());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (const auto& n : net.neurons)
        if (n.is_input()) d.lambdaPlus(static_cast<Eigen::Index>(n.id.index)) = u(rng);
    return d;
}

} // namespace scnn::test

#endif // SCNN_TEST_NETWORKS_HPP
