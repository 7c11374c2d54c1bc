#ifndef SCNN_CORE_HPP
#define SCNN_CORE_HPP

// Network data model for the tri-field spiking neuron network: neurons grouped
// into streams (RF, LCF, UCF) and layers, dense excitatory/inhibitory rate
// matrices, per-neuron firing rates and departure probabilities.
//
// Conventions:
//   wPlus(i, j), wNeg(i, j)  rate of excitatory / inhibitory spikes sent i -> j
//   r(i)                     firing rate of neuron i
//   d(i)                     probability a spike fired by i leaves the network
//   r(i) * (1 - d(i)) == sum_j wPlus(i, j) + wNeg(i, j)   for d(i) < 1
// Neurons with no outgoing synapses are sinks: d = 1 and r is a free parameter.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scnn/error.hpp"

namespace scnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kStreamCount = 3;

enum class FieldKind { RF, LCF, UCF, Internal, Output };

inline std::string_view to_string(FieldKind f) {
    switch (f) {
    case FieldKind::RF: return "RF";
    case FieldKind::LCF: return "LCF";
    case FieldKind::UCF: return "UCF";
    case FieldKind::Internal: return "Internal";
    case FieldKind::Output: return "Output";
    }
    return "?";
}

inline FieldKind field_from_string(std::string_view s) {
    if (s == "RF") return FieldKind::RF;
    if (s == "LCF") return FieldKind::LCF;
    if (s == "UCF") return FieldKind::UCF;
    if (s == "Internal") return FieldKind::Internal;
    if (s == "Output") return FieldKind::Output;
    throw ValidationError("unknown field kind '" + std::string(s) + "'");
}

/// Field carried by synapses leaving a neuron of the given stream.
inline FieldKind stream_field(std::size_t stream) {
    static constexpr std::array<FieldKind, kStreamCount> kFields{FieldKind::RF, FieldKind::LCF,
                                                                 FieldKind::UCF};
    return kFields.at(stream);
}

struct NeuronId {
    std::size_t index = 0;
    auto operator<=>(const NeuronId&) const = default;
};

struct NeuronInfo {
    NeuronId id;
    FieldKind field = FieldKind::Internal;
    std::size_t layer = 0;
    int stream = -1; // -1 for output neurons, which belong to no stream

    bool is_input() const {
        return field == FieldKind::RF || field == FieldKind::LCF || field == FieldKind::UCF;
    }
    bool operator==(const NeuronInfo&) const = default;
};

struct Network {
    std::vector<NeuronInfo> neurons;
    Matrix wPlus;
    Matrix wNeg;
    Vector r;
    Vector d;

    std::size_t size() const { return neurons.size(); }

    bool is_sink(std::size_t i) const { return d(static_cast<Eigen::Index>(i)) >= 1.0; }

    std::vector<std::size_t> ids_of(FieldKind f) const {
        std::vector<std::size_t> out;
        for (const auto& n : neurons)
            if (n.field == f) out.push_back(n.id.index);
        return out;
    }

    std::vector<std::size_t> outputs() const { return ids_of(FieldKind::Output); }

    bool operator==(const Network& o) const {
        return neurons == o.neurons && wPlus == o.wPlus && wNeg == o.wNeg && r == o.r && d == o.d;
    }
};

/// Per-neuron exogenous Poisson rates: lambdaPlus (excitatory), lambdaNeg (inhibitory).
struct ExogenousDrive {
    Vector lambdaPlus;
    Vector lambdaNeg;

    static ExogenousDrive zeros(std::size_t n) {
        return {Vector::Zero(static_cast<Eigen::Index>(n)), Vector::Zero(static_cast<Eigen::Index>(n))};
    }
};

/// Layered three-stream topology. layers[0] is the input layer; every stream layer lists
/// one size per stream (RF, LCF, UCF). An output layer of `outputs` neurons is appended
/// when outputs > 0.
struct TopologySpec {
    std::vector<std::vector<std::size_t>> layers{{8, 8, 5}, {3, 2, 2}};
    std::size_t outputs = 1;
    double firingRate = 1.0; // configured r of non-input, non-sink neurons before weight scaling
    std::array<double, kStreamCount> inputFiringRate{1.0, 1.0, 1.0}; // same, for RF/LCF/UCF inputs
    double sinkRate = 1.0;   // r of neurons without outgoing synapses
    double weightMin = 0.05;
    double weightMax = 0.25;
    std::uint64_t seed = 0;

    std::size_t neuron_count() const {
        std::size_t n = outputs;
        for (const auto& l : layers)
            for (auto s : l) n += s;
        return n;
    }
};

/// Structural adjacency: lateral links between different streams of one stream layer,
/// plus all-to-all feed-forward links into the next layer.
inline bool connected(const NeuronInfo& from, const NeuronInfo& to) {
    if (from.id == to.id || from.field == FieldKind::Output) return false;
    if (to.layer == from.layer + 1) return true;
    return to.layer == from.layer && to.field != FieldKind::Output && to.stream != from.stream;
}

inline double outgoing_rate(const Network& net, std::size_t i) {
    const auto k = static_cast<Eigen::Index>(i);
    return net.wPlus.row(k).sum() + net.wNeg.row(k).sum();
}

/// Re-derives r = sum(out) / (1 - d) for every non-sink neuron.
inline void rederive_rates(Network& net) {
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (net.is_sink(i)) continue;
        const auto k = static_cast<Eigen::Index>(i);
        net.r(k) = outgoing_rate(net, i) / (1.0 - net.d(k));
    }
}

inline Network build_network(const TopologySpec& spec) {
    if (spec.layers.empty()) throw ValidationError("layers: at least one stream layer is required");
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& layer = spec.layers[l];
        if (layer.size() != kStreamCount)
            throw ValidationError("layers[" + std::to_string(l) + "]: expected " +
                                  std::to_string(kStreamCount) + " stream sizes, got " +
                                  std::to_string(layer.size()));
        std::size_t total = 0;
        for (auto s : layer) total += s;
        if (total == 0) throw ValidationError("layers[" + std::to_string(l) + "]: zero-size layer");
    }
    if (!(spec.firingRate > 0.0)) throw ValidationError("firingRate: must be > 0");
    for (double r : spec.inputFiringRate)
        if (!(r > 0.0)) throw ValidationError("inputFiringRate: must be > 0");
    if (!(spec.sinkRate > 0.0)) throw ValidationError("sinkRate: must be > 0");
    if (!(spec.weightMin >= 0.0 && spec.weightMax >= spec.weightMin))
        throw ValidationError("weightMin/weightMax: require 0 <= weightMin <= weightMax");

    Network net;
    std::size_t next = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l)
        for (std::size_t s = 0; s < kStreamCount; ++s)
            for (std::size_t k = 0; k < spec.layers[l][s]; ++k)
                net.neurons.push_back({NeuronId{next++}, l == 0 ? stream_field(s) : FieldKind::Internal, l,
                                       static_cast<int>(s)});
    for (std::size_t k = 0; k < spec.outputs; ++k)
        net.neurons.push_back({NeuronId{next++}, FieldKind::Output, spec.layers.size(), -1});

    const auto n = static_cast<Eigen::Index>(next);
    net.wPlus = Matrix::Zero(n, n);
    net.wNeg = Matrix::Zero(n, n);
    net.r = Vector::Constant(n, spec.firingRate);
    net.d = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (net.neurons[i].is_input()) net.r(i) = spec.inputFiringRate[static_cast<std::size_t>(net.neurons[i].stream)];

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> weight(spec.weightMin, spec.weightMax);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!connected(net.neurons[i], net.neurons[j])) continue;
            net.wPlus(i, j) = weight(rng);
            net.wNeg(i, j) = weight(rng);
        }
        const double total = net.wPlus.row(i).sum() + net.wNeg.row(i).sum();
        const double rate = net.r(i);
        if (total == 0.0) {
            net.d(i) = 1.0;
            net.r(i) = spec.sinkRate;
        } else if (total > rate) {
            const double scale = rate / total;
            net.wPlus.row(i) *= scale;
            net.wNeg.row(i) *= scale;
            net.d(i) = 0.0;
        } else {
            net.d(i) = 1.0 - total / rate;
        }
    }
    rederive_rates(net);
    return net;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    enum class Kind { Shape, NegativeWeight, Topology, Departure, Rate, RateBalance, Normalization, Sink };
    Kind kind;
    std::size_t neuron = 0;
    std::optional<std::size_t> target; // set for synapse-level violations
    double residual = 0.0;
    std::string message;
};

inline constexpr double kBalanceTolerance = 1e-12;

inline std::vector<Violation> validate(const Network& net) {
    using K = Violation::Kind;
    std::vector<Violation> out;
    const auto n = static_cast<Eigen::Index>(net.size());
    if (net.wPlus.rows() != n || net.wPlus.cols() != n || net.wNeg.rows() != n || net.wNeg.cols() != n ||
        net.r.size() != n || net.d.size() != n) {
        out.push_back({K::Shape, 0, std::nullopt, 0.0, "matrix/vector sizes do not match neuron count"});
        return out;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        if (net.neurons[i].id.index != static_cast<std::size_t>(i))
            out.push_back({K::Shape, static_cast<std::size_t>(i), std::nullopt, 0.0, "neuron id out of order"});

    auto synapse = [](std::string_view which, Eigen::Index i, Eigen::Index j) {
        return std::string(which) + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            for (auto [name, m] : {std::pair<std::string_view, const Matrix*>{"wPlus", &net.wPlus},
                                   std::pair<std::string_view, const Matrix*>{"wNeg", &net.wNeg}}) {
                const double w = (*m)(i, j);
                if (!(w >= 0.0))
                    out.push_back({K::NegativeWeight, ui, uj, w, synapse(name, i, j) + " is negative"});
                else if (w != 0.0 && !connected(net.neurons[ui], net.neurons[uj]))
                    out.push_back({K::Topology, ui, uj, w, synapse(name, i, j) + " violates topology"});
            }
        }
        const double di = net.d(i), ri = net.r(i);
        const double total = net.wPlus.row(i).sum() + net.wNeg.row(i).sum();
        if (!(di >= 0.0 && di <= 1.0)) {
            out.push_back({K::Departure, ui, std::nullopt, di, "d outside [0,1]"});
            continue;
        }
        if (!(ri >= 0.0) || !std::isfinite(ri)) {
            out.push_back({K::Rate, ui, std::nullopt, ri, "r negative or non-finite"});
            continue;
        }
        if (di >= 1.0) {
            if (total != 0.0)
                out.push_back({K::Sink, ui, std::nullopt, total, "sink (d=1) has outgoing synapses"});
            continue;
        }
        const double balance = ri * (1.0 - di) - total;
        if (std::abs(balance) > kBalanceTolerance)
            out.push_back({K::RateBalance, ui, std::nullopt, balance,
                           "r(1-d) differs from total outgoing rate by " + std::to_string(balance)});
        if (ri > 0.0) {
            const double norm = di + total / ri - 1.0;
            if (std::abs(norm) > kBalanceTolerance)
                out.push_back({K::Normalization, ui, std::nullopt, norm,
                               "routing probabilities sum to 1 + " + std::to_string(norm)});
        }
    }
    return out;
}

inline void require_valid(const Network& net) {
    auto v = validate(net);
    if (!v.empty())
        throw ValidationError("invalid network: neuron " + std::to_string(v.front().neuron) + ": " +
                              v.front().message + (v.size() > 1 ? " (+" + std::to_string(v.size() - 1) + " more)" : ""));
}

inline void validate_drive(const Network& net, const ExogenousDrive& drive) {
    const auto n = static_cast<Eigen::Index>(net.size());
    if (drive.lambdaPlus.size() != n || drive.lambdaNeg.size() != n)
        throw ValidationError("drive: size does not match neuron count");
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lp = drive.lambdaPlus(i), ln = drive.lambdaNeg(i);
        if (!(lp >= 0.0) || !(ln >= 0.0) || !std::isfinite(lp) || !std::isfinite(ln))
            throw ValidationError("drive: negative rate at neuron " + std::to_string(i));
        if ((lp != 0.0 || ln != 0.0) && !net.neurons[i].is_input())
            throw ValidationError("drive: nonzero rate on non-input neuron " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// Routing probabilities P+(i,j) = wPlus(i,j) / r(i), P-(i,j) = wNeg(i,j) / r(i)

struct Routing {
    Matrix pPlus;
    Matrix pNeg;
};

inline Routing derive_routing(const Network& net) {
    Routing out{Matrix::Zero(net.wPlus.rows(), net.wPlus.cols()), Matrix::Zero(net.wNeg.rows(), net.wNeg.cols())};
    for (Eigen::Index i = 0; i < net.wPlus.rows(); ++i) {
        if (net.r(i) <= 0.0) continue;
        out.pPlus.row(i) = net.wPlus.row(i) / net.r(i);
        out.pNeg.row(i) = net.wNeg.row(i) / net.r(i);
    }
    return out;
}

inline std::pair<Matrix, Matrix> weights_from_routing(const Routing& routing, const Vector& r) {
    return {r.asDiagonal() * routing.pPlus, r.asDiagonal() * routing.pNeg};
}

// ---------------------------------------------------------------------------
// JSON: {neurons:[{id, field, layer, stream}], wPlus:[[...]], wNeg:[[...]], r:[...], d:[...]}

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index n, std::string_view name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
        throw ValidationError(std::string(name) + ": expected " + std::to_string(n) + " rows");
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw ValidationError(std::string(name) + "[" + std::to_string(i) + "]: expected " +
                                  std::to_string(n) + " columns");
        for (Eigen::Index k = 0; k < n; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const nlohmann::json& j, Eigen::Index n, std::string_view name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
        throw ValidationError(std::string(name) + ": expected " + std::to_string(n) + " entries");
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

} // namespace detail

inline nlohmann::json to_json(const Network& net) {
    nlohmann::json j;
    auto neurons = nlohmann::json::array();
    for (const auto& n : net.neurons)
        neurons.push_back({{"id", n.id.index}, {"field", to_string(n.field)}, {"layer", n.layer}, {"stream", n.stream}});
    j["neurons"] = std::move(neurons);
    j["wPlus"] = detail::matrix_to_json(net.wPlus);
    j["wNeg"] = detail::matrix_to_json(net.wNeg);
    j["r"] = detail::vector_to_json(net.r);
    j["d"] = detail::vector_to_json(net.d);
    return j;
}

inline Network network_from_json(const nlohmann::json& j) {
    try {
        Network net;
        for (const char* key : {"neurons", "wPlus", "wNeg", "r", "d"})
            if (!j.contains(key)) throw ValidationError(std::string("network: missing field '") + key + "'");
        for (const auto& n : j.at("neurons"))
            net.neurons.push_back({NeuronId{n.at("id").get<std::size_t>()}, field_from_string(n.at("field").get<std::string>()),
                                   n.at("layer").get<std::size_t>(), n.at("stream").get<int>()});
        const auto n = static_cast<Eigen::Index>(net.neurons.size());
        net.wPlus = detail::matrix_from_json(j.at("wPlus"), n, "wPlus");
        net.wNeg = detail::matrix_from_json(j.at("wNeg"), n, "wNeg");
        net.r = detail::vector_from_json(j.at("r"), n, "r");
        net.d = detail::vector_from_json(j.at("d"), n, "d");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("network: ") + e.what());
    }
}

inline Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return network_from_json(j);
}

} // namespace scnn

#endif // SCNN_CORE_HPP
