#ifndef SCNN_INFODECOMP_HPP
#define SCNN_INFODECOMP_HPP

// Discrete information measures over four variables: X (RF), Y (output), Z (LCF), U (UCF).
// All quantities are in bits. Interaction terms are signed and never clamped.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "scnn/error.hpp"

namespace scnn::info {

enum class Var : std::uint8_t { X = 0, Y = 1, Z = 2, U = 3 };

inline constexpr std::size_t kVarCount = 4;

/// Subset of {X, Y, Z, U} as a bit mask.
class VarSet {
public:
    constexpr VarSet() = default;
    constexpr VarSet(std::initializer_list<Var> vars) {
        for (auto v : vars) bits_ |= bit(v);
    }

    constexpr bool contains(Var v) const { return (bits_ & bit(v)) != 0; }
    constexpr bool contains(std::size_t axis) const { return (bits_ >> axis) & 1u; }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr bool disjoint(VarSet o) const { return (bits_ & o.bits_) == 0; }
    constexpr VarSet operator|(VarSet o) const { return from_bits(bits_ | o.bits_); }
    constexpr bool operator==(const VarSet&) const = default;

    std::string name() const {
        static constexpr std::array<char, kVarCount> kNames{'X', 'Y', 'Z', 'U'};
        std::string s;
        for (std::size_t a = 0; a < kVarCount; ++a)
            if (contains(a)) s += kNames[a];
        return s;
    }

private:
    static constexpr std::uint8_t bit(Var v) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(v)); }
    static constexpr VarSet from_bits(std::uint8_t b) {
        VarSet s;
        s.bits_ = b;
        return s;
    }
    std::uint8_t bits_ = 0;
};

inline constexpr VarSet kX{Var::X};
inline constexpr VarSet kY{Var::Y};
inline constexpr VarSet kZ{Var::Z};
inline constexpr VarSet kU{Var::U};

inline constexpr double kMassTolerance = 1e-12;

/// Normalised joint probability table over (X, Y, Z, U), row-major with U fastest.
class DiscreteJoint {
public:
    DiscreteJoint(std::array<std::size_t, kVarCount> dims, std::vector<double> mass)
        : dims_(dims), mass_(std::move(mass)) {
        std::size_t cells = 1;
        for (auto d : dims_) {
            if (d == 0) throw ValidationError("joint: every variable needs at least one bin");
            cells *= d;
        }
        if (mass_.size() != cells)
            throw ValidationError("joint: expected " + std::to_string(cells) + " cells, got " + std::to_string(mass_.size()));
        double total = 0.0;
        for (double m : mass_) {
            if (!(m >= 0.0)) throw ValidationError("joint: negative or NaN mass");
            total += m;
        }
        if (std::abs(total - 1.0) > kMassTolerance)
            throw ValidationError("joint: total mass " + std::to_string(total) + " differs from 1");
    }

    /// Normalises nonnegative counts (or weights) into a joint.
    static DiscreteJoint from_counts(std::array<std::size_t, kVarCount> dims, const std::vector<double>& counts) {
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        if (!(total > 0.0)) throw ValidationError("joint: counts sum to zero");
        std::vector<double> mass(counts.size());
        std::transform(counts.begin(), counts.end(), mass.begin(), [total](double c) { return c / total; });
        // Fold the rounding residue into the largest cell so the total is exactly representable.
        const double residue = 1.0 - std::accumulate(mass.begin(), mass.end(), 0.0);
        *std::max_element(mass.begin(), mass.end()) += residue;
        return DiscreteJoint(dims, std::move(mass));
    }

    const std::array<std::size_t, kVarCount>& dims() const { return dims_; }
    const std::vector<double>& mass() const { return mass_; }

    std::size_t index(std::array<std::size_t, kVarCount> cell) const {
        std::size_t k = 0;
        for (std::size_t a = 0; a < kVarCount; ++a) k = k * dims_[a] + cell[a];
        return k;
    }

    /// Marginal table over `vars`, in the same axis order.
    std::vector<double> marginal(VarSet vars) const {
        std::size_t size = 1;
        for (std::size_t a = 0; a < kVarCount; ++a)
            if (vars.contains(a)) size *= dims_[a];
        std::vector<double> out(size, 0.0);
        std::array<std::size_t, kVarCount> cell{};
        for (std::size_t k = 0; k < mass_.size(); ++k) {
            std::size_t m = 0;
            for (std::size_t a = 0; a < kVarCount; ++a)
                if (vars.contains(a)) m = m * dims_[a] + cell[a];
            out[m] += mass_[k];
            for (std::size_t a = kVarCount; a-- > 0;) {
                if (++cell[a] < dims_[a]) break;
                cell[a] = 0;
            }
        }
        return out;
    }

private:
    std::array<std::size_t, kVarCount> dims_;
    std::vector<double> mass_;
};

/// Equal-width binning over each variable's observed range.
inline DiscreteJoint estimate_joint(const std::vector<std::array<double, kVarCount>>& samples,
                                    std::array<std::size_t, kVarCount> bins) {
    if (samples.empty()) throw ValidationError("estimate_joint: no samples");
    for (auto b : bins)
        if (b == 0) throw ValidationError("estimate_joint: bins must be >= 1");
    std::array<double, kVarCount> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& s : samples)
        for (std::size_t a = 0; a < kVarCount; ++a) {
            if (!std::isfinite(s[a])) throw ValidationError("estimate_joint: non-finite sample value");
            lo[a] = std::min(lo[a], s[a]);
            hi[a] = std::max(hi[a], s[a]);
        }
    std::size_t cells = 1;
    for (auto b : bins) cells *= b;
    std::vector<double> counts(cells, 0.0);
    for (const auto& s : samples) {
        std::size_t k = 0;
        for (std::size_t a = 0; a < kVarCount; ++a) {
            std::size_t bin = 0;
            if (hi[a] > lo[a]) {
                const double u = (s[a] - lo[a]) / (hi[a] - lo[a]);
                bin = std::min(bins[a] - 1, static_cast<std::size_t>(u * static_cast<double>(bins[a])));
            }
            k = k * bins[a] + bin;
        }
        counts[k] += 1.0;
    }
    return DiscreteJoint::from_counts(bins, counts);
}

/// Shannon entropy of the marginal over `vars`; 0 log 0 := 0.
inline double entropy(const DiscreteJoint& joint, VarSet vars) {
    if (vars.empty()) throw ValidationError("entropy: empty variable set");
    double h = 0.0;
    for (double p : joint.marginal(vars))
        if (p > 0.0) h -= p * std::log2(p);
    return h;
}

/// I(A;B) = H(A) + H(B) - H(A,B).
inline double mutual_information(const DiscreteJoint& joint, VarSet a, VarSet b) {
    if (a.empty() || b.empty()) throw ValidationError("mutual_information: empty variable set");
    if (!a.disjoint(b)) throw ValidationError("mutual_information: " + a.name() + " and " + b.name() + " overlap");
    return entropy(joint, a) + entropy(joint, b) - entropy(joint, a | b);
}

/// I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C).
inline double conditional_mi(const DiscreteJoint& joint, VarSet a, VarSet b, VarSet c) {
    if (a.empty() || b.empty() || c.empty()) throw ValidationError("conditional_mi: empty variable set");
    if (!a.disjoint(b) || !a.disjoint(c) || !b.disjoint(c))
        throw ValidationError("conditional_mi: " + a.name() + ", " + b.name() + ", " + c.name() + " must be disjoint");
    return entropy(joint, a | c) + entropy(joint, b | c) - entropy(joint, a | b | c) - entropy(joint, c);
}

/// Four-way mutual information written as I(A;B) - I(A;B|rest) for the five pairs
/// (X,Y), (X,Z), (X,U), (Y,Z), (Y,U). `value` is the (X,Y) form. The forms are equal
/// only for special joints; `maxDiscrepancy` measures how far apart they are.
struct FourWay {
    double value = 0.0;
    std::array<double, 5> forms{};
    double maxDiscrepancy = 0.0;
};

inline FourWay fourway_mi(const DiscreteJoint& j) {
    auto form = [&](VarSet a, VarSet b, VarSet rest) { return mutual_information(j, a, b) - conditional_mi(j, a, b, rest); };
    FourWay out;
    out.forms = {form(kX, kY, kZ | kU), form(kX, kZ, kY | kU), form(kX, kU, kY | kZ), form(kY, kZ, kX | kU),
                 form(kY, kU, kX | kZ)};
    out.value = out.forms[0];
    const auto [mn, mx] = std::minmax_element(out.forms.begin(), out.forms.end());
    out.maxDiscrepancy = *mx - *mn;
    return out;
}

/// Five-term split of H(Y): interaction, unique shares with X, Z and U, and the residual H(Y|X,Z,U).
struct EntropyDecomposition {
    double interaction = 0.0; // I(Y;X;Z;U)
    double uniqueX = 0.0;     // I(Y;X|Z,U)
    double uniqueZ = 0.0;     // I(Y;Z|X,U)
    double uniqueU = 0.0;     // I(Y;U|X,Z)
    double residual = 0.0;    // H(Y|X,Z,U)

    std::array<double, 5> components() const { return {interaction, uniqueX, uniqueZ, uniqueU, residual}; }
    double sum() const { return interaction + uniqueX + uniqueZ + uniqueU + residual; }
};

inline EntropyDecomposition entropy_decomposition(const DiscreteJoint& j) {
    EntropyDecomposition d;
    d.interaction = fourway_mi(j).value;
    d.uniqueX = conditional_mi(j, kY, kX, kZ | kU);
    d.uniqueZ = conditional_mi(j, kY, kZ, kX | kU);
    d.uniqueU = conditional_mi(j, kY, kU, kX | kZ);
    d.residual = entropy(j, kX | kY | kZ | kU) - entropy(j, kX | kZ | kU);
    return d;
}

/// F = sum_k phi_k * component_k over the entropy decomposition; each phi in [-1, 1].
inline double objective_F(const DiscreteJoint& j, const std::array<double, 5>& phi) {
    for (std::size_t k = 0; k < phi.size(); ++k)
        if (!(phi[k] >= -1.0 && phi[k] <= 1.0))
            throw ValidationError("objective_F: phi" + std::to_string(k) + " = " + std::to_string(phi[k]) +
                                  " outside [-1, 1]");
    const auto c = entropy_decomposition(j).components();
    double f = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) f += phi[k] * c[k];
    return f;
}

/// Every measure at once, as emitted by the `decompose` command.
inline nlohmann::json report(const DiscreteJoint& j) {
    const auto fw = fourway_mi(j);
    const auto dec = entropy_decomposition(j);
    nlohmann::json out;
    out["dims"] = j.dims();
    out["entropy"] = {{"X", entropy(j, kX)},      {"Y", entropy(j, kY)},          {"Z", entropy(j, kZ)},
                      {"U", entropy(j, kU)},      {"XYZU", entropy(j, kX | kY | kZ | kU)}};
    out["mutual_information"] = {{"X;Y", mutual_information(j, kX, kY)}, {"Z;Y", mutual_information(j, kZ, kY)},
                                 {"U;Y", mutual_information(j, kU, kY)}, {"X;Z", mutual_information(j, kX, kZ)},
                                 {"X;U", mutual_information(j, kX, kU)}, {"Z;U", mutual_information(j, kZ, kU)}};
    out["conditional_mi"] = {{"X;Y|ZU", dec.uniqueX}, {"Z;Y|XU", dec.uniqueZ}, {"U;Y|XZ", dec.uniqueU}};
    out["fourway"] = {{"value", fw.value}, {"forms", fw.forms}, {"max_discrepancy", fw.maxDiscrepancy}};
    out["decomposition"] = {{"interaction", dec.interaction}, {"unique_x", dec.uniqueX}, {"unique_z", dec.uniqueZ},
                            {"unique_u", dec.uniqueU},        {"residual", dec.residual}, {"sum", dec.sum()},
                            {"h_y", entropy(j, kY)}};
    return out;
}

} // namespace scnn::info

#endif // SCNN_INFODECOMP_HPP
