#include <gtest/gtest.h>

#include <random>

#include "scnn/infodecomp.hpp"

using namespace scnn::info;
using scnn::ValidationError;

namespace {

using Dims = std::array<std::size_t, 4>;

// Joint over four fair bits built from a rule y = f(x, z, u), x, z, u independent.
template <class F>
DiscreteJoint binary_rule(F f) {
    std::vector<double> m(16, 0.0);
    DiscreteJoint probe({2, 2, 2, 2}, std::vector<double>(16, 1.0 / 16));
    for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t z = 0; z < 2; ++z)
            for (std::size_t u = 0; u < 2; ++u) m[probe.index({x, f(x, z, u), z, u})] += 0.125;
    return DiscreteJoint({2, 2, 2, 2}, m);
}

DiscreteJoint xor_joint() { return binary_rule([](std::size_t x, std::size_t z, std::size_t) { return x ^ z; }); }

DiscreteJoint uniform_joint(Dims dims) {
    std::size_t cells = 1;
    for (auto d : dims) cells *= d;
    return DiscreteJoint(dims, std::vector<double>(cells, 1.0 / static_cast<double>(cells)));
}

DiscreteJoint random_joint(std::mt19937_64& rng, Dims dims = {2, 2, 2, 2}) {
    std::size_t cells = 1;
    for (auto d : dims) cells *= d;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> c(cells);
    for (auto& x : c) x = u(rng);
    return DiscreteJoint::from_counts(dims, c);
}

// Fixed random joint; reference values from scipy.stats.entropy (tests/oracles).
DiscreteJoint reference_joint() {
    return DiscreteJoint::from_counts(
        {2, 2, 2, 2},
        {0.10774763143843598, 0.034169497621557646, 0.04933586458259132, 0.12745869198685414, 0.158760494674115,
         0.02267598489497565, 0.012551193352352285, 0.028828698135984817, 0.0573384194486651, 0.027042357131425693,
         0.09386575935677856, 0.09833747701972226, 0.01680161416357926, 0.0901943685554553, 0.0007381029481828216,
         0.07415384468932427});
}

} // namespace

TEST(Joint, RejectsBadMass) {
    EXPECT_THROW(DiscreteJoint({2, 1, 1, 1}, {0.5, 0.4}), ValidationError);
    EXPECT_THROW(DiscreteJoint({2, 1, 1, 1}, {1.5, -0.5}), ValidationError);
    EXPECT_THROW(DiscreteJoint({2, 1, 1, 1}, {1.0}), ValidationError);
}

TEST(EstimateJoint, IdenticalSamplesGiveZeroEntropy) {
    std::vector<std::array<double, 4>> s(50, {0.3, 0.2, 0.9, 1.0});
    const auto j = estimate_joint(s, {8, 8, 8, 8});
    for (auto v : {kX, kY, kZ, kU}) EXPECT_EQ(entropy(j, v), 0.0);
}

TEST(EstimateJoint, TwoEquiprobableCellsGiveOneBit) {
    std::vector<std::array<double, 4>> s{{0.0, 1, 1, 1}, {1.0, 1, 1, 1}, {0.0, 1, 1, 1}, {1.0, 1, 1, 1}};
    const auto j = estimate_joint(s, {8, 8, 8, 8});
    EXPECT_NEAR(entropy(j, kX), 1.0, 1e-15);
    EXPECT_EQ(entropy(j, kY), 0.0);
}

TEST(EstimateJoint, IndependentBitsHaveNearZeroMutualInformation) {
    std::mt19937_64 rng(1);
    std::vector<std::array<double, 4>> s(100000);
    for (auto& row : s)
        for (auto& v : row) v = static_cast<double>(rng() & 1u);
    const auto j = estimate_joint(s, {2, 2, 2, 2});
    for (auto a : {kX, kY, kZ, kU})
        for (auto b : {kX, kY, kZ, kU})
            if (a.disjoint(b)) EXPECT_LT(mutual_information(j, a, b), 0.001);
}

TEST(EstimateJoint, EmptyIsAnError) {
    EXPECT_THROW(estimate_joint({}, {8, 8, 8, 8}), ValidationError);
}

TEST(Entropy, UniformAndPointMass) {
    EXPECT_NEAR(entropy(uniform_joint({4, 1, 1, 1}), kX), 2.0, 1e-15);
    EXPECT_NEAR(entropy(uniform_joint({2, 2, 1, 1}), kX | kY), 2.0, 1e-15);
    EXPECT_EQ(entropy(DiscreteJoint({3, 1, 1, 1}, {0.0, 1.0, 0.0}), kX), 0.0);
}

TEST(Entropy, MatchesScipyReference) {
    const auto j = reference_joint();
    EXPECT_NEAR(entropy(j, kY), 0.9736360044952422, 1e-13);
    EXPECT_NEAR(entropy(j, kX | kZ | kU), 2.810533367563854, 1e-13);
    EXPECT_NEAR(entropy(j, kX | kY | kZ | kU), 3.6027871481103504, 1e-13);
    EXPECT_NEAR(mutual_information(j, kX, kY), 0.00016139898237965689, 1e-13);
    EXPECT_NEAR(conditional_mi(j, kX, kY, kZ | kU), 0.07150188162974214, 1e-13);
    EXPECT_NEAR(conditional_mi(j, kY, kU, kX | kZ), 0.09857141649776979, 1e-13);
}

TEST(Entropy, JointDominatesMarginalsOnRandomTables) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 100; ++k) {
        const auto j = random_joint(rng, {3, 2, 4, 2});
        EXPECT_GE(entropy(j, kX | kY) + 1e-12, std::max(entropy(j, kX), entropy(j, kY)));
        for (auto v : {kX, kY, kZ, kU}) EXPECT_GE(entropy(j, v), 0.0);
    }
}

TEST(MutualInformation, CopyAndIndependenceAndXor) {
    const auto copy = binary_rule([](std::size_t x, std::size_t, std::size_t) { return x; });
    EXPECT_NEAR(mutual_information(copy, kX, kY), 1.0, 1e-12);
    EXPECT_NEAR(mutual_information(uniform_joint({2, 2, 2, 2}), kX, kY), 0.0, 1e-12);
    EXPECT_NEAR(mutual_information(xor_joint(), kX, kY), 0.0, 1e-12);
}

TEST(MutualInformation, OverlapIsAnError) {
    const auto j = xor_joint();
    EXPECT_THROW(mutual_information(j, kX | kY, kY), ValidationError);
    EXPECT_THROW(conditional_mi(j, kX, kY, kY | kZ), ValidationError);
}

TEST(ConditionalMi, XorAndIndependentCondition) {
    const auto j = xor_joint();
    EXPECT_NEAR(conditional_mi(j, kX, kY, kZ | kU), 1.0, 1e-12);
    // U is independent of (X, Y): conditioning on it changes nothing.
    EXPECT_NEAR(conditional_mi(j, kX, kY, kU), mutual_information(j, kX, kY), 1e-12);
    const auto indep = uniform_joint({2, 2, 2, 2});
    EXPECT_NEAR(conditional_mi(indep, kY, kX, kZ | kU), 0.0, 1e-12);
}

TEST(FourWay, IndependentIsZero) {
    const auto fw = fourway_mi(uniform_joint({2, 2, 2, 2}));
    EXPECT_NEAR(fw.value, 0.0, 1e-12);
    EXPECT_LT(fw.maxDiscrepancy, 1e-12);
}

TEST(FourWay, XorIsMinusOneBit) {
    const auto fw = fourway_mi(xor_joint());
    EXPECT_NEAR(fw.value, -1.0, 1e-12);
    // The five forms are not one quantity: pairs that exclude the XOR partner differ.
    EXPECT_NEAR(fw.forms[0], -1.0, 1e-12);
    EXPECT_NEAR(fw.forms[1], -1.0, 1e-12);
    EXPECT_NEAR(fw.forms[2], 0.0, 1e-12);
    EXPECT_NEAR(fw.forms[3], -1.0, 1e-12);
    EXPECT_NEAR(fw.forms[4], 0.0, 1e-12);
    EXPECT_NEAR(fw.maxDiscrepancy, 1.0, 1e-12);
}

TEST(FourWay, CommonBitIsPlusOne) {
    const auto j = DiscreteJoint({2, 2, 2, 2}, [] {
        std::vector<double> m(16, 0.0);
        m[0] = m[15] = 0.5;
        return m;
    }());
    const auto fw = fourway_mi(j);
    EXPECT_NEAR(fw.value, 1.0, 1e-12);
    EXPECT_LT(fw.maxDiscrepancy, 1e-12);
}

TEST(FourWay, ChainRuleIdentityOnRandomJoints) {
    // I(A;B) - I(A;B|C) is the co-information I(A;B;C), which is symmetric in A, B, C.
    std::mt19937_64 rng(9);
    for (int k = 0; k < 100; ++k) {
        const auto j = random_joint(rng);
        const auto coinfo = [&](VarSet a, VarSet b, VarSet c) {
            return mutual_information(j, a, b) - conditional_mi(j, a, b, c);
        };
        EXPECT_NEAR(coinfo(kX, kY, kZ), coinfo(kY, kZ, kX), 1e-10);
        EXPECT_NEAR(coinfo(kX, kY, kZ), coinfo(kX, kZ, kY), 1e-10);
        EXPECT_NEAR(coinfo(kX, kY, kZ | kU), coinfo(kX, kZ | kU, kY), 1e-10);
    }
}

TEST(FourWay, FirstFormMinusThreeWayTermsIsConditionalCoinformation) {
    // Sum of the five decomposition components minus H(Y) equals -I(Y;Z;U|X).
    std::mt19937_64 rng(10);
    for (int k = 0; k < 100; ++k) {
        const auto j = random_joint(rng);
        const auto d = entropy_decomposition(j);
        const double coinfoGivenX = conditional_mi(j, kY, kZ, kX) - conditional_mi(j, kY, kZ, kX | kU);
        EXPECT_NEAR(d.sum() - entropy(j, kY), -coinfoGivenX, 1e-10);
    }
}

TEST(Decomposition, IndependentOutput) {
    std::mt19937_64 rng(2);
    const auto xzu = random_joint(rng, {2, 1, 2, 2});
    std::vector<double> m(16, 0.0);
    DiscreteJoint shape({2, 2, 2, 2}, std::vector<double>(16, 1.0 / 16));
    for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t z = 0; z < 2; ++z)
            for (std::size_t u = 0; u < 2; ++u)
                for (std::size_t y = 0; y < 2; ++y)
                    m[shape.index({x, y, z, u})] = xzu.mass()[xzu.index({x, 0, z, u})] * (y ? 0.3 : 0.7);
    const auto d = entropy_decomposition(DiscreteJoint({2, 2, 2, 2}, m));
    const double hy = -(0.3 * std::log2(0.3) + 0.7 * std::log2(0.7));
    EXPECT_NEAR(d.interaction, 0.0, 1e-12);
    EXPECT_NEAR(d.uniqueX, 0.0, 1e-12);
    EXPECT_NEAR(d.uniqueZ, 0.0, 1e-12);
    EXPECT_NEAR(d.uniqueU, 0.0, 1e-12);
    EXPECT_NEAR(d.residual, hy, 1e-12);
}

TEST(Decomposition, OutputCopiesX) {
    const auto j = binary_rule([](std::size_t x, std::size_t, std::size_t) { return x; });
    const auto d = entropy_decomposition(j);
    EXPECT_NEAR(d.interaction, 0.0, 1e-12);
    EXPECT_NEAR(d.uniqueX, 1.0, 1e-12);
    EXPECT_NEAR(d.uniqueZ, 0.0, 1e-12);
    EXPECT_NEAR(d.uniqueU, 0.0, 1e-12);
    EXPECT_NEAR(d.residual, 0.0, 1e-12);
    EXPECT_NEAR(d.sum(), entropy(j, kY), 1e-12);
}

TEST(ObjectiveF, CasesOfTheWeightedSum) {
    const auto x = xor_joint();
    EXPECT_EQ(objective_F(x, {0, 0, 0, 0, 0}), 0.0);
    EXPECT_NEAR(objective_F(x, {1, 0, 0, 0, 0}), -1.0, 1e-12);
    const auto copy = binary_rule([](std::size_t v, std::size_t, std::size_t) { return v; });
    EXPECT_NEAR(objective_F(copy, {1, 1, 1, 1, 1}), entropy(copy, kY), 1e-12);
    EXPECT_THROW(objective_F(x, {0, 1.5, 0, 0, 0}), ValidationError);
}

TEST(Invariance, RelabellingBinsLeavesMeasuresUnchanged) {
    std::mt19937_64 rng(4);
    const auto j = random_joint(rng, {3, 2, 2, 2});
    std::vector<double> m(j.mass().size());
    const std::array<std::size_t, 3> perm{2, 0, 1};
    for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t z = 0; z < 2; ++z)
                for (std::size_t u = 0; u < 2; ++u) m[j.index({perm[x], 1 - y, z, u})] = j.mass()[j.index({x, y, z, u})];
    const DiscreteJoint p(j.dims(), m);
    const auto a = entropy_decomposition(j).components();
    const auto b = entropy_decomposition(p).components();
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
    EXPECT_NEAR(fourway_mi(j).maxDiscrepancy, fourway_mi(p).maxDiscrepancy, 1e-12);
}

TEST(Report, ContainsEveryMeasure) {
    const auto r = report(xor_joint());
    EXPECT_NEAR(r["fourway"]["value"].get<double>(), -1.0, 1e-12);
    EXPECT_TRUE(r.contains("decomposition"));
    EXPECT_TRUE(r.contains("conditional_mi"));
}
