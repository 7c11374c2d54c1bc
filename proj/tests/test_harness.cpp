#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "scnn/harness.hpp"

using namespace scnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("scnn_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) ma += a[k] / n, mb += b[k] / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

ExperimentConfig small_experiment() {
    auto cfg = default_experiment();
    cfg.synth.samplesPerEnvironment = 12;
    cfg.train.epochs = 4;
    cfg.seeds = 2;
    return cfg;
}

} // namespace

TEST(Environments, PartitionTheSnrRange) {
    const auto& envs = default_environments();
    ASSERT_EQ(envs.size(), 5u);
    EXPECT_EQ(envs.front().snrLow, -12.0);
    EXPECT_EQ(envs.back().snrHigh, 12.0);
    for (std::size_t k = 0; k < envs.size(); ++k) {
        EXPECT_EQ(envs[k].oneHotIndex, k);
        if (k > 0) EXPECT_EQ(envs[k].snrLow, envs[k - 1].snrHigh);
    }
}

TEST(Synth, ShapesAndRanges) {
    SynthConfig cfg;
    cfg.samplesPerEnvironment = 20;
    const auto data = synth_dataset(cfg);
    ASSERT_EQ(data.size(), 100u);
    for (const auto& s : data) {
        EXPECT_EQ(s.rf.size(), cfg.rf_inputs());
        EXPECT_EQ(s.lcf.size(), cfg.lcf_inputs());
        EXPECT_EQ(s.ucf.size(), 5u);
        EXPECT_EQ(s.ucf[s.environment], 1.0);
        EXPECT_GE(s.target, cfg.targetLow);
        EXPECT_LE(s.target, cfg.targetHigh);
        for (double x : s.rf) EXPECT_TRUE(x >= 0.0 && x <= 1.0);
    }
    EXPECT_EQ(cfg.rf_inputs(), 8u);
}

TEST(Synth, NoisiestEnvironmentFavoursLcfAndCleanestFavoursRf) {
    SynthConfig cfg;
    for (std::size_t env : {0u, 4u}) {
        std::vector<double> rf, lcf, t;
        for (const auto& s : synth_dataset(cfg))
            if (s.environment == env) {
                rf.push_back(s.rf[0]);
                lcf.push_back(s.lcf[0]);
                t.push_back(s.target);
            }
        if (env == 0) EXPECT_LT(pearson(rf, t), pearson(lcf, t));
        else {
            EXPECT_GT(pearson(rf, t), pearson(lcf, t));
            EXPECT_GT(pearson(rf, t), 0.95);
        }
    }
}

TEST(Synth, SeededIsByteIdentical) {
    SynthConfig cfg;
    cfg.samplesPerEnvironment = 10;
    EXPECT_EQ(dataset_to_csv(synth_dataset(cfg)), dataset_to_csv(synth_dataset(cfg)));
    auto other = cfg;
    other.seed = 2;
    EXPECT_NE(dataset_to_csv(synth_dataset(cfg)), dataset_to_csv(synth_dataset(other)));
}

TEST(Synth, InvalidConfigIsRejected) {
    SynthConfig cfg;
    cfg.contextLength = 0;
    EXPECT_THROW(synth_dataset(cfg), ValidationError);
}

TEST(Csv, WellFormedThreeRows) {
    const auto data = parse_csv("rf_0,rf_1,lcf_0,ucf_0,ucf_1,target\n0.1,0.2,0.3,0,1,0.5\n0,0,0,1,0,0\n1,1,1,0,1,1\n");
    ASSERT_EQ(data.size(), 3u);
    EXPECT_EQ(data[0].rf, (std::vector<double>{0.1, 0.2}));
    EXPECT_EQ(data[0].environment, 1u);
    EXPECT_EQ(data[2].target, 1.0);
}

TEST(Csv, MissingTargetIsSchemaError) {
    try {
        parse_csv("rf_0,lcf_0\n0.1,0.2\n");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("target"), std::string::npos);
    }
}

TEST(Csv, BadCellNamesRowAndColumn) {
    try {
        parse_csv("rf_0,target\n0.1,0.2\n0.3,abc\n");
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'target'"), std::string::npos) << msg;
    }
    EXPECT_THROW(parse_csv("rf_0,target\n0.1,1.5\n"), ValidationError);
    EXPECT_THROW(parse_csv("rf_0,rf_2,target\n0.1,0.1,0.5\n"), ValidationError);
}

TEST(Csv, SynthRoundTripIsExact) {
    SynthConfig cfg;
    cfg.samplesPerEnvironment = 15;
    const auto data = synth_dataset(cfg);
    const auto path = scratch_dir("csv") / "data.csv";
    write_csv(data, path);
    EXPECT_EQ(load_csv(path), data);
}

TEST(Config, TextRoundTripAndOverrides) {
    auto cfg = default_experiment();
    apply_override(cfg, "train.learning_rate=0.25");
    apply_override(cfg, "topology.layers = 4,4,5;2,2,2");
    apply_override(cfg, "experiment.ablations=RF,RF+LCF");
    ExperimentConfig back;
    parse_config_text(back, config_text(cfg));
    EXPECT_EQ(config_text(back), config_text(cfg));
    EXPECT_EQ(back.train.learningRate, 0.25);
    EXPECT_EQ(back.topology.layers[1][2], 2u);
    EXPECT_EQ(back.ablations.size(), 2u);
}

TEST(Config, ErrorsNameKeyAndLine) {
    ExperimentConfig cfg;
    try {
        parse_config_text(cfg, "# comment\n\ntrain.epochs = 10\ntrain.epochz = 3\n");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    EXPECT_THROW(apply_override(cfg, "train.learning_rate=fast"), ValidationError);
    EXPECT_THROW(apply_override(cfg, "experiment.ablations=RF+UCF"), ValidationError);
}

TEST(Config, HashTracksSemanticFieldsOnly) {
    const auto base = default_experiment();
    auto workers = base;
    workers.workers = 4;
    EXPECT_EQ(config_hash(base), config_hash(workers));
    for (const char* o : {"train.epochs=201", "synth.seed=2", "solver.damping=0.6", "experiment.normalize_features=true"}) {
        auto c = base;
        apply_override(c, o);
        EXPECT_NE(config_hash(base), config_hash(c)) << o;
    }
    EXPECT_EQ(config_hash(base).size(), 16u);
}

TEST(SignTest, MatchesBinomialTail) {
    EXPECT_NEAR(sign_test_p(9, 10), 0.0107421875, 1e-15);
    EXPECT_NEAR(sign_test_p(10, 10), 0.0009765625, 1e-15);
    EXPECT_NEAR(sign_test_p(8, 10), 0.0546875, 1e-15);
    EXPECT_NEAR(sign_test_p(7, 12), 0.38720703125, 1e-14);
    EXPECT_EQ(sign_test_p(0, 0), 1.0);
}

TEST(Split, SharedAcrossCallsAndSized) {
    SynthConfig sc;
    sc.samplesPerEnvironment = 20;
    const auto data = synth_dataset(sc);
    const auto a = split_dataset(data, 0.2, 3);
    EXPECT_EQ(a.train.size(), 80u);
    EXPECT_EQ(a.validation.size(), 20u);
    EXPECT_EQ(split_dataset(data, 0.2, 3).validation, a.validation);
    EXPECT_NE(split_dataset(data, 0.2, 4).validation, a.validation);
}

TEST(Ablation, PrunesDisabledStreams) {
    const auto spec = ablated_topology(TopologySpec{}, Ablation::RF, 0);
    const auto net = build_network(spec);
    EXPECT_TRUE(net.ids_of(FieldKind::LCF).empty());
    EXPECT_TRUE(net.ids_of(FieldKind::UCF).empty());
    EXPECT_EQ(net.ids_of(FieldKind::RF).size(), 8u);
    EXPECT_EQ(build_network(ablated_topology(TopologySpec{}, Ablation::RF_LCF, 0)).ids_of(FieldKind::UCF).size(), 0u);
}

TEST(Ablation, SingleEntryRun) {
    auto cfg = small_experiment();
    cfg.ablations = {Ablation::RF};
    const auto r = run_ablation(synth_dataset(cfg.synth), cfg);
    ASSERT_EQ(r.ablations.size(), 1u);
    EXPECT_TRUE(r.signTests.empty());
    EXPECT_FALSE(r.gating.has_value());
    EXPECT_EQ(r.ablations[0].seeds.size(), 2u);
}

TEST(Ablation, RepeatableModuloTimestampsAndParallelSafe) {
    auto cfg = small_experiment();
    const auto data = synth_dataset(cfg.synth);
    const auto a = run_ablation(data, cfg);
    auto parallel = cfg;
    parallel.workers = 3;
    const auto b = run_ablation(data, parallel);
    EXPECT_TRUE(a.same_results(b));
    EXPECT_EQ(to_json(a)["ablations"].dump(), to_json(b)["ablations"].dump());
}

TEST(Ablation, NonConvergenceIsRecordedPerSeed) {
    auto cfg = small_experiment();
    cfg.ablations = {Ablation::RF};
    cfg.train.solver.maxIterations = 2;
    const auto r = run_ablation(synth_dataset(cfg.synth), cfg);
    ASSERT_EQ(r.ablations[0].seeds.size(), 2u);
    for (const auto& s : r.ablations[0].seeds) {
        EXPECT_FALSE(s.validationMse.has_value());
        EXPECT_NE(s.error.find("did not converge"), std::string::npos);
    }
    EXPECT_EQ(r.ablations[0].succeeded, 0u);
}

TEST(Gating, ZeroLcfWeightsGiveZeroSensitivity) {
    auto net = build_network(TopologySpec{});
    for (auto id : net.ids_of(FieldKind::LCF)) {
        net.wPlus.row(static_cast<Eigen::Index>(id)).setZero();
        net.wNeg.row(static_cast<Eigen::Index>(id)).setZero();
        net.d(static_cast<Eigen::Index>(id)) = 1.0;
    }
    SynthConfig sc;
    sc.samplesPerEnvironment = 4;
    const auto s = gating_probe(net, synth_dataset(sc), EncodeOptions{}, 5);
    for (double v : s) EXPECT_EQ(v, 0.0);
}

TEST(Gating, UntrainedNetworkHasNoStrongGating) {
    SynthConfig sc;
    sc.samplesPerEnvironment = 10;
    const auto s = gating_probe(build_network(TopologySpec{}), synth_dataset(sc), EncodeOptions{}, 5);
    for (double v : s) EXPECT_GT(v, 0.0);
    const double ratio = s.front() / s.back();
    EXPECT_GT(ratio, 0.5);
    EXPECT_LT(ratio, 1.5);
}

TEST(Report, EmitsFourFilesThatReload) {
    auto cfg = small_experiment();
    const auto r = run_ablation(synth_dataset(cfg.synth), cfg);
    const auto dir = scratch_dir("report");
    emit_report(r, dir);
    for (const char* f : {"report.json", "summary.csv", "loss_curves.csv", "plotdata.csv"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(load_report(dir / "report.json"), r);

    std::ifstream curves(dir / "loss_curves.csv");
    std::size_t rows = 0;
    for (std::string line; std::getline(curves, line);) ++rows;
    EXPECT_EQ(rows, 1 + cfg.ablations.size() * cfg.seeds * cfg.train.epochs);

    // summary.csv is recomputable from report.json
    const auto reloaded = load_report(dir / "report.json");
    EXPECT_EQ(summary_csv(reloaded), read_text(dir / "summary.csv"));
    for (const auto& a : reloaded.ablations) {
        double sum = 0.0;
        for (const auto& s : a.seeds) sum += *s.validationMse;
        EXPECT_DOUBLE_EQ(a.mseMean, sum / static_cast<double>(a.seeds.size()));
    }
}

TEST(Report, UnwritableDirectoryIsIoError) {
    const auto dir = scratch_dir("blocked");
    const auto file = dir / "file";
    write_atomic(file, "x");
    EXPECT_THROW(emit_report(RunReport{}, file / "sub"), IoError);
    EXPECT_THROW(write_atomic(dir / "missing" / "x.txt", "x"), IoError);
}

TEST(Report, MalformedJsonIsValidationError) {
    EXPECT_THROW(report_from_json(nlohmann::json::parse(R"({"config_hash": 3})")), ValidationError);
}
