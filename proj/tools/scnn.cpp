// Command-line front end: synth, train, ablate, simulate, decompose, report.
// Exit codes: 0 success, 1 validation error, 2 non-convergence, 3 IO error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scnn/harness.hpp"
#include "scnn/infodecomp.hpp"
#include "scnn/io.hpp"
#include "scnn/simulator.hpp"

namespace fs = std::filesystem;
using namespace scnn;

namespace {

struct Common {
    std::string configPath;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.configPath, "key = value config file");
    cmd->add_option("-s,--set", c.overrides, "override a config key, as key=value (repeatable)");
}

ExperimentConfig resolve(const Common& c) {
    auto cfg = c.configPath.empty() ? default_experiment() : load_config(c.configPath);
    for (const auto& o : c.overrides) apply_override(cfg, o);
    cfg.check();
    return cfg;
}

void write_resolved(const ExperimentConfig& cfg, const fs::path& path) {
    write_atomic(path, "# config hash " + config_hash(cfg) + "\n" + config_text(cfg));
}

fs::path ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir, ec)) throw IoError(dir, "cannot create output directory");
    return dir;
}

std::vector<Sample> dataset_for(const std::string& dataPath, const ExperimentConfig& cfg) {
    return dataPath.empty() ? synth_dataset(cfg.synth) : load_csv(dataPath);
}

void print_report(const RunReport& r) {
    std::printf("config %s, %zu train / %zu validation samples\n", r.configHash.c_str(), r.trainSize, r.validationSize);
    for (const auto& a : r.ablations)
        std::printf("  %-11s mse %.6f +- %.6f (%zu/%zu seeds)\n", to_string(a.ablation).c_str(), a.mseMean, a.mseStd,
                    a.succeeded, a.seeds.size());
    for (const auto& t : r.signTests)
        std::printf("  %s < %s on %zu/%zu seeds, sign test p = %.4g\n", to_string(t.better).c_str(),
                    to_string(t.worse).c_str(), t.wins, t.trials, t.pValue);
    if (r.gating) std::printf("  LCF sensitivity ratio noisiest/cleanest = %.4g\n", r.gating->ratio);
    std::printf("  ordering %s\n", ordering_holds(r) ? "holds" : "does not hold");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tri-field spiking neuron networks: training, simulation and analysis"};
    app.require_subcommand(1);

    Common synthOpts, trainOpts, ablateOpts, simOpts;
    std::string synthOut = "data.csv";
    auto* synth = app.add_subcommand("synth", "generate the synthetic multimodal dataset as CSV");
    add_common(synth, synthOpts);
    synth->add_option("-o,--out", synthOut, "output CSV path");

    std::string trainData, trainOut = "train";
    auto* trainCmd = app.add_subcommand("train", "train the full three-stream network");
    add_common(trainCmd, trainOpts);
    trainCmd->add_option("-d,--data", trainData, "dataset CSV (default: synthesise from the config)");
    trainCmd->add_option("-o,--out", trainOut, "output directory");

    std::string ablateData, ablateOut = "results";
    auto* ablate = app.add_subcommand("ablate", "run the RF / RF+LCF / RF+LCF+UCF ablation");
    add_common(ablate, ablateOpts);
    ablate->add_option("-d,--data", ablateData, "dataset CSV (default: synthesise from the config)");
    ablate->add_option("-o,--out", ablateOut, "output directory");

    std::string simNetwork, simOut = "simulation";
    double simEvents = 1e6, simHorizon = 0.0, simBurnIn = 0.1;
    std::uint64_t simSeed = 1, driveSeed = 1;
    auto* simulateCmd = app.add_subcommand("simulate", "Monte Carlo simulation checked against the analytic steady state");
    add_common(simulateCmd, simOpts);
    simulateCmd->add_option("-n,--network", simNetwork, "network JSON (default: build from the topology config)");
    simulateCmd->add_option("--events", simEvents, "target number of events, used when --horizon is not given");
    simulateCmd->add_option("--horizon", simHorizon, "model time to simulate");
    simulateCmd->add_option("--burn-in", simBurnIn, "fraction of the horizon discarded");
    simulateCmd->add_option("--seed", simSeed, "simulation seed");
    simulateCmd->add_option("--drive-seed", driveSeed, "seed of the random exogenous drive on input neurons");
    simulateCmd->add_option("-o,--out", simOut, "output directory");

    std::string decData, decOut;
    std::size_t bins = 8;
    auto* decompose = app.add_subcommand("decompose", "information measures of an (x,y,z,u) CSV");
    decompose->add_option("-d,--data", decData, "CSV with columns x,y,z,u")->required();
    decompose->add_option("-b,--bins", bins, "equal-width bins per variable");
    decompose->add_option("-o,--out", decOut, "output JSON path (default: stdout)");

    std::string reportDir = "results";
    auto* reportCmd = app.add_subcommand("report", "reload report.json, rewrite its CSV files and print a summary");
    reportCmd->add_option("dir", reportDir, "directory holding report.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*synth) {
            const auto cfg = resolve(synthOpts);
            const auto data = synth_dataset(cfg.synth);
            write_csv(data, synthOut);
            write_resolved(cfg, synthOut + ".config");
            std::printf("wrote %zu samples to %s\n", data.size(), synthOut.c_str());
        } else if (*trainCmd) {
            const auto cfg = resolve(trainOpts);
            const auto dir = ensure_dir(trainOut);
            const auto data = dataset_for(trainData, cfg);
            auto spec = cfg.topology;
            spec.seed = cfg.train.seed;
            const auto result = train(build_network(spec), data, cfg.train);
            save_network(result.network, dir / "network.json");
            std::string curve = "epoch,mse\n";
            for (std::size_t e = 0; e < result.lossCurve.size(); ++e)
                curve += std::to_string(e + 1) + "," + format_double(result.lossCurve[e]) + "\n";
            write_atomic(dir / "loss_curve.csv", curve);
            write_resolved(cfg, dir / "config.txt");
            std::printf("trained on %zu samples: mse %.6f -> %.6f (%zu rejected steps)\n", data.size(), result.initialLoss,
                        result.lossCurve.empty() ? result.initialLoss : result.lossCurve.back(), result.rejectedSteps);
        } else if (*ablate) {
            const auto cfg = resolve(ablateOpts);
            const auto dir = ensure_dir(ablateOut);
            const auto report = run_ablation(dataset_for(ablateData, cfg), cfg);
            emit_report(report, dir);
            write_resolved(cfg, dir / "config.txt");
            print_report(report);
        } else if (*simulateCmd) {
            const auto cfg = resolve(simOpts);
            const auto dir = ensure_dir(simOut);
            Network net;
            if (simNetwork.empty()) {
                auto spec = cfg.topology;
                spec.seed = cfg.train.seed;
                net = build_network(spec);
            } else {
                net = load_network(simNetwork);
            }
            require_valid(net);
            auto drive = ExogenousDrive::zeros(net.size());
            std::mt19937_64 rng(driveSeed);
            for (const auto& n : net.neurons)
                if (n.is_input())
                    drive.lambdaPlus(static_cast<Eigen::Index>(n.id.index)) =
                        0.1 + 0.4 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
            const auto state = solve_steady_state(net, drive, cfg.train.solver);
            const double horizon = simHorizon > 0.0 ? simHorizon : horizon_for_events(net, drive, state.q, simEvents);
            SimOptions so;
            so.burnInFraction = simBurnIn;
            const auto sim = simulate(net, drive, horizon, simSeed, so);
            const auto cmp = compare_to_analytic(sim, state);
            auto j = to_json(sim);
            j["analytic"] = to_json(state);
            j["comparison"] = {{"gap", std::vector<double>(cmp.gap.data(), cmp.gap.data() + cmp.gap.size())},
                               {"max_gap", cmp.maxGap},
                               {"failures_3sigma", cmp.failures}};
            write_atomic(dir / "simulation.json", j.dump(1) + "\n");
            std::string hist = "neuron,level,mass\n";
            for (std::size_t i = 0; i < sim.marginalHist.size(); ++i)
                for (std::size_t l = 0; l < sim.marginalHist[i].size(); ++l)
                    hist += std::to_string(i) + "," + std::to_string(l) + "," + format_double(sim.marginalHist[i][l]) + "\n";
            write_atomic(dir / "histogram.csv", hist);
            write_resolved(cfg, dir / "config.txt");
            std::printf("%llu events over horizon %.6g: max |q_sim - q| = %.4g, %zu neurons outside 3 sigma\n",
                        static_cast<unsigned long long>(sim.events), horizon, cmp.maxGap, cmp.failures);
        } else if (*decompose) {
            const auto joint = info::estimate_joint(load_xyzu_csv(decData), {bins, bins, bins, bins});
            const auto text = info::report(joint).dump(2) + "\n";
            if (decOut.empty()) std::cout << text;
            else write_atomic(decOut, text);
        } else if (*reportCmd) {
            const fs::path dir = reportDir;
            const auto report = load_report(dir / "report.json");
            emit_report(report, dir);
            print_report(report);
        }
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const NonConvergence& e) {
        std::fprintf(stderr, "non-convergence: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
