#ifndef SCNN_HARNESS_HPP
#define SCNN_HARNESS_HPP

// Experiment plumbing: dataset CSV, experiment configuration, the stream ablation runner,
// the LCF gating probe and report persistence.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "scnn/core.hpp"
#include "scnn/error.hpp"
#include "scnn/io.hpp"
#include "scnn/solver.hpp"
#include "scnn/synth.hpp"
#include "scnn/trainer.hpp"

namespace scnn {

// Dataset CSV

namespace detail {

inline std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return std::string(s);
}

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(line);
    }
    while (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

// Portable uniform index in [0, bound).
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

} // namespace detail

inline std::string dataset_to_csv(const std::vector<Sample>& data) {
    if (data.empty()) throw ValidationError("dataset_to_csv: dataset is empty");
    const auto& first = data.front();
    std::string out;
    auto header = [&](const char* prefix, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) out += std::string(prefix) + "_" + std::to_string(k) + ",";
    };
    header("rf", first.rf.size());
    header("lcf", first.lcf.size());
    header("ucf", first.ucf.size());
    out += "target\n";
    for (std::size_t row = 0; row < data.size(); ++row) {
        const auto& s = data[row];
        if (s.rf.size() != first.rf.size() || s.lcf.size() != first.lcf.size() || s.ucf.size() != first.ucf.size())
            throw ValidationError("dataset_to_csv: sample " + std::to_string(row) + " has inconsistent widths");
        for (const auto* v : {&s.rf, &s.lcf, &s.ucf})
            for (double x : *v) out += format_double(x) + ",";
        out += format_double(s.target) + "\n";
    }
    return out;
}

inline void write_csv(const std::vector<Sample>& data, const std::filesystem::path& path) {
    write_atomic(path, dataset_to_csv(data));
}

/// Parses a dataset CSV. `source` names the input in error messages.
inline std::vector<Sample> parse_csv(const std::string& text, const std::string& source = "csv") {
    const auto lines = detail::lines_of(text);
    if (lines.empty()) throw ValidationError(source + ": empty file");
    const auto header = detail::split(lines[0], ',');

    std::array<std::vector<std::size_t>, kStreamCount> columns;
    std::optional<std::size_t> targetCol;
    const std::array<std::string, kStreamCount> prefixes{"rf_", "lcf_", "ucf_"};
    std::array<std::vector<std::pair<std::size_t, std::size_t>>, kStreamCount> found;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& name = header[c];
        if (name == "target") {
            targetCol = c;
            continue;
        }
        bool matched = false;
        for (std::size_t s = 0; s < kStreamCount && !matched; ++s) {
            if (name.rfind(prefixes[s], 0) != 0) continue;
            const auto digits = name.substr(prefixes[s].size());
            std::size_t k = 0;
            const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), k);
            if (digits.empty() || res.ec != std::errc() || res.ptr != digits.data() + digits.size())
                throw ValidationError(source + ": malformed column name '" + name + "'");
            found[s].push_back({k, c});
            matched = true;
        }
        if (!matched) throw ValidationError(source + ": unknown column '" + name + "'");
    }
    if (!targetCol) throw ValidationError(source + ": missing column 'target'");
    for (std::size_t s = 0; s < kStreamCount; ++s) {
        std::sort(found[s].begin(), found[s].end());
        for (std::size_t k = 0; k < found[s].size(); ++k) {
            if (found[s][k].first != k)
                throw ValidationError(source + ": missing column '" + prefixes[s] + std::to_string(k) + "'");
            columns[s].push_back(found[s][k].second);
        }
    }
    if (columns[0].empty()) throw ValidationError(source + ": missing column 'rf_0'");

    std::vector<Sample> out;
    out.reserve(lines.size() - 1);
    for (std::size_t line = 1; line < lines.size(); ++line) {
        const auto cells = detail::split(lines[line], ',');
        const std::string where = source + ": row " + std::to_string(line);
        if (cells.size() != header.size())
            throw ValidationError(where + ": expected " + std::to_string(header.size()) + " cells, got " +
                                  std::to_string(cells.size()));
        auto cell = [&](std::size_t c) {
            double v = 0.0;
            if (!parse_double(cells[c], v) || !std::isfinite(v))
                throw ValidationError(where + ", column '" + header[c] + "': non-numeric value '" + cells[c] + "'");
            return v;
        };
        Sample s;
        std::array<std::vector<double>*, kStreamCount> dst{&s.rf, &s.lcf, &s.ucf};
        for (std::size_t st = 0; st < kStreamCount; ++st)
            for (auto c : columns[st]) {
                const double v = cell(c);
                if (v < 0.0) throw ValidationError(where + ", column '" + header[c] + "': negative feature");
                dst[st]->push_back(v);
            }
        s.target = cell(*targetCol);
        if (!(s.target >= 0.0 && s.target <= 1.0))
            throw ValidationError(where + ", column 'target': value " + cells[*targetCol] + " outside [0, 1]");
        if (!s.ucf.empty())
            s.environment = static_cast<std::size_t>(std::max_element(s.ucf.begin(), s.ucf.end()) - s.ucf.begin());
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<Sample> load_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

/// Four-column (x, y, z, u) table for the information decomposition.
inline std::vector<std::array<double, 4>> load_xyzu_csv(const std::filesystem::path& path) {
    const auto lines = detail::lines_of(read_text(path));
    const std::string source = path.string();
    if (lines.empty()) throw ValidationError(source + ": empty file");
    const auto header = detail::split(lines[0], ',');
    std::array<std::size_t, 4> col{};
    const std::array<std::string, 4> names{"x", "y", "z", "u"};
    for (std::size_t v = 0; v < 4; ++v) {
        const auto it = std::find(header.begin(), header.end(), names[v]);
        if (it == header.end()) throw ValidationError(source + ": missing column '" + names[v] + "'");
        col[v] = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<std::array<double, 4>> out;
    for (std::size_t line = 1; line < lines.size(); ++line) {
        const auto cells = detail::split(lines[line], ',');
        if (cells.size() != header.size())
            throw ValidationError(source + ": row " + std::to_string(line) + ": wrong number of cells");
        std::array<double, 4> row{};
        for (std::size_t v = 0; v < 4; ++v)
            if (!parse_double(cells[col[v]], row[v]) || !std::isfinite(row[v]))
                throw ValidationError(source + ": row " + std::to_string(line) + ", column '" + names[v] +
                                      "': non-numeric value '" + cells[col[v]] + "'");
        out.push_back(row);
    }
    return out;
}

// Feature normalisation

struct FeatureScaler {
    std::array<std::vector<double>, kStreamCount> lo, hi;

    void apply(Sample& s) const {
        std::array<std::vector<double>*, kStreamCount> v{&s.rf, &s.lcf, &s.ucf};
        for (std::size_t st = 0; st < kStreamCount; ++st)
            for (std::size_t k = 0; k < v[st]->size() && k < lo[st].size(); ++k) {
                auto& x = (*v[st])[k];
                const double span = hi[st][k] - lo[st][k];
                x = span > 0.0 ? std::clamp((x - lo[st][k]) / span, 0.0, 1.0) : 0.0;
            }
    }
};

/// Per-column min-max ranges of `train`, to be applied to every split.
inline FeatureScaler fit_scaler(const std::vector<Sample>& train) {
    FeatureScaler f;
    if (train.empty()) return f;
    const std::array<const std::vector<double>*, kStreamCount> first{&train[0].rf, &train[0].lcf, &train[0].ucf};
    for (std::size_t st = 0; st < kStreamCount; ++st) {
        f.lo[st] = *first[st];
        f.hi[st] = *first[st];
    }
    for (const auto& s : train) {
        const std::array<const std::vector<double>*, kStreamCount> v{&s.rf, &s.lcf, &s.ucf};
        for (std::size_t st = 0; st < kStreamCount; ++st)
            for (std::size_t k = 0; k < v[st]->size() && k < f.lo[st].size(); ++k) {
                f.lo[st][k] = std::min(f.lo[st][k], (*v[st])[k]);
                f.hi[st][k] = std::max(f.hi[st][k], (*v[st])[k]);
            }
    }
    return f;
}

// Experiment configuration

enum class Ablation { RF, RF_LCF, RF_LCF_UCF };

inline std::string to_string(Ablation a) {
    switch (a) {
    case Ablation::RF: return "RF";
    case Ablation::RF_LCF: return "RF+LCF";
    case Ablation::RF_LCF_UCF: return "RF+LCF+UCF";
    }
    return "?";
}

inline Ablation ablation_from_string(std::string_view s) {
    if (s == "RF") return Ablation::RF;
    if (s == "RF+LCF") return Ablation::RF_LCF;
    if (s == "RF+LCF+UCF") return Ablation::RF_LCF_UCF;
    throw ValidationError("unknown ablation '" + std::string(s) + "' (expected RF, RF+LCF or RF+LCF+UCF)");
}

inline std::array<bool, kStreamCount> enabled_streams(Ablation a) {
    return {true, a != Ablation::RF, a == Ablation::RF_LCF_UCF};
}

struct ExperimentConfig {
    SynthConfig synth;
    TopologySpec topology;
    TrainConfig train;
    std::vector<Ablation> ablations{Ablation::RF, Ablation::RF_LCF, Ablation::RF_LCF_UCF};
    std::size_t seeds = 10;
    std::uint64_t firstSeed = 0;
    double validationFraction = 0.2;
    bool normalizeFeatures = false;
    double probeStep = 1e-4;
    std::size_t workers = 1; // execution only; excluded from the config hash

    void check() const {
        synth.check();
        train.check();
        if (ablations.empty()) throw ValidationError("experiment.ablations: at least one ablation is required");
        if (seeds == 0) throw ValidationError("experiment.seeds: must be >= 1");
        if (!(validationFraction > 0.0 && validationFraction < 1.0))
            throw ValidationError("experiment.validation_fraction: must be in (0, 1)");
        if (!(probeStep > 0.0)) throw ValidationError("experiment.probe_step: must be > 0");
        if (workers == 0) throw ValidationError("experiment.workers: must be >= 1");
    }
};

/// The configuration the harness runs by default.
inline ExperimentConfig default_experiment() { return ExperimentConfig{}; }

namespace detail {

struct ConfigKey {
    std::string name;
    bool semantic;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
T parse_value(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, double>) {
        double v = 0.0;
        if (!parse_double(text, v) || !std::isfinite(v)) throw ValidationError(key + ": expected a number, got '" + text + "'");
        return v;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw ValidationError(key + ": expected true or false, got '" + text + "'");
    } else {
        T v{};
        const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
        if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
            throw ValidationError(key + ": expected a non-negative integer, got '" + text + "'");
        return v;
    }
}

template <class T>
std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, double>) return format_double(v);
    else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
    else return std::to_string(v);
}

inline std::array<double, 3> parse_triple(const std::string& key, const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() != 3) throw ValidationError(key + ": expected three comma-separated numbers (RF,LCF,UCF)");
    return {parse_value<double>(key, parts[0]), parse_value<double>(key, parts[1]), parse_value<double>(key, parts[2])};
}

inline std::string format_triple(const std::array<double, 3>& v) {
    return format_double(v[0]) + "," + format_double(v[1]) + "," + format_double(v[2]);
}

template <class T, class Field>
ConfigKey scalar_key(std::string name, Field field, bool semantic = true) {
    return {name, semantic, [field](const ExperimentConfig& c) { return format_value<T>(field(const_cast<ExperimentConfig&>(c))); },
            [field, name](ExperimentConfig& c, const std::string& v) { field(c) = parse_value<T>(name, v); }};
}

template <class Field>
ConfigKey triple_key(std::string name, Field field) {
    return {name, true, [field](const ExperimentConfig& c) { return format_triple(field(const_cast<ExperimentConfig&>(c))); },
            [field, name](ExperimentConfig& c, const std::string& v) { field(c) = parse_triple(name, v); }};
}

} // namespace detail

/// Every configurable key, in canonical order.
inline const std::vector<detail::ConfigKey>& config_keys() {
    using namespace detail;
    using C = ExperimentConfig;
    static const std::vector<ConfigKey> keys{
        scalar_key<std::size_t>("synth.samples_per_env", [](C& c) -> auto& { return c.synth.samplesPerEnvironment; }),
        scalar_key<std::size_t>("synth.rf_width", [](C& c) -> auto& { return c.synth.rfWidth; }),
        scalar_key<std::size_t>("synth.lcf_width", [](C& c) -> auto& { return c.synth.lcfWidth; }),
        scalar_key<std::size_t>("synth.context_length", [](C& c) -> auto& { return c.synth.contextLength; }),
        scalar_key<double>("synth.noise_at_0db", [](C& c) -> auto& { return c.synth.noiseAt0dB; }),
        scalar_key<double>("synth.lcf_noise", [](C& c) -> auto& { return c.synth.lcfNoise; }),
        scalar_key<double>("synth.temporal_correlation", [](C& c) -> auto& { return c.synth.temporalCorrelation; }),
        scalar_key<double>("synth.noise_bias", [](C& c) -> auto& { return c.synth.noiseBias; }),
        scalar_key<double>("synth.lombard_shift", [](C& c) -> auto& { return c.synth.lombardShift; }),
        scalar_key<double>("synth.target_low", [](C& c) -> auto& { return c.synth.targetLow; }),
        scalar_key<double>("synth.target_high", [](C& c) -> auto& { return c.synth.targetHigh; }),
        scalar_key<std::uint64_t>("synth.seed", [](C& c) -> auto& { return c.synth.seed; }),
        {"topology.layers", true,
         [](const C& c) {
             std::string s;
             for (std::size_t l = 0; l < c.topology.layers.size(); ++l) {
                 if (l) s += ";";
                 for (std::size_t k = 0; k < c.topology.layers[l].size(); ++k)
                     s += (k ? "," : "") + std::to_string(c.topology.layers[l][k]);
             }
             return s;
         },
         [](C& c, const std::string& v) {
             std::vector<std::vector<std::size_t>> layers;
             for (const auto& layer : split(v, ';')) {
                 layers.emplace_back();
                 for (const auto& size : split(layer, ','))
                     layers.back().push_back(parse_value<std::size_t>("topology.layers", size));
             }
             c.topology.layers = std::move(layers);
         }},
        scalar_key<std::size_t>("topology.outputs", [](C& c) -> auto& { return c.topology.outputs; }),
        scalar_key<double>("topology.firing_rate", [](C& c) -> auto& { return c.topology.firingRate; }),
        triple_key("topology.input_firing_rate", [](C& c) -> auto& { return c.topology.inputFiringRate; }),
        scalar_key<double>("topology.sink_rate", [](C& c) -> auto& { return c.topology.sinkRate; }),
        scalar_key<double>("topology.weight_min", [](C& c) -> auto& { return c.topology.weightMin; }),
        scalar_key<double>("topology.weight_max", [](C& c) -> auto& { return c.topology.weightMax; }),
        scalar_key<double>("train.learning_rate", [](C& c) -> auto& { return c.train.learningRate; }),
        scalar_key<std::size_t>("train.epochs", [](C& c) -> auto& { return c.train.epochs; }),
        scalar_key<std::uint64_t>("train.seed", [](C& c) -> auto& { return c.train.seed; }),
        {"train.gradient", true,
         [](const C& c) { return std::string(c.train.mode == GradientMode::Analytic ? "analytic" : "finite-difference"); },
         [](C& c, const std::string& v) {
             if (v == "analytic") c.train.mode = GradientMode::Analytic;
             else if (v == "finite-difference") c.train.mode = GradientMode::FiniteDifference;
             else throw ValidationError("train.gradient: expected analytic or finite-difference, got '" + v + "'");
         }},
        scalar_key<double>("train.weight_floor", [](C& c) -> auto& { return c.train.weightFloor; }),
        scalar_key<double>("train.min_rate_fraction", [](C& c) -> auto& { return c.train.minRateFraction; }),
        scalar_key<std::size_t>("train.max_step_halvings", [](C& c) -> auto& { return c.train.maxStepHalvings; }),
        triple_key("train.field_rate_multiplier", [](C& c) -> auto& { return c.train.fieldRateMultiplier; }),
        triple_key("train.rate_scale", [](C& c) -> auto& { return c.train.encoding.rateScale; }),
        triple_key("train.inhibitory_scale", [](C& c) -> auto& { return c.train.encoding.inhibitoryScale; }),
        scalar_key<double>("solver.tolerance", [](C& c) -> auto& { return c.train.solver.tolerance; }),
        scalar_key<std::size_t>("solver.max_iterations", [](C& c) -> auto& { return c.train.solver.maxIterations; }),
        scalar_key<double>("solver.damping", [](C& c) -> auto& { return c.train.solver.damping; }),
        {"solver.sweep", true,
         [](const C& c) { return std::string(c.train.solver.sweep == Sweep::Jacobi ? "jacobi" : "gauss-seidel"); },
         [](C& c, const std::string& v) {
             if (v == "jacobi") c.train.solver.sweep = Sweep::Jacobi;
             else if (v == "gauss-seidel") c.train.solver.sweep = Sweep::GaussSeidel;
             else throw ValidationError("solver.sweep: expected jacobi or gauss-seidel, got '" + v + "'");
         }},
        {"experiment.ablations", true,
         [](const C& c) {
             std::string s;
             for (std::size_t k = 0; k < c.ablations.size(); ++k) s += (k ? "," : "") + to_string(c.ablations[k]);
             return s;
         },
         [](C& c, const std::string& v) {
             c.ablations.clear();
             for (const auto& a : split(v, ',')) c.ablations.push_back(ablation_from_string(a));
         }},
        scalar_key<std::size_t>("experiment.seeds", [](C& c) -> auto& { return c.seeds; }),
        scalar_key<std::uint64_t>("experiment.first_seed", [](C& c) -> auto& { return c.firstSeed; }),
        scalar_key<double>("experiment.validation_fraction", [](C& c) -> auto& { return c.validationFraction; }),
        scalar_key<bool>("experiment.normalize_features", [](C& c) -> auto& { return c.normalizeFeatures; }),
        scalar_key<double>("experiment.probe_step", [](C& c) -> auto& { return c.probeStep; }),
        scalar_key<std::size_t>("experiment.workers", [](C& c) -> auto& { return c.workers; }, false),
    };
    return keys;
}

/// Applies one `key = value` assignment.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : config_keys())
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    throw ValidationError("unknown config key '" + key + "'");
}

/// Applies a `key=value` override as given on the command line.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ValidationError("override '" + assignment + "': expected key=value");
    set_config_value(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Reads `key = value` lines; blank lines and lines starting with '#' are ignored.
inline void parse_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source = "config") {
    const auto lines = detail::lines_of(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        const auto line = detail::trim(lines[n].substr(0, lines[n].find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(source + ": line " + std::to_string(n + 1) + ": expected key = value");
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        try {
            set_config_value(cfg, key, value);
        } catch (const ValidationError& e) {
            throw ValidationError(source + ": line " + std::to_string(n + 1) + ": " + e.what());
        }
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = default_experiment()) {
    parse_config_text(base, read_text(path), path.string());
    return base;
}

/// Canonical `key = value` text; with `semanticOnly` it omits execution-only keys.
inline std::string config_text(const ExperimentConfig& cfg, bool semanticOnly = false) {
    std::string out;
    for (const auto& k : config_keys())
        if (k.semantic || !semanticOnly) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

/// FNV-1a over the canonical semantic config text, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : config_text(cfg, true)) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Ablation runner

struct SeedResult {
    std::uint64_t seed = 0;
    std::optional<double> validationMse; // empty when training or evaluation failed
    std::optional<double> trainMse;
    double initialLoss = 0.0;
    std::vector<double> lossCurve;
    std::size_t rejectedSteps = 0;
    std::string error;

    bool operator==(const SeedResult&) const = default;
};

struct AblationResult {
    Ablation ablation = Ablation::RF;
    std::vector<SeedResult> seeds;
    double mseMean = 0.0; // over seeds with a validation MSE
    double mseStd = 0.0;  // sample standard deviation
    std::size_t succeeded = 0;

    bool operator==(const AblationResult&) const = default;
};

struct SignTest {
    Ablation better = Ablation::RF_LCF; // hypothesised lower MSE
    Ablation worse = Ablation::RF;
    std::size_t wins = 0;   // seeds where `better` has strictly lower MSE
    std::size_t trials = 0; // paired seeds without a tie
    double pValue = 1.0;    // one-sided, P(X >= wins), X ~ Bin(trials, 1/2)

    bool operator==(const SignTest&) const = default;
};

struct GatingReport {
    std::vector<std::string> environments;     // index = environment id
    std::vector<double> sensitivity;           // mean over probed seeds
    std::vector<std::vector<double>> perSeed;  // [seed][environment]
    double ratio = 0.0;                        // noisiest / cleanest

    bool operator==(const GatingReport&) const = default;
};

struct PlotPoint {
    Ablation ablation = Ablation::RF;
    std::uint64_t seed = 0;
    std::size_t sample = 0; // index within the validation split
    std::size_t environment = 0;
    double target = 0.0;
    double prediction = 0.0;

    bool operator==(const PlotPoint&) const = default;
};

struct RunReport {
    std::string configHash;
    std::string config; // resolved canonical config text
    std::string createdAt;
    double elapsedSeconds = 0.0;
    std::size_t trainSize = 0;
    std::size_t validationSize = 0;
    std::vector<AblationResult> ablations;
    std::vector<SignTest> signTests;
    std::optional<GatingReport> gating;
    std::vector<PlotPoint> plot;

    const AblationResult* find(Ablation a) const {
        for (const auto& r : ablations)
            if (r.ablation == a) return &r;
        return nullptr;
    }

    /// Equality of everything except the wall-clock fields.
    bool same_results(const RunReport& o) const {
        return configHash == o.configHash && config == o.config && trainSize == o.trainSize &&
               validationSize == o.validationSize && ablations == o.ablations && signTests == o.signTests &&
               gating == o.gating && plot == o.plot;
    }
    bool operator==(const RunReport& o) const {
        return same_results(o) && createdAt == o.createdAt && elapsedSeconds == o.elapsedSeconds;
    }
};

inline double sign_test_p(std::size_t wins, std::size_t trials) {
    if (trials == 0) return 1.0;
    double p = 0.0;
    for (std::size_t k = wins; k <= trials; ++k)
        p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                      static_cast<double>(trials) * std::log(2.0));
    return std::min(1.0, p);
}

inline SignTest sign_test(const AblationResult& better, const AblationResult& worse) {
    SignTest t;
    t.better = better.ablation;
    t.worse = worse.ablation;
    for (const auto& b : better.seeds)
        for (const auto& w : worse.seeds) {
            if (b.seed != w.seed || !b.validationMse || !w.validationMse) continue;
            if (*b.validationMse == *w.validationMse) continue;
            ++t.trials;
            if (*b.validationMse < *w.validationMse) ++t.wins;
        }
    t.pValue = sign_test_p(t.wins, t.trials);
    return t;
}

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> validation;
};

/// Seeded shuffle, then the first (1 - fraction) share trains.
inline Split split_dataset(const std::vector<Sample>& data, double validationFraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[detail::uniform_index(rng, k)]);
    const auto nTrain = static_cast<std::size_t>(std::llround((1.0 - validationFraction) * static_cast<double>(data.size())));
    Split s;
    for (std::size_t k = 0; k < idx.size(); ++k) (k < nTrain ? s.train : s.validation).push_back(data[idx[k]]);
    return s;
}

/// Topology with the input layer of every disabled stream removed.
inline TopologySpec ablated_topology(TopologySpec spec, Ablation a, std::uint64_t seed) {
    const auto on = enabled_streams(a);
    for (std::size_t s = 0; s < kStreamCount; ++s)
        if (!on[s] && !spec.layers.empty()) spec.layers[0][s] = 0;
    spec.seed = seed;
    return spec;
}

/// Copies of the samples with the features of disabled streams zeroed.
inline std::vector<Sample> ablated_samples(std::vector<Sample> data, Ablation a) {
    const auto on = enabled_streams(a);
    for (auto& s : data) {
        if (!on[1]) std::fill(s.lcf.begin(), s.lcf.end(), 0.0);
        if (!on[2]) std::fill(s.ucf.begin(), s.ucf.end(), 0.0);
    }
    return data;
}

/// Mean over samples of sum_k |d prediction / d Lambda_k| across LCF input neurons, per environment.
/// Central differences, one-sided where Lambda_k < step.
inline std::vector<double> gating_probe(const Network& net, const std::vector<Sample>& data, const EncodeOptions& enc,
                                        std::size_t environments, double step = 1e-4, SolverOptions opts = {}) {
    opts.tolerance = std::min(opts.tolerance, 1e-13);
    opts.maxIterations = std::max<std::size_t>(opts.maxIterations, 100000);
    std::vector<double> sum(environments, 0.0);
    std::vector<std::size_t> count(environments, 0);
    const auto lcf = net.ids_of(FieldKind::LCF);
    for (const auto& s : data) {
        if (s.environment >= environments) throw ValidationError("gating_probe: environment id out of range");
        const auto drive = encode_sample(net, s, enc);
        double total = 0.0;
        for (auto id : lcf) {
            const auto k = static_cast<Eigen::Index>(id);
            auto up = drive, down = drive;
            up.lambdaPlus(k) += step;
            double width = 2.0 * step;
            if (drive.lambdaPlus(k) >= step) down.lambdaPlus(k) -= step;
            else width = step;
            total += std::abs(predict(net, up, opts) - predict(net, down, opts)) / width;
        }
        sum[s.environment] += total;
        ++count[s.environment];
    }
    for (std::size_t e = 0; e < environments; ++e) sum[e] = count[e] ? sum[e] / static_cast<double>(count[e]) : 0.0;
    return sum;
}

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Job {
    std::size_t ablationIndex;
    std::size_t seedIndex;
};

struct JobOutput {
    SeedResult result;
    std::optional<Network> network;
    std::vector<double> predictions;
};

inline void run_parallel(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& body) {
    workers = std::max<std::size_t>(1, std::min(workers, jobs));
    if (workers == 1) {
        for (std::size_t k = 0; k < jobs; ++k) body(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t k; (k = next++) < jobs;) {
                try {
                    body(k);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace detail

/// Trains every ablation on every seed. Within a seed, all ablations share the split and budget.
inline RunReport run_ablation(const std::vector<Sample>& data, const ExperimentConfig& cfg,
                              const std::vector<EnvironmentSpec>& envs = default_environments()) {
    cfg.check();
    if (data.size() < 2) throw ValidationError("run_ablation: need at least 2 samples");
    const auto started = std::chrono::steady_clock::now();

    std::vector<Split> splits;
    for (std::size_t k = 0; k < cfg.seeds; ++k) {
        auto s = split_dataset(data, cfg.validationFraction, cfg.firstSeed + k);
        if (s.train.empty() || s.validation.empty()) throw ValidationError("run_ablation: a split is empty");
        if (cfg.normalizeFeatures) {
            const auto scaler = fit_scaler(s.train);
            for (auto& x : s.train) scaler.apply(x);
            for (auto& x : s.validation) scaler.apply(x);
        }
        splits.push_back(std::move(s));
    }

    const std::size_t nAbl = cfg.ablations.size();
    std::vector<detail::JobOutput> outputs(nAbl * cfg.seeds);
    detail::run_parallel(outputs.size(), cfg.workers, [&](std::size_t job) {
        const std::size_t a = job / cfg.seeds, k = job % cfg.seeds;
        const Ablation abl = cfg.ablations[a];
        const std::uint64_t seed = cfg.firstSeed + k;
        auto& out = outputs[job];
        out.result.seed = seed;
        const auto trainSet = ablated_samples(splits[k].train, abl);
        const auto val = ablated_samples(splits[k].validation, abl);
        try {
            const auto net = build_network(ablated_topology(cfg.topology, abl, seed));
            auto trained = train(net, trainSet, cfg.train);
            out.result.initialLoss = trained.initialLoss;
            out.result.lossCurve = trained.lossCurve;
            out.result.rejectedSteps = trained.rejectedSteps;
            out.result.trainMse = trained.lossCurve.empty() ? trained.initialLoss : trained.lossCurve.back();
            double sq = 0.0;
            for (const auto& s : val) {
                const double p = predict(trained.network, s, cfg.train.encoding, cfg.train.solver);
                out.predictions.push_back(p);
                sq += (p - s.target) * (p - s.target);
            }
            out.result.validationMse = sq / static_cast<double>(val.size());
            out.network = std::move(trained.network);
        } catch (const NonConvergence& e) {
            out.result.error = e.what();
            out.result.trainMse.reset();
            out.result.validationMse.reset();
            out.predictions.clear();
        }
    });

    RunReport report;
    report.configHash = config_hash(cfg);
    report.config = config_text(cfg, true);
    report.createdAt = detail::utc_timestamp();
    report.trainSize = splits.front().train.size();
    report.validationSize = splits.front().validation.size();

    for (std::size_t a = 0; a < nAbl; ++a) {
        AblationResult r;
        r.ablation = cfg.ablations[a];
        double sum = 0.0;
        for (std::size_t k = 0; k < cfg.seeds; ++k) {
            const auto& out = outputs[a * cfg.seeds + k];
            r.seeds.push_back(out.result);
            if (out.result.validationMse) {
                sum += *out.result.validationMse;
                ++r.succeeded;
            }
            const auto& val = splits[k].validation;
            for (std::size_t i = 0; i < out.predictions.size(); ++i)
                report.plot.push_back({r.ablation, out.result.seed, i, val[i].environment, val[i].target, out.predictions[i]});
        }
        if (r.succeeded > 0) r.mseMean = sum / static_cast<double>(r.succeeded);
        if (r.succeeded > 1) {
            double sq = 0.0;
            for (const auto& s : r.seeds)
                if (s.validationMse) sq += (*s.validationMse - r.mseMean) * (*s.validationMse - r.mseMean);
            r.mseStd = std::sqrt(sq / static_cast<double>(r.succeeded - 1));
        }
        report.ablations.push_back(std::move(r));
    }

    const std::array<std::pair<Ablation, Ablation>, 2> pairs{
        std::pair{Ablation::RF_LCF, Ablation::RF}, std::pair{Ablation::RF_LCF_UCF, Ablation::RF_LCF}};
    for (const auto& [better, worse] : pairs) {
        const auto* b = report.find(better);
        const auto* w = report.find(worse);
        if (b && w) report.signTests.push_back(sign_test(*b, *w));
    }

    const auto full = std::find(cfg.ablations.begin(), cfg.ablations.end(), Ablation::RF_LCF_UCF);
    if (full != cfg.ablations.end()) {
        const std::size_t a = static_cast<std::size_t>(full - cfg.ablations.begin());
        GatingReport g;
        for (const auto& e : envs) g.environments.push_back(e.name);
        g.sensitivity.assign(envs.size(), 0.0);
        for (std::size_t k = 0; k < cfg.seeds; ++k) {
            const auto& out = outputs[a * cfg.seeds + k];
            if (!out.network) continue;
            try {
                g.perSeed.push_back(gating_probe(*out.network, splits[k].validation, cfg.train.encoding, envs.size(),
                                                 cfg.probeStep, cfg.train.solver));
            } catch (const NonConvergence&) {
                continue;
            }
            for (std::size_t e = 0; e < envs.size(); ++e) g.sensitivity[e] += g.perSeed.back()[e];
        }
        if (!g.perSeed.empty()) {
            for (double& s : g.sensitivity) s /= static_cast<double>(g.perSeed.size());
            const double clean = g.sensitivity.back();
            g.ratio = clean > 0.0 ? g.sensitivity.front() / clean : 0.0;
            report.gating = std::move(g);
        }
    }
    report.elapsedSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

inline bool ordering_holds(const RunReport& r, double alpha = 0.05) {
    const auto* rf = r.find(Ablation::RF);
    const auto* av = r.find(Ablation::RF_LCF);
    const auto* full = r.find(Ablation::RF_LCF_UCF);
    if (!rf || !av || !full || r.signTests.size() != 2) return false;
    if (!(full->mseMean < av->mseMean && av->mseMean < rf->mseMean)) return false;
    for (const auto& t : r.signTests)
        if (!(t.pValue < alpha)) return false;
    return true;
}

// Report serialisation

namespace detail {

inline nlohmann::json optional_to_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::optional<double> optional_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

} // namespace detail

inline nlohmann::json to_json(const RunReport& r) {
    using nlohmann::json;
    json abl = json::array();
    for (const auto& a : r.ablations) {
        json seeds = json::array();
        for (const auto& s : a.seeds)
            seeds.push_back({{"seed", s.seed},
                             {"validation_mse", detail::optional_to_json(s.validationMse)},
                             {"train_mse", detail::optional_to_json(s.trainMse)},
                             {"initial_loss", s.initialLoss},
                             {"loss_curve", s.lossCurve},
                             {"rejected_steps", s.rejectedSteps},
                             {"error", s.error}});
        abl.push_back({{"ablation", to_string(a.ablation)},
                       {"mse_mean", a.mseMean},
                       {"mse_std", a.mseStd},
                       {"succeeded", a.succeeded},
                       {"seeds", std::move(seeds)}});
    }
    json tests = json::array();
    for (const auto& t : r.signTests)
        tests.push_back({{"better", to_string(t.better)},
                         {"worse", to_string(t.worse)},
                         {"wins", t.wins},
                         {"trials", t.trials},
                         {"p_value", t.pValue}});
    json plot = json::array();
    for (const auto& p : r.plot)
        plot.push_back({to_string(p.ablation), p.seed, p.sample, p.environment, p.target, p.prediction});
    json out{{"config_hash", r.configHash},
             {"config", r.config},
             {"created_at", r.createdAt},
             {"elapsed_seconds", r.elapsedSeconds},
             {"train_size", r.trainSize},
             {"validation_size", r.validationSize},
             {"ablations", std::move(abl)},
             {"sign_tests", std::move(tests)},
             {"ordering_holds", ordering_holds(r)},
             {"plot", std::move(plot)}};
    if (r.gating)
        out["gating"] = {{"environments", r.gating->environments},
                         {"sensitivity", r.gating->sensitivity},
                         {"per_seed", r.gating->perSeed},
                         {"ratio", r.gating->ratio}};
    else
        out["gating"] = nullptr;
    return out;
}

inline RunReport report_from_json(const nlohmann::json& j) {
    try {
        RunReport r;
        r.configHash = j.at("config_hash").get<std::string>();
        r.config = j.at("config").get<std::string>();
        r.createdAt = j.at("created_at").get<std::string>();
        r.elapsedSeconds = j.at("elapsed_seconds").get<double>();
        r.trainSize = j.at("train_size").get<std::size_t>();
        r.validationSize = j.at("validation_size").get<std::size_t>();
        for (const auto& a : j.at("ablations")) {
            AblationResult res;
            res.ablation = ablation_from_string(a.at("ablation").get<std::string>());
            res.mseMean = a.at("mse_mean").get<double>();
            res.mseStd = a.at("mse_std").get<double>();
            res.succeeded = a.at("succeeded").get<std::size_t>();
            for (const auto& s : a.at("seeds")) {
                SeedResult sr;
                sr.seed = s.at("seed").get<std::uint64_t>();
                sr.validationMse = detail::optional_from_json(s.at("validation_mse"));
                sr.trainMse = detail::optional_from_json(s.at("train_mse"));
                sr.initialLoss = s.at("initial_loss").get<double>();
                sr.lossCurve = s.at("loss_curve").get<std::vector<double>>();
                sr.rejectedSteps = s.at("rejected_steps").get<std::size_t>();
                sr.error = s.at("error").get<std::string>();
                res.seeds.push_back(std::move(sr));
            }
            r.ablations.push_back(std::move(res));
        }
        for (const auto& t : j.at("sign_tests"))
            r.signTests.push_back({ablation_from_string(t.at("better").get<std::string>()),
                                   ablation_from_string(t.at("worse").get<std::string>()), t.at("wins").get<std::size_t>(),
                                   t.at("trials").get<std::size_t>(), t.at("p_value").get<double>()});
        for (const auto& p : j.at("plot"))
            r.plot.push_back({ablation_from_string(p.at(0).get<std::string>()), p.at(1).get<std::uint64_t>(),
                              p.at(2).get<std::size_t>(), p.at(3).get<std::size_t>(), p.at(4).get<double>(),
                              p.at(5).get<double>()});
        if (!j.at("gating").is_null()) {
            const auto& g = j.at("gating");
            r.gating = GatingReport{g.at("environments").get<std::vector<std::string>>(),
                                    g.at("sensitivity").get<std::vector<double>>(),
                                    g.at("per_seed").get<std::vector<std::vector<double>>>(), g.at("ratio").get<double>()};
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("report: ") + e.what());
    }
}

inline std::string summary_csv(const RunReport& r) {
    std::string out = "ablation,mse_mean,mse_std\n";
    for (const auto& a : r.ablations) out += to_string(a.ablation) + "," + format_double(a.mseMean) + "," + format_double(a.mseStd) + "\n";
    return out;
}

inline std::string loss_curves_csv(const RunReport& r) {
    std::string out = "ablation,seed,epoch,mse\n";
    for (const auto& a : r.ablations)
        for (const auto& s : a.seeds)
            for (std::size_t e = 0; e < s.lossCurve.size(); ++e)
                out += to_string(a.ablation) + "," + std::to_string(s.seed) + "," + std::to_string(e + 1) + "," +
                       format_double(s.lossCurve[e]) + "\n";
    return out;
}

inline std::string plotdata_csv(const RunReport& r) {
    std::string out = "ablation,seed,sample,environment,target,prediction\n";
    for (const auto& p : r.plot)
        out += to_string(p.ablation) + "," + std::to_string(p.seed) + "," + std::to_string(p.sample) + "," +
               std::to_string(p.environment) + "," + format_double(p.target) + "," + format_double(p.prediction) + "\n";
    return out;
}

/// Writes report.json, summary.csv, loss_curves.csv and plotdata.csv into `dir`.
inline void emit_report(const RunReport& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (!std::filesystem::is_directory(dir, ec)) throw IoError(dir.string(), "cannot create output directory");
    write_atomic(dir / "report.json", to_json(r).dump(1) + "\n");
    write_atomic(dir / "summary.csv", summary_csv(r));
    write_atomic(dir / "loss_curves.csv", loss_curves_csv(r));
    write_atomic(dir / "plotdata.csv", plotdata_csv(r));
}

inline RunReport load_report(const std::filesystem::path& path) { return report_from_json(read_json(path)); }

} // namespace scnn

#endif // SCNN_HARNESS_HPP
