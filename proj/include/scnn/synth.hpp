#ifndef SCNN_SYNTH_HPP
#define SCNN_SYNTH_HPP

// Synthetic multimodal regression task. A latent target t in [targetLow, targetHigh] evolves as a
// smooth autoregressive sequence inside each environment. Each frame yields
//   RF  : noisy views (t, sqrt t); noise std and a noise-floor bias set by the environment's SNR
//   LCF : a smooth monotone view of t with a small fixed noise, informative at every SNR
//   UCF : one-hot environment code; noisier environments also shift the latent upwards,
//         a Lombard-style prior that only the environment code reveals
// A sample holds the current frame followed by `contextLength` prior frames.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "scnn/error.hpp"
#include "scnn/trainer.hpp"

namespace scnn {

struct EnvironmentSpec {
    std::string name;
    double snrLow = 0.0; // dB, inclusive
    double snrHigh = 0.0;
    std::size_t oneHotIndex = 0;
};

/// Five environments partitioning [-12, 12] dB, noisiest first.
inline const std::vector<EnvironmentSpec>& default_environments() {
    static const std::vector<EnvironmentSpec> envs{
        {"cafe", -12.0, -7.2, 0},       {"restaurant", -7.2, -2.4, 1}, {"public-transport", -2.4, 2.4, 2},
        {"pedestrian", 2.4, 7.2, 3},    {"home", 7.2, 12.0, 4},
    };
    return envs;
}

struct SynthConfig {
    std::size_t samplesPerEnvironment = 300;
    std::size_t rfWidth = 2;        // features per frame
    std::size_t lcfWidth = 2;       // features per frame
    std::size_t contextLength = 3;  // prior frames appended to the current frame
    double noiseAt0dB = 0.1;        // RF noise std at 0 dB; scales as 10^(-snr/20)
    double lcfNoise = 0.15;
    double temporalCorrelation = 0.8;
    double noiseBias = 1.0;     // mean of the RF noise, in units of its std (noise energy floor)
    double lombardShift = 1.5;  // latent shift per environment, proportional to -SNR/12 at its centre
    double targetLow = 0.1; // latent range kept clear of q = 1, where the output neuron saturates
    double targetHigh = 0.8;
    std::uint64_t seed = 1;

    std::size_t frames() const { return contextLength + 1; }
    std::size_t rf_inputs() const { return rfWidth * frames(); }
    std::size_t lcf_inputs() const { return lcfWidth * frames(); }

    void check() const {
        if (samplesPerEnvironment == 0) throw ValidationError("synth: samples_per_env must be >= 1");
        if (rfWidth == 0 || lcfWidth == 0) throw ValidationError("synth: feature widths must be >= 1");
        if (contextLength < 1) throw ValidationError("synth: context length must be >= 1");
        if (!(noiseAt0dB >= 0.0) || !(lcfNoise >= 0.0)) throw ValidationError("synth: noise levels must be >= 0");
        if (!(temporalCorrelation >= 0.0 && temporalCorrelation < 1.0))
            throw ValidationError("synth: temporal correlation must be in [0, 1)");
        if (!(targetLow >= 0.0 && targetHigh <= 1.0 && targetLow < targetHigh))
            throw ValidationError("synth: target range must satisfy 0 <= low < high <= 1");
    }
};

inline double rf_noise_std(const SynthConfig& cfg, double snrDb) { return cfg.noiseAt0dB * std::pow(10.0, -snrDb / 20.0); }

namespace detail {

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Clean per-frame views of the latent value; component k cycles through the basis.
inline double rf_view(double t, std::size_t k) { return k % 2 == 0 ? t : std::sqrt(t); }

inline double lcf_view(double t, std::size_t k) {
    return k % 2 == 0 ? 0.5 + 0.5 * std::sin(std::numbers::pi * (t - 0.5)) : t * t;
}

} // namespace detail

inline std::vector<Sample> synth_dataset(const SynthConfig& cfg,
                                         const std::vector<EnvironmentSpec>& envs = default_environments()) {
    cfg.check();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Sample> out;
    out.reserve(cfg.samplesPerEnvironment * envs.size());
    const double rho = cfg.temporalCorrelation;
    const double innovation = std::sqrt(1.0 - rho * rho);

    for (const auto& env : envs) {
        std::uniform_real_distribution<double> snr(env.snrLow, env.snrHigh);
        const std::size_t length = cfg.samplesPerEnvironment + cfg.contextLength;
        std::vector<double> latent(length);
        const double shift = -cfg.lombardShift * 0.5 * (env.snrLow + env.snrHigh) / 12.0;
        double z = gauss(rng);
        for (auto& t : latent) {
            z = rho * z + innovation * gauss(rng);
            t = cfg.targetLow + (cfg.targetHigh - cfg.targetLow) / (1.0 + std::exp(-1.5 * (z + shift)));
        }
        for (std::size_t k = cfg.contextLength; k < length; ++k) {
            const double sigma = rf_noise_std(cfg, snr(rng));
            Sample s;
            s.environment = env.oneHotIndex;
            s.target = latent[k];
            for (std::size_t f = 0; f < cfg.frames(); ++f) {
                const double t = latent[k - f];
                for (std::size_t c = 0; c < cfg.rfWidth; ++c)
                    s.rf.push_back(detail::clamp01(detail::rf_view(t, c) + sigma * (cfg.noiseBias + gauss(rng))));
                for (std::size_t c = 0; c < cfg.lcfWidth; ++c)
                    s.lcf.push_back(detail::clamp01(detail::lcf_view(t, c) + cfg.lcfNoise * gauss(rng)));
            }
            s.ucf.assign(envs.size(), 0.0);
            s.ucf[env.oneHotIndex] = 1.0;
            out.push_back(std::move(s));
        }
    }
    return out;
}

} // namespace scnn

#endif // SCNN_SYNTH_HPP
