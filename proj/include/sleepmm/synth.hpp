#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sleepmm/types.hpp"

namespace sleepmm {

// Synthetic multi-modal recording generator. A hidden piecewise-constant
// latent state (proxy sleep stage) plus a fast shared amplitude/frequency
// driver modulate band-limited oscillations in all three modalities. The
// coupling strength kappa blends shared and per-modality private processes:
// kappa=1 makes every modality a deterministic function of the shared latent,
// kappa=0 decouples them entirely. Planted apnea-like intervals depress the
// signal envelope and are emitted as SDB annotations.
struct SynthParams {
    double duration_s = 3600.0;
    double noise_level = 0.3;
    double kappa = 0.9;
    double sdb_events_per_hour = 2.0;
    double native_hz = 256.0;
};

RawRecording synthesize_recording(const SynthParams& params, uint64_t seed,
                                  const std::string& participant_id);

// Generator inverse for the kappa=1 case: recovers the latent state on
// [t0, t1) from the dominant frequency of the first BAS channel.
int infer_latent_state(const SynthParams& params, uint64_t seed, const RawRecording& rec,
                       double t0, double t1);

// Generator inverse for the planted per-epoch attributes: the eight shared
// binary modulation attributes (slow gain, slow frequency multiplier,
// second harmonic, third harmonic, AM depth, noise-floor scale, crest
// shaping, burst train) of the 30 s epoch containing t0. Each entry is 0
// (low level) or 1 (high level).
std::array<int, 8> planted_shared_bits(const SynthParams& params, uint64_t seed, double t0);

}  // namespace sleepmm
