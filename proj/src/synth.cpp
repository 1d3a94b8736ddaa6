#include "sleepmm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sleepmm {

namespace {

constexpr int kStates = 5;

// Per-modality stage frequencies (Hz) and envelope amplitudes. Adjacent state
// frequencies are a factor 2 apart so the state survives the +/-15% driver
// jitter and +/-10% participant factor.
constexpr double kStageFreq[3][kStates] = {
    {2.0, 4.0, 8.0, 16.0, 30.0},   // BAS
    {1.0, 2.0, 4.0, 8.0, 16.0},    // ECG
    {0.3, 0.6, 1.2, 2.4, 4.8},     // RESP
};
constexpr double kStageAmp[kStates] = {1.0, 0.8, 0.62, 0.48, 0.9};
constexpr double kSdbDip[3] = {0.75, 0.55, 0.15};

const char* kStageLabels[kStates] = {"Wake", "Stage 1", "Stage 2", "Stage 3", "REM"};

struct Piece {
    double start;
    int state;
};

struct DriverSeg {
    double start;
    double gain;
    double fmul;
};

struct SynthModel {
    double pf = 1.0, pa = 1.0;  // participant frequency/amplitude factors
    std::vector<Piece> shared_stage;
    std::vector<Piece> private_stage[3];
    std::vector<DriverSeg> shared_driver;
    std::vector<DriverSeg> private_driver[3];
    std::vector<std::pair<double, double>> sdb_events;  // (start, duration)
    std::vector<double> phase0;   // per channel
    std::vector<double> detune;   // per channel
    // Participant physiology: per-stage frequency multipliers, identical for
    // all modalities, so stage boundaries shift coherently per participant.
    double stage_jitter[kStates] = {1, 1, 1, 1, 1};
    // Clip-scale modulation (segments comparable to the 30 s clip length)
    // whose gain/frequency fingerprint identifies a moment in time.
    std::vector<DriverSeg> shared_slow;
    std::vector<DriverSeg> private_slow[3];
    // Further clip-scale fingerprint dimensions: second- and third-harmonic
    // content of the waveform (gain field = coefficient, fmul unused).
    std::vector<DriverSeg> shared_tone;
    std::vector<DriverSeg> private_tone[3];
    std::vector<DriverSeg> shared_tone3;
    std::vector<DriverSeg> private_tone3[3];
    // Amplitude-modulation depth per epoch (gain field; fixed 0.5 Hz rate).
    std::vector<DriverSeg> shared_am;
    std::vector<DriverSeg> private_am[3];
    // Noise-floor scale, waveform crest shaping and 1 Hz burst trains: epoch
    // attributes expressed as amplitude statistics rather than frequency
    // structure (gain field; fmul unused).
    std::vector<DriverSeg> shared_noise;
    std::vector<DriverSeg> private_noise[3];
    std::vector<DriverSeg> shared_crest;
    std::vector<DriverSeg> private_crest[3];
    std::vector<DriverSeg> shared_burst;
    std::vector<DriverSeg> private_burst[3];
};

std::vector<Piece> make_stage_timeline(std::mt19937_64& rng, double duration) {
    std::uniform_real_distribution<double> dwell(90.0, 240.0);
    std::uniform_int_distribution<int> state(0, kStates - 1);
    std::vector<Piece> out;
    double t = 0;
    int prev = -1;
    while (t < duration) {
        int s = state(rng);
        if (s == prev) s = (s + 1) % kStates;
        out.push_back({t, s});
        prev = s;
        t += dwell(rng);
    }
    return out;
}

// binary=true draws each field as a coin flip between its lo/hi value
// (attribute present/absent); otherwise fields are uniform in [lo, hi].
std::vector<DriverSeg> make_driver(std::mt19937_64& rng, double duration, double len_lo = 1.5,
                                   double len_hi = 3.0, double gain_lo = 0.6,
                                   double gain_hi = 1.4, double fmul_lo = 0.85,
                                   double fmul_hi = 1.15, bool binary = false) {
    std::uniform_real_distribution<double> len(len_lo, len_hi);
    std::uniform_real_distribution<double> gain(gain_lo, gain_hi);
    std::uniform_real_distribution<double> fmul(fmul_lo, fmul_hi);
    std::vector<DriverSeg> out;
    double t = 0;
    while (t < duration) {
        if (binary)
            out.push_back({t, rng() & 1 ? gain_hi : gain_lo, rng() & 1 ? fmul_hi : fmul_lo});
        else
            out.push_back({t, gain(rng), fmul(rng)});
        t += len_lo == len_hi ? len_lo : len(rng);
    }
    return out;
}

// Time-weighted mean of a driver field over [t0, t1).
template <typename F>
double driver_mean(const std::vector<DriverSeg>& segs, double t0, double t1, F field) {
    double acc = 0;
    for (size_t i = 0; i < segs.size(); ++i) {
        const double s = segs[i].start;
        const double e = i + 1 < segs.size() ? segs[i + 1].start : t1 > s ? t1 : s;
        const double lo = std::max(s, t0), hi = std::min(e, t1);
        if (hi > lo) acc += (hi - lo) * field(segs[i]);
    }
    return acc / (t1 - t0);
}

SynthModel build_model(const SynthParams& p, uint64_t seed) {
    std::mt19937_64 rng(seed);
    SynthModel m;
    m.pf = std::uniform_real_distribution<double>(0.8, 1.25)(rng);
    m.pa = std::uniform_real_distribution<double>(0.8, 1.2)(rng);
    m.shared_stage = make_stage_timeline(rng, p.duration_s);
    for (int i = 0; i < 3; ++i) m.private_stage[i] = make_stage_timeline(rng, p.duration_s);
    m.shared_driver = make_driver(rng, p.duration_s, 1.5, 3.0, 0.75, 1.3, 0.92, 1.08);
    for (int i = 0; i < 3; ++i)
        m.private_driver[i] = make_driver(rng, p.duration_s, 1.5, 3.0, 0.75, 1.3, 0.92, 1.08);

    const int n_events =
        static_cast<int>(std::llround(p.sdb_events_per_hour * p.duration_s / 3600.0));
    std::uniform_real_distribution<double> estart(60.0, std::max(61.0, p.duration_s - 120.0));
    std::uniform_real_distribution<double> edur(12.0, 25.0);
    for (int e = 0; e < n_events; ++e) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            const double s = estart(rng), d = edur(rng);
            bool clash = false;
            for (auto& [es, ed] : m.sdb_events)
                if (s < es + ed + 30.0 && es < s + d + 30.0) clash = true;
            if (!clash) {
                m.sdb_events.emplace_back(s, d);
                break;
            }
        }
    }
    std::sort(m.sdb_events.begin(), m.sdb_events.end());

    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    for (int c = 0; c < 19; ++c) {
        m.phase0.push_back(phase(rng));
        m.detune.push_back(1.0 + 0.07 * (c % 10) * (c % 2 == 0 ? 1.0 : -0.5));
    }

    std::uniform_real_distribution<double> jit(-0.14, 0.14);
    for (int s = 0; s < kStates; ++s) m.stage_jitter[s] = std::exp(jit(rng));
    // Slow modulation is drawn per 30 s scoring epoch (the conventional
    // grain of sleep data), so each epoch carries one coherent fingerprint.
    // Each attribute is binary (present/absent, coin flip per epoch): the
    // epoch fingerprint is a discrete token rather than a continuous value,
    // which is what makes a 30 s excerpt re-identifiable across modalities.
    constexpr double kEpoch = 30.0;
    m.shared_slow = make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.6, 1.7, 0.91, 1.12, true);
    for (int i = 0; i < 3; ++i)
        m.private_slow[i] =
            make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.6, 1.7, 0.91, 1.12, true);
    // Keep the harmonic coefficients small enough that they rarely add zero
    // crossings (the latent-state decoder counts them).
    m.shared_tone = make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 0.45, 1.0, 1.0, true);
    for (int i = 0; i < 3; ++i)
        m.private_tone[i] =
            make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 0.45, 1.0, 1.0, true);
    m.shared_tone3 = make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 0.35, 1.0, 1.0, true);
    for (int i = 0; i < 3; ++i)
        m.private_tone3[i] =
            make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 0.35, 1.0, 1.0, true);
    m.shared_am = make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 0.5, 1.0, 1.0, true);
    for (int i = 0; i < 3; ++i)
        m.private_am[i] = make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 0.5, 1.0, 1.0, true);
    m.shared_noise = make_driver(rng, p.duration_s, kEpoch, kEpoch, 1.0, 2.4, 1.0, 1.0, true);
    for (int i = 0; i < 3; ++i)
        m.private_noise[i] =
            make_driver(rng, p.duration_s, kEpoch, kEpoch, 1.0, 2.4, 1.0, 1.0, true);
    m.shared_crest = make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 1.0, 1.0, 1.0, true);
    for (int i = 0; i < 3; ++i)
        m.private_crest[i] =
            make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 1.0, 1.0, 1.0, true);
    m.shared_burst = make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 1.0, 1.0, 1.0, true);
    for (int i = 0; i < 3; ++i)
        m.private_burst[i] =
            make_driver(rng, p.duration_s, kEpoch, kEpoch, 0.0, 1.0, 1.0, 1.0, true);
    return m;
}

// Walking cursor over a piecewise-constant timeline.
template <typename T>
struct Cursor {
    const std::vector<T>* v;
    size_t i = 0;
    const T& at(double t) {
        while (i + 1 < v->size() && (*v)[i + 1].start <= t) ++i;
        return (*v)[i];
    }
};

}  // namespace

RawRecording synthesize_recording(const SynthParams& p, uint64_t seed,
                                  const std::string& participant_id) {
    if (p.kappa < 0 || p.kappa > 1)
        throw std::invalid_argument("synthesize_recording: kappa must be in [0,1]");
    const SynthModel m = build_model(p, seed);
    const auto specs = default_modality_specs();
    const size_t n = static_cast<size_t>(std::llround(p.duration_s * p.native_hz));
    const double dt = 1.0 / p.native_hz;
    const double k = p.kappa;

    std::mt19937_64 noise_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);

    RawRecording rec;
    rec.participant_id = participant_id;

    int ch_index = 0;
    for (int mod = 0; mod < 3; ++mod) {
        for (int c = 0; c < specs[mod].channel_count(); ++c, ++ch_index) {
            Channel ch;
            ch.name = specs[mod].channel_names[c];
            ch.sampling_rate_hz = p.native_hz;
            ch.samples.resize(n);
            Cursor<Piece> cs{&m.shared_stage}, cp{&m.private_stage[mod]};
            Cursor<DriverSeg> ds{&m.shared_driver}, dp{&m.private_driver[mod]};
            Cursor<DriverSeg> ss{&m.shared_slow}, sp{&m.private_slow[mod]};
            Cursor<DriverSeg> ts{&m.shared_tone}, tp{&m.private_tone[mod]};
            Cursor<DriverSeg> t3s{&m.shared_tone3}, t3p{&m.private_tone3[mod]};
            Cursor<DriverSeg> as{&m.shared_am}, ap{&m.private_am[mod]};
            Cursor<DriverSeg> ns{&m.shared_noise}, np{&m.private_noise[mod]};
            Cursor<DriverSeg> crs{&m.shared_crest}, crp{&m.private_crest[mod]};
            Cursor<DriverSeg> bs{&m.shared_burst}, bp{&m.private_burst[mod]};
            size_t ev = 0;
            double phi = m.phase0[ch_index];
            double am_phi = m.phase0[ch_index];  // 0.5 Hz envelope phase
            constexpr double kAmRateHz = 0.5;
            const double psi = m.phase0[ch_index] * 0.5;
            for (size_t i = 0; i < n; ++i) {
                const double t = i * dt;
                const int s0 = cs.at(t).state;
                const int sm = cp.at(t).state;
                const DriverSeg& d0 = ds.at(t);
                const DriverSeg& dm = dp.at(t);
                while (ev < m.sdb_events.size() &&
                       t >= m.sdb_events[ev].first + m.sdb_events[ev].second)
                    ++ev;
                const bool in_event = ev < m.sdb_events.size() && t >= m.sdb_events[ev].first;
                const double dip = in_event ? 1.0 + k * (kSdbDip[mod] - 1.0) : 1.0;

                const DriverSeg& w0 = ss.at(t);
                const DriverSeg& wm = sp.at(t);
                const double f =
                    m.pf * m.detune[ch_index] *
                    ((1 - k) * kStageFreq[mod][sm] * m.stage_jitter[sm] +
                     k * kStageFreq[mod][s0] * m.stage_jitter[s0]) *
                    ((1 - k) * dm.fmul + k * d0.fmul) * ((1 - k) * wm.fmul + k * w0.fmul);
                const double a = m.pa * ((1 - k) * kStageAmp[sm] + k * kStageAmp[s0]) *
                                 ((1 - k) * dm.gain + k * d0.gain) *
                                 ((1 - k) * wm.gain + k * w0.gain) * dip;
                const double h = (1 - k) * tp.at(t).gain + k * ts.at(t).gain;
                const double h3 = (1 - k) * t3p.at(t).gain + k * t3s.at(t).gain;
                const double depth = (1 - k) * ap.at(t).gain + k * as.at(t).gain;
                const double nscale = (1 - k) * np.at(t).gain + k * ns.at(t).gain;
                const double crest = (1 - k) * crp.at(t).gain + k * crs.at(t).gain;
                const double burst = (1 - k) * bp.at(t).gain + k * bs.at(t).gain;
                phi += 2.0 * M_PI * f * dt;
                am_phi += 2.0 * M_PI * kAmRateHz * dt;
                // depth < 1, so the envelope stays positive and never adds
                // zero crossings of its own; likewise the burst train only
                // amplifies.
                const double bwin = std::max(0.0, std::sin(2.0 * M_PI * t));
                const double env = (1.0 + depth * std::sin(am_phi)) *
                                   (1.0 + 2.5 * burst * bwin * bwin * bwin * bwin);
                // Crest shaping blends the fundamental toward sign(s)*s^2
                // (peakier waveform, same zeros); the even harmonic is
                // phase-locked so it skews positive vs negative excursions.
                const double s = std::sin(phi);
                const double fund = (1.0 - crest) * s + crest * s * std::abs(s);
                ch.samples[i] = a * env *
                                    (fund + h * std::cos(2.0 * phi) +
                                     h3 * std::sin(3.0 * phi - psi)) +
                                p.noise_level * nscale * gauss(noise_rng);
            }
            rec.channels.push_back(std::move(ch));
        }
    }

    // Shared latent state as stage annotations.
    for (size_t i = 0; i < m.shared_stage.size(); ++i) {
        const double start = m.shared_stage[i].start;
        const double end =
            i + 1 < m.shared_stage.size() ? m.shared_stage[i + 1].start : p.duration_s;
        rec.annotations.push_back({start, end - start, kStageLabels[m.shared_stage[i].state]});
    }
    for (auto& [s, d] : m.sdb_events) rec.annotations.push_back({s, d, "Obstructive Apnea"});
    return rec;
}

int infer_latent_state(const SynthParams& p, uint64_t seed, const RawRecording& rec, double t0,
                       double t1) {
    const SynthModel m = build_model(p, seed);
    const Channel& ch = rec.channels.at(0);  // first BAS channel, detune 1
    const size_t i0 = static_cast<size_t>(t0 * ch.sampling_rate_hz);
    const size_t i1 = std::min(ch.samples.size(), static_cast<size_t>(t1 * ch.sampling_rate_hz));
    if (i1 <= i0 + 2) throw std::invalid_argument("infer_latent_state: empty window");
    int crossings = 0;
    for (size_t i = i0 + 1; i < i1; ++i)
        if ((ch.samples[i - 1] < 0) != (ch.samples[i] < 0)) ++crossings;
    const double freq = crossings / (2.0 * (i1 - i0) / ch.sampling_rate_hz);
    const double slow_fmul =
        driver_mean(m.shared_slow, t0, t1, [](const DriverSeg& d) { return d.fmul; });
    const double base = freq / (m.pf * m.detune[0] * slow_fmul);
    int best = 0;
    double best_d = 1e300;
    for (int s = 0; s < kStates; ++s) {
        const double d = std::abs(std::log(base / (kStageFreq[0][s] * m.stage_jitter[s])));
        if (d < best_d) {
            best_d = d;
            best = s;
        }
    }
    return best;
}

std::array<int, 8> planted_shared_bits(const SynthParams& p, uint64_t seed, double t0) {
    const SynthModel m = build_model(p, seed);
    const auto seg = [&](const std::vector<DriverSeg>& v) -> const DriverSeg& {
        size_t i = 0;
        while (i + 1 < v.size() && v[i + 1].start <= t0) ++i;
        return v[i];
    };
    const auto bit = [](double x, double lo, double hi) { return x > 0.5 * (lo + hi) ? 1 : 0; };
    return {bit(seg(m.shared_slow).gain, 0.6, 1.7),  bit(seg(m.shared_slow).fmul, 0.91, 1.12),
            bit(seg(m.shared_tone).gain, 0.0, 0.45), bit(seg(m.shared_tone3).gain, 0.0, 0.35),
            bit(seg(m.shared_am).gain, 0.0, 0.5),    bit(seg(m.shared_noise).gain, 1.0, 2.4),
            bit(seg(m.shared_crest).gain, 0.0, 1.0), bit(seg(m.shared_burst).gain, 0.0, 1.0)};
}

}  // namespace sleepmm
