#include "sleepmm/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sleepmm/edf.hpp"

namespace sleepmm {

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (x / (2.0 * k)) * (x / (2.0 * k));
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

// Best rational approximation of r with denominator <= max_den.
bool rational_approx(double r, int max_den, int* num, int* den) {
    int best_n = 1, best_d = 1;
    double best_err = std::abs(r - 1.0);
    for (int d = 1; d <= max_den; ++d) {
        const int n = static_cast<int>(std::llround(r * d));
        if (n <= 0) continue;
        const double err = std::abs(r - static_cast<double>(n) / d);
        if (err < best_err) {
            best_err = err;
            best_n = n;
            best_d = d;
        }
        if (best_err < 1e-12) break;
    }
    *num = best_n;
    *den = best_d;
    return best_err < 1e-9 * std::max(1.0, r);
}

double reflect_sample(const std::vector<double>& x, long long i) {
    const long long n = static_cast<long long>(x.size());
    if (n == 1) return x[0];
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return x[static_cast<size_t>(i)];
}

}  // namespace

// ---------------------------------------------------------------------------
// Alias map and recording loading

AliasMap AliasMap::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("alias map: cannot open " + path);
    AliasMap m;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string s = strip(line);
        if (s.empty() || s[0] == '#') continue;
        const size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("alias map: line " + std::to_string(lineno) +
                                     " is not 'alias = canonical'");
        m.aliases[lower(strip(s.substr(0, eq)))] = strip(s.substr(eq + 1));
    }
    return m;
}

std::string AliasMap::resolve(const std::string& label) const {
    auto it = aliases.find(lower(strip(label)));
    return it == aliases.end() ? strip(label) : it->second;
}

RawRecording load_recording(const std::string& path, const std::vector<ModalitySpec>& specs,
                            const LoadOptions& opt) {
    const EdfFile edf = read_edf(path);

    // Map canonical lowercase name -> signal index.
    std::map<std::string, int> resolved;
    std::vector<std::string> available;
    for (int i = 0; i < static_cast<int>(edf.signals.size()); ++i) {
        const std::string& label = edf.signals[i].label;
        if (label == "EDF Annotations") continue;
        available.push_back(label);
        resolved.emplace(lower(opt.aliases.resolve(label)), i);
        resolved.emplace(lower(strip(label)), i);
    }

    RawRecording rec;
    rec.annotations = edf.annotations;
    double max_rate = 0;
    for (const auto& sig : edf.signals) max_rate = std::max(max_rate, sig.sampling_rate_hz);
    const size_t pad_len =
        static_cast<size_t>(std::llround(edf.n_records * edf.record_duration_s * max_rate));

    for (const auto& spec : specs) {
        for (const auto& name : spec.channel_names) {
            auto it = resolved.find(lower(name));
            if (it == resolved.end()) {
                if (!opt.pad_missing) {
                    std::string msg = "MissingChannel(\"" + name + "\"); available channels:";
                    for (const auto& a : available) msg += " '" + a + "'";
                    throw std::runtime_error(msg);
                }
                std::cerr << "warning: channel '" << name << "' absent in " << path
                          << ", zero-filling\n";
                Channel ch;
                ch.name = name;
                ch.sampling_rate_hz = max_rate;
                ch.samples.assign(pad_len, 0.0);
                rec.channels.push_back(std::move(ch));
                continue;
            }
            const EdfSignal& sig = edf.signals[it->second];
            Channel ch;
            ch.name = name;
            ch.sampling_rate_hz = sig.sampling_rate_hz;
            ch.samples = sig.samples;
            rec.channels.push_back(std::move(ch));
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Resampling

std::vector<double> resample_channel(const std::vector<double>& x, double fs_in, double fs_out) {
    if (fs_in <= 0 || fs_out <= 0)
        throw std::invalid_argument("resample_channel: sampling rates must be positive");
    if (fs_in == fs_out) return x;
    if (x.empty()) return {};

    int up = 0, down = 0;
    const bool rational = rational_approx(fs_out / fs_in, 1024, &up, &down);
    const size_t n_out =
        static_cast<size_t>(std::llround(static_cast<double>(x.size()) * fs_out / fs_in));

    if (!rational) {  // linear interpolation fallback
        std::vector<double> y(n_out);
        const double step = fs_in / fs_out;
        for (size_t t = 0; t < n_out; ++t) {
            const double pos = t * step;
            const size_t i = std::min(static_cast<size_t>(pos), x.size() - 1);
            const double frac = pos - i;
            const double a = x[i];
            const double b = i + 1 < x.size() ? x[i + 1] : x[i];
            y[t] = a + frac * (b - a);
        }
        return y;
    }

    // Polyphase windowed-sinc: upsample by `up`, lowpass at the tighter
    // Nyquist, decimate by `down`.
    const int zero_crossings = 16;
    const double fc = 1.0 / std::max(up, down);  // relative to upsampled Nyquist
    const int half = zero_crossings * std::max(up, down);
    const int ntaps = 2 * half + 1;
    const double beta = 10.0;
    std::vector<double> h(ntaps);
    const double i0b = bessel_i0(beta);
    for (int i = 0; i < ntaps; ++i) {
        const double t = i - half;
        const double sinc = t == 0 ? 1.0 : std::sin(M_PI * fc * t) / (M_PI * fc * t);
        const double r = t / half;
        const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
        h[i] = fc * sinc * win * up;
    }
    // Normalize each polyphase branch to unit DC gain so constants pass exactly.
    for (int r = 0; r < up; ++r) {
        double s = 0;
        for (int i = r; i < ntaps; i += up) s += h[i];
        if (s != 0)
            for (int i = r; i < ntaps; i += up) h[i] /= s;
    }

    std::vector<double> y(n_out);
    for (size_t t = 0; t < n_out; ++t) {
        const long long u = static_cast<long long>(t) * down;  // upsampled-domain index
        double acc = 0;
        // Taps j with (u + half - j) divisible by `up` hit real input samples.
        const int j0 = static_cast<int>(((u + half) % up + up) % up);
        for (int j = j0; j < ntaps; j += up) {
            const long long i = (u + half - j) / up;
            acc += h[j] * reflect_sample(x, i);
        }
        y[t] = acc;
    }
    return y;
}

RawRecording resample(const RawRecording& rec, double target_hz) {
    RawRecording out;
    out.participant_id = rec.participant_id;
    out.annotations = rec.annotations;
    out.channels.reserve(rec.channels.size());
    for (const auto& ch : rec.channels) {
        if (ch.sampling_rate_hz <= 0)
            throw std::invalid_argument("resample: channel '" + ch.name +
                                        "' has non-positive sampling rate");
        Channel nc;
        nc.name = ch.name;
        nc.sampling_rate_hz = target_hz;
        nc.samples = resample_channel(ch.samples, ch.sampling_rate_hz, target_hz);
        out.channels.push_back(std::move(nc));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Segmentation

std::vector<ClipBatch> segment_clips(const RawRecording& rec,
                                     const std::vector<ModalitySpec>& specs, double clip_seconds,
                                     bool normalize) {
    if (rec.channels.empty()) throw std::invalid_argument("segment_clips: empty recording");
    const double rate = rec.channels[0].sampling_rate_hz;
    for (const auto& ch : rec.channels)
        if (ch.sampling_rate_hz != rate)
            throw std::invalid_argument("segment_clips: recording not resampled to a single rate");

    const int clip_len = static_cast<int>(std::llround(clip_seconds * rate));
    size_t min_samples = SIZE_MAX;
    for (const auto& ch : rec.channels) min_samples = std::min(min_samples, ch.samples.size());
    const int n_clips = clip_len > 0 ? static_cast<int>(min_samples / clip_len) : 0;

    std::vector<ClipBatch> out;
    for (const auto& spec : specs) {
        ClipBatch cb;
        cb.modality = spec;
        cb.clip_len = clip_len;
        cb.data.assign(static_cast<size_t>(n_clips) * spec.channel_count() * clip_len, 0.0f);
        for (int c = 0; c < spec.channel_count(); ++c) {
            const Channel& ch = rec.channel(spec.channel_names[c]);
            double mean = 0, sd = 1;
            if (normalize) {
                double sum = 0, sq = 0;
                for (double v : ch.samples) {
                    sum += v;
                    sq += v * v;
                }
                const double n = static_cast<double>(ch.samples.size());
                mean = n > 0 ? sum / n : 0;
                const double var = n > 0 ? std::max(0.0, sq / n - mean * mean) : 1;
                sd = var > 1e-24 ? std::sqrt(var) : 1.0;
            } else {
                mean = 0;
                sd = 1;
            }
            for (int k = 0; k < n_clips; ++k) {
                float* dst = cb.data.data() +
                             (static_cast<size_t>(k) * spec.channel_count() + c) * clip_len;
                const double* src = ch.samples.data() + static_cast<size_t>(k) * clip_len;
                for (int t = 0; t < clip_len; ++t)
                    dst[t] = static_cast<float>((src[t] - mean) / sd);
            }
        }
        cb.participant_ids.assign(n_clips, rec.participant_id);
        cb.clip_indices.resize(n_clips);
        std::iota(cb.clip_indices.begin(), cb.clip_indices.end(), 0);
        cb.stage_label.assign(n_clips, kLabelAbsent);
        cb.sdb_label.assign(n_clips, kLabelAbsent);
        cb.age_group.assign(n_clips, kLabelAbsent);
        cb.sex.assign(n_clips, kLabelAbsent);
        out.push_back(std::move(cb));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Labels

int stage_from_label(const std::string& label) {
    static const std::map<std::string, int> kMap = {
        {"wake", 0},    {"w", 0},          {"stage wake", 0},
        {"stage 1", 1}, {"n1", 1},         {"s1", 1},
        {"stage 2", 2}, {"n2", 2},         {"s2", 2},
        {"stage 3", 3}, {"n3", 3},         {"s3", 3},       {"stage 4", 3}, {"n4", 3},
        {"rem", 4},     {"stage rem", 4},  {"r", 4}};
    auto it = kMap.find(lower(strip(label)));
    return it == kMap.end() ? -1 : it->second;
}

bool is_sdb_label(const std::string& label) {
    static const std::vector<std::string> kSdb = {
        "obstructive apnea", "central apnea", "mixed apnea", "apnea",
        "hypopnea",          "obs hypopnea",  "obs sdb",     "sdb"};
    const std::string l = lower(strip(label));
    return std::find(kSdb.begin(), kSdb.end(), l) != kSdb.end();
}

void attach_labels(std::vector<ClipBatch>& clips, const std::vector<Annotation>& annotations,
                   double clip_seconds, const LabelOptions& opt) {
    for (const auto& a : annotations)
        if (stage_from_label(a.label) < 0 && !is_sdb_label(a.label))
            throw std::invalid_argument("attach_labels: unknown annotation label '" + a.label +
                                        "'");
    for (auto& cb : clips) {
        const int n = cb.n_clips();
        std::vector<double> stage_overlap(static_cast<size_t>(n) * kNumStages, 0.0);
        std::fill(cb.sdb_label.begin(), cb.sdb_label.end(), 0);
        for (const auto& a : annotations) {
            const int stage = stage_from_label(a.label);
            const double a_end = a.start_s + a.duration_s;
            const int k_first = std::max(0, static_cast<int>(a.start_s / clip_seconds));
            const int k_last = std::min(n - 1, static_cast<int>((a_end - 1e-9) / clip_seconds));
            for (int k = k_first; k <= k_last; ++k) {
                const double c0 = k * clip_seconds, c1 = c0 + clip_seconds;
                const double ov = std::min(c1, a_end) - std::max(c0, a.start_s);
                if (ov <= 0) continue;
                if (stage >= 0) {
                    stage_overlap[static_cast<size_t>(k) * kNumStages + stage] += ov;
                } else {  // SDB event
                    if (ov >= opt.sdb_event_overlap_frac * a.duration_s ||
                        ov >= opt.sdb_min_overlap_s)
                        cb.sdb_label[k] = 1;
                }
            }
        }
        for (int k = 0; k < n; ++k) {
            int best = kLabelAbsent;
            double best_ov = 0;
            for (int s = 0; s < kNumStages; ++s) {
                const double ov = stage_overlap[static_cast<size_t>(k) * kNumStages + s];
                if (ov > best_ov) {
                    best_ov = ov;
                    best = s;
                }
            }
            cb.stage_label[k] = best;
        }
    }
}

// ---------------------------------------------------------------------------
// Splits

SplitAssignment split_participants(const std::vector<std::string>& participant_ids,
                                   const std::array<double, 4>& fractions, uint64_t seed) {
    const double sum = fractions[0] + fractions[1] + fractions[2] + fractions[3];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_participants: fractions sum to " + std::to_string(sum) +
                                    ", expected 1");
    std::vector<std::string> pids = participant_ids;
    std::sort(pids.begin(), pids.end());
    pids.erase(std::unique(pids.begin(), pids.end()), pids.end());
    const int n = static_cast<int>(pids.size());
    int non_empty = 0;
    for (double f : fractions)
        if (f > 0) ++non_empty;
    if (n < non_empty)
        throw std::invalid_argument("split_participants: fewer participants than non-empty splits");

    // Largest-remainder apportionment for an exact partition.
    std::array<int, 4> counts{};
    std::array<double, 4> rem{};
    int assigned = 0;
    for (int s = 0; s < 4; ++s) {
        const double exact = fractions[s] * n;
        counts[s] = static_cast<int>(std::floor(exact + 1e-12));
        rem[s] = exact - counts[s];
        assigned += counts[s];
    }
    std::array<int, 4> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (int i = 0; assigned < n; ++i, ++assigned) counts[order[i % 4]] += 1;

    std::mt19937_64 rng(seed);
    std::shuffle(pids.begin(), pids.end(), rng);
    SplitAssignment sa;
    int idx = 0;
    for (int s = 0; s < 4; ++s)
        for (int c = 0; c < counts[s]; ++c) sa.by_participant[pids[idx++]] = static_cast<Split>(s);
    return sa;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string s = strip(line);
        if (s.empty() || s[0] == '#') continue;
        if (lineno == 1 && s.rfind("participant_id", 0) == 0) continue;  // header row
        std::stringstream ss(s);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(strip(tok));
        if (cols.size() < 3)
            throw std::runtime_error("manifest: line " + std::to_string(lineno) +
                                     " needs participant_id,path,split[,age,sex]");
        ManifestEntry e;
        e.participant_id = cols[0];
        e.path = cols[1];
        e.split = split_from_name(cols[2]);
        if (cols.size() > 3 && !cols[3].empty()) e.age = std::stod(cols[3]);
        if (cols.size() > 4) e.sex = cols[4];
        out.push_back(std::move(e));
    }
    return out;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("manifest: cannot open " + path + " for writing");
    os << "participant_id,path,split,age,sex\n";
    for (const auto& e : entries) {
        os << e.participant_id << ',' << e.path << ',' << split_name(e.split) << ',';
        if (e.age >= 0) os << e.age;
        os << ',' << e.sex << '\n';
    }
}

}  // namespace sleepmm
