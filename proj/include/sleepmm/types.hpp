#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sleepmm {

enum class Modality : int { BAS = 0, ECG = 1, RESP = 2 };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::BAS: return "BAS";
        case Modality::ECG: return "ECG";
        case Modality::RESP: return "RESP";
    }
    throw std::invalid_argument("unknown modality");
}

Modality modality_from_name(const std::string& name);

struct ModalitySpec {
    Modality name;
    std::vector<std::string> channel_names;

    int channel_count() const { return static_cast<int>(channel_names.size()); }
};

// Default channel grouping: BAS=10, ECG=2, RESP=7 (19 channels total).
std::vector<ModalitySpec> default_modality_specs();

struct Annotation {
    double start_s = 0.0;
    double duration_s = 0.0;
    std::string label;
};

struct Channel {
    std::string name;
    double sampling_rate_hz = 0.0;
    std::vector<double> samples;
};

struct RawRecording {
    std::string participant_id;
    std::vector<Channel> channels;
    std::vector<Annotation> annotations;

    double duration_s() const;
    const Channel& channel(const std::string& name) const;
};

// Sleep stages, 5-class scoring target per 30 s clip.
enum class Stage : int { Wake = 0, Stage1 = 1, Stage2 = 2, Stage3 = 3, REM = 4 };
constexpr int kNumStages = 5;

constexpr int kLabelAbsent = -1;

enum class AgeGroup : int { Y0_18 = 0, Y18_35 = 1, Y35_50 = 2, Y50_PLUS = 3 };
constexpr int kNumAgeGroups = 4;
AgeGroup age_group_of(double age_years);

// One batch of fixed-length clips for one modality, row-major
// data layout (clip, channel, sample).
struct ClipBatch {
    ModalitySpec modality;
    int clip_len = 0;
    std::vector<float> data;  // n_clips * channel_count * clip_len
    std::vector<std::string> participant_ids;
    std::vector<int> clip_indices;
    std::vector<int> stage_label;  // kLabelAbsent when missing
    std::vector<int> sdb_label;
    std::vector<int> age_group;
    std::vector<int> sex;

    int n_clips() const { return static_cast<int>(clip_indices.size()); }
    const float* clip(int k) const {
        return data.data() + static_cast<size_t>(k) * modality.channel_count() * clip_len;
    }
};

enum class Split : int { Pretrain = 0, Train = 1, Valid = 2, Test = 3 };
const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct SplitAssignment {
    std::map<std::string, Split> by_participant;

    Split at(const std::string& pid) const;
};

struct MetricsRow {
    std::string task;
    std::string class_name;
    std::string stratum;  // "all" when unstratified
    std::string metric;   // auroc / auprc / f1
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;
    double prevalence = 0.0;
};

}  // namespace sleepmm
