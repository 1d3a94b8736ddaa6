#include "sleepmm/types.hpp"

#include <algorithm>

namespace sleepmm {

Modality modality_from_name(const std::string& name) {
    if (name == "BAS") return Modality::BAS;
    if (name == "ECG") return Modality::ECG;
    if (name == "RESP" || name == "Resp" || name == "Respiratory") return Modality::RESP;
    throw std::invalid_argument("unknown modality name: " + name);
}

std::vector<ModalitySpec> default_modality_specs() {
    std::vector<ModalitySpec> specs(3);
    specs[0].name = Modality::BAS;
    specs[0].channel_names = {"C3", "C4", "F3", "F4", "O1",
                              "O2", "E1", "E2", "EMG1", "EMG2"};
    specs[1].name = Modality::ECG;
    specs[1].channel_names = {"ECG1", "ECG2"};
    specs[2].name = Modality::RESP;
    specs[2].channel_names = {"Thorax", "Abdomen", "Pulse", "NasalFlow",
                              "OralFlow", "SpO2", "Snore"};
    return specs;
}

double RawRecording::duration_s() const {
    double d = 0.0;
    for (const auto& ch : channels)
        d = std::max(d, ch.sampling_rate_hz > 0 ? ch.samples.size() / ch.sampling_rate_hz : 0.0);
    return d;
}

const Channel& RawRecording::channel(const std::string& name) const {
    for (const auto& ch : channels)
        if (ch.name == name) return ch;
    throw std::out_of_range("recording has no channel " + name);
}

AgeGroup age_group_of(double age_years) {
    if (age_years < 18) return AgeGroup::Y0_18;
    if (age_years < 35) return AgeGroup::Y18_35;
    if (age_years < 50) return AgeGroup::Y35_50;
    return AgeGroup::Y50_PLUS;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Pretrain: return "pretrain";
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    throw std::invalid_argument("unknown split");
}

Split split_from_name(const std::string& s) {
    if (s == "pretrain") return Split::Pretrain;
    if (s == "train") return Split::Train;
    if (s == "valid" || s == "validation") return Split::Valid;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split name: " + s);
}

Split SplitAssignment::at(const std::string& pid) const {
    auto it = by_participant.find(pid);
    if (it == by_participant.end()) throw std::out_of_range("no split for participant " + pid);
    return it->second;
}

}  // namespace sleepmm
