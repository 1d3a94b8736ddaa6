#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sleepmm/types.hpp"

namespace sleepmm {

// Channel-alias map, loaded from `alias = canonical` lines.
struct AliasMap {
    std::map<std::string, std::string> aliases;  // lowercased alias -> canonical

    static AliasMap load(const std::string& path);
    // Returns the canonical name for a raw channel label (identity if unmapped).
    std::string resolve(const std::string& label) const;
};

struct LoadOptions {
    AliasMap aliases;
    // Zero-fill channels a recording lacks instead of failing (external sites
    // whose channel configuration differs). Emits a warning per padded channel.
    bool pad_missing = false;
};

RawRecording load_recording(const std::string& path, const std::vector<ModalitySpec>& specs,
                            const LoadOptions& opt = {});

// Polyphase rational resampling with a linear-interpolation fallback for
// irrational rate ratios.
std::vector<double> resample_channel(const std::vector<double>& x, double fs_in, double fs_out);
RawRecording resample(const RawRecording& rec, double target_hz = 256.0);

// Consecutive non-overlapping clips; the trailing remainder is dropped.
// Channels are z-scored per recording before clipping.
std::vector<ClipBatch> segment_clips(const RawRecording& rec,
                                     const std::vector<ModalitySpec>& specs,
                                     double clip_seconds = 30.0, bool normalize = true);

struct LabelOptions {
    double sdb_event_overlap_frac = 0.5;  // positive if >= this fraction of the event overlaps
    double sdb_min_overlap_s = 5.0;       // or if >= this many seconds of the clip overlap
};

// Maps annotation labels to sleep stages; throws on unrecognized labels.
int stage_from_label(const std::string& label);       // -1 if not a stage label
bool is_sdb_label(const std::string& label);

void attach_labels(std::vector<ClipBatch>& clips, const std::vector<Annotation>& annotations,
                   double clip_seconds = 30.0, const LabelOptions& opt = {});

// Deterministic participant-level partition via seeded shuffle and
// largest-remainder apportionment. fractions order: pretrain, train, valid, test.
SplitAssignment split_participants(const std::vector<std::string>& participant_ids,
                                   const std::array<double, 4>& fractions, uint64_t seed);

struct ManifestEntry {
    std::string participant_id;
    std::string path;
    Split split = Split::Pretrain;
    double age = -1.0;
    std::string sex;  // "M"/"F"/empty
};

std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace sleepmm
