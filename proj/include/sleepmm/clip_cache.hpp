#pragma once

#include <string>
#include <vector>

#include "sleepmm/tensor.hpp"
#include "sleepmm/types.hpp"

namespace sleepmm {

// Native clip cache: one raw little-endian float32 file of shape
// (n_clips, channels, clip_len) per (recording, modality), with a JSON
// sidecar carrying identity and labels. Writes go through a temp file and an
// atomic rename so concurrent writers of the same key are safe.
void write_clip_cache(const std::string& dir, const std::string& rec_id, const ClipBatch& cb);
bool clip_cache_exists(const std::string& dir, const std::string& rec_id, Modality m);

// Read-only, memory-mapped view over a set of cached recordings. Clip order
// is the recording order given at open time; all modalities are aligned.
class ClipStore {
public:
    static ClipStore open(const std::string& dir, const std::vector<std::string>& rec_ids,
                          const std::vector<Modality>& modalities);
    ClipStore() = default;
    ClipStore(const ClipStore&) = delete;
    ClipStore& operator=(const ClipStore&) = delete;
    ClipStore(ClipStore&&) noexcept;
    ClipStore& operator=(ClipStore&&) noexcept;
    ~ClipStore();

    int n_clips() const { return n_clips_; }
    int clip_len() const { return clip_len_; }
    const std::vector<Modality>& modalities() const { return modalities_; }
    int channels(Modality m) const;
    bool has_modality(Modality m) const;

    // (|idx|, channels, clip_len) batch for one modality.
    Batch3 gather(Modality m, const std::vector<int>& idx) const;
    // Index of the clip following global clip i within the same recording, or -1.
    int next_in_recording(int i) const;

    std::vector<std::string> participant_ids;
    std::vector<int> clip_indices, stage_label, sdb_label, age_group, sex;

private:
    struct Segment {
        const float* data = nullptr;
        size_t bytes = 0;
        int n = 0;
    };
    int n_clips_ = 0;
    int clip_len_ = 0;
    std::vector<Modality> modalities_;
    std::vector<int> channels_;                      // per modality
    std::vector<std::vector<Segment>> segments_;     // [modality][recording]
    std::vector<int> seg_of_clip_, offset_in_seg_;   // global clip -> (segment, local)
    void close_all();
};

}  // namespace sleepmm
