#include "sleepmm/clip_cache.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace sleepmm {

namespace {
std::string base_path(const std::string& dir, const std::string& rec_id, Modality m) {
    return dir + "/" + rec_id + "." + modality_name(m);
}
}  // namespace

void write_clip_cache(const std::string& dir, const std::string& rec_id, const ClipBatch& cb) {
    std::filesystem::create_directories(dir);
    const std::string base = base_path(dir, rec_id, cb.modality.name);
    const std::string tmp = base + ".tmp." + std::to_string(::getpid());

    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("clip cache: cannot write " + tmp);
        os.write(reinterpret_cast<const char*>(cb.data.data()),
                 static_cast<std::streamsize>(cb.data.size() * sizeof(float)));
        if (!os) throw std::runtime_error("clip cache: write failed " + tmp);
    }
    std::filesystem::rename(tmp, base + ".f32");

    nlohmann::json meta = {
        {"participant", cb.participant_ids.empty() ? "" : cb.participant_ids[0]},
        {"modality", modality_name(cb.modality.name)},
        {"channel_names", cb.modality.channel_names},
        {"n_clips", cb.n_clips()},
        {"channels", cb.modality.channel_count()},
        {"clip_len", cb.clip_len},
        {"clip_indices", cb.clip_indices},
        {"stage", cb.stage_label},
        {"sdb", cb.sdb_label},
        {"age_group", cb.age_group},
        {"sex", cb.sex},
    };
    const std::string jtmp = base + ".json.tmp." + std::to_string(::getpid());
    {
        std::ofstream os(jtmp);
        os << meta.dump(1);
    }
    std::filesystem::rename(jtmp, base + ".json");
}

bool clip_cache_exists(const std::string& dir, const std::string& rec_id, Modality m) {
    const std::string base = base_path(dir, rec_id, m);
    return std::filesystem::exists(base + ".f32") && std::filesystem::exists(base + ".json");
}

ClipStore ClipStore::open(const std::string& dir, const std::vector<std::string>& rec_ids,
                          const std::vector<Modality>& modalities) {
    ClipStore s;
    s.modalities_ = modalities;
    s.channels_.assign(modalities.size(), 0);
    s.segments_.resize(modalities.size());

    for (size_t r = 0; r < rec_ids.size(); ++r) {
        int rec_clips = -1;
        for (size_t mi = 0; mi < modalities.size(); ++mi) {
            const std::string base = base_path(dir, rec_ids[r], modalities[mi]);
            std::ifstream js(base + ".json");
            if (!js) throw std::runtime_error("clip cache: missing sidecar " + base + ".json");
            nlohmann::json meta;
            js >> meta;
            const int n = meta.at("n_clips");
            const int c = meta.at("channels");
            const int len = meta.at("clip_len");
            if (s.clip_len_ == 0) s.clip_len_ = len;
            if (len != s.clip_len_)
                throw std::runtime_error("clip cache: clip_len mismatch in " + base);
            if (s.channels_[mi] == 0) s.channels_[mi] = c;
            if (c != s.channels_[mi])
                throw std::runtime_error("clip cache: channel count mismatch in " + base);
            if (rec_clips < 0)
                rec_clips = n;
            else if (n != rec_clips)
                throw std::runtime_error("clip cache: modalities misaligned for " + rec_ids[r]);

            const int fd = ::open((base + ".f32").c_str(), O_RDONLY);
            if (fd < 0) throw std::runtime_error("clip cache: cannot open " + base + ".f32");
            const size_t bytes = static_cast<size_t>(n) * c * len * sizeof(float);
            struct stat st {};
            if (fstat(fd, &st) != 0 || static_cast<size_t>(st.st_size) != bytes) {
                ::close(fd);
                throw std::runtime_error("clip cache: unexpected file size for " + base + ".f32");
            }
            void* p = bytes > 0 ? ::mmap(nullptr, bytes, PROT_READ, MAP_PRIVATE, fd, 0) : nullptr;
            ::close(fd);
            if (bytes > 0 && p == MAP_FAILED)
                throw std::runtime_error("clip cache: mmap failed for " + base + ".f32");
            s.segments_[mi].push_back({static_cast<const float*>(p), bytes, n});

            if (mi == 0) {
                const auto idx = meta.at("clip_indices").get<std::vector<int>>();
                const auto stage = meta.at("stage").get<std::vector<int>>();
                const auto sdb = meta.at("sdb").get<std::vector<int>>();
                const auto age = meta.at("age_group").get<std::vector<int>>();
                const auto sex = meta.at("sex").get<std::vector<int>>();
                const std::string pid = meta.at("participant");
                for (int k = 0; k < n; ++k) {
                    s.participant_ids.push_back(pid);
                    s.clip_indices.push_back(idx[k]);
                    s.stage_label.push_back(stage[k]);
                    s.sdb_label.push_back(sdb[k]);
                    s.age_group.push_back(age[k]);
                    s.sex.push_back(sex[k]);
                    s.seg_of_clip_.push_back(static_cast<int>(r));
                    s.offset_in_seg_.push_back(k);
                }
            }
        }
        s.n_clips_ += rec_clips;
    }
    return s;
}

ClipStore::ClipStore(ClipStore&& o) noexcept { *this = std::move(o); }

ClipStore& ClipStore::operator=(ClipStore&& o) noexcept {
    if (this != &o) {
        close_all();
        participant_ids = std::move(o.participant_ids);
        clip_indices = std::move(o.clip_indices);
        stage_label = std::move(o.stage_label);
        sdb_label = std::move(o.sdb_label);
        age_group = std::move(o.age_group);
        sex = std::move(o.sex);
        n_clips_ = o.n_clips_;
        clip_len_ = o.clip_len_;
        modalities_ = std::move(o.modalities_);
        channels_ = std::move(o.channels_);
        segments_ = std::move(o.segments_);
        seg_of_clip_ = std::move(o.seg_of_clip_);
        offset_in_seg_ = std::move(o.offset_in_seg_);
        o.segments_.clear();
        o.n_clips_ = 0;
    }
    return *this;
}

ClipStore::~ClipStore() { close_all(); }

void ClipStore::close_all() {
    for (auto& per_mod : segments_)
        for (auto& seg : per_mod)
            if (seg.data && seg.bytes) ::munmap(const_cast<float*>(seg.data), seg.bytes);
    segments_.clear();
}

int ClipStore::channels(Modality m) const {
    for (size_t i = 0; i < modalities_.size(); ++i)
        if (modalities_[i] == m) return channels_[i];
    throw std::out_of_range("ClipStore: modality not present");
}

bool ClipStore::has_modality(Modality m) const {
    for (auto mm : modalities_)
        if (mm == m) return true;
    return false;
}

Batch3 ClipStore::gather(Modality m, const std::vector<int>& idx) const {
    size_t mi = 0;
    while (mi < modalities_.size() && modalities_[mi] != m) ++mi;
    if (mi == modalities_.size()) throw std::out_of_range("ClipStore: modality not present");
    const int c = channels_[mi];
    Batch3 out(static_cast<int>(idx.size()), c, clip_len_);
    const size_t clip_floats = static_cast<size_t>(c) * clip_len_;
    for (size_t i = 0; i < idx.size(); ++i) {
        const int g = idx[i];
        if (g < 0 || g >= n_clips_) throw std::out_of_range("ClipStore: clip index out of range");
        const Segment& seg = segments_[mi][seg_of_clip_[g]];
        std::memcpy(out.at(static_cast<int>(i), 0),
                    seg.data + static_cast<size_t>(offset_in_seg_[g]) * clip_floats,
                    clip_floats * sizeof(float));
    }
    return out;
}

int ClipStore::next_in_recording(int i) const {
    if (i < 0 || i + 1 >= n_clips_) return -1;
    return seg_of_clip_[i + 1] == seg_of_clip_[i] ? i + 1 : -1;
}

}  // namespace sleepmm
