#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace sleepmm {

// Named-array container with a JSON metadata block and a format version.
// Binary layout: magic "SMM1", u32 version, u32 meta_len, meta bytes,
// u32 n_arrays, then per array: u32 name_len, name, u64 count, f32 data.
struct ArrayContainer {
    nlohmann::json meta;
    std::vector<std::pair<std::string, std::vector<float>>> arrays;

    const std::vector<float>& at(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_container(const std::string& path, const ArrayContainer& c);
ArrayContainer load_container(const std::string& path);

}  // namespace sleepmm
