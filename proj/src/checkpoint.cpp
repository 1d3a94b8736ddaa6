#include "sleepmm/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace sleepmm {

namespace {
constexpr char kMagic[4] = {'S', 'M', 'M', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("container: truncated file");
    return v;
}
}  // namespace

const std::vector<float>& ArrayContainer::at(const std::string& name) const {
    for (auto& [n, a] : arrays)
        if (n == name) return a;
    throw std::out_of_range("container: missing array " + name);
}

bool ArrayContainer::has(const std::string& name) const {
    for (auto& [n, a] : arrays)
        if (n == name) return true;
    return false;
}

void save_container(const std::string& path, const ArrayContainer& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("container: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kVersion);
    const std::string meta = c.meta.dump();
    write_pod<uint32_t>(os, static_cast<uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(c.arrays.size()));
    for (auto& [name, a] : c.arrays) {
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint64_t>(os, a.size());
        os.write(reinterpret_cast<const char*>(a.data()),
                 static_cast<std::streamsize>(a.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("container: write failed for " + path);
}

ArrayContainer load_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("container: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error("container: bad magic in " + path);
    const auto version = read_pod<uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("container: unsupported format version " + std::to_string(version));
    ArrayContainer c;
    const auto meta_len = read_pod<uint32_t>(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), meta_len);
    c.meta = nlohmann::json::parse(meta);
    const auto n = read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
        const auto name_len = read_pod<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto count = read_pod<uint64_t>(is);
        std::vector<float> a(count);
        is.read(reinterpret_cast<char*>(a.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!is) throw std::runtime_error("container: truncated array " + name);
        c.arrays.emplace_back(std::move(name), std::move(a));
    }
    return c;
}

}  // namespace sleepmm
