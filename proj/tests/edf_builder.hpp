#pragma once

// Minimal EDF+ writer used by tests to fabricate input files.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sleepmm/types.hpp"

namespace testedf {

struct TestSignal {
    std::string label;
    double hz = 0;
    std::vector<double> samples;
    double phys_min = -32.768, phys_max = 32.767;
};

inline std::string pad(const std::string& s, size_t len) {
    std::string out = s.substr(0, len);
    out.resize(len, ' ');
    return out;
}

inline std::string numf(double v, size_t len) {
    char buf[64];
    if (v == std::floor(v) && std::abs(v) < 1e15)
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    else
        std::snprintf(buf, sizeof(buf), "%g", v);
    return pad(buf, len);
}

// All signals must span n_records seconds; record duration is 1 s.
inline void write_edf(const std::string& path, const std::vector<TestSignal>& signals,
                      const std::vector<sleepmm::Annotation>& anns, int n_records) {
    // Annotation TALs all go into record 0; later records carry timestamps only.
    std::string tal0 = "+0\x14\x14";
    tal0 += '\0';
    for (const auto& a : anns) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "+%g\x15%g", a.start_s, a.duration_s);
        tal0 += buf;
        tal0 += '\x14';
        tal0 += a.label;
        tal0 += '\x14';
        tal0 += '\0';
    }
    const int ann_samples = static_cast<int>((tal0.size() + 1) / 2) + 8;

    const int ns = static_cast<int>(signals.size()) + 1;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);

    os << pad("0", 8) << pad("X X X X", 80) << pad("Startdate 01.01.24", 80)
       << pad("01.01.24", 8) << pad("00.00.00", 8) << numf(256 + ns * 256, 8)
       << pad("EDF+C", 44) << numf(n_records, 8) << numf(1, 8) << numf(ns, 4);

    auto field_all = [&](auto f, size_t len) {
        for (const auto& s : signals) os << pad(f(s), len);
    };
    field_all([](const TestSignal& s) { return s.label; }, 16);
    os << pad("EDF Annotations", 16);
    for (int i = 0; i < ns; ++i) os << pad("", 80);  // transducer
    for (int i = 0; i < ns; ++i) os << pad("", 8);   // physical dimension
    field_all([](const TestSignal& s) { return std::to_string(s.phys_min); }, 8);
    os << numf(-1, 8);
    field_all([](const TestSignal& s) { return std::to_string(s.phys_max); }, 8);
    os << numf(1, 8);
    for (int i = 0; i < ns; ++i) os << numf(-32768, 8);
    for (int i = 0; i < ns; ++i) os << numf(32767, 8);
    for (int i = 0; i < ns; ++i) os << pad("", 80);  // prefilter
    field_all([](const TestSignal& s) { return std::to_string(static_cast<int>(s.hz)); }, 8);
    os << numf(ann_samples, 8);
    for (int i = 0; i < ns; ++i) os << pad("", 32);

    for (int r = 0; r < n_records; ++r) {
        for (const auto& s : signals) {
            const int spr = static_cast<int>(s.hz);
            for (int t = 0; t < spr; ++t) {
                const size_t i = static_cast<size_t>(r) * spr + t;
                const double v = i < s.samples.size() ? s.samples[i] : 0.0;
                const double scale = (s.phys_max - s.phys_min) / 65535.0;
                long d = std::lround((v - s.phys_min) / scale) - 32768;
                d = std::max(-32768L, std::min(32767L, d));
                const int16_t d16 = static_cast<int16_t>(d);
                os.write(reinterpret_cast<const char*>(&d16), 2);
            }
        }
        std::string block;
        if (r == 0) {
            block = tal0;
        } else {
            block = "+" + std::to_string(r) + "\x14\x14";
            block += '\0';
        }
        block.resize(static_cast<size_t>(ann_samples) * 2, '\0');
        os.write(block.data(), static_cast<std::streamsize>(block.size()));
    }
}

}  // namespace testedf
