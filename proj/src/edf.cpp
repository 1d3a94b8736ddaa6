#include "sleepmm/edf.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sleepmm {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n\0");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n\0");
    return s.substr(a, b - a + 1);
}

std::string field(const std::vector<char>& buf, size_t off, size_t len) {
    if (off + len > buf.size())
        throw std::runtime_error("EDF: truncated header at byte " + std::to_string(off));
    return trim(std::string(buf.data() + off, len));
}

double num_field(const std::vector<char>& buf, size_t off, size_t len, const char* what) {
    const std::string s = field(buf, off, len);
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("EDF: malformed ") + what + " field at byte " +
                                 std::to_string(off) + ": '" + s + "'");
    }
}

// Parses one Time-stamped Annotation List block.
void parse_tal(const std::string& block, std::vector<Annotation>& out) {
    size_t pos = 0;
    while (pos < block.size()) {
        size_t end = block.find('\x00', pos);
        if (end == std::string::npos) end = block.size();
        const std::string tal = block.substr(pos, end - pos);
        pos = end + 1;
        if (tal.empty()) continue;
        const size_t sep = tal.find('\x14');
        if (sep == std::string::npos) continue;
        std::string timing = tal.substr(0, sep);
        double onset = 0, dur = 0;
        const size_t dsep = timing.find('\x15');
        try {
            if (dsep != std::string::npos) {
                onset = std::stod(timing.substr(0, dsep));
                dur = std::stod(timing.substr(dsep + 1));
            } else {
                onset = std::stod(timing);
            }
        } catch (const std::exception&) {
            continue;
        }
        // Remaining \x14-separated annotation texts.
        size_t tpos = sep + 1;
        while (tpos < tal.size()) {
            size_t tend = tal.find('\x14', tpos);
            if (tend == std::string::npos) tend = tal.size();
            const std::string text = trim(tal.substr(tpos, tend - tpos));
            if (!text.empty()) out.push_back({onset, dur, text});
            tpos = tend + 1;
        }
    }
}

}  // namespace

EdfFile read_edf(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("EDF: cannot open " + path);
    std::vector<char> head(256);
    is.read(head.data(), 256);
    if (!is) throw std::runtime_error("EDF: file shorter than 256-byte header");

    const int header_bytes = static_cast<int>(num_field(head, 184, 8, "header-bytes"));
    EdfFile edf;
    edf.n_records = static_cast<int>(num_field(head, 236, 8, "record-count"));
    edf.record_duration_s = num_field(head, 244, 8, "record-duration");
    const int ns = static_cast<int>(num_field(head, 252, 4, "signal-count"));
    if (ns <= 0 || ns > 10000)
        throw std::runtime_error("EDF: malformed signal-count field at byte 252");
    if (header_bytes != 256 + ns * 256)
        throw std::runtime_error("EDF: header-bytes field at byte 184 inconsistent with " +
                                 std::to_string(ns) + " signals");

    std::vector<char> shead(static_cast<size_t>(ns) * 256);
    is.read(shead.data(), static_cast<std::streamsize>(shead.size()));
    if (!is) throw std::runtime_error("EDF: truncated signal headers");

    edf.signals.resize(ns);
    // Signal header layout: ns x label(16), ns x transducer(80), ns x dim(8),
    // ns x phys_min(8), ns x phys_max(8), ns x dig_min(8), ns x dig_max(8),
    // ns x prefilter(80), ns x samples_per_record(8), ns x reserved(32).
    size_t off = 0;
    for (int i = 0; i < ns; ++i) edf.signals[i].label = field(shead, off + i * 16, 16);
    off += static_cast<size_t>(ns) * 16;
    off += static_cast<size_t>(ns) * 80;  // transducer
    off += static_cast<size_t>(ns) * 8;   // physical dimension
    for (int i = 0; i < ns; ++i)
        edf.signals[i].physical_min = num_field(shead, off + i * 8, 8, "physical-min");
    off += static_cast<size_t>(ns) * 8;
    for (int i = 0; i < ns; ++i)
        edf.signals[i].physical_max = num_field(shead, off + i * 8, 8, "physical-max");
    off += static_cast<size_t>(ns) * 8;
    for (int i = 0; i < ns; ++i)
        edf.signals[i].digital_min = num_field(shead, off + i * 8, 8, "digital-min");
    off += static_cast<size_t>(ns) * 8;
    for (int i = 0; i < ns; ++i)
        edf.signals[i].digital_max = num_field(shead, off + i * 8, 8, "digital-max");
    off += static_cast<size_t>(ns) * 8;
    off += static_cast<size_t>(ns) * 80;  // prefilter
    for (int i = 0; i < ns; ++i)
        edf.signals[i].samples_per_record =
            static_cast<int>(num_field(shead, off + i * 8, 8, "samples-per-record"));

    for (auto& sig : edf.signals) {
        if (edf.record_duration_s > 0)
            sig.sampling_rate_hz = sig.samples_per_record / edf.record_duration_s;
        if (sig.label != "EDF Annotations")
            sig.samples.reserve(static_cast<size_t>(sig.samples_per_record) *
                                std::max(edf.n_records, 0));
    }

    size_t record_samples = 0;
    for (auto& sig : edf.signals) record_samples += sig.samples_per_record;
    std::vector<int16_t> record(record_samples);

    for (int r = 0; r < edf.n_records; ++r) {
        is.read(reinterpret_cast<char*>(record.data()),
                static_cast<std::streamsize>(record_samples * 2));
        if (!is) throw std::runtime_error("EDF: truncated data record " + std::to_string(r));
        size_t p = 0;
        for (auto& sig : edf.signals) {
            if (sig.label == "EDF Annotations") {
                std::string block(reinterpret_cast<const char*>(record.data() + p),
                                  static_cast<size_t>(sig.samples_per_record) * 2);
                parse_tal(block, edf.annotations);
            } else {
                const double dspan = sig.digital_max - sig.digital_min;
                const double scale = dspan != 0 ? (sig.physical_max - sig.physical_min) / dspan : 1.0;
                for (int s = 0; s < sig.samples_per_record; ++s) {
                    const double d = static_cast<double>(record[p + s]);
                    sig.samples.push_back((d - sig.digital_min) * scale + sig.physical_min);
                }
            }
            p += sig.samples_per_record;
        }
    }
    return edf;
}

}  // namespace sleepmm
