#pragma once

#include <string>
#include <vector>

#include "sleepmm/types.hpp"

namespace sleepmm {

struct EdfSignal {
    std::string label;
    double physical_min = 0, physical_max = 0;
    double digital_min = 0, digital_max = 0;
    int samples_per_record = 0;
    std::vector<double> samples;  // calibrated physical values
    double sampling_rate_hz = 0;
};

struct EdfFile {
    double record_duration_s = 0;
    int n_records = 0;
    std::vector<EdfSignal> signals;
    std::vector<Annotation> annotations;  // parsed from "EDF Annotations" signals
};

// Reads EDF/EDF+ (ASCII header, 16-bit little-endian samples, linear
// physical/digital calibration). Malformed headers raise errors naming the
// byte offset of the offending field.
EdfFile read_edf(const std::string& path);

}  // namespace sleepmm
