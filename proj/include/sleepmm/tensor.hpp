#pragma once

#include <cstddef>
#include <vector>

namespace sleepmm {

// Dense (batch, channels, length) float tensor, row-major.
struct Batch3 {
    int n = 0, c = 0, l = 0;
    std::vector<float> v;

    Batch3() = default;
    Batch3(int n_, int c_, int l_) : n(n_), c(c_), l(l_), v(static_cast<size_t>(n_) * c_ * l_) {}

    float* at(int i, int ch) { return v.data() + (static_cast<size_t>(i) * c + ch) * l; }
    const float* at(int i, int ch) const {
        return v.data() + (static_cast<size_t>(i) * c + ch) * l;
    }
    size_t size() const { return v.size(); }
};

}  // namespace sleepmm
