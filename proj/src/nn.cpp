#include "sleepmm/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sleepmm::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(int in, int out, int kernel, int stride, int padding, int dilation, int groups,
               bool bias, std::mt19937_64& rng)
    : in_(in), out_(out), k_(kernel), stride_(stride), pad_(padding), dil_(dilation),
      groups_(groups), bias_(bias) {
    if (groups != 1 && !(groups == in && groups == out)) {
        throw std::invalid_argument("Conv1d: groups must be 1 or depthwise (groups==in==out)");
    }
    const int in_per_group = in_ / groups_;
    w.assign(static_cast<size_t>(out_) * in_per_group * k_, 0.0f);
    gw.assign(w.size(), 0.0f);
    // Fan-out scaled normal init.
    const float fan_out = static_cast<float>(k_ * out_ / groups_);
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / fan_out));
    for (auto& x : w) x = dist(rng);
    if (bias_) {
        b.assign(out_, 0.0f);
        gb.assign(out_, 0.0f);
    }
}

int Conv1d::out_len(int in_len) const {
    return (in_len + 2 * pad_ - dil_ * (k_ - 1) - 1) / stride_ + 1;
}

void Conv1d::im2col(const Batch3& x, int lo, std::vector<float>& cols) const {
    const int rows = in_ * k_;
    const size_t ncols = static_cast<size_t>(x.n) * lo;
    cols.assign(static_cast<size_t>(rows) * ncols, 0.0f);
    for (int i = 0; i < x.n; ++i) {
        for (int ci = 0; ci < in_; ++ci) {
            const float* xp = x.at(i, ci);
            for (int j = 0; j < k_; ++j) {
                float* cp = cols.data() + (static_cast<size_t>(ci * k_ + j)) * ncols +
                            static_cast<size_t>(i) * lo;
                const int off = j * dil_ - pad_;
                for (int t = 0; t < lo; ++t) {
                    const int src = t * stride_ + off;
                    if (src >= 0 && src < x.l) cp[t] = xp[src];
                }
            }
        }
    }
}

Batch3 Conv1d::forward(const Batch3& x, bool train) {
    if (x.c != in_) throw std::invalid_argument("Conv1d: channel mismatch");
    // Inputs are cached for backward only in training mode; eval-mode
    // forwards (validation, embedding extraction) stay O(1) in live tensors.
    if (train)
        x_ = x;
    else
        x_ = Batch3();
    const int lo = out_len(x.l);
    Batch3 y(x.n, out_, lo);
    if (groups_ == 1 && k_ == 1 && stride_ == 1 && pad_ == 0) {
        // Pointwise conv: per-sample GEMM on the contiguous (c, l) slab, no
        // im2col copy or scatter needed.
        CMapMat W(w.data(), out_, in_);
        for (int i = 0; i < x.n; ++i) {
            CMapMat X(x.at(i, 0), in_, x.l);
            MapMat Y(y.at(i, 0), out_, lo);
            Y.noalias() = W * X;
        }
    } else if (groups_ == 1) {
        std::vector<float> cols;
        im2col(x, lo, cols);
        const size_t ncols = static_cast<size_t>(x.n) * lo;
        CMapMat W(w.data(), out_, in_ * k_);
        CMapMat C(cols.data(), in_ * k_, static_cast<Eigen::Index>(ncols));
        MapMat Y(y.v.data(), out_, static_cast<Eigen::Index>(ncols));
        // y memory is (n, out, lo); the GEMM output is (out, n*lo): scatter back.
        RowMat prod = W * C;
        for (int i = 0; i < x.n; ++i)
            for (int co = 0; co < out_; ++co) {
                const float* src = prod.data() + static_cast<size_t>(co) * ncols +
                                   static_cast<size_t>(i) * lo;
                std::copy(src, src + lo, y.at(i, co));
            }
    } else {  // depthwise
        for (int i = 0; i < x.n; ++i) {
            for (int c = 0; c < out_; ++c) {
                const float* xp = x.at(i, c);
                const float* wp = w.data() + static_cast<size_t>(c) * k_;
                float* yp = y.at(i, c);
                for (int t = 0; t < lo; ++t) {
                    float acc = 0.0f;
                    const int base = t * stride_ - pad_;
                    for (int j = 0; j < k_; ++j) {
                        const int src = base + j * dil_;
                        if (src >= 0 && src < x.l) acc += wp[j] * xp[src];
                    }
                    yp[t] = acc;
                }
            }
        }
    }
    if (bias_) {
        for (int i = 0; i < x.n; ++i)
            for (int co = 0; co < out_; ++co) {
                float* yp = y.at(i, co);
                for (int t = 0; t < lo; ++t) yp[t] += b[co];
            }
    }
    return y;
}

Batch3 Conv1d::backward(const Batch3& gy) {
    const int lo = gy.l;
    Batch3 gx(x_.n, in_, x_.l);
    if (groups_ == 1 && k_ == 1 && stride_ == 1 && pad_ == 0) {
        CMapMat W(w.data(), out_, in_);
        MapMat GW(gw.data(), out_, in_);
        for (int i = 0; i < x_.n; ++i) {
            CMapMat X(x_.at(i, 0), in_, x_.l);
            CMapMat GY(gy.at(i, 0), out_, lo);
            MapMat GX(gx.at(i, 0), in_, x_.l);
            GW.noalias() += GY * X.transpose();
            GX.noalias() = W.transpose() * GY;
        }
    } else if (groups_ == 1) {
        const size_t ncols = static_cast<size_t>(x_.n) * lo;
        // Gather gy into (out, n*lo).
        RowMat GY(out_, static_cast<Eigen::Index>(ncols));
        for (int i = 0; i < x_.n; ++i)
            for (int co = 0; co < out_; ++co)
                std::copy(gy.at(i, co), gy.at(i, co) + lo,
                          GY.data() + static_cast<size_t>(co) * ncols + static_cast<size_t>(i) * lo);
        std::vector<float> cols;
        im2col(x_, lo, cols);
        CMapMat C(cols.data(), in_ * k_, static_cast<Eigen::Index>(ncols));
        MapMat GW(gw.data(), out_, in_ * k_);
        GW.noalias() += GY * C.transpose();
        CMapMat W(w.data(), out_, in_ * k_);
        RowMat GC = W.transpose() * GY;  // (in*k, n*lo)
        // col2im scatter-add.
        for (int i = 0; i < x_.n; ++i)
            for (int ci = 0; ci < in_; ++ci) {
                float* gxp = gx.at(i, ci);
                for (int j = 0; j < k_; ++j) {
                    const float* gcp = GC.data() + (static_cast<size_t>(ci * k_ + j)) * ncols +
                                       static_cast<size_t>(i) * lo;
                    const int off = j * dil_ - pad_;
                    for (int t = 0; t < lo; ++t) {
                        const int dst = t * stride_ + off;
                        if (dst >= 0 && dst < x_.l) gxp[dst] += gcp[t];
                    }
                }
            }
    } else {
        for (int i = 0; i < x_.n; ++i) {
            for (int c = 0; c < out_; ++c) {
                const float* xp = x_.at(i, c);
                const float* gyp = gy.at(i, c);
                const float* wp = w.data() + static_cast<size_t>(c) * k_;
                float* gwp = gw.data() + static_cast<size_t>(c) * k_;
                float* gxp = gx.at(i, c);
                for (int t = 0; t < lo; ++t) {
                    const float g = gyp[t];
                    const int base = t * stride_ - pad_;
                    for (int j = 0; j < k_; ++j) {
                        const int src = base + j * dil_;
                        if (src >= 0 && src < x_.l) {
                            gwp[j] += g * xp[src];
                            gxp[src] += g * wp[j];
                        }
                    }
                }
            }
        }
    }
    if (bias_) {
        for (int i = 0; i < x_.n; ++i)
            for (int co = 0; co < out_; ++co) {
                const float* gyp = gy.at(i, co);
                float acc = 0.0f;
                for (int t = 0; t < lo; ++t) acc += gyp[t];
                gb[co] += acc;
            }
    }
    return gx;
}

void Conv1d::collect(const std::string& prefix, std::vector<ParamRef>& params,
                     std::vector<BufferRef>& buffers) {
    params.push_back({prefix + ".weight", &w, &gw});
    if (bias_) params.push_back({prefix + ".bias", &b, &gb});
}

// ---------------------------------------------------------------------------
// BatchNorm1d

BatchNorm1d::BatchNorm1d(int channels, float eps, float momentum)
    : c_(channels), eps_(eps), momentum_(momentum) {
    gamma.assign(c_, 1.0f);
    ggamma.assign(c_, 0.0f);
    beta.assign(c_, 0.0f);
    gbeta.assign(c_, 0.0f);
    running_mean.assign(c_, 0.0f);
    running_var.assign(c_, 1.0f);
}

Batch3 BatchNorm1d::forward(const Batch3& x, bool train) {
    if (x.c != c_) throw std::invalid_argument("BatchNorm1d: channel mismatch");
    Batch3 y(x.n, x.c, x.l);
    const double count = static_cast<double>(x.n) * x.l;
    trained_forward_ = train;
    if (train) {
        xhat_ = Batch3(x.n, x.c, x.l);
        inv_std_.assign(c_, 0.0f);
        for (int c = 0; c < c_; ++c) {
            double sum = 0.0, sq = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const float* xp = x.at(i, c);
                for (int t = 0; t < x.l; ++t) {
                    sum += xp[t];
                    sq += static_cast<double>(xp[t]) * xp[t];
                }
            }
            const double mean = sum / count;
            const double var = sq / count - mean * mean;
            const float istd = static_cast<float>(1.0 / std::sqrt(var + eps_));
            inv_std_[c] = istd;
            running_mean[c] = (1 - momentum_) * running_mean[c] + momentum_ * static_cast<float>(mean);
            // Unbiased running variance, matching the usual convention.
            const double unbiased = count > 1 ? var * count / (count - 1) : var;
            running_var[c] = (1 - momentum_) * running_var[c] + momentum_ * static_cast<float>(unbiased);
            for (int i = 0; i < x.n; ++i) {
                const float* xp = x.at(i, c);
                float* hp = xhat_.at(i, c);
                float* yp = y.at(i, c);
                for (int t = 0; t < x.l; ++t) {
                    const float h = (xp[t] - static_cast<float>(mean)) * istd;
                    hp[t] = h;
                    yp[t] = gamma[c] * h + beta[c];
                }
            }
        }
    } else {
        xhat_ = Batch3();
        for (int c = 0; c < c_; ++c) {
            const float istd = 1.0f / std::sqrt(running_var[c] + eps_);
            const float mu = running_mean[c];
            for (int i = 0; i < x.n; ++i) {
                const float* xp = x.at(i, c);
                float* yp = y.at(i, c);
                for (int t = 0; t < x.l; ++t) yp[t] = gamma[c] * (xp[t] - mu) * istd + beta[c];
            }
        }
    }
    return y;
}

Batch3 BatchNorm1d::backward(const Batch3& gy) {
    if (!trained_forward_) throw std::logic_error("BatchNorm1d: backward without train forward");
    const double count = static_cast<double>(gy.n) * gy.l;
    Batch3 gx(gy.n, gy.c, gy.l);
    for (int c = 0; c < c_; ++c) {
        double sum_g = 0.0, sum_gh = 0.0;
        for (int i = 0; i < gy.n; ++i) {
            const float* gp = gy.at(i, c);
            const float* hp = xhat_.at(i, c);
            for (int t = 0; t < gy.l; ++t) {
                sum_g += gp[t];
                sum_gh += static_cast<double>(gp[t]) * hp[t];
            }
        }
        ggamma[c] += static_cast<float>(sum_gh);
        gbeta[c] += static_cast<float>(sum_g);
        const float scale = gamma[c] * inv_std_[c];
        const float mg = static_cast<float>(sum_g / count);
        const float mgh = static_cast<float>(sum_gh / count);
        for (int i = 0; i < gy.n; ++i) {
            const float* gp = gy.at(i, c);
            const float* hp = xhat_.at(i, c);
            float* xp = gx.at(i, c);
            for (int t = 0; t < gy.l; ++t) xp[t] = scale * (gp[t] - mg - hp[t] * mgh);
        }
    }
    return gx;
}

void BatchNorm1d::collect(const std::string& prefix, std::vector<ParamRef>& params,
                          std::vector<BufferRef>& buffers) {
    params.push_back({prefix + ".gamma", &gamma, &ggamma});
    params.push_back({prefix + ".beta", &beta, &gbeta});
    buffers.push_back({prefix + ".running_mean", &running_mean});
    buffers.push_back({prefix + ".running_var", &running_var});
}

// ---------------------------------------------------------------------------
// Activations

Batch3 ReLU::forward(const Batch3& x, bool train) {
    if (train)
        x_ = x;
    else
        x_ = Batch3();
    Batch3 y = x;
    for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
    return y;
}

Batch3 ReLU::backward(const Batch3& gy) {
    Batch3 gx = gy;
    for (size_t i = 0; i < gx.v.size(); ++i)
        if (x_.v[i] <= 0.0f) gx.v[i] = 0.0f;
    return gx;
}

namespace {

// Vectorized sigmoid over fixed-size chunks staged through an aligned local
// buffer. Staging keeps the SIMD/scalar split a function of n alone (Eigen's
// linear traversal over raw heap pointers would peel an alignment-dependent
// head whose scalar exp rounds differently from the packet exp, making
// results depend on allocation addresses).
constexpr int kChunk = 16;

template <typename F>
void chunked_sigmoid(const float* x, size_t n, F&& consume) {
    Eigen::Array<float, kChunk, 1> t;
    size_t i = 0;
    for (; i + kChunk <= n; i += kChunk) {
        t = Eigen::Map<const Eigen::Array<float, kChunk, 1>, Eigen::Unaligned>(x + i);
        t = 1.0f / (1.0f + (-t).exp());
        for (int j = 0; j < kChunk; ++j) consume(i + j, t[j]);
    }
    for (; i < n; ++i) consume(i, 1.0f / (1.0f + std::exp(-x[i])));
}

}  // namespace

Batch3 Swish::forward(const Batch3& x, bool train) {
    if (train)
        x_ = x;
    else
        x_ = Batch3();
    Batch3 y = x;
    chunked_sigmoid(x.v.data(), x.v.size(), [&](size_t i, float s) { y.v[i] = x.v[i] * s; });
    return y;
}

Batch3 Swish::backward(const Batch3& gy) {
    Batch3 gx = gy;
    chunked_sigmoid(x_.v.data(), x_.v.size(), [&](size_t i, float s) {
        gx.v[i] *= s * (1.0f + x_.v[i] * (1.0f - s));
    });
    return gx;
}

// ---------------------------------------------------------------------------
// Pooling

MaxPool1d::MaxPool1d(int kernel, int stride, int padding) : k_(kernel), stride_(stride), pad_(padding) {}

Batch3 MaxPool1d::forward(const Batch3& x, bool train) {
    in_n_ = x.n;
    in_c_ = x.c;
    in_l_ = x.l;
    const int lo = (x.l + 2 * pad_ - k_) / stride_ + 1;
    Batch3 y(x.n, x.c, lo);
    if (train)
        argmax_.assign(y.size(), -1);
    else
        argmax_.clear();
    size_t idx = 0;
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.c; ++c) {
            const float* xp = x.at(i, c);
            float* yp = y.at(i, c);
            for (int t = 0; t < lo; ++t, ++idx) {
                const int base = t * stride_ - pad_;
                float best = -std::numeric_limits<float>::infinity();
                int besti = -1;
                for (int j = 0; j < k_; ++j) {
                    const int s = base + j;
                    if (s >= 0 && s < x.l && xp[s] > best) {
                        best = xp[s];
                        besti = s;
                    }
                }
                yp[t] = best;
                if (train) argmax_[idx] = besti;
            }
        }
    return y;
}

Batch3 MaxPool1d::backward(const Batch3& gy) {
    Batch3 gx(in_n_, in_c_, in_l_);
    size_t idx = 0;
    for (int i = 0; i < gy.n; ++i)
        for (int c = 0; c < gy.c; ++c) {
            const float* gp = gy.at(i, c);
            float* xp = gx.at(i, c);
            for (int t = 0; t < gy.l; ++t, ++idx)
                if (argmax_[idx] >= 0) xp[argmax_[idx]] += gp[t];
        }
    return gx;
}

Batch3 AdaptiveAvgPool1d::forward(const Batch3& x, bool) {
    in_l_ = x.l;
    Batch3 y(x.n, x.c, 1);
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.c; ++c) {
            const float* xp = x.at(i, c);
            double acc = 0.0;
            for (int t = 0; t < x.l; ++t) acc += xp[t];
            *y.at(i, c) = static_cast<float>(acc / x.l);
        }
    return y;
}

Batch3 AdaptiveAvgPool1d::backward(const Batch3& gy) {
    Batch3 gx(gy.n, gy.c, in_l_);
    for (int i = 0; i < gy.n; ++i)
        for (int c = 0; c < gy.c; ++c) {
            const float g = *gy.at(i, c) / in_l_;
            float* xp = gx.at(i, c);
            for (int t = 0; t < in_l_; ++t) xp[t] = g;
        }
    return gx;
}

// ---------------------------------------------------------------------------
// Dropout

Dropout::Dropout(float rate, std::mt19937_64& rng) : rate_(rate), rng_(&rng) {}

Batch3 Dropout::forward(const Batch3& x, bool train) {
    active_ = train && rate_ > 0.0f;
    if (!active_) return x;
    mask_.resize(x.size());
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    const float keep = 1.0f - rate_;
    Batch3 y = x;
    for (size_t i = 0; i < y.v.size(); ++i) {
        mask_[i] = u(*rng_) < rate_ ? 0.0f : 1.0f / keep;
        y.v[i] *= mask_[i];
    }
    return y;
}

Batch3 Dropout::backward(const Batch3& gy) {
    if (!active_) return gy;
    Batch3 gx = gy;
    for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] *= mask_[i];
    return gx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in, int out, std::mt19937_64& rng) : in_(in), out_(out) {
    w.assign(static_cast<size_t>(out) * in, 0.0f);
    gw.assign(w.size(), 0.0f);
    b.assign(out, 0.0f);
    gb.assign(out, 0.0f);
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(in)));
    for (auto& x : w) x = dist(rng);
}

Batch3 Linear::forward(const Batch3& x, bool train) {
    if (x.c != in_ || x.l != 1) throw std::invalid_argument("Linear: expected (n, in, 1) input");
    if (train)
        x_ = x;
    else
        x_ = Batch3();
    Batch3 y(x.n, out_, 1);
    CMapMat W(w.data(), out_, in_);
    CMapMat X(x.v.data(), x.n, in_);
    MapMat Y(y.v.data(), x.n, out_);
    Y.noalias() = X * W.transpose();
    for (int i = 0; i < x.n; ++i)
        for (int o = 0; o < out_; ++o) Y(i, o) += b[o];
    return y;
}

Batch3 Linear::backward(const Batch3& gy) {
    Batch3 gx(x_.n, in_, 1);
    CMapMat GY(gy.v.data(), gy.n, out_);
    CMapMat X(x_.v.data(), x_.n, in_);
    CMapMat W(w.data(), out_, in_);
    MapMat GW(gw.data(), out_, in_);
    MapMat GX(gx.v.data(), gx.n, in_);
    GW.noalias() += GY.transpose() * X;
    GX.noalias() = GY * W;
    for (int i = 0; i < gy.n; ++i)
        for (int o = 0; o < out_; ++o) gb[o] += GY(i, o);
    return gx;
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& params,
                     std::vector<BufferRef>& buffers) {
    params.push_back({prefix + ".weight", &w, &gw});
    params.push_back({prefix + ".bias", &b, &gb});
}

// ---------------------------------------------------------------------------
// Sequential

void Sequential::add(std::string name, std::unique_ptr<Layer> layer) {
    layers_.emplace_back(std::move(name), std::move(layer));
}

Batch3 Sequential::forward(const Batch3& x, bool train) {
    Batch3 h = x;
    for (auto& [name, layer] : layers_) h = layer->forward(h, train);
    return h;
}

Batch3 Sequential::backward(const Batch3& gy) {
    Batch3 g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
    return g;
}

void Sequential::collect(const std::string& prefix, std::vector<ParamRef>& params,
                         std::vector<BufferRef>& buffers) {
    for (auto& [name, layer] : layers_)
        layer->collect(prefix.empty() ? name : prefix + "." + name, params, buffers);
}

// ---------------------------------------------------------------------------
// MBConvBlock

MBConvBlock::MBConvBlock(int in, int out, int stride, int expansion, float dropout_rate,
                         std::mt19937_64& rng)
    : residual_(stride == 1 && in == out) {
    const int hidden = in * expansion;
    body_.add("expand", std::make_unique<Conv1d>(in, hidden, 1, 1, 0, 1, 1, false, rng));
    body_.add("expand_bn", std::make_unique<BatchNorm1d>(hidden));
    body_.add("expand_act", std::make_unique<Swish>());
    body_.add("dw", std::make_unique<Conv1d>(hidden, hidden, 3, stride, 1, 1, hidden, false, rng));
    body_.add("dw_bn", std::make_unique<BatchNorm1d>(hidden));
    body_.add("dw_act", std::make_unique<Swish>());
    if (dropout_rate > 0.0f) body_.add("drop", std::make_unique<Dropout>(dropout_rate, rng));
    body_.add("project", std::make_unique<Conv1d>(hidden, out, 1, 1, 0, 1, 1, false, rng));
    body_.add("project_bn", std::make_unique<BatchNorm1d>(out));
}

Batch3 MBConvBlock::forward(const Batch3& x, bool train) {
    Batch3 y = body_.forward(x, train);
    if (residual_)
        for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += x.v[i];
    return y;
}

Batch3 MBConvBlock::backward(const Batch3& gy) {
    Batch3 gx = body_.backward(gy);
    if (residual_)
        for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += gy.v[i];
    return gx;
}

void MBConvBlock::collect(const std::string& prefix, std::vector<ParamRef>& params,
                          std::vector<BufferRef>& buffers) {
    body_.collect(prefix, params, buffers);
}

}  // namespace sleepmm::nn
