#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sleepmm/tensor.hpp"

namespace sleepmm::nn {

struct ParamRef {
    std::string name;
    std::vector<float>* value = nullptr;
    std::vector<float>* grad = nullptr;
};

// Non-trainable state (batch-norm running statistics).
struct BufferRef {
    std::string name;
    std::vector<float>* value = nullptr;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Batch3 forward(const Batch3& x, bool train) = 0;
    // Consumes the upstream gradient, accumulates parameter gradients,
    // returns the gradient w.r.t. this layer's input.
    virtual Batch3 backward(const Batch3& gy) = 0;
    virtual void collect(const std::string& prefix, std::vector<ParamRef>& params,
                         std::vector<BufferRef>& buffers) {}
};

// 1D convolution. groups must be 1 (dense) or in==out==groups (depthwise).
class Conv1d : public Layer {
public:
    Conv1d(int in, int out, int kernel, int stride, int padding, int dilation, int groups,
           bool bias, std::mt19937_64& rng);

    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;
    void collect(const std::string& prefix, std::vector<ParamRef>& params,
                 std::vector<BufferRef>& buffers) override;

    int out_len(int in_len) const;

    int in_, out_, k_, stride_, pad_, dil_, groups_;
    bool bias_;
    std::vector<float> w, gw;  // (out, in/groups * k)
    std::vector<float> b, gb;

private:
    Batch3 x_;  // cached input
    void im2col(const Batch3& x, int lo, std::vector<float>& cols) const;
};

class BatchNorm1d : public Layer {
public:
    explicit BatchNorm1d(int channels, float eps = 1e-5f, float momentum = 0.1f);

    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;
    void collect(const std::string& prefix, std::vector<ParamRef>& params,
                 std::vector<BufferRef>& buffers) override;

    int c_;
    float eps_, momentum_;
    std::vector<float> gamma, ggamma, beta, gbeta;
    std::vector<float> running_mean, running_var;

private:
    Batch3 xhat_;
    std::vector<float> inv_std_;
    bool trained_forward_ = false;
};

class ReLU : public Layer {
public:
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;

private:
    Batch3 x_;
};

class Swish : public Layer {
public:
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;

private:
    Batch3 x_;
};

class MaxPool1d : public Layer {
public:
    MaxPool1d(int kernel, int stride, int padding);
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;

private:
    int k_, stride_, pad_;
    int in_n_ = 0, in_c_ = 0, in_l_ = 0;
    std::vector<int> argmax_;
};

// Pools the full temporal extent down to length 1.
class AdaptiveAvgPool1d : public Layer {
public:
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;

private:
    int in_l_ = 0;
};

class Dropout : public Layer {
public:
    Dropout(float rate, std::mt19937_64& rng);
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;

private:
    float rate_;
    std::mt19937_64* rng_;
    std::vector<float> mask_;
    bool active_ = false;
};

// Fully connected layer on (n, c, 1) tensors.
class Linear : public Layer {
public:
    Linear(int in, int out, std::mt19937_64& rng);
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;
    void collect(const std::string& prefix, std::vector<ParamRef>& params,
                 std::vector<BufferRef>& buffers) override;

    int in_, out_;
    std::vector<float> w, gw, b, gb;

private:
    Batch3 x_;
};

class Sequential : public Layer {
public:
    void add(std::string name, std::unique_ptr<Layer> layer);
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;
    void collect(const std::string& prefix, std::vector<ParamRef>& params,
                 std::vector<BufferRef>& buffers) override;

private:
    std::vector<std::pair<std::string, std::unique_ptr<Layer>>> layers_;
};

// Inverted-residual bottleneck: 1x1 expand -> BN -> swish -> depthwise k3 ->
// BN -> swish -> 1x1 project -> BN, with identity shortcut when shapes allow.
class MBConvBlock : public Layer {
public:
    MBConvBlock(int in, int out, int stride, int expansion, float dropout_rate,
                std::mt19937_64& rng);
    Batch3 forward(const Batch3& x, bool train) override;
    Batch3 backward(const Batch3& gy) override;
    void collect(const std::string& prefix, std::vector<ParamRef>& params,
                 std::vector<BufferRef>& buffers) override;

private:
    bool residual_;
    Sequential body_;
};

}  // namespace sleepmm::nn
