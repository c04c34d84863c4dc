#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cogan/rng.hpp"
#include "cogan/tensor.hpp"

namespace cogan {

enum class Mode { Train, Inference };

/// Globally unique parameter identifier.
std::uint64_t next_param_id();

/// Handle to one named parameter tensor. Tied layers hold handles to the
/// same storage and the same id, which makes the tying constraint hold by
/// construction.
struct Param {
    std::string name;
    std::shared_ptr<Tensor> value;
    std::uint64_t id = 0;
};

/// Non-trained per-layer state (BatchNorm running statistics).
struct Buffer {
    std::string name;
    std::shared_ptr<Tensor> value;
};

/// param_id -> gradient tensor of identical shape.
class GradientMap {
public:
    void add(std::uint64_t id, Tensor g);
    const Tensor* find(std::uint64_t id) const;
    const Tensor& at(std::uint64_t id) const;
    bool contains(std::uint64_t id) const { return grads_.count(id) != 0; }
    std::size_t size() const { return grads_.size(); }

    /// Elementwise sum into this map (used to merge real/fake passes).
    void accumulate(const GradientMap& other);

    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    std::unordered_map<std::uint64_t, Tensor> grads_;
};

/// Saved forward state a layer needs for its backward pass.
struct LayerCache {
    bool valid = false;
    Mode mode = Mode::Train;
    Tensor input;
    std::vector<Tensor> aux;
    std::vector<std::size_t> idx;
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual const char* kind() const = 0;
    virtual Shape output_shape(const Shape& in) const = 0;

    /// Forward evaluation. When `cache` is non-null the layer records what
    /// backward needs. Train-mode BatchNorm also updates running statistics.
    virtual Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) = 0;

    /// Reverse-mode step: accumulates parameter gradients into `grads` and
    /// returns the gradient w.r.t. the layer input.
    virtual Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const = 0;

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    virtual std::vector<Buffer> buffers() { return {}; }

    /// Share parameter storage (and ids) with `other`. Shapes must match.
    void tie_to(const Layer& other);

    /// Deep copy: same parameter values and buffers, but independent storage
    /// and fresh param ids.
    virtual std::unique_ptr<Layer> clone() const = 0;

protected:
    Param make_param(const std::string& name, Tensor init);
    std::vector<Param> params_;
};

// ---------------------------------------------------------------------------

class DenseLayer : public Layer {
public:
    /// Affine map W x + b. Accepts any input reshaped to [N, in_features].
    DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng, double init_std = 0.02);

    const char* kind() const override { return "Dense"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }

private:
    std::size_t in_, out_;
    double init_std_;
};

class Conv2dLayer : public Layer {
public:
    /// Cross-correlation, weight [out_ch, in_ch, kH, kW], symmetric zero padding.
    Conv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t pad, Rng& rng, double init_std = 0.02);

    const char* kind() const override { return "Conv"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;

    std::size_t in_ch() const { return in_ch_; }
    std::size_t out_ch() const { return out_ch_; }

private:
    std::size_t in_ch_, out_ch_, kh_, kw_, stride_, pad_;
    double init_std_;
};

class TransposedConv2dLayer : public Layer {
public:
    /// Linear adjoint of Conv2dLayer with the same kernel/stride/padding.
    /// Weight is stored as [in_ch, out_ch, kH, kW]: the matching forward
    /// convolution maps out_ch -> in_ch.
    TransposedConv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                          std::size_t stride, std::size_t pad, Rng& rng, double init_std = 0.02);

    const char* kind() const override { return "TransposedConv"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;

private:
    std::size_t in_ch_, out_ch_, kh_, kw_, stride_, pad_;
    double init_std_;
};

class BatchNormLayer : public Layer {
public:
    /// Per-channel normalization for [N,C,H,W] or per-feature for [N,F].
    explicit BatchNormLayer(std::size_t channels, double eps = 1e-5, double momentum = 0.9);

    const char* kind() const override { return "BatchNorm"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::vector<Buffer> buffers() override;
    std::unique_ptr<Layer> clone() const override;

    double eps() const { return eps_; }

private:
    std::size_t channels_;
    double eps_, momentum_;
    std::shared_ptr<Tensor> running_mean_, running_var_;
};

class PReluLayer : public Layer {
public:
    /// y = x for x >= 0, a*x otherwise; slope a is per channel/feature.
    explicit PReluLayer(std::size_t channels, double init_slope = 0.25);

    const char* kind() const override { return "PReLU"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;

private:
    std::size_t channels_;
    double init_slope_;
};

class MaxPoolLayer : public Layer {
public:
    /// Non-overlapping window maximum; spatial extents must divide evenly.
    /// Gradient routes to the first row-major argmax on ties.
    explicit MaxPoolLayer(std::size_t window);

    const char* kind() const override { return "MaxPool"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;

private:
    std::size_t window_;
};

class ReshapeLayer : public Layer {
public:
    /// Reshapes [N, ...] to [N, tail...]; element counts must match.
    explicit ReshapeLayer(Shape tail);

    const char* kind() const override { return "Reshape"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;

private:
    Shape tail_;
};

class SigmoidLayer : public Layer {
public:
    const char* kind() const override { return "Sigmoid"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;
};

class TanhLayer : public Layer {
public:
    const char* kind() const override { return "Tanh"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;
};

class SoftmaxLayer : public Layer {
public:
    /// Softmax over the last axis, computed with max subtraction.
    const char* kind() const override { return "Softmax"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& in, Mode mode, LayerCache* cache) override;
    Tensor backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const override;
    std::unique_ptr<Layer> clone() const override;
};

}  // namespace cogan
