#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cogan/layers.hpp"

namespace cogan {

/// Ordered sequence of layers with cached forward state for reverse-mode
/// differentiation. Confined to one thread.
class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    void add(std::unique_ptr<Layer> layer);

    std::size_t size() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    /// Forward pass recording per-layer caches for a later backward().
    Tensor forward(const Tensor& in);
    /// Forward through layers [begin, end) only.
    Tensor forward_range(const Tensor& in, std::size_t begin, std::size_t end);

    /// Forward pass without caching and without touching BatchNorm running
    /// statistics; always runs in inference mode.
    Tensor infer(const Tensor& in) const;

    /// Reverse-mode pass over the cached forward. Returns parameter gradients
    /// and the gradient w.r.t. the network input.
    std::pair<GradientMap, Tensor> backward(const Tensor& upstream);
    Tensor backward_range(const Tensor& upstream, std::size_t begin, std::size_t end, GradientMap& grads);

    Shape output_shape(Shape in) const;

    std::vector<Param> parameters() const;
    std::vector<Buffer> buffers() const;
    std::size_t parameter_count() const;

    /// Incremented whenever an optimizer applies an update; used to assert
    /// the alternating-step ordering.
    std::uint64_t param_version() const { return param_version_; }
    void bump_param_version() { ++param_version_; }

    /// Deep copy (independent parameter storage, fresh ids).
    Network clone() const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<LayerCache> caches_;
    Shape cached_output_shape_;
    Mode mode_ = Mode::Train;
    std::uint64_t param_version_ = 0;
};

/// Deduplicated (by id) parameter handles over several networks, in network
/// and layer order.
std::vector<Param> unique_params(std::initializer_list<const Network*> nets);

struct GradCheckEntry {
    std::string param;
    double ad = 0.0;
    double fd = 0.0;
    double rel_error = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_pass = true;
    double worst_rel_error = 0.0;
};

/// Compares reverse-mode parameter gradients of `loss` against central
/// finite differences. `coords_per_param` limits probed coordinates per
/// parameter tensor (0 = every coordinate). rel = |ad-fd| / max(|ad|,|fd|,1e-8).
GradCheckReport grad_check(Network& net, const Tensor& input,
                           const std::function<double(const Tensor&, Tensor*)>& loss, double eps, double tol,
                           std::size_t coords_per_param = 0, Rng* coord_rng = nullptr);

}  // namespace cogan
