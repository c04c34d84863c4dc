#include "cogan/network.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "cogan/errors.hpp"

namespace cogan {

void Network::add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    caches_.emplace_back();
}

Tensor Network::forward(const Tensor& in) { return forward_range(in, 0, layers_.size()); }

Tensor Network::forward_range(const Tensor& in, std::size_t begin, std::size_t end) {
    Tensor x = in;
    for (std::size_t i = begin; i < end; ++i) x = layers_[i]->forward(x, mode_, &caches_[i]);
    if (end == layers_.size()) cached_output_shape_ = x.shape();
    return x;
}

Tensor Network::infer(const Tensor& in) const {
    Tensor x = in;
    for (const auto& l : layers_) x = l->forward(x, Mode::Inference, nullptr);
    return x;
}

std::pair<GradientMap, Tensor> Network::backward(const Tensor& upstream) {
    if (!layers_.empty() && upstream.shape() != cached_output_shape_)
        throw UsageError("backward: upstream shape " + shape_to_string(upstream.shape()) +
                         " != forward output shape " + shape_to_string(cached_output_shape_));
    GradientMap grads;
    Tensor g = backward_range(upstream, 0, layers_.size(), grads);
    return {std::move(grads), std::move(g)};
}

Tensor Network::backward_range(const Tensor& upstream, std::size_t begin, std::size_t end, GradientMap& grads) {
    Tensor g = upstream;
    for (std::size_t i = end; i-- > begin;) {
        if (!caches_[i].valid)
            throw UsageError("backward: no forward cache for layer " + std::to_string(i) + " (" +
                             layers_[i]->kind() + ")");
        g = layers_[i]->backward(caches_[i], g, grads);
    }
    return g;
}

Shape Network::output_shape(Shape in) const {
    for (const auto& l : layers_) in = l->output_shape(in);
    return in;
}

std::vector<Param> Network::parameters() const {
    std::vector<Param> out;
    for (const auto& l : layers_)
        for (const auto& p : l->params()) out.push_back(p);
    return out;
}

std::vector<Buffer> Network::buffers() const {
    std::vector<Buffer> out;
    for (const auto& l : layers_)
        for (auto& b : const_cast<Layer&>(*l).buffers()) out.push_back(b);
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    std::unordered_set<std::uint64_t> seen;
    for (const auto& p : parameters())
        if (seen.insert(p.id).second) n += p.value->size();
    return n;
}

Network Network::clone() const {
    Network c;
    for (const auto& l : layers_) c.add(l->clone());
    // layers cloned independently lose any sharing; re-tie params whose
    // originals pointed at the same storage
    std::unordered_map<std::uint64_t, Param> seen;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& orig = layers_[i]->params();
        auto& copy = c.layers_[i]->params();
        for (std::size_t j = 0; j < orig.size(); ++j) {
            auto [it, inserted] = seen.emplace(orig[j].id, copy[j]);
            if (!inserted) copy[j] = it->second;
        }
    }
    c.mode_ = mode_;
    return c;
}

std::vector<Param> unique_params(std::initializer_list<const Network*> nets) {
    std::vector<Param> out;
    std::unordered_set<std::uint64_t> seen;
    for (const Network* net : nets)
        for (const auto& p : net->parameters())
            if (seen.insert(p.id).second) out.push_back(p);
    return out;
}

GradCheckReport grad_check(Network& net, const Tensor& input,
                           const std::function<double(const Tensor&, Tensor*)>& loss, double eps, double tol,
                           std::size_t coords_per_param, Rng* coord_rng) {
    GradCheckReport report;

    Tensor out = net.forward(input);
    Tensor upstream(out.shape());
    loss(out, &upstream);
    auto [grads, input_grad] = net.backward(upstream);
    (void)input_grad;

    std::size_t layer_idx = 0;
    for (std::size_t li = 0; li < net.size(); ++li, ++layer_idx) {
        for (auto& p : net.layer(li).params()) {
            Tensor& theta = *p.value;
            const Tensor* ad = grads.find(p.id);
            std::vector<std::size_t> coords;
            if (coords_per_param == 0 || coords_per_param >= theta.size()) {
                coords.resize(theta.size());
                for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
            } else {
                for (std::size_t i = 0; i < coords_per_param; ++i)
                    coords.push_back(coord_rng ? coord_rng->below(theta.size()) : i);
            }
            for (std::size_t ci : coords) {
                const double saved = theta[ci];
                theta[ci] = saved + eps;
                const double lp = loss(net.forward(input), nullptr);
                theta[ci] = saved - eps;
                const double lm = loss(net.forward(input), nullptr);
                theta[ci] = saved;
                const double fd = (lp - lm) / (2.0 * eps);
                const double adv = ad ? (*ad)[ci] : 0.0;
                GradCheckEntry e;
                e.param = "layer" + std::to_string(li) + "." + p.name + "[" + std::to_string(ci) + "]";
                e.ad = adv;
                e.fd = fd;
                e.rel_error = std::fabs(adv - fd) / std::max({std::fabs(adv), std::fabs(fd), 1e-8});
                e.pass = e.rel_error < tol;
                report.worst_rel_error = std::max(report.worst_rel_error, e.rel_error);
                if (!e.pass) report.all_pass = false;
                report.entries.push_back(std::move(e));
            }
        }
    }
    // restore the cached forward for the unperturbed parameters
    net.forward(input);
    return report;
}

}  // namespace cogan
