#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "cogan/network.hpp"
#include "cogan/tensor.hpp"

namespace cogan {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over an explicit parameter list. Tied parameters
/// occupy a single slot because moments are keyed by param id.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    std::uint64_t t() const { return t_; }

    /// One update: t increments once per call; parameters without a gradient
    /// entry are left untouched (their moments do not advance either).
    void step(const std::vector<Param>& params, const GradientMap& grads);

    struct Slot {
        Tensor m, v;
    };
    const Slot* slot(std::uint64_t id) const;

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::unordered_map<std::uint64_t, Slot> slots_;
};

struct LbfgsOptions {
    int memory = 10;
    int max_iter = 200;
    double grad_tol = 1e-8;
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    int max_line_search = 50;
    /// Optional projection applied to every trial point (e.g. box clamp).
    std::function<void(Tensor&)> project;
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed };

struct LbfgsResult {
    Tensor x;
    double loss = 0.0;
    std::vector<double> trace;  // objective at x0 and after each accepted step
    LbfgsStatus status = LbfgsStatus::MaxIterations;
    int iterations = 0;
};

/// Two-loop-recursion L-BFGS with backtracking Armijo line search.
/// `objective` returns the value and fills the gradient.
LbfgsResult lbfgs_minimize(const std::function<double(const Tensor&, Tensor&)>& objective, const Tensor& x0,
                           const LbfgsOptions& opts = {});

}  // namespace cogan
