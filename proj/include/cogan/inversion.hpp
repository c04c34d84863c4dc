#pragma once

#include <vector>

#include "cogan/cogan.hpp"
#include "cogan/optim.hpp"

namespace cogan {

struct InversionOptions {
    int restarts = 5;
    int max_iter = 200;
    /// Keep iterates inside the noise support [-1,1]^d. An unconstrained run
    /// is available for out-of-support probes.
    bool project = true;
    /// final_loss above this multiple of dim(x) flags the input as likely
    /// outside the generator's coverage.
    double coverage_threshold_per_dim = 0.01;
    /// When > 0, remaining restarts are skipped once a restart reaches this
    /// loss (deterministic: earlier restarts always run first).
    double early_stop_loss = 0.0;
    std::uint64_t seed = 0;
};

struct InversionResult {
    Tensor z;                    // best recovered latent
    double final_loss = 0.0;     // squared Euclidean distance at z
    std::vector<double> trace;   // objective after each accepted step (best restart)
    int best_restart = 0;
    bool coverage_warning = false;
    std::vector<double> restart_losses;  // final loss of every restart
};

/// Recovers z* = argmin_z ||g(z) - x||^2 by L-BFGS from `restarts` uniform
/// starting points in [-1,1]^d; the best restart wins (lowest loss, ties to
/// the lowest restart index). Throws NumericError when every restart
/// diverges to a non-finite objective.
InversionResult invert_latent(const Network& g, const Tensor& x, std::size_t z_dim,
                              bool conv_input, const InversionOptions& opts = {});

/// Convenience overload wired to a coupled model's first generator.
InversionResult invert_latent(const CoGANModel& model, const Tensor& x,
                              const InversionOptions& opts = {});

struct TransformResult {
    Tensor x2;
    InversionResult inversion;
};

/// x2 = g2(z*) where z* inverts x1 through g1 (both in inference mode).
TransformResult cross_domain_transform(const CoGANModel& model, const Tensor& x1,
                                       const InversionOptions& opts = {});

}  // namespace cogan
