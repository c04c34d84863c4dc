#pragma once

#include "cogan/network.hpp"
#include "cogan/optim.hpp"
#include "cogan/rng.hpp"

namespace cogan {

/// Uniform noise on [-1,1]^d.
struct NoiseSpec {
    std::size_t dim = 100;
};

/// Tensor [n, d] of i.i.d. uniform entries in [-1, 1].
Tensor sample_z(const NoiseSpec& spec, std::size_t n, Rng& rng);

struct GanOptions {
    /// Minimax generator loss log(1 - f(g(z))) by default; the nonsaturating
    /// alternative -log f(g(z)) is available behind this flag.
    bool nonsaturating = false;
    /// Generators whose first layer is (transposed) convolutional take z
    /// reshaped to [N, d, 1, 1].
    bool conv_generator_input = true;
};

struct GAN {
    Network g;
    Network f;
    std::size_t z_dim = 100;
};

/// Log arguments are clamped to [1e-12, 1-1e-12]; gradients use the clamped
/// probability in the denominator (kept alive, never zeroed).
constexpr double kLogClamp = 1e-12;

/// mean(-log p) over a [N,1] probability tensor; optionally fills dL/dp.
double bce_real_term(const Tensor& p, Tensor* dp);
/// mean(-log(1-p)).
double bce_fake_term(const Tensor& p, Tensor* dp);
/// Generator objective to minimize: mean(log(1-p)), or mean(-log p) when
/// nonsaturating.
double generator_loss(const Tensor& p, bool nonsaturating, Tensor* dp);

Tensor generator_input(const Tensor& z, bool conv_input);

/// V(f,g) = mean[-log f(x)] + mean[-log(1 - f(g(z)))], evaluated in
/// inference mode without touching any state.
double gan_value(const Network& f, const Network& g, const Tensor& x_batch, const Tensor& z_batch,
                 const GanOptions& opts = {});
double gan_value(const GAN& gan, const Tensor& x_batch, const Tensor& z_batch,
                 const GanOptions& opts = {});

/// Gradients of the discriminator objective (real + fake terms) for the
/// parameters of f. Runs train-mode forwards through g and f.
GradientMap discriminator_gradients(Network& f, Network& g, const Tensor& x_batch, const Tensor& z_batch,
                                    const GanOptions& opts, double* value_out = nullptr);

/// Gradients of the generator objective against the *current* f.
GradientMap generator_gradients(Network& f, Network& g, const Tensor& z_batch, const GanOptions& opts,
                                double* loss_out = nullptr);

struct GanStepTrace {
    double disc_value = 0.0;
    double gen_loss = 0.0;
    std::uint64_t f_version_before = 0;
    std::uint64_t f_version_at_gen_grad = 0;
};

/// One alternating update: f descends V first, then g steps against the
/// updated f^{t+1}.
void gan_train_step(GAN& gan, const Tensor& x_batch, const Tensor& z_batch, AdamState& opt_f,
                    AdamState& opt_g, const GanOptions& opts = {}, GanStepTrace* trace = nullptr);

}  // namespace cogan
