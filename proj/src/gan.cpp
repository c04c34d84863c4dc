#include "cogan/gan.hpp"

#include <cmath>

#include "cogan/errors.hpp"

namespace cogan {

Tensor sample_z(const NoiseSpec& spec, std::size_t n, Rng& rng) {
    if (n < 1) throw UsageError("sample_z: n must be >= 1");
    if (spec.dim < 1) throw ConfigError("sample_z: noise dim must be >= 1");
    Tensor z({n, spec.dim});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(-1.0, 1.0);
    return z;
}

namespace {
double clamp_p(double p) { return std::min(std::max(p, kLogClamp), 1.0 - kLogClamp); }
}  // namespace

double bce_real_term(const Tensor& p, Tensor* dp) {
    const double n = static_cast<double>(p.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = clamp_p(p[i]);
        loss += -std::log(pc);
        if (dp) (*dp)[i] = -1.0 / (n * pc);
    }
    return loss / n;
}

double bce_fake_term(const Tensor& p, Tensor* dp) {
    const double n = static_cast<double>(p.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = clamp_p(p[i]);
        loss += -std::log(1.0 - pc);
        if (dp) (*dp)[i] = 1.0 / (n * (1.0 - pc));
    }
    return loss / n;
}

double generator_loss(const Tensor& p, bool nonsaturating, Tensor* dp) {
    const double n = static_cast<double>(p.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = clamp_p(p[i]);
        if (nonsaturating) {
            loss += -std::log(pc);
            if (dp) (*dp)[i] = -1.0 / (n * pc);
        } else {
            loss += std::log(1.0 - pc);
            if (dp) (*dp)[i] = -1.0 / (n * (1.0 - pc));
        }
    }
    return loss / n;
}

Tensor generator_input(const Tensor& z, bool conv_input) {
    if (!conv_input) return z;
    return z.reshaped({z.dim(0), z.dim(1), 1, 1});
}

double gan_value(const Network& f, const Network& g, const Tensor& x_batch, const Tensor& z_batch,
                 const GanOptions& opts) {
    if (x_batch.dim(0) == 0 || z_batch.dim(0) == 0) throw UsageError("gan_value: empty batch");
    const Tensor p_real = f.infer(x_batch);
    const Tensor fake = g.infer(generator_input(z_batch, opts.conv_generator_input));
    const Tensor p_fake = f.infer(fake);
    return bce_real_term(p_real, nullptr) + bce_fake_term(p_fake, nullptr);
}

double gan_value(const GAN& gan, const Tensor& x_batch, const Tensor& z_batch, const GanOptions& opts) {
    return gan_value(gan.f, gan.g, x_batch, z_batch, opts);
}

GradientMap discriminator_gradients(Network& f, Network& g, const Tensor& x_batch, const Tensor& z_batch,
                                    const GanOptions& opts, double* value_out) {
    // real term
    Tensor p_real = f.forward(x_batch);
    Tensor up_real(p_real.shape());
    const double v_real = bce_real_term(p_real, &up_real);
    auto [grads, ig_real] = f.backward(up_real);
    (void)ig_real;
    // fake term
    Tensor fake = g.forward(generator_input(z_batch, opts.conv_generator_input));
    Tensor p_fake = f.forward(fake);
    Tensor up_fake(p_fake.shape());
    const double v_fake = bce_fake_term(p_fake, &up_fake);
    auto [grads_fake, ig_fake] = f.backward(up_fake);
    (void)ig_fake;
    grads.accumulate(grads_fake);
    if (value_out) *value_out = v_real + v_fake;
    return grads;
}

GradientMap generator_gradients(Network& f, Network& g, const Tensor& z_batch, const GanOptions& opts,
                                double* loss_out) {
    Tensor fake = g.forward(generator_input(z_batch, opts.conv_generator_input));
    Tensor p_fake = f.forward(fake);
    Tensor up(p_fake.shape());
    const double loss = generator_loss(p_fake, opts.nonsaturating, &up);
    auto [f_grads, fake_grad] = f.backward(up);
    (void)f_grads;  // discriminator is frozen during the generator step
    GradientMap g_grads;
    g.backward_range(fake_grad, 0, g.size(), g_grads);
    if (loss_out) *loss_out = loss;
    return g_grads;
}

void gan_train_step(GAN& gan, const Tensor& x_batch, const Tensor& z_batch, AdamState& opt_f,
                    AdamState& opt_g, const GanOptions& opts, GanStepTrace* trace) {
    if (x_batch.dim(0) == 0 || z_batch.dim(0) == 0) throw UsageError("gan_train_step: empty batch");
    if (trace) trace->f_version_before = gan.f.param_version();

    // Step 1: discriminator descends V(f^t, g^t).
    double disc_value = 0.0;
    GradientMap f_grads = discriminator_gradients(gan.f, gan.g, x_batch, z_batch, opts, &disc_value);
    opt_f.step(gan.f.parameters(), f_grads);
    gan.f.bump_param_version();

    // Step 2: generator steps against the updated discriminator f^{t+1}.
    if (trace) trace->f_version_at_gen_grad = gan.f.param_version();
    double gen_loss = 0.0;
    GradientMap g_grads = generator_gradients(gan.f, gan.g, z_batch, opts, &gen_loss);
    opt_g.step(gan.g.parameters(), g_grads);
    gan.g.bump_param_version();

    if (trace) {
        trace->disc_value = disc_value;
        trace->gen_loss = gen_loss;
    }
}

}  // namespace cogan
