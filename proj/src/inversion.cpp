#include "cogan/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cogan/errors.hpp"
#include "cogan/gan.hpp"

namespace cogan {

InversionResult invert_latent(const Network& g, const Tensor& x, std::size_t z_dim,
                              bool conv_input, const InversionOptions& opts) {
    if (opts.restarts < 1) throw UsageError("invert_latent: restarts must be >= 1");
    // Private copy: the caches and BatchNorm behavior of the caller's network
    // must not be disturbed. Inference mode freezes running statistics.
    Network net = g.clone();
    net.set_mode(Mode::Inference);
    {
        const Shape in = conv_input ? Shape{1, z_dim, 1, 1} : Shape{1, z_dim};
        const Shape out = net.output_shape(in);
        if (out != x.shape())
            throw UsageError("invert_latent: generator yields " + shape_to_string(out) +
                             " but the query image is " + shape_to_string(x.shape()));
    }

    auto objective = [&](const Tensor& z, Tensor& grad) {
        const Tensor in = generator_input(z.reshaped({1, z_dim}), conv_input);
        const Tensor y = net.forward(in);
        double loss = 0.0;
        Tensor dy(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y[i] - x[i];
            loss += d * d;
            dy[i] = 2.0 * d;
        }
        auto [pgrads, dz] = net.backward(dy);
        (void)pgrads;
        grad = dz.reshaped({z_dim});
        return loss;
    };

    LbfgsOptions lopts;
    lopts.max_iter = opts.max_iter;
    if (opts.project) {
        lopts.project = [](Tensor& z) {
            for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::clamp(z[i], -1.0, 1.0);
        };
    }

    Rng rng(opts.seed);
    InversionResult best;
    best.final_loss = std::numeric_limits<double>::infinity();
    std::string failures;
    bool any_succeeded = false;
    for (int r = 0; r < opts.restarts; ++r) {
        Tensor z0({z_dim});
        for (std::size_t i = 0; i < z_dim; ++i) z0[i] = rng.uniform(-1.0, 1.0);
        LbfgsResult res;
        try {
            res = lbfgs_minimize(objective, z0, lopts);
        } catch (const NumericError& e) {
            failures += "restart " + std::to_string(r) + ": " + e.what() + "; ";
            best.restart_losses.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        any_succeeded = true;
        best.restart_losses.push_back(res.loss);
        if (res.loss < best.final_loss) {
            best.z = std::move(res.x);
            best.final_loss = res.loss;
            best.trace = std::move(res.trace);
            best.best_restart = r;
        }
        if (opts.early_stop_loss > 0.0 && best.final_loss <= opts.early_stop_loss) break;
    }
    if (!any_succeeded)
        throw NumericError("invert_latent: every restart diverged (" + failures + ")");
    best.coverage_warning =
        best.final_loss > opts.coverage_threshold_per_dim * static_cast<double>(x.size());
    return best;
}

InversionResult invert_latent(const CoGANModel& model, const Tensor& x,
                              const InversionOptions& opts) {
    return invert_latent(model.g1, x, model.preset.z_dim, model.preset.conv_generator, opts);
}

TransformResult cross_domain_transform(const CoGANModel& model, const Tensor& x1,
                                       const InversionOptions& opts) {
    TransformResult out;
    out.inversion = invert_latent(model, x1, opts);
    const Tensor in = generator_input(out.inversion.z.reshaped({1, model.preset.z_dim}),
                                      model.preset.conv_generator);
    out.x2 = model.g2.infer(in);
    return out;
}

}  // namespace cogan
