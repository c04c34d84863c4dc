#include "cogan/cogan.hpp"

#include <cmath>
#include <unordered_set>

#include "cogan/errors.hpp"

namespace cogan {

namespace {

std::size_t scaled(std::size_t channels, double width) {
    const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(channels) * width));
    return std::max<std::size_t>(1, s);
}

}  // namespace

ArchPreset make_preset(const std::string& name, double width) {
    ArchPreset p;
    p.width = width;
    p.name = name;
    if (name == "digit-conv") {
        p.kind = PresetKind::DigitConv;
        p.default_k = 4;  // all generator layers but the last
        p.default_l = 3;  // discriminator layers 2..4
        p.conv_generator = true;
    } else if (name == "digit-rotation-fc") {
        p.kind = PresetKind::DigitRotationFc;
        p.default_k = 4;
        p.default_l = 1;  // only the final discriminator layer
        p.conv_generator = false;
    } else if (name == "conditional-digit") {
        p.kind = PresetKind::ConditionalDigit;
        p.default_k = 4;
        p.default_l = 3;
        p.conv_generator = true;
    } else {
        throw ConfigError("unknown preset '" + name +
                          "' (expected digit-conv, digit-rotation-fc, or conditional-digit)");
    }
    return p;
}

BuiltNet build_generator_net(const ArchPreset& preset, Rng& rng, std::size_t extra_in) {
    const double w = preset.width;
    BuiltNet b;
    auto group = [&](auto&&... layers) {
        const std::size_t begin = b.net.size();
        (b.net.add(std::forward<decltype(layers)>(layers)), ...);
        b.groups.emplace_back(begin, b.net.size());
    };
    const std::size_t zin = preset.z_dim + extra_in;
    if (preset.kind == PresetKind::DigitConv || preset.kind == PresetKind::ConditionalDigit) {
        const std::size_t c1 = scaled(1024, w), c2 = scaled(512, w), c3 = scaled(256, w), c4 = scaled(128, w);
        // padding chosen so the chain lands on 28x28: 1 -> 4 -> 7 -> 13 -> 25 -> 28
        group(std::make_unique<TransposedConv2dLayer>(zin, c1, 4, 4, 1, 0, rng),
              std::make_unique<BatchNormLayer>(c1), std::make_unique<PReluLayer>(c1));
        group(std::make_unique<TransposedConv2dLayer>(c1, c2, 3, 3, 2, 1, rng),
              std::make_unique<BatchNormLayer>(c2), std::make_unique<PReluLayer>(c2));
        group(std::make_unique<TransposedConv2dLayer>(c2, c3, 3, 3, 2, 1, rng),
              std::make_unique<BatchNormLayer>(c3), std::make_unique<PReluLayer>(c3));
        group(std::make_unique<TransposedConv2dLayer>(c3, c4, 3, 3, 2, 1, rng),
              std::make_unique<BatchNormLayer>(c4), std::make_unique<PReluLayer>(c4));
        group(std::make_unique<TransposedConv2dLayer>(c4, 1, 6, 6, 1, 1, rng),
              std::make_unique<SigmoidLayer>());
    } else {
        const std::size_t h = scaled(1024, w);
        group(std::make_unique<DenseLayer>(zin, h, rng), std::make_unique<BatchNormLayer>(h),
              std::make_unique<PReluLayer>(h));
        group(std::make_unique<DenseLayer>(h, h, rng), std::make_unique<BatchNormLayer>(h),
              std::make_unique<PReluLayer>(h));
        group(std::make_unique<DenseLayer>(h, h, rng), std::make_unique<BatchNormLayer>(h),
              std::make_unique<PReluLayer>(h));
        group(std::make_unique<DenseLayer>(h, h, rng), std::make_unique<BatchNormLayer>(h),
              std::make_unique<PReluLayer>(h));
        group(std::make_unique<DenseLayer>(h, 784, rng), std::make_unique<SigmoidLayer>(),
              std::make_unique<ReshapeLayer>(Shape{1, 28, 28}));
    }
    return b;
}

BuiltNet build_discriminator_net(const ArchPreset& preset, Rng& rng, std::size_t softmax_classes) {
    const double w = preset.width;
    BuiltNet b;
    auto group = [&](auto&&... layers) {
        const std::size_t begin = b.net.size();
        (b.net.add(std::forward<decltype(layers)>(layers)), ...);
        b.groups.emplace_back(begin, b.net.size());
    };
    const std::size_t c1 = scaled(20, w), c2 = scaled(50, w), h = scaled(500, w);
    group(std::make_unique<Conv2dLayer>(1, c1, 5, 5, 1, 0, rng), std::make_unique<MaxPoolLayer>(2));
    group(std::make_unique<Conv2dLayer>(c1, c2, 5, 5, 1, 0, rng), std::make_unique<MaxPoolLayer>(2));
    group(std::make_unique<DenseLayer>(c2 * 4 * 4, h, rng), std::make_unique<PReluLayer>(h));
    if (softmax_classes > 0) {
        group(std::make_unique<DenseLayer>(h, softmax_classes, rng), std::make_unique<SoftmaxLayer>());
    } else {
        group(std::make_unique<DenseLayer>(h, 1, rng), std::make_unique<SigmoidLayer>());
    }
    return b;
}

std::size_t CoGANModel::parameter_count() const {
    std::size_t n = 0;
    std::unordered_set<std::uint64_t> seen;
    for (const Network* net : {&g1, &g2, &f1, &f2})
        for (const auto& p : net->parameters())
            if (seen.insert(p.id).second) n += p.value->size();
    return n;
}

CoGANModel build_cogan(const ArchPreset& preset, int k, int l, Rng& rng, AdamConfig adam) {
    const int m = preset.gen_layers(), n = preset.disc_layers();
    if (k < 0 || k > m - 1)
        throw ConfigError("build_cogan: k=" + std::to_string(k) + " outside [0, " + std::to_string(m - 1) + "]");
    if (l < 0 || l > n)
        throw ConfigError("build_cogan: l=" + std::to_string(l) + " outside [0, " + std::to_string(n) + "]");

    CoGANModel model;
    model.preset = preset;
    model.k = k;
    model.l = l;
    model.opt_f = AdamState(adam);
    model.opt_g = AdamState(adam);

    BuiltNet g1 = build_generator_net(preset, rng);
    BuiltNet g2 = build_generator_net(preset, rng);
    BuiltNet f1 = build_discriminator_net(preset, rng);
    BuiltNet f2 = build_discriminator_net(preset, rng);
    model.gen_groups = g1.groups;
    model.disc_groups = f1.groups;

    // Tie the first k generator groups and the last l discriminator groups.
    for (int gi = 0; gi < k; ++gi) {
        auto [begin, end] = g1.groups[gi];
        for (std::size_t j = begin; j < end; ++j) {
            g2.net.layer(j).tie_to(g1.net.layer(j));
            for (std::size_t pi = 0; pi < g1.net.layer(j).params().size(); ++pi) {
                model.ties.views.push_back({"g.L" + std::to_string(gi + 1) + "." +
                                                g1.net.layer(j).kind() + "." +
                                                g1.net.layer(j).params()[pi].name,
                                            true, j, j, pi});
            }
        }
    }
    for (int li = n - l; li < n; ++li) {
        auto [begin, end] = f1.groups[li];
        for (std::size_t j = begin; j < end; ++j) {
            f2.net.layer(j).tie_to(f1.net.layer(j));
            for (std::size_t pi = 0; pi < f1.net.layer(j).params().size(); ++pi) {
                model.ties.views.push_back({"f.L" + std::to_string(li + 1) + "." +
                                                f1.net.layer(j).kind() + "." +
                                                f1.net.layer(j).params()[pi].name,
                                            false, j, j, pi});
            }
        }
    }

    model.g1 = std::move(g1.net);
    model.g2 = std::move(g2.net);
    model.f1 = std::move(f1.net);
    model.f2 = std::move(f2.net);

    // Dimensional consistency of the preset chain, asserted at build time.
    const Shape zshape = preset.conv_generator ? Shape{1, preset.z_dim, 1, 1} : Shape{1, preset.z_dim};
    const Shape img = model.g1.output_shape(zshape);
    if (img != Shape{1, 1, 28, 28})
        throw ConfigError("preset " + preset.name + ": generator chain yields " + shape_to_string(img) +
                          ", expected [1,1,28,28]");
    model.f1.output_shape({1, 1, 28, 28});
    return model;
}

double cogan_value(const CoGANModel& model, const Tensor& x1_batch, const Tensor& x2_batch,
                   const Tensor& z_batch, const GanOptions& opts) {
    GanOptions o = opts;
    o.conv_generator_input = model.preset.conv_generator;
    return gan_value(model.f1, model.g1, x1_batch, z_batch, o) +
           gan_value(model.f2, model.g2, x2_batch, z_batch, o);
}

GradientMap merge_tied_gradients(const GradientMap& a, const GradientMap& b) {
    GradientMap merged;
    for (const auto& [id, ga] : a) {
        const Tensor* gb = b.find(id);
        if (!gb) {
            merged.add(id, ga);
            continue;
        }
        Tensor avg(ga.shape());
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = 0.5 * (ga[i] + (*gb)[i]);
        merged.add(id, std::move(avg));
    }
    for (const auto& [id, gb] : b)
        if (!a.find(id)) merged.add(id, gb);
    return merged;
}

void cogan_train_step(CoGANModel& model, const Tensor& x1_batch, const Tensor& x2_batch,
                      const Tensor& z_batch, const GanOptions& opts, CoganStepTrace* trace) {
    if (x1_batch.dim(0) != x2_batch.dim(0) || x1_batch.dim(0) != z_batch.dim(0))
        throw UsageError("cogan_train_step: batch sizes differ (" + std::to_string(x1_batch.dim(0)) + ", " +
                         std::to_string(x2_batch.dim(0)) + ", " + std::to_string(z_batch.dim(0)) + ")");
    GanOptions o = opts;
    o.conv_generator_input = model.preset.conv_generator;

    // Discriminator phase: per-network gradients, tied pairs averaged.
    double v1 = 0.0, v2 = 0.0;
    GradientMap f1_grads = discriminator_gradients(model.f1, model.g1, x1_batch, z_batch, o, &v1);
    GradientMap f2_grads = discriminator_gradients(model.f2, model.g2, x2_batch, z_batch, o, &v2);
    GradientMap f_merged = merge_tied_gradients(f1_grads, f2_grads);
    model.opt_f.step(unique_params({&model.f1, &model.f2}), f_merged);
    model.f1.bump_param_version();
    model.f2.bump_param_version();

    // Generator phase against the updated discriminators.
    double l1 = 0.0, l2 = 0.0;
    GradientMap g1_grads = generator_gradients(model.f1, model.g1, z_batch, o, &l1);
    GradientMap g2_grads = generator_gradients(model.f2, model.g2, z_batch, o, &l2);
    GradientMap g_merged = merge_tied_gradients(g1_grads, g2_grads);
    model.opt_g.step(unique_params({&model.g1, &model.g2}), g_merged);
    model.g1.bump_param_version();
    model.g2.bump_param_version();

    ++model.iteration;
    if (trace) {
        trace->v1 = v1;
        trace->v2 = v2;
        trace->g1_loss = l1;
        trace->g2_loss = l2;
        trace->f1_grads = std::move(f1_grads);
        trace->f2_grads = std::move(f2_grads);
        trace->f_merged = std::move(f_merged);
        trace->g1_grads = std::move(g1_grads);
        trace->g2_grads = std::move(g2_grads);
        trace->g_merged = std::move(g_merged);
    }
}

std::pair<Tensor, Tensor> generate_pair(const CoGANModel& model, const Tensor& z, const GanOptions&) {
    Tensor zb = z.rank() == 1 ? z.reshaped({1, z.dim(0)}) : z;
    if (zb.dim(1) != model.preset.z_dim)
        throw UsageError("generate_pair: z length " + std::to_string(zb.dim(1)) + " != z_dim " +
                         std::to_string(model.preset.z_dim));
    const Tensor in = generator_input(zb, model.preset.conv_generator);
    return {model.g1.infer(in), model.g2.infer(in)};
}

TieReport verify_ties(const CoGANModel& model) {
    TieReport report;
    for (const auto& v : model.ties.views) {
        const Network& net_a = v.in_generator ? model.g1 : model.f1;
        const Network& net_b = v.in_generator ? model.g2 : model.f2;
        const auto& pa = net_a.layer(v.layer_a).params()[v.param_idx];
        const auto& pb = net_b.layer(v.layer_b).params()[v.param_idx];
        if (pa.value == pb.value) continue;  // shared storage, equal by construction
        const double d = max_abs_diff(*pa.value, *pb.value);
        if (d > 0.0) report.discrepancies.push_back({v.name, d});
    }
    return report;
}

}  // namespace cogan
