#include "cogan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cogan/errors.hpp"

namespace cogan {

Tensor binarize(const Tensor& img) {
    Tensor out(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] >= 0.5 ? 1.0 : 0.0;
    return out;
}

double agreement_ratio(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw UsageError("agreement_ratio: shapes differ, " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    std::size_t match = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] == b[i]) ++match;
    return static_cast<double>(match) / static_cast<double>(a.size());
}

AgreementRecord pixel_agreement(const CoGANModel& model, TruthTransform truth,
                                std::size_t n_pairs, Rng& rng) {
    const NoiseSpec noise{model.preset.z_dim};
    const std::size_t chunk = 64;
    double sum = 0.0;
    std::size_t done = 0;
    while (done < n_pairs) {
        const std::size_t n = std::min(chunk, n_pairs - done);
        const Tensor z = sample_z(noise, n, rng);
        auto [img1, img2] = generate_pair(model, z);
        const Tensor t = binarize(apply_truth_transform(truth, img1));
        const Tensor b = binarize(img2);
        const std::size_t plane = img1.dim(1) * img1.dim(2) * img1.dim(3);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t match = 0;
            for (std::size_t j = 0; j < plane; ++j)
                if (t[i * plane + j] == b[i * plane + j]) ++match;
            sum += static_cast<double>(match) / static_cast<double>(plane);
        }
        done += n;
    }
    AgreementRecord rec;
    rec.task = truth_transform_name(truth);
    rec.k = model.k;
    rec.l = model.l;
    rec.seed = model.seed;
    rec.iteration = model.iteration;
    rec.n_pairs = n_pairs;
    rec.ratio = sum / static_cast<double>(n_pairs);
    return rec;
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t count, std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.below(count);
    return idx;
}

}  // namespace

void train_cogan(CoGANModel& model, const DomainPair& data, const TrainOptions& opts, Rng& rng) {
    const NoiseSpec noise{model.preset.z_dim};
    for (std::size_t it = 1; it <= opts.iterations; ++it) {
        const Tensor x1 = data.domain1.batch(sample_indices(data.domain1.count(), opts.batch_size, rng));
        const Tensor x2 = data.domain2.batch(sample_indices(data.domain2.count(), opts.batch_size, rng));
        const Tensor z = sample_z(noise, opts.batch_size, rng);
        CoganStepTrace trace;
        cogan_train_step(model, x1, x2, z, opts.gan, &trace);
        if (opts.milestone_every > 0 && opts.on_milestone &&
            (it % opts.milestone_every == 0 || it == opts.iterations)) {
            opts.on_milestone(model, it, trace.v1, trace.v2);
        }
    }
}

std::vector<AgreementRecord> run_sweep(const ArchPreset& preset, const DomainPair& data,
                                       const SweepConfig& cfg) {
    if (cfg.k_values.empty() || cfg.l_values.empty())
        throw ConfigError("run_sweep: empty k or l grid");
    std::vector<AgreementRecord> out;
    const Rng root(cfg.base_seed);
    for (int k : cfg.k_values) {
        for (int l : cfg.l_values) {
            for (int trial = 0; trial < cfg.trials; ++trial) {
                const std::uint64_t tag = (std::uint64_t(std::uint32_t(k)) << 40) ^
                                          (std::uint64_t(std::uint32_t(l)) << 20) ^
                                          std::uint64_t(std::uint32_t(trial));
                Rng trial_rng = root.split(tag);
                Rng init_rng = trial_rng.split(1);
                Rng data_rng = trial_rng.split(2);

                CoGANModel model = build_cogan(preset, k, l, init_rng);
                model.seed = cfg.base_seed ^ tag;

                AgreementRecord best;
                best.ratio = -1.0;
                TrainOptions topts;
                topts.iterations = cfg.train_budget;
                topts.batch_size = cfg.batch_size;
                topts.milestone_every = cfg.eval_every;
                topts.on_milestone = [&](CoGANModel& m, std::size_t, double, double) {
                    // Fixed evaluation stream: checkpoints are compared on the
                    // same noise sample.
                    Rng eval_rng = trial_rng.split(3);
                    AgreementRecord rec =
                        pixel_agreement(m, data.truth_transform, cfg.n_pairs, eval_rng);
                    rec.task = cfg.task;
                    if (rec.ratio > best.ratio) best = rec;
                };
                train_cogan(model, data, topts, data_rng);
                out.push_back(best);
            }
        }
    }
    return out;
}

ConditionalGAN build_conditional_gan(const ArchPreset& preset, Rng& rng, AdamConfig adam) {
    ConditionalGAN m;
    m.preset = preset;
    m.g = std::move(build_generator_net(preset, rng, /*extra_in=*/1).net);
    m.f = std::move(build_discriminator_net(preset, rng, /*softmax_classes=*/3).net);
    m.opt_f = AdamState(adam);
    m.opt_g = AdamState(adam);
    return m;
}

namespace {

/// [N, d] noise rows each extended with the per-row condition value, then
/// shaped for the generator's first layer.
Tensor conditional_input(const Tensor& z, const std::vector<double>& c, bool conv) {
    const std::size_t n = z.dim(0), d = z.dim(1);
    Tensor zc({n, d + 1});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) zc.at2(i, j) = z.at2(i, j);
        zc.at2(i, d) = c[i];
    }
    return generator_input(zc, conv);
}

}  // namespace

Tensor conditional_generate(const ConditionalGAN& model, const Tensor& z, double c) {
    const Tensor zb = z.rank() == 1 ? z.reshaped({1, z.dim(0)}) : z;
    const std::vector<double> cs(zb.dim(0), c);
    return model.g.infer(conditional_input(zb, cs, model.preset.conv_generator));
}

double softmax_cross_entropy(const Tensor& p, const std::vector<int>& targets, Tensor* dp) {
    const std::size_t n = p.dim(0), classes = p.dim(1);
    if (targets.size() != n)
        throw UsageError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
    if (dp) *dp = Tensor(p.shape());
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<std::size_t>(targets[i]);
        if (t >= classes) throw UsageError("softmax_cross_entropy: target out of range");
        const double q = std::max(p.at2(i, t), kLogClamp);
        loss += -std::log(q);
        if (dp) dp->at2(i, t) = -inv / q;
    }
    return loss * inv;
}

namespace {

/// Cross-entropy gradients of f on one batch toward one fixed class,
/// accumulated into `grads`.
double disc_ce_term(Network& f, const Tensor& x, int target, GradientMap& grads) {
    const Tensor p = f.forward(x);
    Tensor dp;
    const double loss = softmax_cross_entropy(p, std::vector<int>(x.dim(0), target), &dp);
    auto [g, dx] = f.backward(dp);
    (void)dx;
    grads.accumulate(g);
    return loss;
}

std::vector<double> alternating_conditions(std::size_t n) {
    // First half c=0, second half c=1 (extra element goes to c=0).
    std::vector<double> c(n, 0.0);
    for (std::size_t i = (n + 1) / 2; i < n; ++i) c[i] = 1.0;
    return c;
}

std::vector<int> condition_targets(const std::vector<double>& c) {
    std::vector<int> t(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) t[i] = c[i] == 0.0 ? 1 : 2;
    return t;
}

}  // namespace

void conditional_train_step(ConditionalGAN& model, const Tensor& x1_batch, const Tensor& x2_batch,
                            const Tensor& z_batch, ConditionalStepTrace* trace) {
    if (x1_batch.dim(0) != x2_batch.dim(0) || x1_batch.dim(0) != z_batch.dim(0))
        throw UsageError("conditional_train_step: batch sizes differ");
    const std::vector<double> c = alternating_conditions(z_batch.dim(0));
    const Tensor gin = conditional_input(z_batch, c, model.preset.conv_generator);

    // Discriminator phase: fake -> class 0, domain-1 real -> 1, domain-2 real -> 2.
    GradientMap f_grads;
    const Tensor fake = model.g.forward(gin);
    double disc_loss = disc_ce_term(model.f, fake, 0, f_grads);
    disc_loss += disc_ce_term(model.f, x1_batch, 1, f_grads);
    disc_loss += disc_ce_term(model.f, x2_batch, 2, f_grads);
    model.opt_f.step(model.f.parameters(), f_grads);
    model.f.bump_param_version();

    // Generator phase against the updated f: push f(g(z,c)) toward class c+1.
    const Tensor fake2 = model.g.forward(gin);
    const Tensor p = model.f.forward(fake2);
    Tensor dp;
    const double gen_loss = softmax_cross_entropy(p, condition_targets(c), &dp);
    auto [f_unused, dfake] = model.f.backward(dp);
    (void)f_unused;
    GradientMap g_grads;
    model.g.backward_range(dfake, 0, model.g.size(), g_grads);
    model.opt_g.step(model.g.parameters(), g_grads);
    model.g.bump_param_version();

    ++model.iteration;
    if (trace) {
        trace->disc_loss = disc_loss;
        trace->gen_loss = gen_loss;
    }
}

AgreementRecord conditional_agreement(const ConditionalGAN& model, TruthTransform truth,
                                      std::size_t n_pairs, Rng& rng) {
    const NoiseSpec noise{model.preset.z_dim};
    const std::size_t chunk = 64;
    double sum = 0.0;
    std::size_t done = 0;
    while (done < n_pairs) {
        const std::size_t n = std::min(chunk, n_pairs - done);
        const Tensor z = sample_z(noise, n, rng);
        const Tensor img1 = conditional_generate(model, z, 0.0);
        const Tensor img2 = conditional_generate(model, z, 1.0);
        const Tensor t = binarize(apply_truth_transform(truth, img1));
        const Tensor b = binarize(img2);
        const std::size_t plane = img1.dim(1) * img1.dim(2) * img1.dim(3);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t match = 0;
            for (std::size_t j = 0; j < plane; ++j)
                if (t[i * plane + j] == b[i * plane + j]) ++match;
            sum += static_cast<double>(match) / static_cast<double>(plane);
        }
        done += n;
    }
    AgreementRecord rec;
    rec.task = truth_transform_name(truth);
    rec.n_pairs = n_pairs;
    rec.iteration = model.iteration;
    rec.ratio = sum / static_cast<double>(n_pairs);
    return rec;
}

std::vector<AgreementRecord> conditional_baseline_run(const ArchPreset& preset,
                                                      const DomainPair& data,
                                                      const BaselineConfig& cfg) {
    std::vector<AgreementRecord> out;
    const Rng root(cfg.base_seed);
    const NoiseSpec noise{preset.z_dim};
    for (int trial = 0; trial < cfg.trials; ++trial) {
        Rng trial_rng = root.split(std::uint64_t(std::uint32_t(trial)));
        Rng init_rng = trial_rng.split(1);
        Rng data_rng = trial_rng.split(2);

        ConditionalGAN model = build_conditional_gan(preset, init_rng);
        AgreementRecord best;
        best.ratio = -1.0;
        for (std::size_t it = 1; it <= cfg.train_budget; ++it) {
            const Tensor x1 =
                data.domain1.batch(sample_indices(data.domain1.count(), cfg.batch_size, data_rng));
            const Tensor x2 =
                data.domain2.batch(sample_indices(data.domain2.count(), cfg.batch_size, data_rng));
            const Tensor z = sample_z(noise, cfg.batch_size, data_rng);
            conditional_train_step(model, x1, x2, z);
            if (it % cfg.eval_every == 0 || it == cfg.train_budget) {
                Rng eval_rng = trial_rng.split(3);
                AgreementRecord rec =
                    conditional_agreement(model, data.truth_transform, cfg.n_pairs, eval_rng);
                rec.task = cfg.task;
                rec.seed = cfg.base_seed ^ std::uint64_t(std::uint32_t(trial));
                if (rec.ratio > best.ratio) best = rec;
            }
        }
        out.push_back(best);
    }
    return out;
}

void write_agreement_csv(std::ostream& out, const std::vector<AgreementRecord>& records) {
    out << "task,k,l,seed,iteration,n_pairs,ratio\n";
    out.precision(17);
    // Group rows by (task, k, l) in first-appearance order, then append the
    // per-cell summary rows.
    std::vector<std::tuple<std::string, int, int>> order;
    std::map<std::tuple<std::string, int, int>, std::vector<double>> cells;
    for (const auto& r : records) {
        auto key = std::make_tuple(r.task, r.k, r.l);
        if (!cells.count(key)) order.push_back(key);
        cells[key].push_back(r.ratio);
        out << r.task << ',' << r.k << ',' << r.l << ',' << r.seed << ',' << r.iteration << ','
            << r.n_pairs << ',' << r.ratio << '\n';
    }
    for (const auto& key : order) {
        const auto& v = cells[key];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double sd = 0.0;
        if (v.size() > 1) {
            for (double x : v) sd += (x - mean) * (x - mean);
            sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
        }
        const auto& [task, k, l] = key;
        out << task << ',' << k << ',' << l << ",mean,,," << mean << '\n';
        out << task << ',' << k << ',' << l << ",std,,," << sd << '\n';
    }
}

void write_agreement_csv(const std::string& path, const std::vector<AgreementRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_agreement_csv(out, records);
}

double mean_ratio(const std::vector<AgreementRecord>& records) {
    if (records.empty()) throw UsageError("mean_ratio over empty record set");
    double s = 0.0;
    for (const auto& r : records) s += r.ratio;
    return s / static_cast<double>(records.size());
}

}  // namespace cogan
