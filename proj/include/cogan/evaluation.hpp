#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cogan/cogan.hpp"
#include "cogan/datasets.hpp"

namespace cogan {

/// One pixel-agreement measurement: which task, which sharing configuration,
/// which trial seed, the training iteration evaluated, and the mean ratio of
/// agreeing pixels over n_pairs noise samples.
struct AgreementRecord {
    std::string task;
    int k = 0;
    int l = 0;
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
    std::size_t n_pairs = 0;
    double ratio = 0.0;
};

/// Rounds every pixel at 0.5 into {0,1}.
Tensor binarize(const Tensor& img);

/// Fraction of positions where two same-shape binary images agree; integer
/// counts divided once at the end.
double agreement_ratio(const Tensor& a, const Tensor& b);

/// Samples n_pairs noise vectors; per pair compares
/// binarize(truth(g1(z))) against binarize(g2(z)); returns the mean ratio.
AgreementRecord pixel_agreement(const CoGANModel& model, TruthTransform truth,
                                std::size_t n_pairs, Rng& rng);

struct TrainOptions {
    std::size_t iterations = 3000;
    std::size_t batch_size = 64;
    GanOptions gan;
    /// When > 0, on_milestone fires every `milestone_every` iterations and at
    /// the final iteration.
    std::size_t milestone_every = 0;
    std::function<void(CoGANModel&, std::size_t iteration, double v1, double v2)> on_milestone;
};

/// Runs cogan_train_step over independently sampled marginal batches; the
/// trainer never sees aligned (domain1, domain2) pairs.
void train_cogan(CoGANModel& model, const DomainPair& data, const TrainOptions& opts, Rng& rng);

struct SweepConfig {
    std::vector<int> k_values;
    std::vector<int> l_values;
    int trials = 3;
    std::size_t train_budget = 3000;
    std::size_t batch_size = 64;
    std::size_t eval_every = 500;  // best-checkpoint cadence
    std::size_t n_pairs = 1000;
    std::uint64_t base_seed = 1;
    std::string task = "taskB";
};

/// For every (k, l) cell and trial: train, evaluate agreement at each
/// checkpoint, and record the best checkpoint. One record per trial.
std::vector<AgreementRecord> run_sweep(const ArchPreset& preset, const DomainPair& data,
                                       const SweepConfig& cfg);

/// Single generator conditioned on c in {0,1} appended to z, and a single
/// discriminator with a 3-way softmax head over {synthesized, real-1, real-2}.
struct ConditionalGAN {
    ArchPreset preset;
    Network g, f;
    AdamState opt_f, opt_g;
    std::uint64_t iteration = 0;
};

ConditionalGAN build_conditional_gan(const ArchPreset& preset, Rng& rng, AdamConfig adam = {});

/// g applied to z rows with the condition value appended.
Tensor conditional_generate(const ConditionalGAN& model, const Tensor& z, double c);

/// mean over rows of -log p[row, target]; probabilities clamped as in the
/// two-class losses. Optionally fills dL/dp.
double softmax_cross_entropy(const Tensor& p, const std::vector<int>& targets, Tensor* dp);

struct ConditionalStepTrace {
    double disc_loss = 0.0;
    double gen_loss = 0.0;
};

/// Alternating update: the discriminator minimizes 3-way cross-entropy over
/// fake/real-1/real-2 batches; the generator (half the z batch at c=0, half
/// at c=1) minimizes cross-entropy toward class c+1 against the updated f.
void conditional_train_step(ConditionalGAN& model, const Tensor& x1_batch, const Tensor& x2_batch,
                            const Tensor& z_batch, ConditionalStepTrace* trace = nullptr);

/// Agreement between binarize(truth(g(z, c=0))) and binarize(g(z, c=1)).
AgreementRecord conditional_agreement(const ConditionalGAN& model, TruthTransform truth,
                                      std::size_t n_pairs, Rng& rng);

struct BaselineConfig {
    int trials = 3;
    std::size_t train_budget = 3000;
    std::size_t batch_size = 64;
    std::size_t eval_every = 500;
    std::size_t n_pairs = 1000;
    std::uint64_t base_seed = 1;
    std::string task = "taskB";
};

/// Trains the conditional baseline with the shared hyperparameters and
/// reports the best checkpoint per trial.
std::vector<AgreementRecord> conditional_baseline_run(const ArchPreset& preset,
                                                      const DomainPair& data,
                                                      const BaselineConfig& cfg);

/// Header `task,k,l,seed,iteration,n_pairs,ratio`; one row per record, then
/// mean/std summary rows per (task,k,l) cell (sample std, 0 for one trial).
void write_agreement_csv(std::ostream& out, const std::vector<AgreementRecord>& records);
void write_agreement_csv(const std::string& path, const std::vector<AgreementRecord>& records);

double mean_ratio(const std::vector<AgreementRecord>& records);

}  // namespace cogan
