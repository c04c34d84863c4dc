#pragma once

#include <string>
#include <vector>

#include "cogan/gan.hpp"
#include "cogan/network.hpp"
#include "cogan/optim.hpp"

namespace cogan {

enum class PresetKind { DigitConv, DigitRotationFc, ConditionalDigit };

/// Architecture presets. `width` scales channel counts (1.0 = the published
/// tables, 0.25 = desk profile); image geometry stays 28x28.
struct ArchPreset {
    PresetKind kind = PresetKind::DigitConv;
    std::string name = "digit-conv";
    std::size_t z_dim = 100;
    double width = 1.0;
    int default_k = 4;  // shared leading generator layers
    int default_l = 3;  // shared trailing discriminator layers
    bool conv_generator = true;

    int gen_layers() const { return 5; }
    int disc_layers() const { return 4; }
};

ArchPreset make_preset(const std::string& name, double width = 1.0);

/// Half-open flat-layer ranges, one per architecture-table row.
using GroupRanges = std::vector<std::pair<std::size_t, std::size_t>>;

struct BuiltNet {
    Network net;
    GroupRanges groups;
};

/// `extra_in` widens the generator input (conditional variable channels).
BuiltNet build_generator_net(const ArchPreset& preset, Rng& rng, std::size_t extra_in = 0);
/// `softmax_classes` > 0 replaces the sigmoid head by an FC softmax head.
BuiltNet build_discriminator_net(const ArchPreset& preset, Rng& rng, std::size_t softmax_classes = 0);

/// One tied parameter pair: the same weight viewed through both networks.
struct TieView {
    std::string name;
    bool in_generator = true;
    std::size_t layer_a = 0;   // flat layer index in g1/f1
    std::size_t layer_b = 0;   // flat layer index in g2/f2
    std::size_t param_idx = 0;
};

struct TieRegistry {
    std::vector<TieView> views;
    bool empty() const { return views.empty(); }
    std::size_t size() const { return views.size(); }
};

struct TieDiscrepancy {
    std::string name;
    double max_abs_diff = 0.0;
};

struct TieReport {
    std::vector<TieDiscrepancy> discrepancies;
    bool ok() const { return discrepancies.empty(); }
};

struct CoGANModel {
    ArchPreset preset;
    int k = 0;
    int l = 0;
    Network g1, g2, f1, f2;
    GroupRanges gen_groups, disc_groups;
    TieRegistry ties;
    AdamState opt_f, opt_g;
    std::uint64_t iteration = 0;
    std::uint64_t seed = 0;

    std::size_t parameter_count() const;
};

/// Builds the four networks; layers within the first k generator groups and
/// the last l discriminator groups share parameter storage between the two
/// domains (identical values by construction).
CoGANModel build_cogan(const ArchPreset& preset, int k, int l, Rng& rng, AdamConfig adam = {});

/// Eq.-style sum of the two per-domain value functions; same z feeds both
/// generators.
double cogan_value(const CoGANModel& model, const Tensor& x1_batch, const Tensor& x2_batch,
                   const Tensor& z_batch, const GanOptions& opts = {});

struct CoganStepTrace {
    double v1 = 0.0, v2 = 0.0;
    double g1_loss = 0.0, g2_loss = 0.0;
    GradientMap f1_grads, f2_grads, f_merged;
    GradientMap g1_grads, g2_grads, g_merged;
};

/// One coupled update: per-network discriminator gradients, tied gradients
/// replaced by their arithmetic mean, Adam step on f1/f2, then the same for
/// the generators against the updated discriminators.
void cogan_train_step(CoGANModel& model, const Tensor& x1_batch, const Tensor& x2_batch,
                      const Tensor& z_batch, const GanOptions& opts = {}, CoganStepTrace* trace = nullptr);

/// (g1(z), g2(z)) in inference mode.
std::pair<Tensor, Tensor> generate_pair(const CoGANModel& model, const Tensor& z,
                                        const GanOptions& opts = {});

/// Defensive check of the tying constraint (useful after deserialization).
TieReport verify_ties(const CoGANModel& model);

/// Averages gradients of ids present in both maps, keeps the rest.
GradientMap merge_tied_gradients(const GradientMap& a, const GradientMap& b);

}  // namespace cogan
