#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cogan/cogan.hpp"
#include "cogan/datasets.hpp"

namespace cogan {

/// Labeled source domain plus an unlabeled view of the target domain. The
/// constructor strips target labels, so the training path cannot read them;
/// evaluation receives the labeled target corpus separately.
struct UDATask {
    ImageCorpus source;  // labeled (domain 1)
    ImageCorpus target;  // unlabeled (domain 2)
    std::size_t n_classes = 10;
};

UDATask make_uda_task(const ImageCorpus& source, const ImageCorpus& target,
                      std::size_t n_classes = 10);

/// Coupled model plus a softmax classifier head shared by both discriminator
/// trunks: c_i(x) = head(trunk of f_i up to the last hidden layer).
struct UdaModel {
    CoGANModel model;
    Network head;            // Dense(hidden, n_classes) + Softmax, shared storage
    std::size_t trunk_end = 0;  // first flat layer index past the last hidden layer
    AdamState opt_c;         // supervised path: head + trunk parameters
    std::size_t n_classes = 10;
};

/// Attaches the shared head. Requires l >= 2 so the deeper trunk the head
/// reads from is tied between the discriminators; smaller l would leave the
/// two classifiers reading unrelated features and is rejected.
UdaModel attach_classifier(CoGANModel model, std::size_t n_classes, Rng& rng,
                           AdamConfig adam = {});

/// Class probabilities [N, n_classes] through discriminator `which` in {1,2},
/// inference mode.
Tensor classify(UdaModel& m, const Tensor& x, int which);

/// Row argmax with ties broken toward the lower class index.
std::size_t argmax_lowest(const Tensor& p, std::size_t row);

struct UdaStepOptions {
    double classification_weight = 1.0;  // 0 skips the supervised step
    bool adversarial = true;             // false skips the coupled GAN step
    GanOptions gan;
};

struct UdaStepTrace {
    double cls_loss = 0.0;
    double v1 = 0.0, v2 = 0.0;
};

/// One joint iteration. Sampling order on `rng` is fixed: source image
/// indices, target image indices, noise (adversarial step), then labeled
/// source indices (supervised step); disabled phases draw nothing.
void uda_train_step(UdaModel& m, const UDATask& task, std::size_t batch_size, Rng& rng,
                    const UdaStepOptions& opts = {}, UdaStepTrace* trace = nullptr);

/// Mean argmax accuracy of c_which over a labeled corpus.
double evaluate_accuracy(UdaModel& m, const ImageCorpus& corpus, int which);

struct AccuracyRecord {
    std::string direction;
    int trial = 0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
};

/// Header `direction,trial,seed,accuracy`; one row per record plus mean/std
/// summary rows per direction (sample std, 0 for a single trial).
void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyRecord>& records);
void write_accuracy_csv(const std::string& path, const std::vector<AccuracyRecord>& records);

}  // namespace cogan
