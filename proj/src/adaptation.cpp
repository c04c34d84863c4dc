#include "cogan/adaptation.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "cogan/errors.hpp"
#include "cogan/evaluation.hpp"

namespace cogan {

UDATask make_uda_task(const ImageCorpus& source, const ImageCorpus& target,
                      std::size_t n_classes) {
    if (!source.labels)
        throw UsageError("make_uda_task: source corpus has no labels: " + source.provenance);
    return UDATask{source, target.without_labels(), n_classes};
}

UdaModel attach_classifier(CoGANModel model, std::size_t n_classes, Rng& rng, AdamConfig adam) {
    if (model.l < 2)
        throw ConfigError("attach_classifier: l=" + std::to_string(model.l) +
                          " but the shared head needs the hidden trunk tied (l >= 2)");
    UdaModel m;
    m.n_classes = n_classes;
    // Last hidden layer = end of the penultimate discriminator group.
    m.trunk_end = model.disc_groups[model.disc_groups.size() - 2].second;
    // Hidden width: trunk output on a probe shape.
    Shape s{1, 1, 28, 28};
    for (std::size_t i = 0; i < m.trunk_end; ++i) s = model.f1.layer(i).output_shape(s);
    if (s.size() != 2)
        throw ConfigError("attach_classifier: trunk output is not flat: " + shape_to_string(s));
    m.head.add(std::make_unique<DenseLayer>(s[1], n_classes, rng));
    m.head.add(std::make_unique<SoftmaxLayer>());
    m.opt_c = AdamState(adam);
    m.model = std::move(model);
    return m;
}

Tensor classify(UdaModel& m, const Tensor& x, int which) {
    if (which != 1 && which != 2) throw UsageError("classify: which must be 1 or 2");
    Network& f = which == 1 ? m.model.f1 : m.model.f2;
    const Mode old = f.mode();
    f.set_mode(Mode::Inference);
    const Tensor h = f.forward_range(x, 0, m.trunk_end);
    f.set_mode(old);
    return m.head.infer(h);
}

std::size_t argmax_lowest(const Tensor& p, std::size_t row) {
    const std::size_t classes = p.dim(1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < classes; ++j)
        if (p.at2(row, j) > p.at2(row, best)) best = j;
    return best;
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t count, std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.below(count);
    return idx;
}

}  // namespace

void uda_train_step(UdaModel& m, const UDATask& task, std::size_t batch_size, Rng& rng,
                    const UdaStepOptions& opts, UdaStepTrace* trace) {
    if (trace) *trace = UdaStepTrace{};
    if (opts.adversarial) {
        const Tensor x1 = task.source.batch(sample_indices(task.source.count(), batch_size, rng));
        const Tensor x2 = task.target.batch(sample_indices(task.target.count(), batch_size, rng));
        const Tensor z = sample_z(NoiseSpec{m.model.preset.z_dim}, batch_size, rng);
        CoganStepTrace ctrace;
        cogan_train_step(m.model, x1, x2, z, opts.gan, trace ? &ctrace : nullptr);
        if (trace) {
            trace->v1 = ctrace.v1;
            trace->v2 = ctrace.v2;
        }
    }
    if (opts.classification_weight != 0.0) {
        const auto idx = sample_indices(task.source.count(), batch_size, rng);
        const Tensor x = task.source.batch(idx);
        const auto labels = task.source.label_batch(idx);

        Network& f1 = m.model.f1;
        const Tensor h = f1.forward_range(x, 0, m.trunk_end);
        const Tensor p = m.head.forward(h);
        Tensor dp;
        const double loss = softmax_cross_entropy(p, labels, &dp);
        auto [head_grads, dh] = m.head.backward(dp);
        GradientMap grads = std::move(head_grads);
        f1.backward_range(dh, 0, m.trunk_end, grads);
        if (opts.classification_weight != 1.0) {
            GradientMap scaled;
            for (const auto& [id, g] : grads) {
                Tensor sg(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i)
                    sg[i] = g[i] * opts.classification_weight;
                scaled.add(id, std::move(sg));
            }
            grads = std::move(scaled);
        }
        std::vector<Param> params = m.head.parameters();
        for (std::size_t i = 0; i < m.trunk_end; ++i)
            for (const auto& pm : f1.layer(i).params()) params.push_back(pm);
        m.opt_c.step(params, grads);
        f1.bump_param_version();
        m.model.f2.bump_param_version();  // tied trunk storage moved too
        if (trace) trace->cls_loss = loss;
    }
}

double evaluate_accuracy(UdaModel& m, const ImageCorpus& corpus, int which) {
    if (!corpus.labels)
        throw UsageError("evaluate_accuracy: corpus has no labels: " + corpus.provenance);
    const std::size_t n = corpus.count();
    const std::size_t chunk = 64;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t len = std::min(chunk, n - begin);
        std::vector<std::size_t> idx(len);
        for (std::size_t i = 0; i < len; ++i) idx[i] = begin + i;
        const Tensor p = classify(m, corpus.batch(idx), which);
        for (std::size_t i = 0; i < len; ++i)
            if (static_cast<int>(argmax_lowest(p, i)) == (*corpus.labels)[begin + i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyRecord>& records) {
    out << "direction,trial,seed,accuracy\n";
    out.precision(17);
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> groups;
    for (const auto& r : records) {
        if (!groups.count(r.direction)) order.push_back(r.direction);
        groups[r.direction].push_back(r.accuracy);
        out << r.direction << ',' << r.trial << ',' << r.seed << ',' << r.accuracy << '\n';
    }
    for (const auto& dir : order) {
        const auto& v = groups[dir];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double sd = 0.0;
        if (v.size() > 1) {
            for (double x : v) sd += (x - mean) * (x - mean);
            sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
        }
        out << dir << ",mean,," << mean << '\n';
        out << dir << ",std,," << sd << '\n';
    }
}

void write_accuracy_csv(const std::string& path, const std::vector<AccuracyRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_accuracy_csv(out, records);
}

}  // namespace cogan
