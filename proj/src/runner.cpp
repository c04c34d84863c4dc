#include "cogan/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "cogan/adaptation.hpp"
#include "cogan/checkpoint.hpp"
#include "cogan/errors.hpp"
#include "cogan/evaluation.hpp"
#include "cogan/inversion.hpp"
#include "cogan/pnm.hpp"

namespace cogan {

namespace fs = std::filesystem;
using nlohmann::json;

void apply_profile(RunConfig& cfg, const std::string& profile) {
    if (profile.empty() || profile == "desk") {
        return;  // defaults are the desk profile
    }
    if (profile == "paper") {
        cfg.width = 1.0;
        cfg.batch_size = 128;
        cfg.iterations = 25000;
        cfg.n_pairs = 10000;
        cfg.trials = 5;
        cfg.synthetic_n = 60000;
        cfg.uda_source_n = 2000;
        cfg.uda_target_n = 1800;
        return;
    }
    throw ConfigError("unknown profile '" + profile + "' (expected paper or desk)");
}

namespace {

template <typename T>
T typed(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + key + "' has the wrong type: " + v.dump());
    }
}

}  // namespace

RunConfig load_config(const std::string& path, const std::string& profile) {
    RunConfig cfg;
    apply_profile(cfg, profile);
    if (path.empty()) return cfg;

    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config " + path + ": top level must be an object");

    for (const auto& [key, v] : doc.items()) {
        if (key == "preset") cfg.preset = typed<std::string>(v, key);
        else if (key == "width") cfg.width = typed<double>(v, key);
        else if (key == "k") cfg.k = typed<int>(v, key);
        else if (key == "l") cfg.l = typed<int>(v, key);
        else if (key == "task") cfg.task = typed<std::string>(v, key);
        else if (key == "images_idx") cfg.images_idx = typed<std::string>(v, key);
        else if (key == "labels_idx") cfg.labels_idx = typed<std::string>(v, key);
        else if (key == "synthetic_n") cfg.synthetic_n = typed<std::uint64_t>(v, key);
        else if (key == "image_size") cfg.image_size = typed<std::uint64_t>(v, key);
        else if (key == "seed") cfg.seed = typed<std::uint64_t>(v, key);
        else if (key == "batch_size") cfg.batch_size = typed<std::uint64_t>(v, key);
        else if (key == "iterations") cfg.iterations = typed<std::uint64_t>(v, key);
        else if (key == "log_every") cfg.log_every = typed<std::uint64_t>(v, key);
        else if (key == "checkpoint_every") cfg.checkpoint_every = typed<std::uint64_t>(v, key);
        else if (key == "lr") cfg.lr = typed<double>(v, key);
        else if (key == "beta1") cfg.beta1 = typed<double>(v, key);
        else if (key == "beta2") cfg.beta2 = typed<double>(v, key);
        else if (key == "n_pairs") cfg.n_pairs = typed<std::uint64_t>(v, key);
        else if (key == "eval_every") cfg.eval_every = typed<std::uint64_t>(v, key);
        else if (key == "trials") cfg.trials = typed<std::uint64_t>(v, key);
        else if (key == "k_values") cfg.k_values = typed<std::vector<int>>(v, key);
        else if (key == "l_values") cfg.l_values = typed<std::vector<int>>(v, key);
        else if (key == "uda_source_n") cfg.uda_source_n = typed<std::uint64_t>(v, key);
        else if (key == "uda_target_n") cfg.uda_target_n = typed<std::uint64_t>(v, key);
        else if (key == "transform_count") cfg.transform_count = typed<std::uint64_t>(v, key);
        else if (key == "restarts") cfg.restarts = typed<std::uint64_t>(v, key);
        else if (key == "invert_max_iter") cfg.invert_max_iter = typed<std::uint64_t>(v, key);
        else if (key == "checkpoint") cfg.checkpoint = typed<std::string>(v, key);
        else if (key == "out_dir") cfg.out_dir = typed<std::string>(v, key);
        else throw ConfigError("unknown config field '" + key + "' in " + path);
    }
    return cfg;
}

namespace {

AdamConfig adam_of(const RunConfig& cfg) {
    AdamConfig a;
    a.lr = cfg.lr;
    a.beta1 = cfg.beta1;
    a.beta2 = cfg.beta2;
    return a;
}

ImageCorpus load_corpus(const RunConfig& cfg, Rng& rng) {
    if (!cfg.images_idx.empty()) return load_idx(cfg.images_idx, cfg.labels_idx);
    return make_synthetic_corpus(cfg.synthetic_n, cfg.image_size, rng);
}

std::map<std::string, std::string> run_metadata(const RunConfig& cfg, int k, int l) {
    std::map<std::string, std::string> meta;
    meta["code_version"] = kCodeVersion;
    meta["preset"] = cfg.preset;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.width);
    meta["width"] = buf;
    meta["k"] = std::to_string(k);
    meta["l"] = std::to_string(l);
    meta["task"] = cfg.task;
    meta["seed"] = std::to_string(cfg.seed);
    meta["batch_size"] = std::to_string(cfg.batch_size);
    meta["iterations"] = std::to_string(cfg.iterations);
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.lr);
    meta["lr"] = buf;
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.beta1);
    meta["beta1"] = buf;
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.beta2);
    meta["beta2"] = buf;
    return meta;
}

void print_shape_chain(const char* title, const Network& net, Shape in) {
    std::cout << title << ": " << shape_to_string(in);
    for (std::size_t i = 0; i < net.size(); ++i) {
        in = net.layer(i).output_shape(in);
        std::cout << " -" << net.layer(i).kind() << "-> " << shape_to_string(in);
    }
    std::cout << '\n';
}

/// Top row g1, bottom row g2, for n noise samples.
void write_sample_grid(const fs::path& path, const CoGANModel& model, std::size_t n,
                       std::uint64_t seed) {
    Rng rng(seed);
    const Tensor z = sample_z(NoiseSpec{model.preset.z_dim}, n, rng);
    auto [img1, img2] = generate_pair(model, z);
    std::vector<Tensor> tiles;
    const Shape one{1, img1.dim(2), img1.dim(3)};
    const std::size_t plane = img1.dim(2) * img1.dim(3);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t(one);
        for (std::size_t j = 0; j < plane; ++j) t[j] = img1[i * plane + j];
        tiles.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t(one);
        for (std::size_t j = 0; j < plane; ++j) t[j] = img2[i * plane + j];
        tiles.push_back(std::move(t));
    }
    emit_grid(path, tiles, n);
}

int resolved_k(const RunConfig& cfg, const ArchPreset& preset) {
    return cfg.k >= 0 ? cfg.k : preset.default_k;
}
int resolved_l(const RunConfig& cfg, const ArchPreset& preset) {
    return cfg.l >= 0 ? cfg.l : preset.default_l;
}

}  // namespace

void cmd_train(const RunConfig& cfg, bool dry_run) {
    const ArchPreset preset = make_preset(cfg.preset, cfg.width);
    const int k = resolved_k(cfg, preset);
    const int l = resolved_l(cfg, preset);

    const Rng root(cfg.seed);
    Rng corpus_rng = root.split(1);
    Rng pair_rng = root.split(2);
    Rng init_rng = root.split(3);
    Rng train_rng = root.split(4);

    if (dry_run) {
        CoGANModel model = build_cogan(preset, k, l, init_rng, adam_of(cfg));
        std::cout << "preset=" << preset.name << " width=" << preset.width << " k=" << k
                  << " l=" << l << " parameters=" << model.parameter_count() << '\n';
        const Shape zin = preset.conv_generator ? Shape{1, preset.z_dim, 1, 1}
                                                : Shape{1, preset.z_dim};
        print_shape_chain("generator", model.g1, zin);
        print_shape_chain("discriminator", model.f1, {1, 1, 28, 28});
        return;
    }

    fs::create_directories(cfg.out_dir);
    const ImageCorpus corpus = load_corpus(cfg, corpus_rng);
    const DomainPair pair = make_domain_pair(corpus, truth_transform_from_name(cfg.task), pair_rng);

    CoGANModel model = build_cogan(preset, k, l, init_rng, adam_of(cfg));
    model.seed = cfg.seed;

    std::ofstream metrics(fs::path(cfg.out_dir) / "metrics.csv");
    if (!metrics) throw IoError("cannot write " + cfg.out_dir + "/metrics.csv");
    metrics.precision(17);
    metrics << "iteration,v1,v2\n";

    TrainOptions topts;
    topts.iterations = cfg.iterations;
    topts.batch_size = cfg.batch_size;
    topts.milestone_every = std::max<std::uint64_t>(1, cfg.log_every);
    topts.on_milestone = [&](CoGANModel& m, std::size_t it, double v1, double v2) {
        metrics << it << ',' << v1 << ',' << v2 << '\n';
        std::cout << "iter " << it << " v1=" << v1 << " v2=" << v2 << '\n';
        if (cfg.checkpoint_every > 0 && (it % cfg.checkpoint_every == 0 || it == cfg.iterations)) {
            const std::string tag = "checkpoint_" + std::to_string(it);
            save_cogan(fs::path(cfg.out_dir) / tag, m, run_metadata(cfg, k, l));
            write_sample_grid(fs::path(cfg.out_dir) / ("samples_" + std::to_string(it) + ".pgm"),
                              m, 8, cfg.seed ^ 0x5a5a5a5aULL);
        }
    };
    train_cogan(model, pair, topts, train_rng);

    save_cogan(fs::path(cfg.out_dir) / "checkpoint_final", model, run_metadata(cfg, k, l));
    write_sample_grid(fs::path(cfg.out_dir) / "samples_final.pgm", model, 8,
                      cfg.seed ^ 0x5a5a5a5aULL);
    save_sidecar(fs::path(cfg.out_dir) / "run.meta", run_metadata(cfg, k, l));
}

namespace {

CoGANModel load_checkpoint_for(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ConfigError("this command needs a 'checkpoint' path");
    CoGANModel model = load_cogan(cfg.checkpoint);
    if (model.preset.name != cfg.preset)
        throw ConfigError("checkpoint preset '" + model.preset.name +
                          "' does not match configured preset '" + cfg.preset + "'");
    return model;
}

}  // namespace

void cmd_eval(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    CoGANModel model = load_checkpoint_for(cfg);
    Rng eval_rng = Rng(cfg.seed).split(10);
    AgreementRecord rec =
        pixel_agreement(model, truth_transform_from_name(cfg.task), cfg.n_pairs, eval_rng);
    rec.task = cfg.task;
    rec.seed = cfg.seed;
    write_agreement_csv((fs::path(cfg.out_dir) / "agreement.csv").string(), {rec});
    std::cout << "agreement " << rec.ratio << " over " << rec.n_pairs << " pairs\n";
}

void cmd_sweep(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const ArchPreset preset = make_preset(cfg.preset, cfg.width);
    const Rng root(cfg.seed);
    Rng corpus_rng = root.split(1);
    Rng pair_rng = root.split(2);
    const ImageCorpus corpus = load_corpus(cfg, corpus_rng);
    const DomainPair pair = make_domain_pair(corpus, truth_transform_from_name(cfg.task), pair_rng);

    SweepConfig sweep;
    sweep.k_values = cfg.k_values.empty() ? std::vector<int>{0, preset.default_k} : cfg.k_values;
    sweep.l_values = cfg.l_values.empty() ? std::vector<int>{preset.default_l} : cfg.l_values;
    sweep.trials = static_cast<int>(cfg.trials);
    sweep.train_budget = cfg.iterations;
    sweep.batch_size = cfg.batch_size;
    sweep.eval_every = cfg.eval_every;
    sweep.n_pairs = cfg.n_pairs;
    sweep.base_seed = cfg.seed;
    sweep.task = cfg.task;
    const auto records = run_sweep(preset, pair, sweep);
    write_agreement_csv((fs::path(cfg.out_dir) / "sweep.csv").string(), records);
    std::cout << "sweep: " << records.size() << " trials written\n";
}

void cmd_uda(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const ArchPreset preset = make_preset(cfg.preset, cfg.width);
    std::vector<AccuracyRecord> records;
    const Rng root(cfg.seed);
    for (std::uint64_t trial = 0; trial < cfg.trials; ++trial) {
        Rng trial_rng = root.split(trial);
        Rng data_rng = trial_rng.split(1);
        // Shifted synthetic domain pair: source glyphs vs their negatives.
        ImageCorpus source = make_synthetic_corpus(cfg.uda_source_n, 28, data_rng);
        ImageCorpus target_src = make_synthetic_corpus(cfg.uda_target_n, 28, data_rng);
        ImageCorpus target{negative_transform(target_src.images), target_src.labels,
                           "synthetic+negative"};
        UDATask task = make_uda_task(source, target);

        for (const bool adapted : {true, false}) {
            Rng init_rng = trial_rng.split(adapted ? 2 : 3);
            Rng head_rng = trial_rng.split(adapted ? 4 : 5);
            Rng train_rng = trial_rng.split(adapted ? 6 : 7);
            CoGANModel model = build_cogan(preset, preset.default_k,
                                           std::max(2, preset.default_l), init_rng, adam_of(cfg));
            UdaModel m = attach_classifier(std::move(model), 10, head_rng, adam_of(cfg));
            UdaStepOptions opts;
            opts.adversarial = adapted;
            for (std::uint64_t it = 0; it < cfg.iterations; ++it)
                uda_train_step(m, task, cfg.batch_size, train_rng, opts);
            // The source-only baseline is the classifier one would actually
            // deploy without adaptation: the source pathway applied to
            // target images. Its domain-2 front end was never trained, so
            // routing through it would measure random-projection transfer,
            // not the trained system.
            const double acc = evaluate_accuracy(m, target, adapted ? 2 : 1);
            records.push_back({adapted ? "synth-to-negsynth-adapted"
                                       : "synth-to-negsynth-source-only",
                               static_cast<int>(trial), cfg.seed, acc});
            std::cout << records.back().direction << " trial " << trial << " accuracy " << acc
                      << '\n';
        }
    }
    write_accuracy_csv((fs::path(cfg.out_dir) / "uda.csv").string(), records);
}

void cmd_transform(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    CoGANModel model = load_checkpoint_for(cfg);
    Rng zrng = Rng(cfg.seed).split(20);
    const Tensor z = sample_z(NoiseSpec{model.preset.z_dim}, cfg.transform_count, zrng);
    auto [inputs, paired] = generate_pair(model, z);
    (void)paired;

    InversionOptions iopts;
    iopts.restarts = static_cast<int>(cfg.restarts);
    iopts.max_iter = static_cast<int>(cfg.invert_max_iter);
    iopts.seed = cfg.seed ^ 0xc0ffee;

    std::vector<Tensor> tiles;
    const Shape one{1, inputs.dim(2), inputs.dim(3)};
    const std::size_t plane = inputs.dim(2) * inputs.dim(3);
    for (std::size_t i = 0; i < cfg.transform_count; ++i) {
        Tensor x1(one);
        for (std::size_t j = 0; j < plane; ++j) x1[j] = inputs[i * plane + j];
        auto res = cross_domain_transform(model, x1.reshaped({1, 1, inputs.dim(2), inputs.dim(3)}),
                                          iopts);
        if (res.inversion.coverage_warning)
            std::cerr << "warning: input " << i << " looks outside generator coverage (loss "
                      << res.inversion.final_loss << ")\n";
        tiles.push_back(std::move(x1));
        tiles.push_back(res.x2.reshaped(one));
    }
    // One input|output pair per row.
    emit_grid(fs::path(cfg.out_dir) / "transform.pgm", tiles, 2);
    std::cout << "transform: wrote " << cfg.transform_count << " pairs\n";
}

}  // namespace cogan
