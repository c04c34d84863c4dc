#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "cogan/errors.hpp"
#include "cogan/evaluation.hpp"

using namespace cogan;

namespace {

constexpr double kWidth = 0.125;  // tiny channel counts keep tests fast

Tensor random_binary(const Shape& shape, Rng& rng) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform01() < 0.5 ? 0.0 : 1.0;
    return t;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("binarize rounds at one half") {
    Tensor img({1, 1, 2, 2}, {0.0, 0.49999, 0.5, 1.0});
    auto b = binarize(img);
    CHECK(b[0] == 0.0);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 1.0);
    CHECK(b[3] == 1.0);
}

TEST_CASE("agreement ratio: identity, complement, and the worked example") {
    Rng rng(1);
    auto a = random_binary({1, 1, 4, 4}, rng);
    CHECK(agreement_ratio(a, a) == 1.0);
    CHECK(agreement_ratio(a, negative_transform(a)) == 0.0);

    Tensor t({1, 4}, {1.0, 0.0, 1.0, 1.0});
    Tensor b({1, 4}, {1.0, 1.0, 1.0, 0.0});
    CHECK(agreement_ratio(t, b) == 0.5);

    Tensor wrong({1, 5}, 0.0);
    CHECK_THROWS_AS(agreement_ratio(t, wrong), UsageError);
}

TEST_CASE("agreement ratio matches a naive double-loop count on random pairs") {
    Rng rng(7);
    for (int c = 0; c < 10; ++c) {
        auto a = random_binary({2, 1, 5, 7}, rng);
        auto b = random_binary({2, 1, 5, 7}, rng);
        std::size_t match = 0, total = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ++total;
            if (a[i] == b[i]) ++match;
        }
        CHECK(agreement_ratio(a, b) == double(match) / double(total));  // exact
    }
}

TEST_CASE("pixel agreement equals the mean of per-pair ratios on the same stream") {
    Rng init(3);
    auto preset = make_preset("digit-conv", kWidth);
    auto model = build_cogan(preset, preset.default_k, preset.default_l, init);
    model.seed = 3;

    Rng eval_a(55);
    auto rec = pixel_agreement(model, TruthTransform::Negative, 5, eval_a);
    CHECK(rec.n_pairs == 5);
    CHECK(rec.k == model.k);
    CHECK(rec.l == model.l);
    CHECK(rec.seed == 3);
    CHECK(rec.ratio >= 0.0);
    CHECK(rec.ratio <= 1.0);

    // Recompute by hand with the identical noise stream.
    Rng eval_b(55);
    auto z = sample_z(NoiseSpec{preset.z_dim}, 5, eval_b);
    auto [img1, img2] = generate_pair(model, z);
    double sum = 0.0;
    const std::size_t plane = 28 * 28;
    auto t = binarize(negative_transform(img1));
    auto b = binarize(img2);
    for (std::size_t i = 0; i < 5; ++i) {
        std::size_t match = 0;
        for (std::size_t j = 0; j < plane; ++j)
            if (t[i * plane + j] == b[i * plane + j]) ++match;
        sum += double(match) / double(plane);
    }
    CHECK(rec.ratio == sum / 5.0);  // identical arithmetic, exact match

    Rng eval_c(55);
    CHECK(pixel_agreement(model, TruthTransform::Negative, 5, eval_c).ratio == rec.ratio);
}

TEST_CASE("identical generators under the identity transform agree fully") {
    Rng init(9);
    auto preset = make_preset("digit-conv", kWidth);
    auto model = build_cogan(preset, preset.default_k, preset.default_l, init);
    // Tie the last (normally untied) generator group by copying parameters,
    // making g1 and g2 bitwise identical functions.
    auto [begin, end] = model.gen_groups.back();
    for (std::size_t li = begin; li < end; ++li) {
        auto& pa = model.g1.layer(li).params();
        auto& pb = model.g2.layer(li).params();
        for (std::size_t pi = 0; pi < pa.size(); ++pi) *pb[pi].value = *pa[pi].value;
    }
    Rng eval(77);
    CHECK(pixel_agreement(model, TruthTransform::Identity, 4, eval).ratio == 1.0);
}

TEST_CASE("training loop fires milestones at the cadence and the final step") {
    Rng rng(10);
    auto corpus = make_synthetic_corpus(12, 28, rng);
    Rng pair_rng(11);
    auto pair = make_domain_pair(corpus, TruthTransform::Negative, pair_rng);

    Rng init(12);
    auto preset = make_preset("digit-conv", kWidth);
    auto model = build_cogan(preset, preset.default_k, preset.default_l, init);

    std::vector<std::size_t> milestones;
    TrainOptions opts;
    opts.iterations = 5;
    opts.batch_size = 2;
    opts.milestone_every = 2;
    opts.on_milestone = [&](CoGANModel& m, std::size_t it, double v1, double v2) {
        milestones.push_back(it);
        CHECK(m.iteration == it);
        CHECK(std::isfinite(v1));
        CHECK(std::isfinite(v2));
    };
    Rng train_rng(13);
    train_cogan(model, pair, opts, train_rng);
    CHECK(model.iteration == 5);
    CHECK(milestones == std::vector<std::size_t>{2, 4, 5});
    CHECK(verify_ties(model).ok());
}

TEST_CASE("degenerate sweep reduces to one train-and-evaluate run") {
    Rng rng(20);
    auto corpus = make_synthetic_corpus(12, 28, rng);
    Rng pair_rng(21);
    auto pair = make_domain_pair(corpus, TruthTransform::Negative, pair_rng);
    auto preset = make_preset("digit-conv", kWidth);

    SweepConfig cfg;
    cfg.k_values = {4};
    cfg.l_values = {3};
    cfg.trials = 1;
    cfg.train_budget = 2;
    cfg.batch_size = 2;
    cfg.eval_every = 1;
    cfg.n_pairs = 8;
    cfg.base_seed = 5;
    auto records = run_sweep(preset, pair, cfg);
    REQUIRE(records.size() == 1);
    CHECK(records[0].k == 4);
    CHECK(records[0].l == 3);
    CHECK(records[0].task == "taskB");
    CHECK(records[0].n_pairs == 8);
    CHECK(records[0].iteration >= 1);
    CHECK(records[0].iteration <= 2);
    CHECK(records[0].ratio >= 0.0);
    CHECK(records[0].ratio <= 1.0);

    // Sweep determinism: the same config yields the identical table.
    auto again = run_sweep(preset, pair, cfg);
    REQUIRE(again.size() == 1);
    CHECK(again[0].ratio == records[0].ratio);
    CHECK(again[0].iteration == records[0].iteration);

    SweepConfig empty = cfg;
    empty.k_values = {};
    CHECK_THROWS_AS(run_sweep(preset, pair, empty), ConfigError);
}

TEST_CASE("agreement csv has one row per record plus cell summaries") {
    std::vector<AgreementRecord> records;
    records.push_back({"taskB", 4, 3, 11, 500, 100, 0.5});
    records.push_back({"taskB", 4, 3, 12, 1000, 100, 0.7});
    records.push_back({"taskB", 0, 0, 11, 500, 100, 0.4});
    std::ostringstream out;
    write_agreement_csv(out, records);
    auto lines = split_lines(out.str());
    REQUIRE(lines.size() == 8);  // header + 3 rows + 2 cells x (mean, std)
    CHECK(lines[0] == "task,k,l,seed,iteration,n_pairs,ratio");
    CHECK(lines[1] == "taskB,4,3,11,500,100,0.5");
    CHECK(lines[4].substr(0, 14) == "taskB,4,3,mean");
    // mean of {0.5, 0.7} and the matching sample standard deviation
    {
        std::istringstream ss(lines[4].substr(lines[4].rfind(',') + 1));
        double mean = 0;
        ss >> mean;
        CHECK(mean == doctest::Approx(0.6).epsilon(1e-15));
    }
    {
        std::istringstream ss(lines[5].substr(lines[5].rfind(',') + 1));
        double sd = 0;
        ss >> sd;
        CHECK(sd == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
    }
    // single-trial cell reports std 0
    CHECK(lines[7].substr(0, 13) == "taskB,0,0,std");
    CHECK(lines[7].substr(lines[7].rfind(',') + 1) == "0");

    CHECK(mean_ratio(records) == doctest::Approx((0.5 + 0.7 + 0.4) / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(mean_ratio({}), UsageError);
}

TEST_CASE("softmax cross entropy matches the hand formula and its gradient") {
    Tensor p({2, 3}, {0.2, 0.5, 0.3, 0.1, 0.1, 0.8});
    Tensor dp;
    const double loss = softmax_cross_entropy(p, {1, 2}, &dp);
    CHECK(loss == doctest::Approx(0.5 * (-std::log(0.5) - std::log(0.8))).epsilon(1e-15));
    CHECK(dp.at2(0, 1) == doctest::Approx(-0.5 / 0.5).epsilon(1e-15));
    CHECK(dp.at2(1, 2) == doctest::Approx(-0.5 / 0.8).epsilon(1e-15));
    CHECK(dp.at2(0, 0) == 0.0);
    CHECK(dp.at2(0, 2) == 0.0);

    // Clamped probability keeps the loss finite.
    Tensor zero({1, 3}, {0.0, 1.0, 0.0});
    CHECK(std::isfinite(softmax_cross_entropy(zero, {0}, nullptr)));

    CHECK_THROWS_AS(softmax_cross_entropy(p, {1}, nullptr), UsageError);
    CHECK_THROWS_AS(softmax_cross_entropy(p, {1, 3}, nullptr), UsageError);
}

TEST_CASE("conditional model: softmax head, training step, and c-blind control") {
    Rng init(31);
    auto preset = make_preset("conditional-digit", kWidth);
    auto model = build_conditional_gan(preset, init);

    SUBCASE("discriminator outputs a 3-way distribution") {
        Tensor x({2, 1, 28, 28}, 0.5);
        auto p = model.f.infer(x);
        REQUIRE(p.shape() == Shape{2, 3});
        for (std::size_t i = 0; i < 2; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                s += p.at2(i, j);
                CHECK(p.at2(i, j) >= 0.0);
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    SUBCASE("train step updates both nets with finite losses") {
        Rng rng(32);
        Tensor x1({2, 1, 28, 28});
        Tensor x2({2, 1, 28, 28});
        for (std::size_t i = 0; i < x1.size(); ++i) x1[i] = rng.uniform01();
        for (std::size_t i = 0; i < x2.size(); ++i) x2[i] = rng.uniform01();
        auto z = sample_z(NoiseSpec{preset.z_dim}, 2, rng);
        ConditionalStepTrace trace;
        conditional_train_step(model, x1, x2, z, &trace);
        CHECK(model.iteration == 1);
        CHECK(std::isfinite(trace.disc_loss));
        CHECK(std::isfinite(trace.gen_loss));
        CHECK(trace.disc_loss > 0.0);

        Tensor bad({3, 1, 28, 28});
        CHECK_THROWS_AS(conditional_train_step(model, bad, x2, z), UsageError);
    }

    SUBCASE("zeroing the condition weights makes c=0 and c=1 outputs identical") {
        // The condition enters as the extra trailing input channel of the
        // first generator layer; weight layout is [in_ch, out_ch, kH, kW].
        auto& w = *model.g.layer(0).params()[0].value;
        REQUIRE(w.dim(0) == preset.z_dim + 1);
        const std::size_t block = w.size() / (preset.z_dim + 1);
        for (std::size_t i = 0; i < block; ++i) w[preset.z_dim * block + i] = 0.0;

        Rng rng(33);
        auto z = sample_z(NoiseSpec{preset.z_dim}, 3, rng);
        auto a = conditional_generate(model, z, 0.0);
        auto b = conditional_generate(model, z, 1.0);
        CHECK(max_abs_diff(a, b) == 0.0);

        // With identical outputs, identity-transform agreement is exactly 1.
        Rng eval(34);
        CHECK(conditional_agreement(model, TruthTransform::Identity, 4, eval).ratio == 1.0);
    }
}
