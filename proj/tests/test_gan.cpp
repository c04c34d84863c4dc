#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "cogan/gan.hpp"

using namespace cogan;

namespace {

void zero_params(Network& net) {
    for (const Param& p : unique_params({&net}))
        for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = 0.0;
}

GAN tiny_gan(Rng& rng) {
    GAN gan;
    gan.z_dim = 1;
    gan.g.add(std::make_unique<DenseLayer>(1, 1, rng));
    gan.f.add(std::make_unique<DenseLayer>(1, 1, rng));
    gan.f.add(std::make_unique<SigmoidLayer>());
    return gan;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("sample_z stays in the box and is seed-deterministic") {
    Rng a(3), b(3);
    NoiseSpec spec{4};
    Tensor za = sample_z(spec, 100, a);
    Tensor zb = sample_z(spec, 100, b);
    CHECK(za.shape() == Shape{100, 4});
    CHECK(max_abs_diff(za, zb) == 0.0);
    for (std::size_t i = 0; i < za.size(); ++i) {
        CHECK(za[i] >= -1.0);
        CHECK(za[i] <= 1.0);
    }
}

TEST_CASE("sample_z mean obeys the CLT bound at n=1e5") {
    Rng rng(9);
    Tensor z = sample_z(NoiseSpec{1}, 100000, rng);
    double mean = 0;
    for (std::size_t i = 0; i < z.size(); ++i) mean += z[i];
    mean /= static_cast<double>(z.size());
    CHECK(mean > -0.02);
    CHECK(mean < 0.02);
}

TEST_CASE("gan_value with a constant 0.5 discriminator is 2 ln 2") {
    Rng rng(1);
    GAN gan = tiny_gan(rng);
    zero_params(gan.f);  // dense output 0 -> sigmoid 0.5 everywhere
    GanOptions opts;
    opts.conv_generator_input = false;
    Tensor x({8, 1}, 0.7);
    Tensor z = sample_z(NoiseSpec{1}, 8, rng);
    double v = gan_value(gan, x, z, opts);
    CHECK(v == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("gan_value approaches zero for a near-perfect discriminator") {
    const double delta = 1e-9;
    Tensor p_real({4, 1}, 1.0 - delta);
    Tensor p_fake({4, 1}, delta);
    double v = bce_real_term(p_real, nullptr) + bce_fake_term(p_fake, nullptr);
    CHECK(v > 0.0);
    CHECK(v < 1e-8);
}

TEST_CASE("gan_value matches an independent scalar recomputation from f outputs") {
    Rng rng(2);
    GAN gan = tiny_gan(rng);
    GanOptions opts;
    opts.conv_generator_input = false;
    Tensor x({5, 1}, {0.1, 0.4, -0.2, 0.9, -0.6});
    Tensor z = sample_z(NoiseSpec{1}, 5, rng);

    Tensor p_real = gan.f.infer(x);
    Tensor p_fake = gan.f.infer(gan.g.infer(z));
    auto clamp = [](double p) { return std::min(std::max(p, kLogClamp), 1.0 - kLogClamp); };
    double want = 0;
    for (std::size_t i = 0; i < 5; ++i) want += -std::log(clamp(p_real[i]));
    want /= 5;
    double fake = 0;
    for (std::size_t i = 0; i < 5; ++i) fake += -std::log(1.0 - clamp(p_fake[i]));
    want += fake / 5;

    CHECK(gan_value(gan, x, z, opts) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gan_value stays finite at saturated probabilities") {
    Tensor p0({2, 1}, 0.0), p1({2, 1}, 1.0);
    CHECK(std::isfinite(bce_real_term(p0, nullptr)));
    CHECK(std::isfinite(bce_fake_term(p1, nullptr)));
}

TEST_CASE("gan_train_step with zero learning rates is the identity on parameters") {
    Rng rng(4);
    GAN gan = tiny_gan(rng);
    GanOptions opts;
    opts.conv_generator_input = false;
    AdamState of(AdamConfig{0.0, 0.5, 0.999, 1e-8});
    AdamState og(AdamConfig{0.0, 0.5, 0.999, 1e-8});
    auto params = unique_params({&gan.f, &gan.g});
    std::vector<Tensor> before;
    for (const auto& p : params) before.push_back(*p.value);

    Tensor x({4, 1}, 0.3);
    Tensor z = sample_z(NoiseSpec{1}, 4, rng);
    gan_train_step(gan, x, z, of, og, opts);

    for (std::size_t i = 0; i < params.size(); ++i) CHECK(max_abs_diff(*params[i].value, before[i]) == 0.0);
}

TEST_CASE("gan_train_step computes the generator gradient against the updated f") {
    Rng rng(5);
    GAN gan = tiny_gan(rng);
    GanOptions opts;
    opts.conv_generator_input = false;
    AdamState of, og;
    GanStepTrace trace;
    Tensor x({4, 1}, 0.3);
    Tensor z = sample_z(NoiseSpec{1}, 4, rng);
    gan_train_step(gan, x, z, of, og, opts, &trace);
    CHECK(trace.f_version_at_gen_grad > trace.f_version_before);
    CHECK(of.t() == 1);
    CHECK(og.t() == 1);
}

TEST_CASE("one scalar train step matches a symbolic hand derivation") {
    Rng rng(6);
    GAN gan = tiny_gan(rng);
    GanOptions opts;
    opts.conv_generator_input = false;

    double wg = (*gan.g.layer(0).params()[0].value)[0];
    double bg = (*gan.g.layer(0).params()[1].value)[0];
    double wf = (*gan.f.layer(0).params()[0].value)[0];
    double bf = (*gan.f.layer(0).params()[1].value)[0];

    const double x = 0.8, z = -0.4;
    const double lr = 0.0002, b1 = 0.5, b2 = 0.999, eps = 1e-8;

    // --- hand derivation, batch of one ------------------------------------
    // discriminator loss: -log s(wf*x+bf) - log(1 - s(wf*g+bf)), g = wg*z+bg
    double gz = wg * z + bg;
    double pr = sigmoid(wf * x + bf);
    double pf = sigmoid(wf * gz + bf);
    double dwf = -(1.0 - pr) * x + pf * gz;
    double dbf = -(1.0 - pr) + pf;
    auto adam1 = [&](double theta, double g) {
        double m = (1 - b1) * g, v = (1 - b2) * g * g;
        double mh = m / (1 - b1), vh = v / (1 - b2);
        return theta - lr * mh / (std::sqrt(vh) + eps);
    };
    double wf1 = adam1(wf, dwf), bf1 = adam1(bf, dbf);
    // generator loss log(1 - s(wf1*g+bf1)) against the updated discriminator
    double pf1 = sigmoid(wf1 * gz + bf1);
    double dwg = -pf1 * wf1 * z;
    double dbg = -pf1 * wf1;
    double wg1 = adam1(wg, dwg), bg1 = adam1(bg, dbg);
    // -----------------------------------------------------------------------

    AdamState of(AdamConfig{lr, b1, b2, eps}), og(AdamConfig{lr, b1, b2, eps});
    gan_train_step(gan, Tensor({1, 1}, x), Tensor({1, 1}, z), of, og, opts);

    CHECK((*gan.f.layer(0).params()[0].value)[0] == doctest::Approx(wf1).epsilon(1e-12));
    CHECK((*gan.f.layer(0).params()[1].value)[0] == doctest::Approx(bf1).epsilon(1e-12));
    CHECK((*gan.g.layer(0).params()[0].value)[0] == doctest::Approx(wg1).epsilon(1e-12));
    CHECK((*gan.g.layer(0).params()[1].value)[0] == doctest::Approx(bg1).epsilon(1e-12));
}

TEST_CASE("nonsaturating flag changes the generator loss sign structure") {
    Tensor p({2, 1}, 0.3);
    Tensor dp_minimax(p.shape()), dp_ns(p.shape());
    double minimax = generator_loss(p, false, &dp_minimax);
    double ns = generator_loss(p, true, &dp_ns);
    CHECK(minimax == doctest::Approx(std::log(0.7)).epsilon(1e-12));
    CHECK(ns == doctest::Approx(-std::log(0.3)).epsilon(1e-12));
    // both push p upward: dL/dp negative
    CHECK(dp_minimax[0] < 0.0);
    CHECK(dp_ns[0] < 0.0);
}
