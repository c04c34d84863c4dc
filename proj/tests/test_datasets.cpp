#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "cogan/datasets.hpp"
#include "cogan/errors.hpp"

using namespace cogan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("datasets_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels) {
    std::vector<unsigned char> v;
    push_be32(v, 0x00000803);
    push_be32(v, n);
    push_be32(v, rows);
    push_be32(v, cols);
    v.insert(v.end(), pixels.begin(), pixels.end());
    return v;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> v;
    push_be32(v, 0x00000801);
    push_be32(v, static_cast<std::uint32_t>(labels.size()));
    v.insert(v.end(), labels.begin(), labels.end());
    return v;
}

}  // namespace

TEST_CASE("idx loader decodes a hand-encoded 2x2 fixture") {
    TempDir dir;
    // One 2x2 image with bytes 0, 51, 204, 255.
    write_bytes(dir.file("img.idx"), idx_images(1, 2, 2, {0, 51, 204, 255}));
    write_bytes(dir.file("lab.idx"), idx_labels({7}));

    auto corpus = load_idx(dir.file("img.idx"), dir.file("lab.idx"));
    REQUIRE(corpus.count() == 1);
    REQUIRE(corpus.images.shape() == Shape{1, 1, 2, 2});
    CHECK(corpus.images[0] == 0.0);
    CHECK(corpus.images[1] == doctest::Approx(51.0 / 255.0).epsilon(1e-15));
    CHECK(corpus.images[2] == doctest::Approx(204.0 / 255.0).epsilon(1e-15));
    CHECK(corpus.images[3] == 1.0);  // byte 255 -> exactly 1.0
    REQUIRE(corpus.labels.has_value());
    CHECK((*corpus.labels)[0] == 7);
}

TEST_CASE("idx loader rejects bad magic, truncation, and count mismatch") {
    TempDir dir;
    std::vector<unsigned char> bad = idx_images(1, 2, 2, {0, 0, 0, 0});
    bad[3] = 0x99;
    write_bytes(dir.file("bad.idx"), bad);
    CHECK_THROWS_AS(load_idx(dir.file("bad.idx")), IoError);

    auto trunc = idx_images(2, 2, 2, {0, 0, 0, 0});  // claims 2 images, carries 1
    write_bytes(dir.file("trunc.idx"), trunc);
    try {
        load_idx(dir.file("trunc.idx"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("24") != std::string::npos);  // expected byte count
        CHECK(msg.find("20") != std::string::npos);  // actual byte count
    }

    write_bytes(dir.file("img.idx"), idx_images(1, 2, 2, {0, 0, 0, 0}));
    write_bytes(dir.file("lab2.idx"), idx_labels({1, 2}));
    CHECK_THROWS_AS(load_idx(dir.file("img.idx"), dir.file("lab2.idx")), IoError);

    CHECK_THROWS_AS(load_idx(dir.file("missing.idx")), IoError);
}

TEST_CASE("disjoint split covers all indices exactly once") {
    Rng rng(5);
    auto corpus = make_synthetic_corpus(11, 8, rng);
    Rng split_rng(7);
    auto [h1, h2] = split_disjoint(corpus, split_rng);
    CHECK(h1.count() == 6);
    CHECK(h2.count() == 5);

    // Images in this corpus are distinct with probability ~1, so multiset
    // membership identifies source indices.
    auto key = [](const ImageCorpus& c, std::size_t i) {
        const std::size_t plane = c.height() * c.width();
        std::vector<double> v(c.images.data() + i * plane, c.images.data() + (i + 1) * plane);
        return v;
    };
    std::set<std::vector<double>> seen;
    for (std::size_t i = 0; i < corpus.count(); ++i) seen.insert(key(corpus, i));
    REQUIRE(seen.size() == corpus.count());

    std::set<std::vector<double>> halves;
    for (std::size_t i = 0; i < h1.count(); ++i) halves.insert(key(h1, i));
    for (std::size_t i = 0; i < h2.count(); ++i) halves.insert(key(h2, i));
    CHECK(halves == seen);  // disjoint union reconstructs the corpus

    // Labels travel with their images through the permutation.
    REQUIRE(h1.labels.has_value());
    REQUIRE(h2.labels.has_value());
    CHECK(h1.labels->size() == h1.count());
    CHECK(h2.labels->size() == h2.count());
}

TEST_CASE("disjoint split is deterministic per seed") {
    Rng rng(5);
    auto corpus = make_synthetic_corpus(16, 8, rng);
    Rng a(9), b(9), c(10);
    auto [a1, a2] = split_disjoint(corpus, a);
    auto [b1, b2] = split_disjoint(corpus, b);
    auto [c1, c2] = split_disjoint(corpus, c);
    CHECK(max_abs_diff(a1.images, b1.images) == 0.0);
    CHECK(max_abs_diff(a2.images, b2.images) == 0.0);
    CHECK(max_abs_diff(a1.images, c1.images) > 0.0);
}

TEST_CASE("split of a single image is rejected") {
    ImageCorpus tiny{Tensor({1, 1, 2, 2}, 0.5), std::nullopt, "tiny"};
    Rng rng(1);
    CHECK_THROWS_AS(split_disjoint(tiny, rng), UsageError);
}

TEST_CASE("negative transform is an involution with p -> 1-p") {
    Tensor img({1, 1, 2, 2}, {0.0, 0.3, 0.5, 1.0});
    auto neg = negative_transform(img);
    CHECK(neg[0] == 1.0);
    CHECK(neg[1] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(neg[3] == 0.0);
    // 1-(1-p) can differ from p by one rounding step for general p.
    CHECK(max_abs_diff(negative_transform(neg), img) <= 1e-15);

    Tensor zeros({1, 1, 3, 3}, 0.0);
    CHECK(max_abs(negative_transform(zeros)) == 1.0);
    CHECK(max_abs_diff(negative_transform(zeros), Tensor({1, 1, 3, 3}, 1.0)) == 0.0);
}

TEST_CASE("edge transform marks the 4-neighbor boundary of the binarized image") {
    SUBCASE("all background stays zero") {
        Tensor img({1, 1, 4, 4}, 0.2);
        CHECK(max_abs(edge_transform(img)) == 0.0);
    }
    SUBCASE("single foreground pixel is its own edge") {
        Tensor img({1, 1, 3, 3}, 0.0);
        img.at4(0, 0, 1, 1) = 0.9;
        auto e = edge_transform(img);
        CHECK(e.at4(0, 0, 1, 1) == 1.0);
        double others = 0;
        for (std::size_t i = 0; i < e.size(); ++i) others += e[i];
        CHECK(others == 1.0);
    }
    SUBCASE("solid 3x3 block in 5x5: ring is edge, center is interior") {
        Tensor img({1, 1, 5, 5}, 0.0);
        for (std::size_t y = 1; y <= 3; ++y)
            for (std::size_t x = 1; x <= 3; ++x) img.at4(0, 0, y, x) = 1.0;
        auto e = edge_transform(img);
        for (std::size_t y = 0; y < 5; ++y) {
            for (std::size_t x = 0; x < 5; ++x) {
                const bool in_block = y >= 1 && y <= 3 && x >= 1 && x <= 3;
                const bool is_center = y == 2 && x == 2;
                CHECK(e.at4(0, 0, y, x) == ((in_block && !is_center) ? 1.0 : 0.0));
            }
        }
    }
    SUBCASE("image border counts as background") {
        Tensor img({1, 1, 3, 3}, 1.0);  // solid foreground touching all borders
        auto e = edge_transform(img);
        CHECK(e.at4(0, 0, 1, 1) == 0.0);  // interior pixel fully surrounded
        CHECK(e.at4(0, 0, 0, 0) == 1.0);  // corner pixel borders the outside
    }
    SUBCASE("output is binary") {
        Rng rng(3);
        auto corpus = make_synthetic_corpus(4, 12, rng);
        auto e = edge_transform(corpus.images);
        for (std::size_t i = 0; i < e.size(); ++i) CHECK((e[i] == 0.0 || e[i] == 1.0));
    }
}

TEST_CASE("quarter-turn rotation follows out[y][x] = in[x][H-1-y]") {
    Tensor img({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});  // [[a,b],[c,d]]
    auto r = rotate90(img);
    CHECK(r.at4(0, 0, 0, 0) == 2.0);  // [[b,d],[a,c]]
    CHECK(r.at4(0, 0, 0, 1) == 4.0);
    CHECK(r.at4(0, 0, 1, 0) == 1.0);
    CHECK(r.at4(0, 0, 1, 1) == 3.0);

    SUBCASE("four applications are the identity") {
        Rng rng(11);
        auto corpus = make_synthetic_corpus(2, 9, rng);
        auto x = corpus.images;
        CHECK(max_abs_diff(rotate90(rotate90(rotate90(rotate90(x)))), x) == 0.0);
    }
    SUBCASE("constant image is unchanged") {
        Tensor c({1, 1, 4, 4}, 0.7);
        CHECK(max_abs_diff(rotate90(c), c) == 0.0);
    }
    SUBCASE("non-square rejected") {
        Tensor ns({1, 1, 2, 3}, 0.0);
        CHECK_THROWS_AS(rotate90(ns), UsageError);
    }
}

TEST_CASE("domain pair has disjoint halves and a transformed second domain") {
    Rng rng(21);
    auto corpus = make_synthetic_corpus(20, 10, rng);
    Rng pair_rng(4);
    auto pair = make_domain_pair(corpus, TruthTransform::Edge, pair_rng);
    CHECK(pair.domain1.count() + pair.domain2.count() == corpus.count());
    CHECK(pair.truth_transform == TruthTransform::Edge);
    for (std::size_t i = 0; i < pair.domain2.images.size(); ++i) {
        const double v = pair.domain2.images[i];
        CHECK((v == 0.0 || v == 1.0));  // edge outputs are binary
    }

    // Identity fixture: domain2 equals its source half verbatim.
    Rng ra(4), rb(4);
    auto id_pair = make_domain_pair(corpus, TruthTransform::Identity, ra);
    auto [h1, h2] = split_disjoint(corpus, rb);
    CHECK(max_abs_diff(id_pair.domain2.images, h2.images) == 0.0);
}

TEST_CASE("synthetic corpus is bounded, labeled, balanced, and deterministic") {
    Rng a(99), b(99);
    const std::size_t n = 10000;
    auto ca = make_synthetic_corpus(n, 8, a);
    auto cb = make_synthetic_corpus(n, 8, b);
    CHECK(max_abs_diff(ca.images, cb.images) == 0.0);
    REQUIRE(ca.labels.has_value());
    CHECK(*ca.labels == *cb.labels);

    double lo = 1e30, hi = -1e30;
    for (std::size_t i = 0; i < ca.images.size(); ++i) {
        lo = std::min(lo, ca.images[i]);
        hi = std::max(hi, ca.images[i]);
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);

    std::vector<std::size_t> hist(10, 0);
    for (int l : *ca.labels) {
        REQUIRE(l >= 0);
        REQUIRE(l < 10);
        ++hist[static_cast<std::size_t>(l)];
    }
    for (std::size_t c = 0; c < 10; ++c) {
        const double frac = double(hist[c]) / double(n);
        CHECK(std::abs(frac - 0.1) < 0.005);  // within 5% of the uniform share
    }

    CHECK_THROWS_AS(make_synthetic_corpus(4, 7, a), UsageError);
}

TEST_CASE("synthetic classes are visually distinct") {
    // Images of different classes should disagree substantially; this guards
    // against a drawing bug collapsing classes together.
    Rng rng(5);
    auto corpus = make_synthetic_corpus(200, 16, rng);
    std::vector<std::ptrdiff_t> first(10, -1);
    for (std::size_t i = 0; i < corpus.count(); ++i) {
        const int l = (*corpus.labels)[i];
        if (first[static_cast<std::size_t>(l)] < 0) first[static_cast<std::size_t>(l)] = std::ptrdiff_t(i);
    }
    for (int c = 0; c < 10; ++c) REQUIRE(first[static_cast<std::size_t>(c)] >= 0);
    for (int c1 = 0; c1 < 10; ++c1) {
        for (int c2 = c1 + 1; c2 < 10; ++c2) {
            auto i1 = corpus.image(std::size_t(first[static_cast<std::size_t>(c1)]));
            auto i2 = corpus.image(std::size_t(first[static_cast<std::size_t>(c2)]));
            double diff = 0;
            for (std::size_t i = 0; i < i1.size(); ++i) diff += std::abs(i1[i] - i2[i]);
            CHECK(diff / double(i1.size()) > 0.01);
        }
    }
}

TEST_CASE("unlabeled view drops labels but keeps pixels") {
    Rng rng(2);
    auto corpus = make_synthetic_corpus(5, 8, rng);
    auto view = corpus.without_labels();
    CHECK_FALSE(view.labels.has_value());
    CHECK(max_abs_diff(view.images, corpus.images) == 0.0);
    CHECK_THROWS_AS(view.label_batch({0}), UsageError);
}

TEST_CASE("bilinear resize preserves constants, corners, and range") {
    Tensor c({2, 1, 16, 16}, 0.4);
    auto r = resize_bilinear(c, 28, 28);
    CHECK(r.shape() == Shape{2, 1, 28, 28});
    CHECK(max_abs_diff(r, Tensor({2, 1, 28, 28}, 0.4)) < 1e-15);

    Rng rng(17);
    Tensor img({1, 1, 16, 16});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform01();
    auto up = resize_bilinear(img, 28, 28);
    // Corner-aligned sampling reproduces the four corner pixels exactly.
    CHECK(up.at4(0, 0, 0, 0) == img.at4(0, 0, 0, 0));
    CHECK(up.at4(0, 0, 0, 27) == img.at4(0, 0, 0, 15));
    CHECK(up.at4(0, 0, 27, 0) == img.at4(0, 0, 15, 0));
    CHECK(up.at4(0, 0, 27, 27) == img.at4(0, 0, 15, 15));
    for (std::size_t i = 0; i < up.size(); ++i) {
        CHECK(up[i] >= 0.0);
        CHECK(up[i] <= 1.0);
    }

    // Linear gradients are reproduced exactly by bilinear interpolation.
    Tensor grad({1, 1, 4, 4});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) grad.at4(0, 0, y, x) = double(x) / 3.0;
    auto g = resize_bilinear(grad, 4, 7);
    for (std::size_t x = 0; x < 7; ++x)
        CHECK(g.at4(0, 0, 2, x) == doctest::Approx(double(x) / 6.0).epsilon(1e-12));
}

TEST_CASE("transform names round-trip") {
    for (auto t : {TruthTransform::Identity, TruthTransform::Edge, TruthTransform::Negative,
                   TruthTransform::Rotate90}) {
        CHECK(truth_transform_from_name(truth_transform_name(t)) == t);
    }
    CHECK_THROWS_AS(truth_transform_from_name("sobel"), ConfigError);
}

TEST_CASE("batch gathers rows and validates indices") {
    Rng rng(6);
    auto corpus = make_synthetic_corpus(4, 8, rng);
    auto b = corpus.batch({2, 0});
    CHECK(b.shape() == Shape{2, 1, 8, 8});
    CHECK(b.at4(0, 0, 4, 4) == corpus.images.at4(2, 0, 4, 4));
    CHECK(b.at4(1, 0, 4, 4) == corpus.images.at4(0, 0, 4, 4));
    CHECK_THROWS_AS(corpus.batch({4}), UsageError);
    CHECK(corpus.label_batch({3, 1}) ==
          std::vector<int>{(*corpus.labels)[3], (*corpus.labels)[1]});
}
