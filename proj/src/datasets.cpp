#include "cogan/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <utility>

#include "cogan/errors.hpp"

namespace cogan {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::string& path) {
    if (offset + 4 > buf.size()) {
        throw IoError(path + ": truncated header, expected 4 bytes at offset " +
                      std::to_string(offset) + ", file has " + std::to_string(buf.size()) +
                      " bytes");
    }
    return (std::uint32_t(buf[offset]) << 24) | (std::uint32_t(buf[offset + 1]) << 16) |
           (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

Tensor ImageCorpus::image(std::size_t i) const { return batch({i}); }

Tensor ImageCorpus::batch(const std::vector<std::size_t>& indices) const {
    const std::size_t h = height();
    const std::size_t w = width();
    Tensor out({indices.size(), 1, h, w});
    const std::size_t plane = h * w;
    for (std::size_t b = 0; b < indices.size(); ++b) {
        if (indices[b] >= count())
            throw UsageError("image index " + std::to_string(indices[b]) +
                             " out of range for corpus of " + std::to_string(count()));
        std::memcpy(out.data() + b * plane, images.data() + indices[b] * plane,
                    plane * sizeof(double));
    }
    return out;
}

std::vector<int> ImageCorpus::label_batch(const std::vector<std::size_t>& indices) const {
    if (!labels) throw UsageError("corpus has no labels: " + provenance);
    std::vector<int> out(indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b) out[b] = (*labels)[indices[b]];
    return out;
}

ImageCorpus ImageCorpus::without_labels() const {
    return ImageCorpus{images, std::nullopt, provenance + "+unlabeled"};
}

const char* truth_transform_name(TruthTransform t) {
    switch (t) {
        case TruthTransform::Identity: return "identity";
        case TruthTransform::Edge: return "edge";
        case TruthTransform::Negative: return "negative";
        case TruthTransform::Rotate90: return "rotate90";
    }
    return "?";
}

TruthTransform truth_transform_from_name(const std::string& name) {
    if (name == "identity") return TruthTransform::Identity;
    if (name == "edge") return TruthTransform::Edge;
    if (name == "negative") return TruthTransform::Negative;
    if (name == "rotate90") return TruthTransform::Rotate90;
    throw ConfigError("unknown transform: " + name +
                      " (expected identity, edge, negative, or rotate90)");
}

ImageCorpus load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto buf = read_file(images_path);
    const std::uint32_t magic = read_be32(buf, 0, images_path);
    if (magic != kIdxImagesMagic) {
        throw IoError(images_path + ": bad image magic at offset 0, expected 0x00000803, got 0x" +
                      [&] {
                          char hex[16];
                          std::snprintf(hex, sizeof(hex), "%08x", magic);
                          return std::string(hex);
                      }());
    }
    const std::uint32_t n = read_be32(buf, 4, images_path);
    const std::uint32_t rows = read_be32(buf, 8, images_path);
    const std::uint32_t cols = read_be32(buf, 12, images_path);
    const std::size_t expected = 16 + std::size_t(n) * rows * cols;
    if (buf.size() != expected) {
        throw IoError(images_path + ": truncated payload, expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(buf.size()));
    }
    Tensor images({n, 1, rows, cols});
    for (std::size_t i = 0; i < std::size_t(n) * rows * cols; ++i)
        images[i] = double(buf[16 + i]) / 255.0;

    ImageCorpus corpus{std::move(images), std::nullopt, "idx:" + images_path};
    if (!labels_path.empty()) {
        const auto lbuf = read_file(labels_path);
        const std::uint32_t lmagic = read_be32(lbuf, 0, labels_path);
        if (lmagic != kIdxLabelsMagic) {
            throw IoError(labels_path + ": bad label magic at offset 0, expected 0x00000801");
        }
        const std::uint32_t ln = read_be32(lbuf, 4, labels_path);
        if (ln != n) {
            throw IoError("image/label count mismatch: " + std::to_string(n) + " images in " +
                          images_path + " vs " + std::to_string(ln) + " labels in " + labels_path);
        }
        const std::size_t lexpected = 8 + std::size_t(ln);
        if (lbuf.size() != lexpected) {
            throw IoError(labels_path + ": truncated payload, expected " +
                          std::to_string(lexpected) + " bytes, got " + std::to_string(lbuf.size()));
        }
        std::vector<int> labels(ln);
        for (std::uint32_t i = 0; i < ln; ++i) labels[i] = int(lbuf[8 + i]);
        corpus.labels = std::move(labels);
    }
    return corpus;
}

std::pair<ImageCorpus, ImageCorpus> split_disjoint(const ImageCorpus& corpus, Rng& rng) {
    const std::size_t n = corpus.count();
    if (n < 2) throw UsageError("split_disjoint needs at least 2 images, got " + std::to_string(n));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.below(i + 1);
        std::swap(perm[i], perm[j]);
    }
    const std::size_t n1 = (n + 1) / 2;
    std::vector<std::size_t> idx1(perm.begin(), perm.begin() + n1);
    std::vector<std::size_t> idx2(perm.begin() + n1, perm.end());

    auto make_half = [&](const std::vector<std::size_t>& idx, const char* tag) {
        ImageCorpus half{corpus.batch(idx), std::nullopt, corpus.provenance + tag};
        if (corpus.labels) {
            std::vector<int> l(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) l[i] = (*corpus.labels)[idx[i]];
            half.labels = std::move(l);
        }
        return half;
    };
    return {make_half(idx1, "+half1"), make_half(idx2, "+half2")};
}

Tensor negative_transform(const Tensor& img) {
    Tensor out(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = 1.0 - img[i];
    return out;
}

Tensor edge_transform(const Tensor& img) {
    if (img.rank() != 4) throw UsageError("edge_transform expects [N,1,H,W]");
    const std::size_t n = img.dim(0), h = img.dim(2), w = img.dim(3);
    Tensor out(img.shape());
    auto fg = [&](std::size_t b, std::ptrdiff_t y, std::ptrdiff_t x) {
        // Off-image neighbors count as background.
        if (y < 0 || x < 0 || y >= std::ptrdiff_t(h) || x >= std::ptrdiff_t(w)) return false;
        return img.at4(b, 0, std::size_t(y), std::size_t(x)) >= 0.5;
    };
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const auto yy = std::ptrdiff_t(y), xx = std::ptrdiff_t(x);
                const bool edge = fg(b, yy, xx) &&
                                  (!fg(b, yy - 1, xx) || !fg(b, yy + 1, xx) ||
                                   !fg(b, yy, xx - 1) || !fg(b, yy, xx + 1));
                out.at4(b, 0, y, x) = edge ? 1.0 : 0.0;
            }
        }
    }
    return out;
}

Tensor rotate90(const Tensor& img) {
    if (img.rank() != 4) throw UsageError("rotate90 expects [N,1,H,W]");
    const std::size_t n = img.dim(0), h = img.dim(2), w = img.dim(3);
    if (h != w) throw UsageError("rotate90 requires square images, got " + std::to_string(h) +
                                 "x" + std::to_string(w));
    Tensor out(img.shape());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out.at4(b, 0, y, x) = img.at4(b, 0, x, h - 1 - y);
    return out;
}

Tensor apply_truth_transform(TruthTransform t, const Tensor& img) {
    switch (t) {
        case TruthTransform::Identity: return img;
        case TruthTransform::Edge: return edge_transform(img);
        case TruthTransform::Negative: return negative_transform(img);
        case TruthTransform::Rotate90: return rotate90(img);
    }
    throw UsageError("unknown truth transform");
}

DomainPair make_domain_pair(const ImageCorpus& corpus, TruthTransform transform, Rng& rng) {
    auto [half1, half2] = split_disjoint(corpus, rng);
    DomainPair pair;
    pair.truth_transform = transform;
    pair.domain1 = std::move(half1);
    pair.domain2 = ImageCorpus{apply_truth_transform(transform, half2.images), half2.labels,
                               half2.provenance + "+" + truth_transform_name(transform)};
    return pair;
}

namespace {

struct Seg {
    double x0, y0, x1, y1;
};

double seg_dist(double px, double py, const Seg& s) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = s.x0 + t * dx, cy = s.y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

}  // namespace

ImageCorpus make_synthetic_corpus(std::size_t n, std::size_t size, Rng& rng) {
    if (size < 8) throw UsageError("synthetic corpus needs size >= 8, got " + std::to_string(size));
    Tensor images({n, 1, size, size});
    std::vector<int> labels(n);
    const double s = double(size);

    for (std::size_t i = 0; i < n; ++i) {
        // Round-robin class assignment keeps the histogram uniform up to the
        // remainder; all visual variety comes from the per-image jitter.
        const int cls = int(i % 10);
        labels[i] = cls;
        // Per-image jitter keeps classes distinguishable but non-identical.
        const double cx = s / 2.0 + rng.uniform(-0.08, 0.08) * s;
        const double cy = s / 2.0 + rng.uniform(-0.08, 0.08) * s;
        const double r = s * rng.uniform(0.24, 0.32);           // glyph half-extent
        const double stroke = s * rng.uniform(0.045, 0.075);    // stroke half-width

        std::vector<Seg> segs;
        double circle_r = -1.0;  // ring primitive when >= 0
        switch (cls) {
            case 0:  // ring
                circle_r = r;
                break;
            case 1:  // vertical bar
                segs.push_back({cx, cy - r, cx, cy + r});
                break;
            case 2:  // horizontal bar
                segs.push_back({cx - r, cy, cx + r, cy});
                break;
            case 3:  // plus
                segs.push_back({cx, cy - r, cx, cy + r});
                segs.push_back({cx - r, cy, cx + r, cy});
                break;
            case 4:  // backslash diagonal
                segs.push_back({cx - r, cy - r, cx + r, cy + r});
                break;
            case 5:  // slash diagonal
                segs.push_back({cx - r, cy + r, cx + r, cy - r});
                break;
            case 6:  // X
                segs.push_back({cx - r, cy - r, cx + r, cy + r});
                segs.push_back({cx - r, cy + r, cx + r, cy - r});
                break;
            case 7:  // square outline
                segs.push_back({cx - r, cy - r, cx + r, cy - r});
                segs.push_back({cx + r, cy - r, cx + r, cy + r});
                segs.push_back({cx + r, cy + r, cx - r, cy + r});
                segs.push_back({cx - r, cy + r, cx - r, cy - r});
                break;
            case 8:  // two horizontal bars
                segs.push_back({cx - r, cy - r * 0.6, cx + r, cy - r * 0.6});
                segs.push_back({cx - r, cy + r * 0.6, cx + r, cy + r * 0.6});
                break;
            case 9:  // ring with vertical bar
                circle_r = r * 0.8;
                segs.push_back({cx, cy - r, cx, cy + r});
                break;
        }

        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double px = double(x) + 0.5, py = double(y) + 0.5;
                double d = 1e30;
                for (const auto& seg : segs) d = std::min(d, seg_dist(px, py, seg));
                if (circle_r >= 0.0)
                    d = std::min(d, std::abs(std::hypot(px - cx, py - cy) - circle_r));
                // One-pixel anti-aliasing ramp at the stroke boundary.
                images.at4(i, 0, y, x) = clamp01(stroke + 0.5 - d);
            }
        }
    }
    return ImageCorpus{std::move(images), std::move(labels), "synthetic"};
}

Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 4) throw UsageError("resize_bilinear expects [N,1,H,W]");
    const std::size_t n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
    Tensor out({n, c, out_h, out_w});
    // Corner-aligned sampling maps the first/last pixel centers onto each other.
    const double sy = out_h > 1 ? double(h - 1) / double(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? double(w - 1) / double(out_w - 1) : 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < out_h; ++y) {
                const double fy = double(y) * sy;
                const std::size_t y0 = std::min(std::size_t(fy), h - 1);
                const std::size_t y1 = std::min(y0 + 1, h - 1);
                const double ty = fy - double(y0);
                for (std::size_t x = 0; x < out_w; ++x) {
                    const double fx = double(x) * sx;
                    const std::size_t x0 = std::min(std::size_t(fx), w - 1);
                    const std::size_t x1 = std::min(x0 + 1, w - 1);
                    const double tx = fx - double(x0);
                    const double top = (1.0 - tx) * img.at4(b, ch, y0, x0) +
                                       tx * img.at4(b, ch, y0, x1);
                    const double bot = (1.0 - tx) * img.at4(b, ch, y1, x0) +
                                       tx * img.at4(b, ch, y1, x1);
                    out.at4(b, ch, y, x) = (1.0 - ty) * top + ty * bot;
                }
            }
        }
    }
    return out;
}

}  // namespace cogan
