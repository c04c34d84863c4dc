#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cogan/rng.hpp"
#include "cogan/tensor.hpp"

namespace cogan {

/// A set of grayscale images [N,1,H,W] with values in [0,1] and optional
/// integer class labels. Corpora are immutable after construction.
struct ImageCorpus {
    Tensor images;                          // [N,1,H,W]
    std::optional<std::vector<int>> labels; // length N when present
    std::string provenance;                 // source + transform chain

    std::size_t count() const { return images.empty() ? 0 : images.dim(0); }
    std::size_t height() const { return images.dim(2); }
    std::size_t width() const { return images.dim(3); }

    /// One image as a [1,1,H,W] tensor.
    Tensor image(std::size_t i) const;
    /// Rows `indices` gathered into a [B,1,H,W] batch.
    Tensor batch(const std::vector<std::size_t>& indices) const;
    /// Labels for `indices`; throws UsageError when labels are absent.
    std::vector<int> label_batch(const std::vector<std::size_t>& indices) const;

    /// A copy with labels removed. This is the only view the adversarial
    /// trainer may receive for a target domain.
    ImageCorpus without_labels() const;
};

enum class TruthTransform { Identity, Edge, Negative, Rotate90 };

const char* truth_transform_name(TruthTransform t);
TruthTransform truth_transform_from_name(const std::string& name);

/// Two equal-size corpora drawn from non-overlapping source indices. The
/// truth transform is recorded for evaluation only; training code never
/// receives aligned (domain1, domain2) pairs.
struct DomainPair {
    ImageCorpus domain1;
    ImageCorpus domain2;
    TruthTransform truth_transform = TruthTransform::Identity;
};

/// Reads big-endian IDX image (magic 0x00000803) and optional label
/// (0x00000801) files; pixels are scaled to [0,1] by division by 255.
ImageCorpus load_idx(const std::string& images_path,
                     const std::string& labels_path = "");

/// Random permutation split into first ceil(N/2) vs the rest.
std::pair<ImageCorpus, ImageCorpus> split_disjoint(const ImageCorpus& corpus, Rng& rng);

// Deterministic pure image transforms. Each maps [0,1] images to [0,1]
// images and operates elementwise/batchwise on [N,1,H,W] or [1,1,H,W].
Tensor negative_transform(const Tensor& img);
/// Binarize at 0.5, then mark foreground pixels with at least one 4-neighbor
/// background pixel (the image border counts as background). Output in {0,1}.
Tensor edge_transform(const Tensor& img);
/// Counter-clockwise quarter turn: out[y][x] = in[x][H-1-y]. Square only.
Tensor rotate90(const Tensor& img);
/// Dispatch on the enum; Identity returns a copy.
Tensor apply_truth_transform(TruthTransform t, const Tensor& img);

/// split_disjoint, then apply `transform` to the second half only.
DomainPair make_domain_pair(const ImageCorpus& corpus, TruthTransform transform, Rng& rng);

/// Procedurally drawn anti-aliased glyphs (bars, circles, crosses, ...) in 10
/// classes, deterministic per rng state. size >= 8.
ImageCorpus make_synthetic_corpus(std::size_t n, std::size_t size, Rng& rng);

/// Bilinear resize of every image in the batch (used to bring 16x16 sources
/// to 28x28). Preserves [0,1].
Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w);

}  // namespace cogan
