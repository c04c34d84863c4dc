#include "cogan/pnm.hpp"

#include <cmath>
#include <fstream>

#include "cogan/errors.hpp"

namespace cogan {

namespace {

constexpr std::size_t kGutter = 2;

Shape normalized_shape(const Tensor& t) {
    if (t.rank() == 4 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.dim(3)};
    if (t.rank() == 3) return t.shape();
    throw UsageError("emit_grid: expected [C,H,W] or [1,C,H,W], got " +
                     shape_to_string(t.shape()));
}

unsigned char to_byte(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(255.0 * c));
}

}  // namespace

void emit_grid(const std::filesystem::path& path, const std::vector<Tensor>& images,
               std::size_t cols) {
    if (images.empty()) throw UsageError("emit_grid: no images");
    if (cols == 0) throw UsageError("emit_grid: cols must be positive");
    const Shape shape = normalized_shape(images[0]);
    for (const auto& img : images)
        if (normalized_shape(img) != shape)
            throw UsageError("emit_grid: mixed image shapes, " + shape_to_string(shape) + " vs " +
                             shape_to_string(img.shape()));
    const std::size_t channels = shape[0], h = shape[1], w = shape[2];
    if (channels != 1 && channels != 3)
        throw UsageError("emit_grid: channel count must be 1 or 3, got " +
                         std::to_string(channels));

    const std::size_t rows = (images.size() + cols - 1) / cols;
    const std::size_t used_cols = std::min(cols, images.size());
    const std::size_t grid_w = used_cols * w + (used_cols - 1) * kGutter;
    const std::size_t grid_h = rows * h + (rows - 1) * kGutter;

    // White canvas, images painted over it.
    std::vector<unsigned char> canvas(grid_w * grid_h * channels, 255);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::size_t r = i / cols, c = i % cols;
        const std::size_t y0 = r * (h + kGutter), x0 = c * (w + kGutter);
        const Tensor& img = images[i];
        const double* data = img.data();
        for (std::size_t ch = 0; ch < channels; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    canvas[((y0 + y) * grid_w + (x0 + x)) * channels + ch] =
                        to_byte(data[(ch * h + y) * w + x]);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << (channels == 1 ? "P5" : "P6") << '\n' << grid_w << ' ' << grid_h << '\n' << "255\n";
    out.write(reinterpret_cast<const char*>(canvas.data()),
              static_cast<std::streamsize>(canvas.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cogan
