#include "cogan/layers.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstring>

#include "cogan/errors.hpp"

namespace cogan {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::uint64_t next_param_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

// ---------------------------------------------------------------- GradientMap

void GradientMap::add(std::uint64_t id, Tensor g) {
    auto it = grads_.find(id);
    if (it == grads_.end()) {
        grads_.emplace(id, std::move(g));
        return;
    }
    Tensor& acc = it->second;
    if (!acc.same_shape(g)) throw UsageError("gradient shape mismatch for param id " + std::to_string(id));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

const Tensor* GradientMap::find(std::uint64_t id) const {
    auto it = grads_.find(id);
    return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& GradientMap::at(std::uint64_t id) const {
    const Tensor* t = find(id);
    if (!t) throw UsageError("no gradient for param id " + std::to_string(id));
    return *t;
}

void GradientMap::accumulate(const GradientMap& other) {
    for (const auto& [id, g] : other.grads_) add(id, g);
}

// ----------------------------------------------------------------- Layer base

Param Layer::make_param(const std::string& name, Tensor init) {
    Param p{name, std::make_shared<Tensor>(std::move(init)), next_param_id()};
    params_.push_back(p);
    return p;
}

void Layer::tie_to(const Layer& other) {
    if (std::string(kind()) != other.kind())
        throw ConfigError(std::string("cannot tie ") + kind() + " to " + other.kind());
    if (params_.size() != other.params_.size()) throw ConfigError("tie: parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].value->same_shape(*other.params_[i].value))
            throw ConfigError("tie: shape mismatch on " + params_[i].name + ": " +
                              shape_to_string(params_[i].value->shape()) + " vs " +
                              shape_to_string(other.params_[i].value->shape()));
    }
    params_ = other.params_;
}

// -------------------------------------------------------------------- helpers

namespace {

Tensor gaussian_tensor(Shape shape, Rng& rng, double sd) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sd);
    return t;
}

// Conv geometry: output extent of a cross-correlation.
std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* who) {
    if (in + 2 * p < k)
        throw ConfigError(std::string(who) + ": input extent " + std::to_string(in) + " (+2*" +
                          std::to_string(p) + " pad) smaller than kernel " + std::to_string(k));
    return (in + 2 * p - k) / s + 1;
}

// Gather image patches of one sample into a [C*kh*kw, Ho*Wo] matrix.
void im2col(const double* im, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
            std::size_t s, std::size_t p, std::size_t Ho, std::size_t Wo, double* cols) {
    const std::size_t ncols = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                double* row = cols + ((c * kh + ki) * kw + kj) * ncols;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) - static_cast<std::ptrdiff_t>(p);
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) - static_cast<std::ptrdiff_t>(p);
                        double v = 0.0;
                        if (ih >= 0 && ih < static_cast<std::ptrdiff_t>(H) && iw >= 0 && iw < static_cast<std::ptrdiff_t>(W))
                            v = im[(c * H + ih) * W + iw];
                        row[oh * Wo + ow] = v;
                    }
                }
            }
        }
    }
}

// Scatter-add the adjoint of im2col back into one sample image.
void col2im(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
            std::size_t s, std::size_t p, std::size_t Ho, std::size_t Wo, double* im) {
    const std::size_t ncols = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const double* row = cols + ((c * kh + ki) * kw + kj) * ncols;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) - static_cast<std::ptrdiff_t>(p);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) - static_cast<std::ptrdiff_t>(p);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        im[(c * H + ih) * W + iw] += row[oh * Wo + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------- Dense

DenseLayer::DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng, double init_std)
    : in_(in_features), out_(out_features), init_std_(init_std) {
    make_param("weight", gaussian_tensor({out_, in_}, rng, init_std));
    make_param("bias", Tensor({out_}));
}

Shape DenseLayer::output_shape(const Shape& in) const {
    std::size_t flat = 1;
    for (std::size_t i = 1; i < in.size(); ++i) flat *= in[i];
    if (flat != in_)
        throw ConfigError("Dense: flattened input length " + std::to_string(flat) + " != in_features " +
                          std::to_string(in_));
    return {in[0], out_};
}

Tensor DenseLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    const std::size_t N = in.dim(0);
    Shape out_shape = output_shape(in.shape());
    if (cache) {
        cache->valid = true;
        cache->input = in;
    }
    const Tensor& W = *params_[0].value;
    const Tensor& b = *params_[1].value;
    Tensor out(out_shape);
    CMapRM X(in.data(), N, in_);
    CMapRM Wm(W.data(), out_, in_);
    MapRM Y(out.data(), N, out_);
    Y.noalias() = X * Wm.transpose();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < out_; ++o) out.at2(n, o) += b[o];
    return out;
}

Tensor DenseLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const {
    const Tensor& in = cache.input;
    const std::size_t N = in.dim(0);
    const Tensor& W = *params_[0].value;
    Tensor dW({out_, in_});
    Tensor db({out_});
    Tensor dX(in.shape());
    CMapRM X(in.data(), N, in_);
    CMapRM dY(upstream.data(), N, out_);
    CMapRM Wm(W.data(), out_, in_);
    MapRM dWm(dW.data(), out_, in_);
    MapRM dXm(dX.data(), N, in_);
    dWm.noalias() = dY.transpose() * X;
    dXm.noalias() = dY * Wm;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < out_; ++o) db[o] += upstream.at2(n, o);
    grads.add(params_[0].id, std::move(dW));
    grads.add(params_[1].id, std::move(db));
    return dX;
}

std::unique_ptr<Layer> DenseLayer::clone() const {
    Rng dummy(0);
    auto c = std::make_unique<DenseLayer>(in_, out_, dummy, init_std_);
    for (std::size_t i = 0; i < params_.size(); ++i) *c->params_[i].value = *params_[i].value;
    return c;
}

// ----------------------------------------------------------------------- Conv

Conv2dLayer::Conv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                         std::size_t stride, std::size_t pad, Rng& rng, double init_std)
    : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), stride_(stride), pad_(pad), init_std_(init_std) {
    make_param("weight", gaussian_tensor({out_ch_, in_ch_, kh_, kw_}, rng, init_std));
    make_param("bias", Tensor({out_ch_}));
}

Shape Conv2dLayer::output_shape(const Shape& in) const {
    if (in.size() != 4) throw ConfigError("Conv: expected 4-d input, got " + shape_to_string(in));
    if (in[1] != in_ch_)
        throw ConfigError("Conv: input has " + std::to_string(in[1]) + " channels, layer expects " +
                          std::to_string(in_ch_));
    return {in[0], out_ch_, conv_extent(in[2], kh_, stride_, pad_, "Conv"),
            conv_extent(in[3], kw_, stride_, pad_, "Conv")};
}

Tensor Conv2dLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    Shape os = output_shape(in.shape());
    const std::size_t N = in.dim(0), H = in.dim(2), W = in.dim(3), Ho = os[2], Wo = os[3];
    if (cache) {
        cache->valid = true;
        cache->input = in;
    }
    const Tensor& Wt = *params_[0].value;
    const Tensor& b = *params_[1].value;
    const std::size_t krows = in_ch_ * kh_ * kw_;
    Tensor out(os);
    AlignedVec cols(krows * Ho * Wo);
    CMapRM Wm(Wt.data(), out_ch_, krows);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(in.data() + n * in_ch_ * H * W, in_ch_, H, W, kh_, kw_, stride_, pad_, Ho, Wo, cols.data());
        CMapRM C(cols.data(), krows, Ho * Wo);
        MapRM Y(out.data() + n * out_ch_ * Ho * Wo, out_ch_, Ho * Wo);
        Y.noalias() = Wm * C;
        for (std::size_t oc = 0; oc < out_ch_; ++oc) Y.row(oc).array() += b[oc];
    }
    return out;
}

Tensor Conv2dLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const {
    const Tensor& in = cache.input;
    const std::size_t N = in.dim(0), H = in.dim(2), W = in.dim(3);
    const std::size_t Ho = upstream.dim(2), Wo = upstream.dim(3);
    const std::size_t krows = in_ch_ * kh_ * kw_;
    const Tensor& Wt = *params_[0].value;
    Tensor dW({out_ch_, in_ch_, kh_, kw_});
    Tensor db({out_ch_});
    Tensor dX(in.shape());
    AlignedVec cols(krows * Ho * Wo);
    AlignedVec dcols(krows * Ho * Wo);
    CMapRM Wm(Wt.data(), out_ch_, krows);
    MapRM dWm(dW.data(), out_ch_, krows);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(in.data() + n * in_ch_ * H * W, in_ch_, H, W, kh_, kw_, stride_, pad_, Ho, Wo, cols.data());
        CMapRM C(cols.data(), krows, Ho * Wo);
        CMapRM dY(upstream.data() + n * out_ch_ * Ho * Wo, out_ch_, Ho * Wo);
        dWm.noalias() += dY * C.transpose();
        for (std::size_t oc = 0; oc < out_ch_; ++oc) db[oc] += dY.row(oc).sum();
        MapRM dC(dcols.data(), krows, Ho * Wo);
        dC.noalias() = Wm.transpose() * dY;
        col2im(dcols.data(), in_ch_, H, W, kh_, kw_, stride_, pad_, Ho, Wo, dX.data() + n * in_ch_ * H * W);
    }
    grads.add(params_[0].id, std::move(dW));
    grads.add(params_[1].id, std::move(db));
    return dX;
}

std::unique_ptr<Layer> Conv2dLayer::clone() const {
    Rng dummy(0);
    auto c = std::make_unique<Conv2dLayer>(in_ch_, out_ch_, kh_, kw_, stride_, pad_, dummy, init_std_);
    for (std::size_t i = 0; i < params_.size(); ++i) *c->params_[i].value = *params_[i].value;
    return c;
}

// ------------------------------------------------------------ TransposedConv

TransposedConv2dLayer::TransposedConv2dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh,
                                             std::size_t kw, std::size_t stride, std::size_t pad, Rng& rng,
                                             double init_std)
    : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), stride_(stride), pad_(pad), init_std_(init_std) {
    make_param("weight", gaussian_tensor({in_ch_, out_ch_, kh_, kw_}, rng, init_std));
    make_param("bias", Tensor({out_ch_}));
}

Shape TransposedConv2dLayer::output_shape(const Shape& in) const {
    if (in.size() != 4) throw ConfigError("TransposedConv: expected 4-d input, got " + shape_to_string(in));
    if (in[1] != in_ch_)
        throw ConfigError("TransposedConv: input has " + std::to_string(in[1]) + " channels, layer expects " +
                          std::to_string(in_ch_));
    const std::size_t Ho = (in[2] - 1) * stride_ + kh_;
    const std::size_t Wo = (in[3] - 1) * stride_ + kw_;
    if (Ho < 2 * pad_ || Wo < 2 * pad_)
        throw ConfigError("TransposedConv: padding " + std::to_string(pad_) + " exceeds output extent");
    return {in[0], out_ch_, Ho - 2 * pad_, Wo - 2 * pad_};
}

Tensor TransposedConv2dLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    Shape os = output_shape(in.shape());
    const std::size_t N = in.dim(0), Hi = in.dim(2), Wi = in.dim(3), Ho = os[2], Wo = os[3];
    if (cache) {
        cache->valid = true;
        cache->input = in;
    }
    const Tensor& Wt = *params_[0].value;
    const Tensor& b = *params_[1].value;
    const std::size_t krows = out_ch_ * kh_ * kw_;
    Tensor out(os);
    AlignedVec cols(krows * Hi * Wi);
    CMapRM Wm(Wt.data(), in_ch_, krows);
    for (std::size_t n = 0; n < N; ++n) {
        CMapRM Y(in.data() + n * in_ch_ * Hi * Wi, in_ch_, Hi * Wi);
        MapRM C(cols.data(), krows, Hi * Wi);
        C.noalias() = Wm.transpose() * Y;
        double* o = out.data() + n * out_ch_ * Ho * Wo;
        col2im(cols.data(), out_ch_, Ho, Wo, kh_, kw_, stride_, pad_, Hi, Wi, o);
        for (std::size_t oc = 0; oc < out_ch_; ++oc)
            for (std::size_t i = 0; i < Ho * Wo; ++i) o[oc * Ho * Wo + i] += b[oc];
    }
    return out;
}

Tensor TransposedConv2dLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const {
    const Tensor& in = cache.input;
    const std::size_t N = in.dim(0), Hi = in.dim(2), Wi = in.dim(3);
    const std::size_t Ho = upstream.dim(2), Wo = upstream.dim(3);
    const std::size_t krows = out_ch_ * kh_ * kw_;
    const Tensor& Wt = *params_[0].value;
    Tensor dW({in_ch_, out_ch_, kh_, kw_});
    Tensor db({out_ch_});
    Tensor dX(in.shape());
    AlignedVec ucols(krows * Hi * Wi);
    CMapRM Wm(Wt.data(), in_ch_, krows);
    MapRM dWm(dW.data(), in_ch_, krows);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(upstream.data() + n * out_ch_ * Ho * Wo, out_ch_, Ho, Wo, kh_, kw_, stride_, pad_, Hi, Wi,
               ucols.data());
        CMapRM U(ucols.data(), krows, Hi * Wi);
        CMapRM Y(in.data() + n * in_ch_ * Hi * Wi, in_ch_, Hi * Wi);
        MapRM dYm(dX.data() + n * in_ch_ * Hi * Wi, in_ch_, Hi * Wi);
        dYm.noalias() = Wm * U;
        dWm.noalias() += Y * U.transpose();
        const double* u = upstream.data() + n * out_ch_ * Ho * Wo;
        for (std::size_t oc = 0; oc < out_ch_; ++oc)
            for (std::size_t i = 0; i < Ho * Wo; ++i) db[oc] += u[oc * Ho * Wo + i];
    }
    grads.add(params_[0].id, std::move(dW));
    grads.add(params_[1].id, std::move(db));
    return dX;
}

std::unique_ptr<Layer> TransposedConv2dLayer::clone() const {
    Rng dummy(0);
    auto c = std::make_unique<TransposedConv2dLayer>(in_ch_, out_ch_, kh_, kw_, stride_, pad_, dummy, init_std_);
    for (std::size_t i = 0; i < params_.size(); ++i) *c->params_[i].value = *params_[i].value;
    return c;
}

// ------------------------------------------------------------------ BatchNorm

BatchNormLayer::BatchNormLayer(std::size_t channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
    make_param("gamma", Tensor({channels_}, 1.0));
    make_param("beta", Tensor({channels_}));
    running_mean_ = std::make_shared<Tensor>(Shape{channels_});
    running_var_ = std::make_shared<Tensor>(Shape{channels_}, 1.0);
}

std::vector<Buffer> BatchNormLayer::buffers() {
    return {{"running_mean", running_mean_}, {"running_var", running_var_}};
}

namespace {
// Channel layout for BN/PReLU: [N,C,spatial] or [N,F] with spatial == 1.
void bn_dims(const Tensor& t, std::size_t channels, const char* who, std::size_t& N, std::size_t& S) {
    if (t.rank() == 4) {
        N = t.dim(0);
        S = t.dim(2) * t.dim(3);
        if (t.dim(1) != channels) throw ConfigError(std::string(who) + ": channel mismatch");
    } else if (t.rank() == 2) {
        N = t.dim(0);
        S = 1;
        if (t.dim(1) != channels) throw ConfigError(std::string(who) + ": feature mismatch");
    } else {
        throw ConfigError(std::string(who) + ": expected 2-d or 4-d input, got " + shape_to_string(t.shape()));
    }
}
}  // namespace

Tensor BatchNormLayer::forward(const Tensor& in, Mode mode, LayerCache* cache) {
    std::size_t N, S;
    bn_dims(in, channels_, "BatchNorm", N, S);
    const Tensor& gamma = *params_[0].value;
    const Tensor& beta = *params_[1].value;
    Tensor out(in.shape());
    Tensor mean({channels_});
    Tensor var({channels_});
    if (mode == Mode::Train) {
        if (N < 2) throw UsageError("BatchNorm: train mode requires batch >= 2");
        const double m = static_cast<double>(N * S);
        for (std::size_t c = 0; c < channels_; ++c) {
            double sum = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = in.data() + (n * channels_ + c) * S;
                for (std::size_t i = 0; i < S; ++i) sum += p[i];
            }
            mean[c] = sum / m;
            double sq = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = in.data() + (n * channels_ + c) * S;
                for (std::size_t i = 0; i < S; ++i) {
                    const double d = p[i] - mean[c];
                    sq += d * d;
                }
            }
            var[c] = sq / m;
            (*running_mean_)[c] = momentum_ * (*running_mean_)[c] + (1.0 - momentum_) * mean[c];
            (*running_var_)[c] = momentum_ * (*running_var_)[c] + (1.0 - momentum_) * var[c];
        }
    } else {
        mean = *running_mean_;
        var = *running_var_;
    }
    Tensor xhat(in.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + eps_);
        for (std::size_t n = 0; n < N; ++n) {
            const double* p = in.data() + (n * channels_ + c) * S;
            double* xh = xhat.data() + (n * channels_ + c) * S;
            double* o = out.data() + (n * channels_ + c) * S;
            for (std::size_t i = 0; i < S; ++i) {
                xh[i] = (p[i] - mean[c]) * inv;
                o[i] = gamma[c] * xh[i] + beta[c];
            }
        }
    }
    if (cache) {
        cache->valid = true;
        cache->mode = mode;
        cache->input = in;
        cache->aux = {xhat, var};
    }
    return out;
}

Tensor BatchNormLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const {
    std::size_t N, S;
    bn_dims(cache.input, channels_, "BatchNorm", N, S);
    const Tensor& gamma = *params_[0].value;
    const Tensor& xhat = cache.aux[0];
    const Tensor& var = cache.aux[1];
    Tensor dgamma({channels_});
    Tensor dbeta({channels_});
    Tensor dX(cache.input.shape());
    const double m = static_cast<double>(N * S);
    for (std::size_t c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + eps_);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* dy = upstream.data() + (n * channels_ + c) * S;
            const double* xh = xhat.data() + (n * channels_ + c) * S;
            for (std::size_t i = 0; i < S; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xh[i];
            }
        }
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
        for (std::size_t n = 0; n < N; ++n) {
            const double* dy = upstream.data() + (n * channels_ + c) * S;
            const double* xh = xhat.data() + (n * channels_ + c) * S;
            double* dx = dX.data() + (n * channels_ + c) * S;
            if (cache.mode == Mode::Train) {
                for (std::size_t i = 0; i < S; ++i)
                    dx[i] = gamma[c] * inv * (dy[i] - sum_dy / m - xh[i] * sum_dy_xhat / m);
            } else {
                for (std::size_t i = 0; i < S; ++i) dx[i] = gamma[c] * inv * dy[i];
            }
        }
    }
    grads.add(params_[0].id, std::move(dgamma));
    grads.add(params_[1].id, std::move(dbeta));
    return dX;
}

std::unique_ptr<Layer> BatchNormLayer::clone() const {
    auto c = std::make_unique<BatchNormLayer>(channels_, eps_, momentum_);
    for (std::size_t i = 0; i < params_.size(); ++i) *c->params_[i].value = *params_[i].value;
    *c->running_mean_ = *running_mean_;
    *c->running_var_ = *running_var_;
    return c;
}

// ---------------------------------------------------------------------- PReLU

PReluLayer::PReluLayer(std::size_t channels, double init_slope) : channels_(channels), init_slope_(init_slope) {
    make_param("slope", Tensor({channels_}, init_slope));
}

Tensor PReluLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    std::size_t N, S;
    bn_dims(in, channels_, "PReLU", N, S);
    if (cache) {
        cache->valid = true;
        cache->input = in;
    }
    const Tensor& a = *params_[0].value;
    Tensor out(in.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < channels_; ++c) {
            const double* p = in.data() + (n * channels_ + c) * S;
            double* o = out.data() + (n * channels_ + c) * S;
            for (std::size_t i = 0; i < S; ++i) o[i] = p[i] >= 0.0 ? p[i] : a[c] * p[i];
        }
    return out;
}

Tensor PReluLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap& grads) const {
    std::size_t N, S;
    bn_dims(cache.input, channels_, "PReLU", N, S);
    const Tensor& a = *params_[0].value;
    Tensor da({channels_});
    Tensor dX(cache.input.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < channels_; ++c) {
            const double* p = cache.input.data() + (n * channels_ + c) * S;
            const double* dy = upstream.data() + (n * channels_ + c) * S;
            double* dx = dX.data() + (n * channels_ + c) * S;
            for (std::size_t i = 0; i < S; ++i) {
                if (p[i] >= 0.0) {
                    dx[i] = dy[i];
                } else {
                    dx[i] = a[c] * dy[i];
                    da[c] += dy[i] * p[i];
                }
            }
        }
    grads.add(params_[0].id, std::move(da));
    return dX;
}

std::unique_ptr<Layer> PReluLayer::clone() const {
    auto c = std::make_unique<PReluLayer>(channels_, init_slope_);
    *c->params_[0].value = *params_[0].value;
    return c;
}

// -------------------------------------------------------------------- MaxPool

MaxPoolLayer::MaxPoolLayer(std::size_t window) : window_(window) {
    if (window_ < 1) throw ConfigError("MaxPool: window must be >= 1");
}

Shape MaxPoolLayer::output_shape(const Shape& in) const {
    if (in.size() != 4) throw ConfigError("MaxPool: expected 4-d input, got " + shape_to_string(in));
    if (in[2] % window_ != 0 || in[3] % window_ != 0)
        throw ConfigError("MaxPool: extents " + std::to_string(in[2]) + "x" + std::to_string(in[3]) +
                          " not divisible by window " + std::to_string(window_));
    return {in[0], in[1], in[2] / window_, in[3] / window_};
}

Tensor MaxPoolLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    Shape os = output_shape(in.shape());
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3), Ho = os[2], Wo = os[3];
    Tensor out(os);
    std::vector<std::size_t> argmax(out.size());
    std::size_t oi = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
                    double best = -1e308;
                    std::size_t best_idx = 0;
                    for (std::size_t i = 0; i < window_; ++i)
                        for (std::size_t j = 0; j < window_; ++j) {
                            const std::size_t idx =
                                ((n * C + c) * H + oh * window_ + i) * W + ow * window_ + j;
                            // strict > keeps the first row-major maximum on ties
                            if (in[idx] > best) {
                                best = in[idx];
                                best_idx = idx;
                            }
                        }
                    out[oi] = best;
                    argmax[oi] = best_idx;
                }
    if (cache) {
        cache->valid = true;
        cache->input = in;
        cache->idx = std::move(argmax);
    }
    return out;
}

Tensor MaxPoolLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap&) const {
    Tensor dX(cache.input.shape());
    for (std::size_t i = 0; i < upstream.size(); ++i) dX[cache.idx[i]] += upstream[i];
    return dX;
}

std::unique_ptr<Layer> MaxPoolLayer::clone() const { return std::make_unique<MaxPoolLayer>(window_); }

// -------------------------------------------------------------------- Reshape

ReshapeLayer::ReshapeLayer(Shape tail) : tail_(std::move(tail)) {}

Shape ReshapeLayer::output_shape(const Shape& in) const {
    std::size_t flat = 1;
    for (std::size_t i = 1; i < in.size(); ++i) flat *= in[i];
    if (flat != shape_numel(tail_))
        throw ConfigError("Reshape: cannot view " + shape_to_string(in) + " as batch x " +
                          shape_to_string(tail_));
    Shape out{in[0]};
    out.insert(out.end(), tail_.begin(), tail_.end());
    return out;
}

Tensor ReshapeLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    if (cache) {
        cache->valid = true;
        cache->input = Tensor(in.shape());  // only the shape is needed
    }
    return in.reshaped(output_shape(in.shape()));
}

Tensor ReshapeLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap&) const {
    return upstream.reshaped(cache.input.shape());
}

std::unique_ptr<Layer> ReshapeLayer::clone() const { return std::make_unique<ReshapeLayer>(tail_); }

// ---------------------------------------------------------------- activations

Tensor SigmoidLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
    if (cache) {
        cache->valid = true;
        cache->aux = {out};
    }
    return out;
}

Tensor SigmoidLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap&) const {
    const Tensor& y = cache.aux[0];
    Tensor dX(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) dX[i] = upstream[i] * y[i] * (1.0 - y[i]);
    return dX;
}

std::unique_ptr<Layer> SigmoidLayer::clone() const { return std::make_unique<SigmoidLayer>(); }

Tensor TanhLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
    if (cache) {
        cache->valid = true;
        cache->aux = {out};
    }
    return out;
}

Tensor TanhLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap&) const {
    const Tensor& y = cache.aux[0];
    Tensor dX(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) dX[i] = upstream[i] * (1.0 - y[i] * y[i]);
    return dX;
}

std::unique_ptr<Layer> TanhLayer::clone() const { return std::make_unique<TanhLayer>(); }

Tensor SoftmaxLayer::forward(const Tensor& in, Mode, LayerCache* cache) {
    if (in.rank() < 1) throw ConfigError("Softmax: scalar input");
    const std::size_t K = in.shape().back();
    const std::size_t rows = in.size() / K;
    Tensor out(in.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = in.data() + r * K;
        double* y = out.data() + r * K;
        double mx = x[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, x[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            y[k] = std::exp(x[k] - mx);
            sum += y[k];
        }
        for (std::size_t k = 0; k < K; ++k) y[k] /= sum;
    }
    if (cache) {
        cache->valid = true;
        cache->aux = {out};
    }
    return out;
}

Tensor SoftmaxLayer::backward(const LayerCache& cache, const Tensor& upstream, GradientMap&) const {
    const Tensor& y = cache.aux[0];
    const std::size_t K = y.shape().back();
    const std::size_t rows = y.size() / K;
    Tensor dX(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.data() + r * K;
        const double* ur = upstream.data() + r * K;
        double* dx = dX.data() + r * K;
        double uy = 0.0;
        for (std::size_t k = 0; k < K; ++k) uy += ur[k] * yr[k];
        for (std::size_t k = 0; k < K; ++k) dx[k] = yr[k] * (ur[k] - uy);
    }
    return dX;
}

std::unique_ptr<Layer> SoftmaxLayer::clone() const { return std::make_unique<SoftmaxLayer>(); }

}  // namespace cogan
