#include "cogan/optim.hpp"

#include <cmath>
#include <deque>

#include "cogan/errors.hpp"

namespace cogan {

void AdamState::step(const std::vector<Param>& params, const GradientMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& p : params) {
        const Tensor* g = grads.find(p.id);
        if (!g) continue;
        Tensor& theta = *p.value;
        if (!g->same_shape(theta))
            throw UsageError("adam: gradient shape " + shape_to_string(g->shape()) + " != param shape " +
                             shape_to_string(theta.shape()) + " for " + p.name);
        auto it = slots_.find(p.id);
        if (it == slots_.end())
            it = slots_.emplace(p.id, Slot{Tensor(theta.shape()), Tensor(theta.shape())}).first;
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = (*g)[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

const AdamState::Slot* AdamState::slot(std::uint64_t id) const {
    auto it = slots_.find(id);
    return it == slots_.end() ? nullptr : &it->second;
}

LbfgsResult lbfgs_minimize(const std::function<double(const Tensor&, Tensor&)>& objective, const Tensor& x0,
                           const LbfgsOptions& opts) {
    const std::size_t n = x0.size();
    LbfgsResult res;
    Tensor x = x0;
    if (opts.project) opts.project(x);
    Tensor g(x.shape());
    double f = objective(x, g);
    if (!std::isfinite(f) || !g.all_finite())
        throw NumericError("lbfgs: non-finite objective or gradient at the starting point");
    res.trace.push_back(f);

    std::deque<Tensor> s_hist, y_hist;
    std::deque<double> rho_hist;
    double gamma = 1.0;

    auto inf_norm = [](const Tensor& t) { return max_abs(t); };

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (inf_norm(g) < opts.grad_tol) {
            res.status = LbfgsStatus::Converged;
            break;
        }
        // two-loop recursion
        Tensor q = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            alpha[i] = rho_hist[i] * dot(s_hist[i], q);
            for (std::size_t j = 0; j < n; ++j) q[j] -= alpha[i] * y_hist[i][j];
        }
        for (std::size_t j = 0; j < n; ++j) q[j] *= gamma;
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * dot(y_hist[i], q);
            for (std::size_t j = 0; j < n; ++j) q[j] += (alpha[i] - beta) * s_hist[i][j];
        }
        // d = -q is the search direction; fall back to steepest descent when
        // the recursion fails to produce one
        double dphi0 = -dot(g, q);
        if (!(dphi0 < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            gamma = 1.0;
            q = g;
            dphi0 = -dot(g, g);
            if (!(dphi0 < 0.0)) {
                res.status = LbfgsStatus::LineSearchFailed;
                break;
            }
        }

        bool accepted = false;
        Tensor x_new(x.shape()), g_new(x.shape());
        double f_new = f;

        auto eval_at = [&](double a) {
            for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] - a * q[j];
            if (opts.project) opts.project(x_new);
            f_new = objective(x_new, g_new);
        };

        if (opts.project) {
            // Projection makes the line a broken path, so the Wolfe curvature
            // test is meaningless; backtrack on Armijo over the reached point.
            double step = 1.0;
            for (int ls = 0; ls < opts.max_line_search; ++ls) {
                eval_at(step);
                double gdx = 0.0;
                for (std::size_t j = 0; j < n; ++j) gdx += g[j] * (x_new[j] - x[j]);
                if (std::isfinite(f_new) && f_new <= f + opts.armijo_c1 * gdx && gdx < 0.0) {
                    accepted = true;
                    break;
                }
                step *= opts.backtrack;
            }
        } else {
            // Strong Wolfe line search (sufficient decrease + curvature),
            // bracketing with bisection zoom.
            const double c1 = opts.armijo_c1, c2 = 0.9;
            auto dphi_at = [&]() { return -dot(g_new, q); };
            auto zoom = [&](double lo, double flo, double hi) {
                for (int it = 0; it < opts.max_line_search; ++it) {
                    double a = 0.5 * (lo + hi);
                    eval_at(a);
                    if (!std::isfinite(f_new) || f_new > f + c1 * a * dphi0 || f_new >= flo) {
                        hi = a;
                        continue;
                    }
                    double dphi = dphi_at();
                    if (std::abs(dphi) <= -c2 * dphi0) return true;
                    if (dphi * (hi - lo) >= 0.0) hi = lo;
                    lo = a;
                    flo = f_new;
                }
                // fall back to the best admissible point found, if any
                eval_at(lo);
                return std::isfinite(f_new) && f_new <= f + c1 * lo * dphi0 && lo > 0.0;
            };

            double a_prev = 0.0, f_prev = f, a = 1.0;
            for (int it = 0; it < opts.max_line_search; ++it) {
                eval_at(a);
                if (!std::isfinite(f_new) || f_new > f + c1 * a * dphi0 || (it > 0 && f_new >= f_prev)) {
                    accepted = zoom(a_prev, f_prev, a);
                    break;
                }
                double dphi = dphi_at();
                if (std::abs(dphi) <= -c2 * dphi0) {
                    accepted = true;
                    break;
                }
                if (dphi >= 0.0) {
                    accepted = zoom(a, f_new, a_prev);
                    break;
                }
                a_prev = a;
                f_prev = f_new;
                a *= 2.0;
            }
        }
        if (!accepted) {
            res.status = LbfgsStatus::LineSearchFailed;
            break;
        }
        Tensor s(x.shape()), y(x.shape());
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = x_new[j] - x[j];
            y[j] = g_new[j] - g[j];
        }
        // The Wolfe curvature condition guarantees s'y > 0. The projected
        // Armijo path does not, so damp those pairs against B0 = I/gamma
        // (Powell) instead of discarding them and stalling on stale history.
        const double ss = dot(s, s);
        if (ss > 0.0) {
            double sy = dot(s, y);
            const double sBs = ss / gamma;
            if (opts.project && sy < 0.2 * sBs) {
                const double theta = 0.8 * sBs / (sBs - sy);
                for (std::size_t j = 0; j < n; ++j) y[j] = theta * y[j] + (1.0 - theta) * s[j] / gamma;
                sy = dot(s, y);
            }
            if (sy > 1e-12 * std::sqrt(ss) * std::sqrt(dot(y, y))) {
                s_hist.push_back(std::move(s));
                y_hist.push_back(std::move(y));
                rho_hist.push_back(1.0 / sy);
                if (static_cast<int>(s_hist.size()) > opts.memory) {
                    s_hist.pop_front();
                    y_hist.pop_front();
                    rho_hist.pop_front();
                }
                gamma = sy / dot(y_hist.back(), y_hist.back());
            }
        }
        x = std::move(x_new);
        g = std::move(g_new);
        f = f_new;
        res.trace.push_back(f);
        res.iterations = iter + 1;
    }
    if (res.status == LbfgsStatus::MaxIterations && inf_norm(g) < opts.grad_tol)
        res.status = LbfgsStatus::Converged;
    res.x = std::move(x);
    res.loss = f;
    return res;
}

}  // namespace cogan
