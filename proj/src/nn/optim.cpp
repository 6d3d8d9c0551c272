#include "cts/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cts::nn {

std::size_t ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("negative tensor shape for " + name);
    for (const Slice& s : slices_)
        if (s.name == name) throw std::invalid_argument("duplicate tensor name " + name);
    slices_.push_back({std::move(name), total_, rows, cols});
    total_ += static_cast<std::size_t>(rows * cols);
    return slices_.size() - 1;
}

const std::string& ParamLayout::owner(std::size_t i) const {
    for (const Slice& s : slices_)
        if (i >= s.offset && i < s.offset + s.size()) return s.name;
    throw std::out_of_range("flat index outside every tensor");
}

void adam_step(std::span<double> params, std::span<const double> grads, OptimState& state,
               const AdamConfig& config, const ParamLayout& layout) {
    const std::size_t n = params.size();
    if (grads.size() != n) throw std::invalid_argument("adam_step: params/grads size mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(grads[i]))
            throw std::domain_error("adam_step: non-finite gradient in tensor " + layout.owner(i));
    if (state.m.size() != n) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
        state.step = 0;
    }
    ++state.step;
    const double b1 = config.beta1, b2 = config.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i] + config.l2 * params[i];
        state.m[i] = b1 * state.m[i] + (1 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g;
        const double mhat = state.m[i] / corr1;
        const double vhat = state.v[i] / corr2;
        params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
}

std::string to_string(LbfgsStatus s) {
    switch (s) {
    case LbfgsStatus::Converged: return "converged";
    case LbfgsStatus::MaxIterations: return "max-iterations";
    case LbfgsStatus::LineSearchFailed: return "line-search-failed";
    }
    return "?";
}

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

struct Pair {
    Vec s, y;
    double rho;
};

// Two-loop recursion: returns -H * g.
Vec two_loop(const std::deque<Pair>& mem, const Vec& g) {
    Vec q = g;
    std::vector<double> alpha(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
        alpha[k] = mem[k].rho * dot(mem[k].s, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * mem[k].y[i];
    }
    if (!mem.empty()) {
        const Pair& last = mem.back();
        const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
        for (double& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
        const double beta = mem[k].rho * dot(mem[k].y, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += mem[k].s[i] * (alpha[k] - beta);
    }
    for (double& v : q) v = -v;
    return q;
}

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), clamped
// to the interior of [a, b].
double cubic_step(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    double t;
    if (disc >= 0) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        t = b - (b - a) * (db + d2 - d1) / (db - da + 2 * d2);
    } else {
        t = 0.5 * (a + b);
    }
    const double lo = std::min(a, b), hi = std::max(a, b);
    const double margin = 0.1 * (hi - lo);
    if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
    return t;
}

class Minimizer {
public:
    Minimizer(const Objective& f, const LbfgsConfig& cfg, std::size_t n)
        : f_(f), cfg_(cfg), n_(n), l1_(cfg.l1 > 0) {
        if (l1_ && !cfg.l1_mask.empty() && cfg.l1_mask.size() != n)
            throw std::invalid_argument("lbfgs: l1_mask size mismatch");
    }

    LbfgsResult run(Vec x) {
        LbfgsResult res;
        Vec g(n_);
        double fs = eval(x, g);  // smooth part
        double F = fs + penalty(x);
        res.history.push_back(F);
        Vec best = x;
        double best_F = F;
        std::deque<Pair> mem;

        for (int iter = 0; iter < cfg_.max_iterations; ++iter) {
            const Vec pg = l1_ ? pseudo_gradient(x, g) : g;
            if (norm(pg) <= cfg_.gradient_tolerance) {
                res.status = LbfgsStatus::Converged;
                break;
            }
            Vec d = two_loop(mem, pg);
            if (l1_) {
                for (std::size_t i = 0; i < n_; ++i)
                    if (d[i] * pg[i] >= 0) d[i] = 0;
            }
            if (dot(pg, d) >= 0) {  // not a descent direction; restart from steepest descent
                mem.clear();
                for (std::size_t i = 0; i < n_; ++i) d[i] = -pg[i];
            }
            const double first = mem.empty() ? std::min(1.0, 1.0 / norm(pg)) : 1.0;

            Vec x_new(n_), g_new(n_);
            double fs_new = 0;
            const bool ok = l1_ ? orthant_search(x, F, pg, d, first, x_new, fs_new, g_new)
                                : wolfe_search(x, fs, g, d, first, x_new, fs_new, g_new);
            if (!ok) {
                res.status = LbfgsStatus::LineSearchFailed;
                break;
            }
            res.iterations = iter + 1;

            Pair p{Vec(n_), Vec(n_), 0};
            for (std::size_t i = 0; i < n_; ++i) {
                p.s[i] = x_new[i] - x[i];
                p.y[i] = g_new[i] - g[i];
            }
            const double sy = dot(p.s, p.y);
            if (sy > 1e-12 * dot(p.y, p.y)) {
                p.rho = 1.0 / sy;
                mem.push_back(std::move(p));
                if (static_cast<int>(mem.size()) > cfg_.memory) mem.pop_front();
            }
            x.swap(x_new);
            g.swap(g_new);
            fs = fs_new;
            F = fs + penalty(x);
            res.history.push_back(F);
            if (F < best_F) {
                best_F = F;
                best = x;
            }
            if (cfg_.relative_tolerance > 0 && static_cast<int>(res.history.size()) > cfg_.past) {
                const double old = res.history[res.history.size() - 1 - cfg_.past];
                if (old - F <= cfg_.relative_tolerance * std::max(1.0, std::abs(F))) {
                    res.status = LbfgsStatus::Converged;
                    break;
                }
            }
        }
        res.x = std::move(best);
        res.objective = best_F;
        res.evaluations = evaluations_;
        return res;
    }

private:
    double eval(const Vec& x, Vec& g) {
        ++evaluations_;
        return f_(x, g);
    }

    bool penalized(std::size_t i) const { return cfg_.l1_mask.empty() || cfg_.l1_mask[i]; }

    double penalty(const Vec& x) const {
        if (!l1_) return 0;
        double s = 0;
        for (std::size_t i = 0; i < n_; ++i)
            if (penalized(i)) s += std::abs(x[i]);
        return cfg_.l1 * s;
    }

    Vec pseudo_gradient(const Vec& x, const Vec& g) const {
        Vec pg(n_);
        const double c = cfg_.l1;
        for (std::size_t i = 0; i < n_; ++i) {
            if (!penalized(i)) {
                pg[i] = g[i];
            } else if (x[i] > 0) {
                pg[i] = g[i] + c;
            } else if (x[i] < 0) {
                pg[i] = g[i] - c;
            } else if (g[i] + c < 0) {
                pg[i] = g[i] + c;
            } else if (g[i] - c > 0) {
                pg[i] = g[i] - c;
            } else {
                pg[i] = 0;
            }
        }
        return pg;
    }

    // Backtracking along d with projection onto the orthant of x (or of -pg
    // where x is zero); sufficient decrease measured against pg.
    bool orthant_search(const Vec& x, double F, const Vec& pg, const Vec& d, double step,
                        Vec& x_new, double& fs_new, Vec& g_new) {
        Vec orthant(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            if (!penalized(i)) orthant[i] = 0;
            else orthant[i] = x[i] != 0 ? std::copysign(1.0, x[i]) : std::copysign(1.0, -pg[i]);
        }
        for (int k = 0; k < cfg_.max_line_search; ++k) {
            for (std::size_t i = 0; i < n_; ++i) {
                double v = x[i] + step * d[i];
                if (orthant[i] != 0 && v * orthant[i] <= 0) v = 0;
                x_new[i] = v;
            }
            fs_new = eval(x_new, g_new);
            const double F_new = fs_new + penalty(x_new);
            double decrease = 0;
            for (std::size_t i = 0; i < n_; ++i) decrease += pg[i] * (x_new[i] - x[i]);
            if (std::isfinite(F_new) && F_new <= F + cfg_.c1 * decrease) return true;
            step *= 0.5;
        }
        return false;
    }

    // Armijo condition, relaxed to plain non-increase once f is flat to
    // within rounding, where only the derivative still carries information.
    bool sufficient(double f0, double dg0, double a, double fa) const {
        if (fa <= f0 + cfg_.c1 * a * dg0) return true;
        return fa <= f0 && f0 - fa <= 1e-10 * (1.0 + std::abs(f0));
    }

    // Strong Wolfe line search (bracketing then zoom with cubic interpolation).
    bool wolfe_search(const Vec& x, double f0, const Vec& g0, const Vec& d, double step,
                      Vec& x_new, double& f_new, Vec& g_new) {
        const double dg0 = dot(g0, d);
        auto probe = [&](double a, double& fa, double& da) {
            for (std::size_t i = 0; i < n_; ++i) x_new[i] = x[i] + a * d[i];
            fa = eval(x_new, g_new);
            da = dot(g_new, d);
        };
        double a_prev = 0, f_prev = f0, d_prev = dg0;
        double a = step;
        for (int k = 0; k < cfg_.max_line_search; ++k) {
            double fa, da;
            probe(a, fa, da);
            if (!std::isfinite(fa)) {
                a = 0.5 * (a_prev + a);
                continue;
            }
            if (!sufficient(f0, dg0, a, fa) || (k > 0 && fa >= f_prev))
                return zoom(x, f0, dg0, d, a_prev, f_prev, d_prev, a, fa, da, x_new, f_new, g_new,
                            cfg_.max_line_search - k);
            if (std::abs(da) <= -cfg_.c2 * dg0) {
                f_new = fa;
                return true;
            }
            if (da >= 0)
                return zoom(x, f0, dg0, d, a, fa, da, a_prev, f_prev, d_prev, x_new, f_new, g_new,
                            cfg_.max_line_search - k);
            a_prev = a;
            f_prev = fa;
            d_prev = da;
            a *= 2.0;
        }
        return false;
    }

    bool zoom(const Vec& x, double f0, double dg0, const Vec& d, double lo, double f_lo, double d_lo,
              double hi, double f_hi, double d_hi, Vec& x_new, double& f_new, Vec& g_new, int budget) {
        for (int k = 0; k < std::max(budget, 10); ++k) {
            const double a = cubic_step(lo, f_lo, d_lo, hi, f_hi, d_hi);
            for (std::size_t i = 0; i < n_; ++i) x_new[i] = x[i] + a * d[i];
            const double fa = eval(x_new, g_new);
            const double da = dot(g_new, d);
            if (!sufficient(f0, dg0, a, fa) || fa >= f_lo) {
                hi = a;
                f_hi = fa;
                d_hi = da;
            } else {
                if (std::abs(da) <= -cfg_.c2 * dg0) {
                    f_new = fa;
                    return true;
                }
                if (da * (hi - lo) >= 0) {
                    hi = lo;
                    f_hi = f_lo;
                    d_hi = d_lo;
                }
                lo = a;
                f_lo = fa;
                d_lo = da;
            }
            if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
        // Fall back to the best sufficient-decrease point found, if any.
        if (lo > 0 && f_lo < f0) {
            for (std::size_t i = 0; i < n_; ++i) x_new[i] = x[i] + lo * d[i];
            f_new = eval(x_new, g_new);
            return true;
        }
        return false;
    }

    const Objective& f_;
    const LbfgsConfig& cfg_;
    std::size_t n_;
    bool l1_;
    int evaluations_ = 0;
};

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsConfig& config) {
    if (config.memory < 1) throw std::invalid_argument("lbfgs: memory must be >= 1");
    if (config.l1 < 0) throw std::invalid_argument("lbfgs: l1 must be >= 0");
    Minimizer m(f, config, x0.size());
    return m.run(std::move(x0));
}

}  // namespace cts::nn
