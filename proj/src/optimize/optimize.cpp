#include "fwi/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fwi/core.hpp"

namespace fwi::opt {

void LbfgsConfig::validate() const {
    if (memory < 1) throw ParameterError("LbfgsConfig: memory must be >= 1");
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
        throw ParameterError("LbfgsConfig: need 0 < c1 < c2 < 1");
    if (!(initial_step > 0.0)) throw ParameterError("LbfgsConfig: initial_step must be positive");
    if (!(grad_tol >= 0.0)) throw ParameterError("LbfgsConfig: grad_tol must be non-negative");
    if (!(step_reference >= 0.0)) throw ParameterError("LbfgsConfig: step_reference must be non-negative");
    if (max_line_search < 2) throw ParameterError("LbfgsConfig: max_line_search must be >= 2");
    if (bounds && !(bounds->lo < bounds->hi)) throw ParameterError("LbfgsConfig: empty bounds");
}

bool LbfgsMemory::push(std::vector<double> s, std::vector<double> y) {
    const double ys = dot(y, s);
    if (!(ys > 1e-12 * norm2(y) * norm2(s))) return false;
    if (s_.size() == capacity_) {
        s_.pop_front();
        y_.pop_front();
        rho_.pop_front();
    }
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    rho_.push_back(1.0 / ys);
    return true;
}

std::vector<double> LbfgsMemory::apply(std::span<const double> g) const {
    std::vector<double> q(g.begin(), g.end());
    const std::size_t m = s_.size();
    std::vector<double> alpha(m);
    for (std::size_t k = m; k-- > 0;) {
        alpha[k] = rho_[k] * dot(s_[k], q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * y_[k][i];
    }
    if (m > 0) {
        const double gamma = 1.0 / (rho_.back() * dot(y_.back(), y_.back()));
        for (double& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < m; ++k) {
        const double beta = rho_[k] * dot(y_[k], q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * s_[k][i];
    }
    return q;
}

void LbfgsMemory::clear() noexcept {
    s_.clear();
    y_.clear();
    rho_.clear();
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::grad_tol: return "grad_tol";
        case StopReason::max_iters: return "max_iters";
        case StopReason::line_search_failed: return "line_search_failed";
        case StopReason::stopped_by_callback: return "stopped_by_callback";
    }
    return "unknown";
}

namespace {

struct Point {
    double alpha = 0.0;
    double f = 0.0;
    double df = 0.0;  // directional derivative along d over free components
    std::vector<double> x, g;
};

class Problem {
public:
    Problem(const Objective& obj, const LbfgsConfig& cfg) : obj_(obj), cfg_(cfg) {}

    double clamp(double v) const { return cfg_.bounds ? std::clamp(v, cfg_.bounds->lo, cfg_.bounds->hi) : v; }

    Point eval(const std::vector<double>& x0, const std::vector<double>& d, double alpha) {
        Point p;
        p.alpha = alpha;
        p.x.resize(x0.size());
        p.g.assign(x0.size(), 0.0);
        for (std::size_t i = 0; i < x0.size(); ++i) p.x[i] = clamp(x0[i] + alpha * d[i]);
        p.f = obj_(p.x, p.g);
        ++evaluations;
        check(p);
        for (std::size_t i = 0; i < x0.size(); ++i)
            if (p.x[i] == x0[i] + alpha * d[i]) p.df += p.g[i] * d[i];
        return p;
    }

    void check(const Point& p) const {
        bool ok = std::isfinite(p.f);
        for (double v : p.g) ok = ok && std::isfinite(v);
        if (!ok) throw NumericalError("lbfgs: objective or gradient is not finite");
    }

    // gradient with components that push against an active bound removed
    std::vector<double> projected(const std::vector<double>& x, const std::vector<double>& g) const {
        std::vector<double> pg = g;
        if (!cfg_.bounds) return pg;
        for (std::size_t i = 0; i < x.size(); ++i)
            if ((x[i] <= cfg_.bounds->lo && g[i] > 0.0) || (x[i] >= cfg_.bounds->hi && g[i] < 0.0)) pg[i] = 0.0;
        return pg;
    }

    std::size_t evaluations = 0;

private:
    const Objective& obj_;
    const LbfgsConfig& cfg_;
};

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
}

// Safeguarded quadratic interpolation between lo (value and slope) and hi (value).
double interpolate(const Point& lo, const Point& hi) {
    const double d = hi.alpha - lo.alpha;
    const double curv = hi.f - lo.f - lo.df * d;
    double a = curv > 0.0 ? lo.alpha - lo.df * d * d / (2.0 * curv) : lo.alpha + 0.5 * d;
    const double a1 = lo.alpha + 0.1 * d, a2 = lo.alpha + 0.9 * d;
    return std::clamp(a, std::min(a1, a2), std::max(a1, a2));
}

// Strong-Wolfe search. Returns the accepted point, or the best sufficient-decrease point when the
// curvature condition cannot be met within the budget; nullopt when no decrease was found.
std::optional<Point> line_search(Problem& prob, const std::vector<double>& x, const Point& start,
                                 const std::vector<double>& d, double alpha, const LbfgsConfig& cfg) {
    const double f0 = start.f, df0 = start.df;
    const auto armijo = [&](const Point& p) { return p.f <= f0 + cfg.wolfe_c1 * p.alpha * df0 && p.f < f0; };
    const auto curvature = [&](const Point& p) { return std::abs(p.df) <= -cfg.wolfe_c2 * df0; };
    std::optional<Point> best;
    const auto remember = [&](const Point& p) {
        if (armijo(p) && (!best || p.f < best->f)) best = p;
    };

    std::size_t used = 0;
    Point prev = start;
    prev.alpha = 0.0;
    Point lo, hi;
    bool zoom = false;
    while (used < cfg.max_line_search) {
        Point cur = prob.eval(x, d, alpha);
        ++used;
        remember(cur);
        if (!armijo(cur) || (used > 1 && cur.f >= prev.f)) {
            lo = prev;
            hi = cur;
            zoom = true;
            break;
        }
        if (curvature(cur)) return cur;
        if (cur.df >= 0.0) {
            lo = cur;
            hi = prev;
            zoom = true;
            break;
        }
        prev = cur;
        alpha *= 4.0;
    }
    while (zoom && used < cfg.max_line_search) {
        Point cur = prob.eval(x, d, interpolate(lo, hi));
        ++used;
        remember(cur);
        if (!armijo(cur) || cur.f >= lo.f) {
            hi = cur;
        } else {
            if (curvature(cur)) return cur;
            if (cur.df * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
            lo = cur;
        }
        if (std::abs(hi.alpha - lo.alpha) <= 1e-14 * std::max(1.0, std::abs(lo.alpha))) break;
    }
    return best;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0, const LbfgsConfig& config,
                           const IterationCallback& callback) {
    config.validate();
    if (x0.empty()) throw ValidationError("lbfgs: empty start vector");
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    Problem prob(objective, config);
    LbfgsResult res;
    for (double& v : x0) v = prob.clamp(v);
    const std::vector<double> zero(x0.size(), 0.0);
    Point cur;
    try {
        cur = prob.eval(x0, zero, 0.0);
    } catch (const NumericalError& e) {
        throw OptimizerAbort(e.what(), x0, {});
    }
    const double j0 = cur.f;
    const auto record = [&](std::size_t iter, double step) {
        IterationRecord r;
        r.iter = iter;
        r.value = cur.f;
        r.relative = j0 != 0.0 ? cur.f / j0 : 0.0;
        r.grad_norm = norm2(prob.projected(cur.x, cur.g));
        r.step = step;
        r.wall_seconds = elapsed();
        r.evaluations = prob.evaluations;
        res.history.push_back(r);
        return !callback || callback(r, cur.x);
    };
    res.x = cur.x;
    if (!record(0, 0.0)) {
        res.reason = StopReason::stopped_by_callback;
        return res;
    }

    double range = config.step_reference;
    if (range == 0.0) range = config.bounds ? config.bounds->hi - config.bounds->lo : std::max(max_abs(cur.x), 1.0);

    LbfgsMemory memory(config.memory);
    for (std::size_t iter = 1;; ++iter) {
        const auto pg = prob.projected(cur.x, cur.g);
        if (max_abs(pg) <= config.grad_tol) {
            res.reason = StopReason::grad_tol;
            break;
        }
        if (iter > config.max_iters) {
            res.reason = StopReason::max_iters;
            break;
        }

        std::vector<double> d = memory.apply(pg);
        for (double& v : d) v = -v;
        if (dot(d, pg) >= 0.0) {  // lost descent: restart from steepest descent
            memory.clear();
            d = pg;
            for (double& v : d) v = -v;
        }
        const double alpha0 = memory.size() == 0 ? config.initial_step * range / max_abs(d) : 1.0;

        Point start = cur;
        start.df = dot(d, pg);
        std::optional<Point> next;
        try {
            next = line_search(prob, cur.x, start, d, alpha0, config);
        } catch (const NumericalError& e) {
            throw OptimizerAbort(std::string(e.what()) + " at iteration " + std::to_string(iter), cur.x, res.history);
        }
        if (!next) {
            res.reason = StopReason::line_search_failed;
            break;
        }
        std::vector<double> s(cur.x.size()), y(cur.x.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = next->x[i] - cur.x[i];
            y[i] = next->g[i] - cur.g[i];
        }
        memory.push(std::move(s), std::move(y));
        const double step = next->alpha;
        cur = std::move(*next);
        res.x = cur.x;
        if (!record(iter, step)) {
            res.reason = StopReason::stopped_by_callback;
            break;
        }
    }
    return res;
}

}  // namespace fwi::opt
