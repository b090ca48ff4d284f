#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fwi/errors.hpp"

namespace fwi::opt {

struct Box {
    double lo;
    double hi;
};

struct LbfgsConfig {
    std::size_t memory = 10;
    std::size_t max_iters = 100;
    double grad_tol = 1e-8;      // on the max-norm of the (projected) gradient
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    double initial_step = 0.01;  // first step moves the largest component by this fraction of the range
    double step_reference = 0.0;  // the range; 0 uses the box width, or max(|x0|, 1) without bounds
    std::optional<Box> bounds;
    std::size_t max_line_search = 20;  // objective evaluations per line search

    void validate() const;
};

/// Stored curvature pairs and the two-loop recursion.
class LbfgsMemory {
public:
    explicit LbfgsMemory(std::size_t capacity) : capacity_(capacity) {}

    /// Keeps the pair unless y.s <= 1e-12 |y| |s|. Returns whether it was stored.
    bool push(std::vector<double> s, std::vector<double> y);
    /// H g with H the implicit inverse-Hessian estimate (scaled identity when empty).
    std::vector<double> apply(std::span<const double> g) const;
    std::size_t size() const noexcept { return s_.size(); }
    void clear() noexcept;

private:
    std::size_t capacity_;
    std::deque<std::vector<double>> s_, y_;
    std::deque<double> rho_;
};

struct IterationRecord {
    std::size_t iter = 0;
    double value = 0.0;
    double relative = 1.0;  // J / J0
    double grad_norm = 0.0;
    double step = 0.0;
    double wall_seconds = 0.0;
    std::size_t evaluations = 0;
};

enum class StopReason { grad_tol, max_iters, line_search_failed, stopped_by_callback };

std::string to_string(StopReason r);

/// Returns J and writes dJ/dx into grad.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;
/// Called after every accepted iterate (and once for the start point); return false to stop.
using IterationCallback = std::function<bool(const IterationRecord&, std::span<const double> x)>;

struct LbfgsResult {
    std::vector<double> x;
    std::vector<IterationRecord> history;
    StopReason reason = StopReason::max_iters;
};

/// Non-finite objective or gradient; carries the last accepted iterate.
class OptimizerAbort : public NumericalError {
public:
    OptimizerAbort(const std::string& what, std::vector<double> x, std::vector<IterationRecord> history)
        : NumericalError(what), x_(std::move(x)), history_(std::move(history)) {}

    const std::vector<double>& x() const noexcept { return x_; }
    const std::vector<IterationRecord>& history() const noexcept { return history_; }

private:
    std::vector<double> x_;
    std::vector<IterationRecord> history_;
};

/// L-BFGS with a strong-Wolfe line search. With bounds, trial points are projected onto the box and
/// clamped components do not contribute to the directional derivative.
LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0, const LbfgsConfig& config,
                           const IterationCallback& callback = {});

}  // namespace fwi::opt
