#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cts/nn/param.hpp"

namespace cts::nn {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.997;
    double epsilon = 1e-5;
    double l2 = 0.001;
};

struct OptimState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

/// One Adam update. The L2 term is added to the gradient before the moment
/// updates. A non-finite gradient throws std::domain_error naming the slice
/// of `layout` it belongs to; params are left untouched in that case.
void adam_step(std::span<double> params, std::span<const double> grads, OptimState& state,
               const AdamConfig& config, const ParamLayout& layout);

/// Returns f(x) and writes the gradient of f at x into g.
using Objective = std::function<double(std::span<const double> x, std::span<double> g)>;

struct LbfgsConfig {
    int memory = 10;
    int max_iterations = 1000;
    double gradient_tolerance = 1e-8;
    // Stop when the objective improved by less than this relative amount over
    // the last `past` iterations; 0 disables the test.
    double relative_tolerance = 0.0;
    int past = 5;
    // Strong Wolfe constants (smooth mode) and backtracking constants
    // (orthant-wise mode).
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search = 40;
    // Elastic-net L1 strength. When > 0 the minimizer switches to the
    // orthant-wise method; `l1_mask[i] == false` exempts coordinate i.
    double l1 = 0.0;
    std::vector<bool> l1_mask;
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed };

struct LbfgsResult {
    std::vector<double> x;  // best iterate seen
    double objective = 0;   // includes the L1 term
    int iterations = 0;
    int evaluations = 0;
    LbfgsStatus status = LbfgsStatus::MaxIterations;
    std::vector<double> history;  // objective after each accepted step, starting at x0

    bool converged() const { return status == LbfgsStatus::Converged; }
};

std::string to_string(LbfgsStatus s);

LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsConfig& config);

}  // namespace cts::nn
