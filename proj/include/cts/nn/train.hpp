#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cts/nn/optim.hpp"
#include "cts/rng.hpp"

namespace cts::nn {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    int patience = 3;                   // epochs without validation improvement
    double validation_fraction = 0.1;   // taken from the tail of the example list
    AdamConfig adam;
    std::uint64_t seed = 42;
};

struct TrainLog {
    std::vector<double> train_loss;       // mean per epoch
    std::vector<double> validation_loss;  // empty when there is no validation split
    int best_epoch = -1;
};

/// Loss of example i at params; adds its gradient into grads. `rng` drives
/// dropout and is null in evaluation mode.
using ExampleLoss =
    std::function<double(std::size_t i, std::span<const double> params, std::span<double> grads, Rng* rng)>;

/// Mini-batch Adam over examples 0..n-1 with early stopping on the held-out
/// tail; params end at the best validation epoch. Per-batch gradients are
/// reduced in fixed chunks, so results do not depend on the thread count.
TrainLog train_minibatch(const ParamLayout& layout, std::vector<double>& params, std::size_t n_examples,
                         const ExampleLoss& loss, const TrainConfig& config);

}  // namespace cts::nn
