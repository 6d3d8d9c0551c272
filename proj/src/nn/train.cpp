#include "cts/nn/train.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cts/parallel.hpp"

namespace cts::nn {

namespace {
constexpr std::size_t kChunk = 8;
constexpr std::uint64_t kShufflePurpose = 1;
constexpr std::uint64_t kDropoutPurpose = 2;
}  // namespace

TrainLog train_minibatch(const ParamLayout& layout, std::vector<double>& params, std::size_t n_examples,
                         const ExampleLoss& loss, const TrainConfig& config) {
    if (n_examples == 0) throw std::invalid_argument("train_minibatch: no training examples");
    if (config.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (params.size() != layout.size()) throw std::invalid_argument("params do not match the layout");

    std::size_t n_val = static_cast<std::size_t>(config.validation_fraction * static_cast<double>(n_examples));
    if (n_val >= n_examples) n_val = 0;
    const std::size_t n_train = n_examples - n_val;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grads(params.size());
    OptimState state;
    TrainLog log;
    std::vector<double> best = params;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;

    auto validation_loss = [&]() {
        std::vector<double> scratch(params.size());
        std::vector<double> losses(n_val);
        parallel_for(static_cast<std::ptrdiff_t>(n_val), [&](std::ptrdiff_t k) {
            std::vector<double> g(params.size(), 0.0);
            losses[k] = loss(n_train + static_cast<std::size_t>(k), params, g, nullptr);
        });
        double s = 0;
        for (double v : losses) s += v;
        return s / static_cast<double>(n_val);
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle = make_rng(config.seed, {kShufflePurpose, static_cast<std::uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < n_train; start += config.batch_size) {
            const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
            const std::size_t count = end - start;
            const double batch_loss = chunked_reduce(count, kChunk, grads, [&](std::size_t k, std::span<double> acc) {
                const std::size_t ex = order[start + k];
                Rng dropout = make_rng(config.seed, {kDropoutPurpose, static_cast<std::uint64_t>(epoch), ex});
                return loss(ex, params, acc, &dropout);
            });
            const double inv = 1.0 / static_cast<double>(count);
            for (double& g : grads) g *= inv;
            adam_step(params, grads, state, config.adam, layout);
            epoch_loss += batch_loss;
        }
        log.train_loss.push_back(epoch_loss / static_cast<double>(n_train));

        if (n_val == 0) {
            best = params;
            log.best_epoch = epoch;
            continue;
        }
        const double v = validation_loss();
        log.validation_loss.push_back(v);
        if (v < best_val) {
            best_val = v;
            best = params;
            log.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }
    params = std::move(best);
    return log;
}

}  // namespace cts::nn
