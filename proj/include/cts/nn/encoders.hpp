#pragma once

#include <vector>

#include "cts/nn/layers.hpp"

namespace cts::nn {

/// Stacked convolution layers (each with parallel kernel widths and ReLU)
/// followed by max-over-time pooling of the last layer.
struct CnnEncoder {
    std::vector<ConvLayer> layers;

    struct Cache {
        std::vector<Matrix> inputs;   // input of each layer
        std::vector<Matrix> outputs;  // post-ReLU output of each layer
        std::vector<Eigen::Index> argmax;
    };

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int filters,
                 const std::vector<int>& widths, int n_layers);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    int out_dim() const { return layers.back().out_dim(); }
    Vector forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                   Cache& cache) const;
    Matrix backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Cache& cache, const Vector& d_y) const;
};

/// BiLSTM over the tokens with attention pooling.
struct RnnEncoder {
    BiLstm bilstm;
    Attention attention;

    struct Cache {
        BiLstm::Cache bilstm;
        Attention::Cache attention;
    };

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden, int att_dim);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    int out_dim() const { return bilstm.out_dim(); }
    Vector forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                   Cache& cache) const;
    Matrix backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Cache& cache, const Vector& d_y) const;
};

/// dense -> ReLU -> dropout -> dense. Passing no RNG runs in eval mode.
struct MlpHead {
    Dense hidden, output;
    double dropout = 0.5;

    struct Cache {
        Vector x, act, mask, dropped;
    };

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden_dim, int classes,
                 double dropout_rate);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    Vector forward(std::span<const double> params, const ParamLayout& layout, const Vector& x, Cache& cache,
                   Rng* rng) const;
    Vector backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Cache& cache, const Vector& d_logits) const;
};

/// Unidirectional LSTM over the window slots; its last hidden state feeds
/// an MlpHead producing class logits.
struct WindowAggregator {
    Lstm lstm;
    MlpHead head;

    struct Cache {
        Lstm::Cache lstm;
        MlpHead::Cache head;
    };

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int lstm_hidden, int dense,
                 int classes, double dropout_rate);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    /// reps: in_dim x m, one column per window slot (oldest first).
    Vector forward(std::span<const double> params, const ParamLayout& layout, const Matrix& reps,
                   Cache& cache, Rng* rng) const;
    Matrix backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Cache& cache, const Vector& d_logits) const;
};

}  // namespace cts::nn
