#include "cts/nn/encoders.hpp"

#include <stdexcept>

namespace cts::nn {

void CnnEncoder::declare(ParamLayout& layout, const std::string& name, int in_dim, int filters,
                         const std::vector<int>& widths, int n_layers) {
    if (n_layers < 1) throw std::invalid_argument("CnnEncoder needs at least one layer");
    layers.assign(n_layers, ConvLayer{});
    int d = in_dim;
    for (int l = 0; l < n_layers; ++l) {
        layers[l].declare(layout, name + ".conv" + std::to_string(l), d, filters, widths);
        d = layers[l].out_dim();
    }
}

void CnnEncoder::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    for (const auto& l : layers) l.init(params, layout, rng);
}

Vector CnnEncoder::forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                           Cache& cache) const {
    cache.inputs.resize(layers.size());
    cache.outputs.resize(layers.size());
    const Matrix* cur = &x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        cache.inputs[l] = *cur;
        cache.outputs[l] = relu(layers[l].forward(params, layout, *cur));
        cur = &cache.outputs[l];
    }
    const Matrix& last = cache.outputs.back();
    Vector y(last.rows());
    cache.argmax.assign(last.rows(), 0);
    for (Eigen::Index r = 0; r < last.rows(); ++r) y(r) = last.row(r).maxCoeff(&cache.argmax[r]);
    return y;
}

Matrix CnnEncoder::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                            const Cache& cache, const Vector& d_y) const {
    const Matrix& last = cache.outputs.back();
    Matrix d = Matrix::Zero(last.rows(), last.cols());
    for (Eigen::Index r = 0; r < last.rows(); ++r) d(r, cache.argmax[r]) = d_y(r);
    for (std::size_t l = layers.size(); l-- > 0;) {
        d = relu_backward(cache.outputs[l], d);
        d = layers[l].backward(params, grads, layout, cache.inputs[l], d);
    }
    return d;
}

void RnnEncoder::declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden, int att_dim) {
    bilstm.declare(layout, name + ".bilstm", in_dim, hidden);
    attention.declare(layout, name + ".attention", bilstm.out_dim(), att_dim);
}

void RnnEncoder::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    bilstm.init(params, layout, rng);
    attention.init(params, layout, rng);
}

Vector RnnEncoder::forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                           Cache& cache) const {
    const Matrix h = bilstm.forward(params, layout, x, cache.bilstm);
    return attention.forward(params, layout, h, cache.attention);
}

Matrix RnnEncoder::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                            const Cache& cache, const Vector& d_y) const {
    const Matrix dh = attention.backward(params, grads, layout, cache.attention, d_y);
    return bilstm.backward(params, grads, layout, cache.bilstm, dh);
}

void MlpHead::declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden_dim, int classes,
                      double dropout_rate) {
    hidden.declare(layout, name + ".hidden", in_dim, hidden_dim);
    output.declare(layout, name + ".output", hidden_dim, classes);
    dropout = dropout_rate;
}

void MlpHead::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    hidden.init(params, layout, rng);
    output.init(params, layout, rng);
}

Vector MlpHead::forward(std::span<const double> params, const ParamLayout& layout, const Vector& x,
                        Cache& cache, Rng* rng) const {
    cache.x = x;
    cache.act = relu(hidden.forward(params, layout, x));
    if (rng && dropout > 0) {
        cache.mask = dropout_mask(cache.act.size(), dropout, *rng);
        cache.dropped = cache.act.cwiseProduct(cache.mask);
    } else {
        cache.mask = Vector::Ones(cache.act.size());
        cache.dropped = cache.act;
    }
    return output.forward(params, layout, cache.dropped);
}

Vector MlpHead::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                         const Cache& cache, const Vector& d_logits) const {
    const Vector d_dropped = output.backward(params, grads, layout, cache.dropped, d_logits);
    const Vector d_act = relu_backward(cache.act, d_dropped.cwiseProduct(cache.mask));
    return hidden.backward(params, grads, layout, cache.x, d_act);
}

void WindowAggregator::declare(ParamLayout& layout, const std::string& name, int in_dim, int lstm_hidden,
                               int dense, int classes, double dropout_rate) {
    lstm.declare(layout, name + ".lstm", in_dim, lstm_hidden);
    head.declare(layout, name + ".head", lstm_hidden, dense, classes, dropout_rate);
}

void WindowAggregator::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    lstm.init(params, layout, rng);
    head.init(params, layout, rng);
}

Vector WindowAggregator::forward(std::span<const double> params, const ParamLayout& layout, const Matrix& reps,
                                 Cache& cache, Rng* rng) const {
    if (reps.rows() != lstm.in || reps.cols() < 1)
        throw std::invalid_argument("WindowAggregator: window dimension mismatch");
    const Matrix h = lstm.forward(params, layout, reps, cache.lstm);
    return head.forward(params, layout, h.col(h.cols() - 1), cache.head, rng);
}

Matrix WindowAggregator::backward(std::span<const double> params, std::span<double> grads,
                                  const ParamLayout& layout, const Cache& cache, const Vector& d_logits) const {
    const Vector d_last = head.backward(params, grads, layout, cache.head, d_logits);
    Matrix d_h = Matrix::Zero(lstm.hidden, cache.lstm.x.cols());
    d_h.col(d_h.cols() - 1) = d_last;
    return lstm.backward(params, grads, layout, cache.lstm, d_h);
}

}  // namespace cts::nn
