#include "cts/nn/layers.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cts::nn {

// ---- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<unk>");
}

int Vocabulary::add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences, int min_count) {
    std::unordered_map<std::string, int> counts;
    std::vector<std::string> order;
    for (const auto& s : sentences)
        for (const auto& t : s)
            if (counts[t]++ == 0) order.push_back(t);
    Vocabulary v;
    for (const auto& t : order)
        if (counts[t] >= min_count) v.add(t);
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>")
        throw std::invalid_argument("vocabulary must start with <pad>, <unk>");
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i)
        if (v.add(tokens[i]) != static_cast<int>(i))
            throw std::invalid_argument("duplicate vocabulary token " + tokens[i]);
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    if (tokens.empty()) return {kPad};
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

// ---- helpers ---------------------------------------------------------------

namespace {

void fill_uniform(MatMap m, Rng& rng, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
}

double glorot(double fan_in, double fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---- embedding -------------------------------------------------------------

void Embedding::declare(ParamLayout& layout, const std::string& name, int vocab_size, int dimension) {
    vocab = vocab_size;
    dim = dimension;
    table = layout.add(name, dim, vocab);
}

void Embedding::init(std::span<double> params, const ParamLayout& layout, Rng& rng, double stddev) const {
    MatMap t = layout.map(params, table);
    std::normal_distribution<double> n(0.0, stddev);
    for (Eigen::Index j = 0; j < t.cols(); ++j)
        for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = j == Vocabulary::kPad ? 0.0 : n(rng);
}

int Embedding::load_text(std::istream& in, const Vocabulary& vocabulary, std::span<double> params,
                         const ParamLayout& layout) const {
    MatMap t = layout.map(params, table);
    std::string line;
    int loaded = 0;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string token;
        if (!(ss >> token)) continue;
        std::vector<double> values;
        double v;
        while (ss >> v) values.push_back(v);
        if (static_cast<int>(values.size()) != dim)
            throw std::runtime_error("embedding line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(dim) + " values");
        const int id = vocabulary.id(token);
        if (id == Vocabulary::kUnk && token != "<unk>") continue;
        if (id == Vocabulary::kPad) continue;
        for (int d = 0; d < dim; ++d) t(d, id) = values[d];
        ++loaded;
    }
    return loaded;
}

Matrix Embedding::forward(std::span<const double> params, const ParamLayout& layout,
                          const std::vector<int>& ids) const {
    ConstMatMap t = layout.map(params, table);
    Matrix out(dim, static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) out.col(j) = t.col(ids[j]);
    return out;
}

void Embedding::backward(std::span<double> grads, const ParamLayout& layout, const std::vector<int>& ids,
                         const Matrix& d_out) const {
    MatMap g = layout.map(grads, table);
    for (std::size_t j = 0; j < ids.size(); ++j)
        if (ids[j] != Vocabulary::kPad) g.col(ids[j]) += d_out.col(j);
}

// ---- dense -----------------------------------------------------------------

void Dense::declare(ParamLayout& layout, const std::string& name, int in_dim, int out_dim) {
    in = in_dim;
    out = out_dim;
    W = layout.add(name + ".W", out, in);
    b = layout.add(name + ".b", out);
}

void Dense::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    fill_uniform(layout.map(params, W), rng, glorot(in, out));
    layout.map(params, b).setZero();
}

Vector Dense::forward(std::span<const double> params, const ParamLayout& layout, const Vector& x) const {
    if (x.size() != in) throw std::invalid_argument("Dense: input dimension mismatch");
    return layout.map(params, W) * x + layout.map(params, b);
}

Vector Dense::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                       const Vector& x, const Vector& d_out) const {
    layout.map(grads, W).noalias() += d_out * x.transpose();
    layout.map(grads, b) += d_out;
    return layout.map(params, W).transpose() * d_out;
}

// ---- convolution -----------------------------------------------------------

namespace {

// Column t holds [x_t ; x_{t+1} ; ... ; x_{t+w-1}] with zeros past the end.
Matrix unfold(const Matrix& x, int w) {
    const Eigen::Index in = x.rows(), n = x.cols();
    Matrix u = Matrix::Zero(in * w, n);
    for (int k = 0; k < w; ++k)
        if (n - k > 0) u.block(k * in, 0, in, n - k) = x.rightCols(n - k);
    return u;
}

}  // namespace

void ConvLayer::declare(ParamLayout& layout, const std::string& name, int in_dim, int n_filters,
                        std::vector<int> kernel_widths) {
    in = in_dim;
    filters = n_filters;
    widths = std::move(kernel_widths);
    W.clear();
    b.clear();
    for (int w : widths) {
        if (w < 1) throw std::invalid_argument("kernel width must be >= 1");
        W.push_back(layout.add(name + ".W" + std::to_string(w), filters, w * in));
        b.push_back(layout.add(name + ".b" + std::to_string(w), filters));
    }
}

void ConvLayer::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    for (std::size_t k = 0; k < widths.size(); ++k) {
        fill_uniform(layout.map(params, W[k]), rng, glorot(widths[k] * in, filters));
        layout.map(params, b[k]).setZero();
    }
}

Matrix ConvLayer::forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x) const {
    if (x.rows() != in) throw std::invalid_argument("ConvLayer: input dimension mismatch");
    Matrix y(out_dim(), x.cols());
    for (std::size_t k = 0; k < widths.size(); ++k) {
        auto block = y.middleRows(k * filters, filters);
        block.noalias() = layout.map(params, W[k]) * unfold(x, widths[k]);
        block.colwise() += layout.map(params, b[k]).col(0);
    }
    return y;
}

Matrix ConvLayer::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                           const Matrix& x, const Matrix& d_out) const {
    const Eigen::Index n = x.cols();
    Matrix dx = Matrix::Zero(in, n);
    for (std::size_t k = 0; k < widths.size(); ++k) {
        const int w = widths[k];
        const Matrix dy = d_out.middleRows(k * filters, filters);
        layout.map(grads, W[k]).noalias() += dy * unfold(x, w).transpose();
        layout.map(grads, b[k]) += dy.rowwise().sum();
        const Matrix du = layout.map(params, W[k]).transpose() * dy;
        for (int s = 0; s < w; ++s)
            if (n - s > 0) dx.rightCols(n - s) += du.block(s * in, 0, in, n - s);
    }
    return dx;
}

// ---- LSTM ------------------------------------------------------------------

void Lstm::declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden_dim) {
    in = in_dim;
    hidden = hidden_dim;
    W = layout.add(name + ".W", 4 * hidden, in);
    U = layout.add(name + ".U", 4 * hidden, hidden);
    b = layout.add(name + ".b", 4 * hidden);
}

void Lstm::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
    fill_uniform(layout.map(params, W), rng, limit);
    fill_uniform(layout.map(params, U), rng, limit);
    MatMap bias = layout.map(params, b);
    bias.setZero();
    bias.middleRows(hidden, hidden).setOnes();
}

Matrix Lstm::forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                     Cache& cache) const {
    if (x.rows() != in) throw std::invalid_argument("Lstm: input dimension mismatch");
    const Eigen::Index n = x.cols(), H = hidden;
    ConstMatMap Um = layout.map(params, U);
    cache.x = x;
    cache.gates.noalias() = layout.map(params, W) * x;
    cache.gates.colwise() += layout.map(params, b).col(0);
    cache.c = Matrix::Zero(H, n + 1);
    cache.h = Matrix::Zero(H, n + 1);
    cache.tanh_c.resize(H, n);
    for (Eigen::Index t = 0; t < n; ++t) {
        auto z = cache.gates.col(t);
        z.noalias() += Um * cache.h.col(t);
        for (Eigen::Index k = 0; k < H; ++k) {
            z(k) = sigmoid(z(k));
            z(H + k) = sigmoid(z(H + k));
            z(2 * H + k) = std::tanh(z(2 * H + k));
            z(3 * H + k) = sigmoid(z(3 * H + k));
            const double c = z(H + k) * cache.c(k, t) + z(k) * z(2 * H + k);
            cache.c(k, t + 1) = c;
            cache.tanh_c(k, t) = std::tanh(c);
            cache.h(k, t + 1) = z(3 * H + k) * cache.tanh_c(k, t);
        }
    }
    return cache.h.rightCols(n);
}

Matrix Lstm::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                      const Cache& cache, const Matrix& d_h) const {
    const Eigen::Index n = cache.x.cols(), H = hidden;
    ConstMatMap Um = layout.map(params, U);
    Matrix dz(4 * H, n);
    Vector dh_next = Vector::Zero(H), dc_next = Vector::Zero(H);
    for (Eigen::Index t = n - 1; t >= 0; --t) {
        const auto z = cache.gates.col(t);
        const Vector dh = d_h.col(t) + dh_next;
        for (Eigen::Index k = 0; k < H; ++k) {
            const double i = z(k), f = z(H + k), g = z(2 * H + k), o = z(3 * H + k);
            const double tc = cache.tanh_c(k, t);
            const double dc = dh(k) * o * (1 - tc * tc) + dc_next(k);
            dz(k, t) = dc * g * i * (1 - i);
            dz(H + k, t) = dc * cache.c(k, t) * f * (1 - f);
            dz(2 * H + k, t) = dc * i * (1 - g * g);
            dz(3 * H + k, t) = dh(k) * tc * o * (1 - o);
            dc_next(k) = dc * f;
        }
        dh_next.noalias() = Um.transpose() * dz.col(t);
    }
    layout.map(grads, W).noalias() += dz * cache.x.transpose();
    layout.map(grads, U).noalias() += dz * cache.h.leftCols(n).transpose();
    layout.map(grads, b) += dz.rowwise().sum();
    return layout.map(params, W).transpose() * dz;
}

void BiLstm::declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden_dim) {
    fwd.declare(layout, name + ".fwd", in_dim, hidden_dim);
    bwd.declare(layout, name + ".bwd", in_dim, hidden_dim);
}

void BiLstm::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    fwd.init(params, layout, rng);
    bwd.init(params, layout, rng);
}

Matrix BiLstm::forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                       Cache& cache) const {
    const Eigen::Index H = fwd.hidden;
    Matrix out(2 * H, x.cols());
    out.topRows(H) = fwd.forward(params, layout, x, cache.f);
    out.bottomRows(H) = bwd.forward(params, layout, x.rowwise().reverse(), cache.b).rowwise().reverse();
    return out;
}

Matrix BiLstm::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                        const Cache& cache, const Matrix& d_h) const {
    const Eigen::Index H = fwd.hidden;
    Matrix dx = fwd.backward(params, grads, layout, cache.f, d_h.topRows(H));
    const Matrix d_rev = d_h.bottomRows(H).rowwise().reverse();
    dx += bwd.backward(params, grads, layout, cache.b, d_rev).rowwise().reverse();
    return dx;
}

// ---- attention -------------------------------------------------------------

void Attention::declare(ParamLayout& layout, const std::string& name, int in_dim, int att_dim) {
    in = in_dim;
    dim = att_dim;
    M = layout.add(name + ".M", in, dim);
    b = layout.add(name + ".b", dim);
    c = layout.add(name + ".c", dim);
}

void Attention::init(std::span<double> params, const ParamLayout& layout, Rng& rng) const {
    fill_uniform(layout.map(params, M), rng, glorot(in, dim));
    layout.map(params, b).setZero();
    fill_uniform(layout.map(params, c), rng, glorot(dim, 1));
}

Vector Attention::forward(std::span<const double> params, const ParamLayout& layout, const Matrix& h,
                          Cache& cache) const {
    if (h.rows() != in) throw std::invalid_argument("Attention: input dimension mismatch");
    cache.h = h;
    Matrix pre = layout.map(params, M).transpose() * h;
    pre.colwise() += layout.map(params, b).col(0);
    cache.s = pre.array().tanh().matrix();
    const Vector scores = cache.s.transpose() * layout.map(params, c).col(0);
    cache.alpha = softmax(scores);
    return h * cache.alpha;
}

Matrix Attention::backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                           const Cache& cache, const Vector& d_y) const {
    const Vector& a = cache.alpha;
    Matrix dh = d_y * a.transpose();
    const Vector d_alpha = cache.h.transpose() * d_y;
    const Vector d_score = a.cwiseProduct(d_alpha - Vector::Constant(a.size(), a.dot(d_alpha)));
    layout.map(grads, c) += cache.s * d_score;
    const Matrix d_s = layout.map(params, c).col(0) * d_score.transpose();
    const Matrix d_pre = d_s.cwiseProduct((1.0 - cache.s.array().square()).matrix());
    layout.map(grads, M).noalias() += cache.h * d_pre.transpose();
    layout.map(grads, b) += d_pre.rowwise().sum();
    dh.noalias() += layout.map(params, M) * d_pre;
    return dh;
}

// ---- activations and losses ------------------------------------------------

Vector dropout_mask(Eigen::Index n, double rate, Rng& rng) {
    if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout rate must be in [0,1)");
    Vector m(n);
    const double keep = 1.0 - rate;
    for (Eigen::Index i = 0; i < n; ++i) m(i) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
    return m;
}

Vector relu(const Vector& x) { return x.cwiseMax(0.0); }
Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& y, const Matrix& d_y) {
    return (y.array() > 0).select(d_y, 0.0);
}

Vector softmax(const Vector& s) {
    const double mx = s.maxCoeff();
    Vector e = (s.array() - mx).exp().matrix();
    return e / e.sum();
}

SoftmaxCE softmax_ce(const Vector& logits, int target) {
    if (target < 0 || target >= logits.size()) throw std::out_of_range("softmax_ce: target out of range");
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    SoftmaxCE r;
    r.loss = lse - logits(target);
    r.grad = (logits.array() - lse).exp().matrix();
    r.grad(target) -= 1.0;
    return r;
}

}  // namespace cts::nn
