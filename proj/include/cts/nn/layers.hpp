#pragma once

#include <istream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cts/nn/param.hpp"
#include "cts/rng.hpp"

namespace cts::nn {

// Layers are stateless descriptions of where their tensors live in a
// ParamLayout. forward() reads a parameter buffer; backward() accumulates
// into a gradient buffer with the same layout and returns the gradient with
// respect to the layer input. Sequences are stored one position per column.

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary();
    /// Adds every token seen at least `min_count` times, in first-seen order.
    static Vocabulary build(const std::vector<std::vector<std::string>>& sentences, int min_count = 1);
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    int id(const std::string& token) const;
    /// Empty input maps to a single PAD; unknown tokens map to UNK.
    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    int add(const std::string& token);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct Embedding {
    std::size_t table = 0;  // dim x vocab, one column per token id
    int dim = 0;
    int vocab = 0;

    void declare(ParamLayout& layout, const std::string& name, int vocab_size, int dimension);
    /// Normal(0, stddev) entries; the PAD column stays zero.
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng, double stddev = 0.1) const;
    /// Overwrites rows for tokens found in a "token v1 ... vD" text stream.
    /// Returns the number of tokens loaded.
    int load_text(std::istream& in, const Vocabulary& vocab, std::span<double> params,
                  const ParamLayout& layout) const;
    Matrix forward(std::span<const double> params, const ParamLayout& layout,
                   const std::vector<int>& ids) const;
    void backward(std::span<double> grads, const ParamLayout& layout, const std::vector<int>& ids,
                  const Matrix& d_out) const;
};

struct Dense {
    std::size_t W = 0, b = 0;
    int in = 0, out = 0;

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int out_dim);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    Vector forward(std::span<const double> params, const ParamLayout& layout, const Vector& x) const;
    Vector backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Vector& x, const Vector& d_out) const;
};

/// One convolution layer with several kernel widths applied in parallel.
/// Each width contributes `filters` output rows; inputs are zero-padded on
/// the right so the output has as many positions as the input.
struct ConvLayer {
    std::vector<std::size_t> W, b;  // per width: filters x (width*in), filters
    std::vector<int> widths;
    int in = 0, filters = 0;

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int n_filters,
                 std::vector<int> kernel_widths);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    int out_dim() const { return static_cast<int>(widths.size()) * filters; }
    /// Pre-activation output, out_dim x n.
    Matrix forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x) const;
    Matrix backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Matrix& x, const Matrix& d_out) const;
};

struct Lstm {
    std::size_t W = 0, U = 0, b = 0;  // 4H x in, 4H x H, 4H; gate order i, f, g, o
    int in = 0, hidden = 0;

    struct Cache {
        Matrix x;      // in x n
        Matrix gates;  // 4H x n, after nonlinearity
        Matrix c;      // H x (n+1), column 0 is the initial state
        Matrix h;      // H x (n+1)
        Matrix tanh_c; // H x n
    };

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden_dim);
    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    /// Hidden states, H x n.
    Matrix forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                   Cache& cache) const;
    /// d_h holds the loss gradient for every output position.
    Matrix backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Cache& cache, const Matrix& d_h) const;
};

struct BiLstm {
    Lstm fwd, bwd;

    struct Cache {
        Lstm::Cache f, b;
    };

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int hidden_dim);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    int out_dim() const { return 2 * fwd.hidden; }
    /// Column j is [forward h_j ; backward h_j].
    Matrix forward(std::span<const double> params, const ParamLayout& layout, const Matrix& x,
                   Cache& cache) const;
    Matrix backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Cache& cache, const Matrix& d_h) const;
};

/// s_j = tanh(M^T h_j + b), alpha = softmax_j(s_j . c), y = sum_j alpha_j h_j.
struct Attention {
    std::size_t M = 0, b = 0, c = 0;  // in x A, A, A
    int in = 0, dim = 0;

    struct Cache {
        Matrix h;      // in x n
        Matrix s;      // A x n
        Vector alpha;  // n
    };

    void declare(ParamLayout& layout, const std::string& name, int in_dim, int att_dim);
    void init(std::span<double> params, const ParamLayout& layout, Rng& rng) const;
    Vector forward(std::span<const double> params, const ParamLayout& layout, const Matrix& h,
                   Cache& cache) const;
    Matrix backward(std::span<const double> params, std::span<double> grads, const ParamLayout& layout,
                    const Cache& cache, const Vector& d_y) const;
};

/// Inverted dropout mask: entries are 0 or 1/(1-rate).
Vector dropout_mask(Eigen::Index n, double rate, Rng& rng);

Vector relu(const Vector& x);
Matrix relu(const Matrix& x);
/// Gradient through ReLU given the layer output.
Matrix relu_backward(const Matrix& y, const Matrix& d_y);

Vector softmax(const Vector& s);

struct SoftmaxCE {
    double loss;
    Vector grad;  // softmax(s) - onehot(target)
};
SoftmaxCE softmax_ce(const Vector& logits, int target);

}  // namespace cts::nn
