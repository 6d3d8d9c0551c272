#pragma once

#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cts/corpus.hpp"
#include "cts/features.hpp"
#include "cts/nn/optim.hpp"
#include "cts/parallel.hpp"
#include "cts/scores.hpp"

namespace cts::crf {

// Label order: Accept(T) = code(T), Reject(T) = 8 + code(T), FollowUp = 16,
// Chat = 17.
inline constexpr int kNumLabels = 18;
inline constexpr int kFollowUp = 16;
inline constexpr int kChat = 17;

int label_id(const TurnLabel& l);
TurnLabel label_from_id(int id);
std::string label_name(int id);

/// Nonzero coordinates of one position's input vector.
struct SparseInput {
    std::vector<int> index;
    std::vector<double> value;

    static SparseInput from_dense(std::span<const double> x);
    double at(int d) const;
};

/// Weight layout over n_labels labels and fv_dim inputs:
///   state:      (fv_dim + 1) x L, row fv_dim is the per-label bias
///   transition: (1 + |context|) x L x L, block 0 unconditioned, block c+1
///               scaled by input coordinate context[c]
struct CrfModel {
    int n_labels = kNumLabels;
    int fv_dim = fv_layout::kDim;
    std::vector<int> context;
    std::vector<double> weights;
    int fv_layout_version = fv_layout::kVersion;

    /// The configuration used for turn sequences: 18 labels, transitions
    /// conjoined with the time-of-day block.
    static CrfModel make(int fv_dim);
    static CrfModel make_generic(int n_labels, int fv_dim, std::vector<int> context);

    std::size_t n_state() const { return static_cast<std::size_t>(fv_dim + 1) * n_labels; }
    std::size_t n_weights() const {
        return n_state() + (1 + context.size()) * static_cast<std::size_t>(n_labels) * n_labels;
    }
    std::size_t state_index(int feature, int label) const {
        return static_cast<std::size_t>(feature) * n_labels + label;
    }
    std::size_t bias_index(int label) const { return state_index(fv_dim, label); }
    std::size_t transition_index(int block, int prev, int label) const {
        return n_state() + (static_cast<std::size_t>(block) * n_labels + prev) * n_labels + label;
    }
    bool is_bias(std::size_t w) const { return w >= state_index(fv_dim, 0) && w < n_state(); }
};

struct Feature {
    std::size_t id;
    double value;
    bool operator==(const Feature&) const = default;
};

/// Active features for `label` at a position with input x; prev_label is
/// empty at the first position of a sequence, which has no transitions.
std::vector<Feature> activate_features(const CrfModel& m, const SparseInput& x, int label,
                                       std::optional<int> prev_label);

struct Sequence {
    std::vector<SparseInput> x;
    std::vector<int> labels;  // empty for unlabeled sequences
};

struct Marginals {
    double log_z = 0;
    double log_z_backward = 0;
    std::vector<std::vector<double>> node;               // [position][label]
    std::vector<std::vector<std::vector<double>>> edge;  // [position >= 1][prev][label]
};

Marginals log_partition_and_marginals(const CrfModel& m, const std::vector<SparseInput>& x);
/// Unnormalized log score of a label path.
double path_score(const CrfModel& m, const std::vector<SparseInput>& x, const std::vector<int>& labels);
std::vector<int> viterbi(const CrfModel& m, const std::vector<SparseInput>& x);

/// -sum log p(labels | x) + l2 * ||w||^2 and its gradient. Exec::Serial is
/// the sequence-by-sequence reference; Exec::Parallel reduces fixed chunks
/// of sequences and is bit-identical for any thread count.
double nll_and_gradient(const CrfModel& m, const std::vector<Sequence>& data, double l2,
                        std::span<double> grad, Exec exec = Exec::Parallel);

struct CrfTrainConfig {
    double l1 = 0.03;
    double l2 = 0.01;
    int memory = 10;
    int max_iterations = 200;
    double gradient_tolerance = 1e-4;
    double relative_tolerance = 1e-6;
    int window = 5;
    bool whole_conversation = false;
};

struct CrfTrainResult {
    CrfModel model;
    nn::LbfgsStatus status = nn::LbfgsStatus::MaxIterations;
    int iterations = 0;
    std::vector<double> history;
    bool warning() const { return status != nn::LbfgsStatus::Converged; }
};

/// Starts from `init` (all-zero weights when it has none).
CrfTrainResult train_crf(const std::vector<Sequence>& data, const CrfTrainConfig& config, CrfModel init,
                         Exec exec = Exec::Parallel);

/// Extra per-turn inputs appended after fv (e.g. CF scores). Called with the
/// conversation and j: the features must use turns 1..j only.
using ExtraFeatures = std::function<std::vector<double>(const Conversation&, int j)>;

/// Input vector at turn position j (1-based): fv of the state after turn
/// j-1, followed by extra(c, j-1) when provided.
SparseInput turn_input(const Conversation& c, const std::vector<StateFeatures>& trajectory, int j,
                       const ExtraFeatures& extra);

/// Training sequences from a labeled corpus: windows of `window` turns ending
/// at every turn, or whole conversations. Inputs follow the labels of
/// `labeled`; the target labels come from `targets` when given (same
/// conversations, e.g. with promoted labels).
std::vector<Sequence> build_dataset(const Corpus& labeled, const CrfTrainConfig& config,
                                    const ExtraFeatures& extra = {}, const Corpus* targets = nullptr);

/// Topic scores for the turn after suggestion point i, from the marginal at
/// the last position of the window ending at turn i+1.
TopicScores predict_next_topic(const CrfModel& m, const Conversation& c, int i, int window = 5,
                               const ExtraFeatures& extra = {});
/// Projection of a label marginal onto the Accept labels, renormalized.
TopicScores project_accept(std::span<const double> marginal);

nlohmann::json to_json(const CrfModel& m);
/// Throws std::runtime_error on a layout-version or shape mismatch.
CrfModel crf_from_json(const nlohmann::json& j);

}  // namespace cts::crf
