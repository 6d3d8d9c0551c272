#pragma once

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cts/corpus.hpp"
#include "cts/features.hpp"
#include "cts/nn/encoders.hpp"
#include "cts/nn/train.hpp"
#include "cts/parallel.hpp"
#include "cts/scores.hpp"

namespace cts {

// ---- popularity ----------------------------------------------------------

/// Movie, Music, then a time-of-day slot (Morning: Pets_Animal, Day: Travel,
/// Evening/Night: Games), then global frequency order. Throws
/// std::invalid_argument when all 8 topics were already suggested.
Suggestible popularity_suggest(TimeOfDay time, const std::set<Suggestible>& already_suggested);
/// The full popularity order for a time of day.
std::array<Suggestible, kNumSuggestible> popularity_order(TimeOfDay time);

// ---- user vectors --------------------------------------------------------

// [F1..F8 | F13 | F14 | F15 one-hot (4) | r_accept | r_reject]
inline constexpr int kUserDim = 16;
using UserVector = std::array<double, kUserDim>;

/// User vector from turns 1..i (i = 0 is the empty history). Throws
/// std::out_of_range for i outside 0..n and std::invalid_argument when a
/// history turn is unlabeled.
UserVector build_user_vector(const Conversation& c, int i);
UserVector user_vector(const StateFeatures& s, int accepts, int rejects);

/// Zero-norm vectors have similarity 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// ---- KNN collaborative filtering ------------------------------------------

inline constexpr int kDefaultNeighbors = 33;

struct TrainingUser {
    std::string id;
    UserVector u{};
    std::array<double, kNumSuggestible> s{};  // final topic_response

    bool operator==(const TrainingUser&) const = default;
};

struct Neighbor {
    std::size_t index = 0;  // row in the training population
    std::string id;
    double similarity = 0;
    std::array<double, kNumSuggestible> s{};
};
using NeighborSet = std::vector<Neighbor>;

/// One row per training conversation: the vector after its last turn and the
/// final topic_response block.
std::vector<TrainingUser> build_training_users(const Corpus& labeled);

/// Top-K rows by cosine similarity, ordered by (similarity desc, id asc).
/// Rows whose id equals `exclude` are skipped. Serial is a brute-force
/// reference; Parallel scores rows concurrently and selects identically.
NeighborSet knn_neighbors(const UserVector& u, std::span<const TrainingUser> users, int k = kDefaultNeighbors,
                          Exec exec = Exec::Parallel, const std::string* exclude = nullptr);

/// Similarity-weighted mean of neighbor scores; uniform when the similarity
/// mass is at most 1e-12.
TopicScores cf_predict(const NeighborSet& n);

/// Training population with a query cache. Queries whose own conversation is
/// in the population exclude it (leave-one-out), so training-time features
/// never see a conversation's own outcome.
class CfIndex {
public:
    CfIndex() = default;
    CfIndex(std::vector<TrainingUser> users, int k = kDefaultNeighbors);

    const std::vector<TrainingUser>& users() const { return users_; }
    int k() const { return k_; }
    bool empty() const { return users_.empty(); }

    NeighborSet neighbors(const UserVector& u, const std::string& conversation_id) const;
    TopicScores predict(const UserVector& u, const std::string& conversation_id) const;
    /// cf_predict for the history of c up to turn i.
    TopicScores predict(const Conversation& c, int i) const;

private:
    NeighborSet top_k_plus_one(const UserVector& u) const;

    std::vector<TrainingUser> users_;
    int k_ = kDefaultNeighbors;
    struct Cache {
        std::mutex mutex;
        std::map<UserVector, NeighborSet> entries;
    };
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

nlohmann::json to_json(const std::vector<TrainingUser>& users);
std::vector<TrainingUser> training_users_from_json(const nlohmann::json& j);

/// Softmax of the CF scores: the CF block fed to hybrid models.
std::array<double, kNumSuggestible> cf_distribution(const TopicScores& s);

// ---- classifier heads -----------------------------------------------------

/// Dense(hidden) -> ReLU -> dropout -> Dense(8) -> softmax over topics;
/// hidden = 0 gives a single dense layer and softmax.
class TopicHead {
public:
    TopicHead() = default;
    TopicHead(int in_dim, int hidden, double dropout);

    int in_dim() const { return in_dim_; }
    int hidden() const { return hidden_; }
    bool trained() const { return trained_; }
    const std::vector<double>& params() const { return params_; }
    /// Installs parameters (e.g. from a checkpoint) and marks the head trained.
    void set_params(std::vector<double> p);
    const nn::ParamLayout& layout() const { return layout_; }

    nn::TrainLog train(const std::vector<std::vector<double>>& inputs, const std::vector<Suggestible>& targets,
                       const nn::TrainConfig& config);
    /// Throws std::logic_error when untrained.
    std::array<double, kNumSuggestible> predict(std::span<const double> input) const;

    /// Cross-entropy of one example; adds its gradient into grads.
    double loss(std::span<const double> p, std::span<double> grads, std::span<const double> input, int target,
                Rng* rng) const;

private:
    int in_dim_ = 0;
    int hidden_ = 0;
    nn::ParamLayout layout_;
    nn::MlpHead head_;
    nn::Dense linear_;
    std::vector<double> params_;
    bool trained_ = false;
};

inline constexpr int kCcfWindow = 5;

/// For each slot of the window ending at turn i, a one-hot of the topic the
/// CF model selects there: the argmax of the CF head when one is given,
/// else the argmax of cf_predict. Padded slots give zero blocks. Length 8 * m.
std::vector<double> contextual_cf_features(const CfIndex& cf, const Conversation& c, int i, int m = kCcfWindow,
                                           const TopicHead* cf_head = nullptr);

}  // namespace cts
