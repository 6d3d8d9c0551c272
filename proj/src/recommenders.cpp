#include "cts/recommenders.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace cts {

std::array<Suggestible, kNumSuggestible> popularity_order(TimeOfDay time) {
    Suggestible third = Suggestible::Games;
    if (time == TimeOfDay::Morning) third = Suggestible::Pets_Animal;
    if (time == TimeOfDay::Day) third = Suggestible::Travel;
    std::array<Suggestible, kNumSuggestible> order{};
    order[0] = Suggestible::Movie;
    order[1] = Suggestible::Music;
    order[2] = third;
    int k = 3;
    for (Suggestible t : kFrequencyOrder)
        if (t != order[0] && t != order[1] && t != order[2]) order[k++] = t;
    return order;
}

Suggestible popularity_suggest(TimeOfDay time, const std::set<Suggestible>& already_suggested) {
    for (Suggestible t : popularity_order(time))
        if (!already_suggested.contains(t)) return t;
    throw std::invalid_argument("popularity_suggest: all topics already suggested");
}

UserVector user_vector(const StateFeatures& s, int accepts, int rejects) {
    UserVector u{};
    for (int k = 0; k < kNumSuggestible; ++k) u[k] = s.topic_response[k];
    u[8] = s.name_given ? 1.0 : 0.0;
    u[9] = s.gender;
    u[10 + code(s.time_of_day)] = 1.0;
    const int total = accepts + rejects;
    if (total > 0) {
        u[14] = static_cast<double>(accepts) / total;
        u[15] = static_cast<double>(rejects) / total;
    }
    return u;
}

UserVector build_user_vector(const Conversation& c, int i) {
    if (i < 0 || i > static_cast<int>(c.turns.size()))
        throw std::out_of_range("build_user_vector: turn " + std::to_string(i) + " out of range 0.." +
                                std::to_string(c.turns.size()));
    int accepts = 0, rejects = 0;
    for (int k = 0; k < i; ++k) {
        const auto& label = c.turns[k].label;
        if (!label)
            throw std::invalid_argument("build_user_vector: turn " + std::to_string(k + 1) + " of " +
                                        c.conversation_id + " is unlabeled");
        accepts += label->is_accept();
        rejects += label->is_reject();
    }
    return user_vector(state_after(c, i), accepts, rejects);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<TrainingUser> build_training_users(const Corpus& labeled) {
    std::vector<TrainingUser> rows(labeled.size());
    parallel_for(static_cast<std::ptrdiff_t>(labeled.size()), [&](std::ptrdiff_t k) {
        const Conversation& c = labeled.conversations[k];
        const int n = static_cast<int>(c.turns.size());
        TrainingUser& row = rows[k];
        row.id = c.conversation_id;
        row.u = build_user_vector(c, n);
        for (int t = 0; t < kNumSuggestible; ++t) row.s[t] = row.u[t];
    });
    std::unordered_set<std::string> seen;
    for (const auto& r : rows)
        if (!seen.insert(r.id).second) throw std::invalid_argument("duplicate conversation id " + r.id);
    return rows;
}

namespace {

bool ranks_before(const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
}

Neighbor make_neighbor(std::span<const TrainingUser> users, std::size_t r, double sim) {
    return Neighbor{r, users[r].id, sim, users[r].s};
}

}  // namespace

NeighborSet knn_neighbors(const UserVector& u, std::span<const TrainingUser> users, int k, Exec exec,
                          const std::string* exclude) {
    if (k < 1) throw std::invalid_argument("knn_neighbors: k must be >= 1");
    const std::size_t n = users.size();
    NeighborSet out;
    if (exec == Exec::Serial) {
        for (std::size_t r = 0; r < n; ++r) {
            if (exclude && users[r].id == *exclude) continue;
            out.push_back(make_neighbor(users, r, cosine_similarity(u, users[r].u)));
        }
        std::sort(out.begin(), out.end(), ranks_before);
        if (out.size() > static_cast<std::size_t>(k)) out.resize(k);
        return out;
    }
    std::vector<double> sims(n);
    parallel_for(static_cast<std::ptrdiff_t>(n),
                 [&](std::ptrdiff_t r) { sims[r] = cosine_similarity(u, users[r].u); });
    std::vector<std::size_t> idx;
    idx.reserve(n);
    for (std::size_t r = 0; r < n; ++r)
        if (!exclude || users[r].id != *exclude) idx.push_back(r);
    const std::size_t take = std::min(idx.size(), static_cast<std::size_t>(k));
    auto before = [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return users[a].id < users[b].id;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), before);
    out.reserve(take);
    for (std::size_t q = 0; q < take; ++q) out.push_back(make_neighbor(users, idx[q], sims[idx[q]]));
    return out;
}

TopicScores cf_predict(const NeighborSet& n) {
    double mass = 0;
    for (const auto& nb : n) mass += nb.similarity;
    if (mass <= 1e-12) return uniform_scores();
    TopicScores out;
    for (int t = 0; t < kNumSuggestible; ++t) {
        double num = 0;
        for (const auto& nb : n) num += nb.similarity * nb.s[t];
        out.score[t] = num / mass;
    }
    return out;
}

CfIndex::CfIndex(std::vector<TrainingUser> users, int k) : users_(std::move(users)), k_(k) {
    if (k < 1) throw std::invalid_argument("CfIndex: k must be >= 1");
}

NeighborSet CfIndex::top_k_plus_one(const UserVector& u) const {
    {
        std::lock_guard lock(cache_->mutex);
        if (auto it = cache_->entries.find(u); it != cache_->entries.end()) return it->second;
    }
    NeighborSet n = knn_neighbors(u, users_, k_ + 1, Exec::Serial);
    std::lock_guard lock(cache_->mutex);
    cache_->entries.emplace(u, n);
    return n;
}

NeighborSet CfIndex::neighbors(const UserVector& u, const std::string& conversation_id) const {
    if (users_.empty()) throw std::logic_error("CfIndex: empty training population");
    // The top K+1 without exclusion contain the top K of every population
    // that lacks one row.
    NeighborSet n = top_k_plus_one(u);
    auto self = std::find_if(n.begin(), n.end(), [&](const Neighbor& nb) { return nb.id == conversation_id; });
    if (self != n.end()) n.erase(self);
    if (n.size() > static_cast<std::size_t>(k_)) n.resize(k_);
    return n;
}

TopicScores CfIndex::predict(const UserVector& u, const std::string& conversation_id) const {
    return cf_predict(neighbors(u, conversation_id));
}

TopicScores CfIndex::predict(const Conversation& c, int i) const {
    return predict(build_user_vector(c, i), c.conversation_id);
}

nlohmann::json to_json(const std::vector<TrainingUser>& users) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : users) rows.push_back({{"id", r.id}, {"u", r.u}, {"s", r.s}});
    return rows;
}

std::vector<TrainingUser> training_users_from_json(const nlohmann::json& j) {
    std::vector<TrainingUser> out;
    for (const auto& row : j) {
        TrainingUser r;
        r.id = row.at("id").get<std::string>();
        r.u = row.at("u").get<UserVector>();
        r.s = row.at("s").get<std::array<double, kNumSuggestible>>();
        out.push_back(std::move(r));
    }
    return out;
}

std::array<double, kNumSuggestible> cf_distribution(const TopicScores& s) {
    std::array<double, kNumSuggestible> p{};
    const double mx = *std::max_element(s.score.begin(), s.score.end());
    double z = 0;
    for (int t = 0; t < kNumSuggestible; ++t) z += p[t] = std::exp(s.score[t] - mx);
    for (double& v : p) v /= z;
    return p;
}

TopicHead::TopicHead(int in_dim, int hidden, double dropout) : in_dim_(in_dim), hidden_(hidden) {
    if (hidden_ > 0)
        head_.declare(layout_, "head", in_dim, hidden, kNumSuggestible, dropout);
    else
        linear_.declare(layout_, "head.output", in_dim, kNumSuggestible);
    params_.assign(layout_.size(), 0.0);
}

void TopicHead::set_params(std::vector<double> p) {
    if (p.size() != layout_.size()) throw std::invalid_argument("TopicHead: parameter count mismatch");
    params_ = std::move(p);
    trained_ = true;
}

double TopicHead::loss(std::span<const double> p, std::span<double> grads, std::span<const double> input,
                       int target, Rng* rng) const {
    const nn::Vector x = Eigen::Map<const nn::Vector>(input.data(), in_dim_);
    if (hidden_ == 0) {
        const nn::SoftmaxCE ce = nn::softmax_ce(linear_.forward(p, layout_, x), target);
        linear_.backward(p, grads, layout_, x, ce.grad);
        return ce.loss;
    }
    nn::MlpHead::Cache cache;
    const nn::SoftmaxCE ce = nn::softmax_ce(head_.forward(p, layout_, x, cache, rng), target);
    head_.backward(p, grads, layout_, cache, ce.grad);
    return ce.loss;
}

nn::TrainLog TopicHead::train(const std::vector<std::vector<double>>& inputs,
                              const std::vector<Suggestible>& targets, const nn::TrainConfig& config) {
    if (inputs.size() != targets.size()) throw std::invalid_argument("TopicHead: inputs/targets size mismatch");
    if (inputs.empty()) throw std::invalid_argument("TopicHead: empty training set");
    for (const auto& x : inputs)
        if (static_cast<int>(x.size()) != in_dim_) throw std::invalid_argument("TopicHead: input dimension mismatch");
    Rng init = make_rng(config.seed, {0});
    params_.assign(layout_.size(), 0.0);
    if (hidden_ > 0)
        head_.init(params_, layout_, init);
    else
        linear_.init(params_, layout_, init);
    auto example = [&](std::size_t i, std::span<const double> p, std::span<double> g, Rng* rng) {
        return loss(p, g, inputs[i], code(targets[i]), rng);
    };
    nn::TrainLog log = nn::train_minibatch(layout_, params_, inputs.size(), example, config);
    trained_ = true;
    return log;
}

std::array<double, kNumSuggestible> TopicHead::predict(std::span<const double> input) const {
    if (!trained_) throw std::logic_error("TopicHead: head is not trained");
    if (static_cast<int>(input.size()) != in_dim_) throw std::invalid_argument("TopicHead: input dimension mismatch");
    const nn::Vector x = Eigen::Map<const nn::Vector>(input.data(), in_dim_);
    nn::Vector z;
    if (hidden_ == 0) {
        z = linear_.forward(params_, layout_, x);
    } else {
        nn::MlpHead::Cache cache;
        z = head_.forward(params_, layout_, x, cache, nullptr);
    }
    const nn::Vector prob = nn::softmax(z);
    std::array<double, kNumSuggestible> out{};
    for (int t = 0; t < kNumSuggestible; ++t) out[t] = prob[t];
    return out;
}

std::vector<double> contextual_cf_features(const CfIndex& cf, const Conversation& c, int i, int m,
                                           const TopicHead* cf_head) {
    const ContextWindow w = make_window(c, i, m);
    std::vector<double> out(static_cast<std::size_t>(kNumSuggestible) * m, 0.0);
    for (int slot = 0; slot < m; ++slot) {
        const TurnView& v = w.turns[slot];
        if (v.pad) continue;
        TopicScores s = cf.predict(c, v.turn_index);
        if (cf_head) s.score = cf_head->predict(s.score);
        const Suggestible best = s.best();
        out[static_cast<std::size_t>(slot) * kNumSuggestible + code(best)] = 1.0;
    }
    return out;
}

}  // namespace cts
