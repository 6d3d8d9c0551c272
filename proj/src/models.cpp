#include "cts/models.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

#include "cts/hash.hpp"
#include "cts/neural_model.hpp"

namespace cts {

namespace {

constexpr std::array<std::string_view, 9> kVariantNames = {
    "popularity", "cf", "contextual-cf", "cts-crf", "cts-cnn", "cts-rnn", "cts-crf-cf", "cts-cnn-cf", "cts-rnn-cf"};

}  // namespace

std::string_view to_string(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

Variant parse_variant(std::string_view s) {
    for (Variant v : kAllVariants)
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown variant \"" + std::string(s) + "\"");
}

bool is_hybrid(Variant v) { return v == Variant::CtsCrfCf || v == Variant::CtsCnnCf || v == Variant::CtsRnnCf; }
bool uses_cf(Variant v) { return is_hybrid(v) || v == Variant::CF || v == Variant::ContextualCF; }
bool is_neural(Variant v) {
    return v == Variant::CtsCnn || v == Variant::CtsRnn || v == Variant::CtsCnnCf || v == Variant::CtsRnnCf;
}
bool is_crf(Variant v) { return v == Variant::CtsCrf || v == Variant::CtsCrfCf; }

// ---- configuration ---------------------------------------------------------

nlohmann::json to_json(const ModelConfig& c) {
    const NeuralDims& d = c.dims;
    return {{"variant", std::string(to_string(c.variant))},
            {"window", c.window},
            {"features", std::string(to_string(c.features))},
            {"all_turns", c.all_turns},
            {"embeddings_path", c.embeddings_path},
            {"cf_neighbors", c.cf_neighbors},
            {"cf_head_hidden", c.cf_head_hidden},
            {"ccf_head_hidden", c.ccf_head_hidden},
            {"seed", c.seed},
            {"dims",
             {{"embedding", d.embedding},
              {"filters", d.filters},
              {"widths", d.widths},
              {"conv_layers", d.conv_layers},
              {"rnn_hidden", d.rnn_hidden},
              {"attention", d.attention},
              {"window_hidden", d.window_hidden},
              {"dense", d.dense},
              {"dropout", d.dropout},
              {"min_token_count", d.min_token_count}}},
            {"train",
             {{"epochs", c.train.epochs},
              {"batch_size", c.train.batch_size},
              {"patience", c.train.patience},
              {"validation_fraction", c.train.validation_fraction},
              {"learning_rate", c.train.adam.learning_rate},
              {"beta1", c.train.adam.beta1},
              {"beta2", c.train.adam.beta2},
              {"epsilon", c.train.adam.epsilon},
              {"l2", c.train.adam.l2}}},
            {"crf",
             {{"l1", c.crf.l1},
              {"l2", c.crf.l2},
              {"memory", c.crf.memory},
              {"max_iterations", c.crf.max_iterations},
              {"gradient_tolerance", c.crf.gradient_tolerance},
              {"relative_tolerance", c.crf.relative_tolerance},
              {"whole_conversation", c.crf.whole_conversation}}}};
}

namespace {

// Copies j[key] into out when present; unknown keys are reported by the
// caller through `known`.
template <typename T>
void take(const nlohmann::json& j, const char* key, T& out, std::set<std::string>& known) {
    known.insert(key);
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw std::invalid_argument("unknown config key \"" + where + key + "\"");
}

}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
    std::set<std::string> known;
    std::string variant(to_string(c.variant)), features(to_string(c.features));
    take(j, "variant", variant, known);
    take(j, "features", features, known);
    c.variant = parse_variant(variant);
    c.features = parse_feature_groups(features);
    take(j, "window", c.window, known);
    take(j, "all_turns", c.all_turns, known);
    take(j, "embeddings_path", c.embeddings_path, known);
    take(j, "cf_neighbors", c.cf_neighbors, known);
    take(j, "cf_head_hidden", c.cf_head_hidden, known);
    take(j, "ccf_head_hidden", c.ccf_head_hidden, known);
    take(j, "seed", c.seed, known);
    known.insert({"dims", "train", "crf"});
    reject_unknown(j, known, "");

    if (j.contains("dims")) {
        const auto& d = j.at("dims");
        std::set<std::string> k;
        take(d, "embedding", c.dims.embedding, k);
        take(d, "filters", c.dims.filters, k);
        take(d, "widths", c.dims.widths, k);
        take(d, "conv_layers", c.dims.conv_layers, k);
        take(d, "rnn_hidden", c.dims.rnn_hidden, k);
        take(d, "attention", c.dims.attention, k);
        take(d, "window_hidden", c.dims.window_hidden, k);
        take(d, "dense", c.dims.dense, k);
        take(d, "dropout", c.dims.dropout, k);
        take(d, "min_token_count", c.dims.min_token_count, k);
        reject_unknown(d, k, "dims.");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        std::set<std::string> k;
        take(t, "epochs", c.train.epochs, k);
        take(t, "batch_size", c.train.batch_size, k);
        take(t, "patience", c.train.patience, k);
        take(t, "validation_fraction", c.train.validation_fraction, k);
        take(t, "learning_rate", c.train.adam.learning_rate, k);
        take(t, "beta1", c.train.adam.beta1, k);
        take(t, "beta2", c.train.adam.beta2, k);
        take(t, "epsilon", c.train.adam.epsilon, k);
        take(t, "l2", c.train.adam.l2, k);
        reject_unknown(t, k, "train.");
    }
    if (j.contains("crf")) {
        const auto& r = j.at("crf");
        std::set<std::string> k;
        take(r, "l1", c.crf.l1, k);
        take(r, "l2", c.crf.l2, k);
        take(r, "memory", c.crf.memory, k);
        take(r, "max_iterations", c.crf.max_iterations, k);
        take(r, "gradient_tolerance", c.crf.gradient_tolerance, k);
        take(r, "relative_tolerance", c.crf.relative_tolerance, k);
        take(r, "whole_conversation", c.crf.whole_conversation, k);
        reject_unknown(r, k, "crf.");
    }
    if (c.window < 1) throw std::invalid_argument("window must be >= 1");
    if (c.cf_neighbors < 1) throw std::invalid_argument("cf_neighbors must be >= 1");
    if (c.dims.dropout < 0 || c.dims.dropout >= 1) throw std::invalid_argument("dropout must be in [0, 1)");
    return c;
}

// ---- corpora and events ----------------------------------------------------

LabeledCorpus LabeledCorpus::from(const Corpus& raw) {
    LabeledCorpus out;
    out.features.provenance = out.targets.provenance = raw.provenance;
    out.features.conversations.resize(raw.size());
    out.targets.conversations.resize(raw.size());
    parallel_for(static_cast<std::ptrdiff_t>(raw.size()), [&](std::ptrdiff_t k) {
        out.features.conversations[k] = assign_training_labels(raw.conversations[k]);
        out.targets.conversations[k] = assign_test_labels(raw.conversations[k]);
    });
    return out;
}

std::vector<SuggestionEvent> suggestion_events(const LabeledCorpus& corpus) {
    std::vector<SuggestionEvent> out;
    for (std::size_t ci = 0; ci < corpus.targets.size(); ++ci) {
        const Conversation& c = corpus.targets.conversations[ci];
        int ordinal = 0;
        for (std::size_t r = 0; r < c.turns.size(); ++r) {
            const auto& label = c.turns[r].label;
            if (!label) throw std::invalid_argument("suggestion_events: unlabeled turn in " + c.conversation_id);
            if (!label->is_suggestion_event()) continue;
            ++ordinal;
            if (label->is_accept() && r >= 1) out.push_back({ci, static_cast<int>(r), label->topic, ordinal});
        }
    }
    return out;
}

std::vector<SuggestionEvent> training_points(const LabeledCorpus& corpus, bool all_turns) {
    std::vector<SuggestionEvent> events = suggestion_events(corpus);
    if (!all_turns) return events;
    std::vector<SuggestionEvent> out;
    std::size_t e = 0;
    for (std::size_t ci = 0; ci < corpus.targets.size(); ++ci) {
        const Conversation& c = corpus.targets.conversations[ci];
        for (int i = 1; i < static_cast<int>(c.turns.size()); ++i) {
            if (e < events.size() && events[e].conversation == ci && events[e].point == i) {
                out.push_back(events[e++]);
                continue;
            }
            if (const auto t = to_suggestible(c.turns[i].topic)) out.push_back({ci, i, *t, 0});
        }
    }
    return out;
}

// ---- baselines -------------------------------------------------------------

TopicScores popularity_scores(const Conversation& c, int i) {
    if (i < 0 || i > static_cast<int>(c.turns.size())) throw std::out_of_range("suggestion point out of range");
    std::set<Suggestible> already;
    for (int k = 0; k < i; ++k)
        if (c.turns[k].previous_suggested_topic) already.insert(*c.turns[k].previous_suggested_topic);
    std::vector<Suggestible> order;
    for (Suggestible t : popularity_order(c.time_of_day))
        if (!already.contains(t)) order.push_back(t);
    for (Suggestible t : popularity_order(c.time_of_day))
        if (already.contains(t)) order.push_back(t);
    TopicScores s;
    constexpr double total = kNumSuggestible * (kNumSuggestible + 1) / 2.0;
    for (std::size_t p = 0; p < order.size(); ++p) s[order[p]] = (kNumSuggestible - p) / total;
    return s;
}

std::vector<Suggestible> rejected_topics(const Conversation& c, int i) {
    const StateFeatures s = state_after(c, i);
    std::vector<Suggestible> out;
    for (Suggestible t : kAllSuggestible)
        if (s.topic_response[code(t)] == -1) out.push_back(t);
    return out;
}

// ---- training --------------------------------------------------------------

namespace {

crf::ExtraFeatures crf_extra(const Model& m) {
    if (m.config.variant != Variant::CtsCrfCf) return {};
    const CfIndex* cf = &*m.cf;
    return [cf](const Conversation& c, int j) {
        const TopicScores s = cf->predict(c, j);
        return std::vector<double>(s.score.begin(), s.score.end());
    };
}

void train_head(Model& m, const LabeledCorpus& lc, const std::vector<SuggestionEvent>& events, bool contextual) {
    std::vector<std::vector<double>> inputs(events.size());
    std::vector<Suggestible> targets(events.size());
    parallel_for(static_cast<std::ptrdiff_t>(events.size()), [&](std::ptrdiff_t k) {
        const SuggestionEvent& e = events[k];
        const Conversation& c = lc.features.conversations[e.conversation];
        if (contextual) {
            inputs[k] = contextual_cf_features(*m.cf, c, e.point, m.config.window, &m.cf_head);
        } else {
            const TopicScores s = m.cf->predict(c, e.point);
            inputs[k].assign(s.score.begin(), s.score.end());
        }
        targets[k] = e.topic;
    });
    const int in_dim = contextual ? kNumSuggestible * m.config.window : kNumSuggestible;
    TopicHead head(in_dim, contextual ? m.config.ccf_head_hidden : m.config.cf_head_hidden, m.config.dims.dropout);
    nn::TrainConfig tc = m.config.train;
    tc.seed = derive_seed(m.config.seed, {contextual ? 21u : 20u});
    const nn::TrainLog log = head.train(inputs, targets, tc);
    m.log.loss = log.train_loss;
    m.log.validation_loss = log.validation_loss;
    (contextual ? m.ccf_head : m.cf_head) = std::move(head);
}

void train_crf_variant(Model& m, const LabeledCorpus& lc) {
    crf::CrfTrainConfig cfg = m.config.crf;
    cfg.window = m.config.window;
    const crf::ExtraFeatures extra = crf_extra(m);
    const std::vector<crf::Sequence> data = crf::build_dataset(lc.features, cfg, extra, &lc.targets);
    const int dim = fv_layout::kDim + (extra ? kNumSuggestible : 0);
    crf::CrfTrainResult r = crf::train_crf(data, cfg, crf::CrfModel::make(dim));
    m.crf = std::move(r.model);
    m.log.loss = r.history;
    m.log.status = std::string(nn::to_string(r.status));
    m.log.iterations = r.iterations;
}

void train_neural(Model& m, const LabeledCorpus& lc) {
    const Variant v = m.config.variant;
    const EncoderKind kind = v == Variant::CtsCnn || v == Variant::CtsCnnCf ? EncoderKind::Cnn : EncoderKind::Rnn;
    std::vector<std::vector<std::string>> sentences;
    for (const auto& c : lc.features.conversations)
        for (const auto& t : c.turns) sentences.push_back(t.user_utterance);
    auto net = std::make_shared<NeuralNet>(kind, m.config.dims,
                                           nn::Vocabulary::build(sentences, m.config.dims.min_token_count),
                                           is_hybrid(v), m.config.features);
    net->init(derive_seed(m.config.seed, {30}), m.config.embeddings_path);

    const std::vector<SuggestionEvent> points = training_points(lc, m.config.all_turns);
    if (points.empty()) throw std::invalid_argument("training corpus has no suggestion events");
    std::vector<SlotWindow> windows(points.size());
    const CfIndex* cf = m.cf ? &*m.cf : nullptr;
    parallel_for(static_cast<std::ptrdiff_t>(points.size()), [&](std::ptrdiff_t k) {
        windows[k] = net->make_window(lc.features.conversations[points[k].conversation], points[k].point,
                                      m.config.window, cf);
    });
    nn::TrainConfig tc = m.config.train;
    tc.seed = derive_seed(m.config.seed, {31});
    const NeuralNet& ref = *net;
    auto loss = [&](std::size_t i, std::span<const double> p, std::span<double> g, Rng* rng) {
        return ref.loss(p, g, windows[i], code(points[i].topic), rng);
    };
    const nn::TrainLog log = nn::train_minibatch(net->layout(), net->params, points.size(), loss, tc);
    m.log.loss = log.train_loss;
    m.log.validation_loss = log.validation_loss;
    m.log.iterations = static_cast<int>(log.train_loss.size());
    m.net = std::move(net);
}

}  // namespace

Model train_model(const Corpus& train, const ModelConfig& config) {
    if (train.provenance == Provenance::Test) throw std::logic_error("refusing to train on the test split");
    if (train.empty()) throw std::invalid_argument("empty training corpus");
    Model m;
    m.config = config;
    m.training_corpus_hash = sha256_hex(serialize_corpus(train));
    const LabeledCorpus lc = LabeledCorpus::from(train);
    const Variant v = config.variant;
    if (uses_cf(v)) m.cf.emplace(build_training_users(lc.features), config.cf_neighbors);

    if (v == Variant::Popularity) {
        m.log.status = "no parameters";
        return m;
    }
    if (is_crf(v)) {
        train_crf_variant(m, lc);
        return m;
    }
    if (is_neural(v)) {
        train_neural(m, lc);
        return m;
    }
    const std::vector<SuggestionEvent> events = suggestion_events(lc);
    if (events.empty()) throw std::invalid_argument("training corpus has no suggestion events");
    // Contextual-CF one-hots the CF baseline's selections, so its head
    // trains on top of a trained CF head.
    train_head(m, lc, events, false);
    if (v == Variant::ContextualCF) train_head(m, lc, events, true);
    return m;
}

// ---- inference -------------------------------------------------------------

TopicScores forward(const Model& m, const Conversation& c, int i) {
    const Variant v = m.config.variant;
    if (uses_cf(v) && (!m.cf || m.cf->empty())) throw std::logic_error("model has no CF population");
    TopicScores out;
    switch (v) {
        case Variant::Popularity: return popularity_scores(c, i);
        case Variant::CF: {
            const TopicScores s = m.cf->predict(c, i);
            out.score = m.cf_head.predict(s.score);
            return out;
        }
        case Variant::ContextualCF:
            out.score = m.ccf_head.predict(contextual_cf_features(*m.cf, c, i, m.config.window, &m.cf_head));
            return out;
        case Variant::CtsCrf:
        case Variant::CtsCrfCf:
            if (m.crf.weights.empty()) throw std::logic_error("CRF model is not trained");
            return crf::predict_next_topic(m.crf, c, i, m.config.window, crf_extra(m));
        default:
            if (!m.net) throw std::logic_error("neural model is not trained");
            out.score = m.net->predict(m.net->make_window(c, i, m.config.window, m.cf ? &*m.cf : nullptr));
            return out;
    }
}

std::vector<Suggestible> suggest(const Model& m, const Conversation& session, int i) {
    const std::vector<Suggestible> ranking = forward(m, session, i).ranking();
    const std::vector<Suggestible> rejected = rejected_topics(session, i);
    std::vector<Suggestible> out;
    for (Suggestible t : ranking)
        if (std::find(rejected.begin(), rejected.end(), t) == rejected.end()) out.push_back(t);
    for (Suggestible t : ranking)
        if (std::find(rejected.begin(), rejected.end(), t) != rejected.end()) out.push_back(t);
    return out;
}

}  // namespace cts
