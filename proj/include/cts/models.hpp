#pragma once

#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cts/corpus.hpp"
#include "cts/crf.hpp"
#include "cts/features.hpp"
#include "cts/nn/encoders.hpp"
#include "cts/nn/train.hpp"
#include "cts/recommenders.hpp"
#include "cts/scores.hpp"

namespace cts {

enum class Variant : std::uint8_t {
    Popularity,
    CF,
    ContextualCF,
    CtsCrf,
    CtsCnn,
    CtsRnn,
    CtsCrfCf,
    CtsCnnCf,
    CtsRnnCf,
};

inline constexpr std::array<Variant, 9> kAllVariants = {
    Variant::Popularity, Variant::CF,       Variant::ContextualCF, Variant::CtsCrf,  Variant::CtsCnn,
    Variant::CtsRnn,     Variant::CtsCrfCf, Variant::CtsCnnCf,     Variant::CtsRnnCf};

// "popularity", "cf", "contextual-cf", "cts-crf", "cts-cnn", "cts-rnn",
// "cts-crf-cf", "cts-cnn-cf", "cts-rnn-cf".
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

bool is_hybrid(Variant v);
bool uses_cf(Variant v);
bool is_neural(Variant v);
bool is_crf(Variant v);

struct NeuralDims {
    int embedding = 300;
    int filters = 128;
    std::vector<int> widths{1, 2, 3};
    int conv_layers = 1;
    int rnn_hidden = 256;      // per direction of the utterance BiLSTM
    int attention = 100;
    int window_hidden = 100;   // window LSTM
    int dense = 256;
    double dropout = 0.5;
    int min_token_count = 1;

    bool operator==(const NeuralDims&) const = default;
};

struct ModelConfig {
    Variant variant = Variant::CtsCrf;
    int window = 5;
    FeatureGroups features = FeatureGroups::All;
    NeuralDims dims;
    nn::TrainConfig train;        // neural models and CF heads
    bool all_turns = false;       // neural: also train at non-suggestion turns
    std::string embeddings_path;  // optional "token v1 .. vD" text file
    crf::CrfTrainConfig crf;
    int cf_neighbors = kDefaultNeighbors;
    int cf_head_hidden = 0;     // CF: dense + softmax
    int ccf_head_hidden = 256;  // Contextual-CF: dense 256 + softmax
    std::uint64_t seed = 42;
};

nlohmann::json to_json(const ModelConfig& c);
/// Rejects unknown keys; missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// A corpus under both labelings: causal training labels drive every
/// feature, promoted test labels define the targets.
struct LabeledCorpus {
    Corpus features;
    Corpus targets;

    static LabeledCorpus from(const Corpus& raw);
    std::size_t size() const { return features.size(); }
    Provenance provenance() const { return features.provenance; }
};

/// An Accept event: the suggestion made at point i (in the response of turn
/// i) was taken up at turn i+1.
struct SuggestionEvent {
    std::size_t conversation = 0;
    int point = 0;
    Suggestible topic = Suggestible::Movie;
    int ordinal = 1;  // suggestion number within the conversation, 1-based
};

/// Accept-labeled events of the promoted labeling, in corpus order.
std::vector<SuggestionEvent> suggestion_events(const LabeledCorpus& corpus);

/// Training points for neural models: the suggestion events, plus (with
/// all_turns) every point whose next turn engages a suggestible topic.
std::vector<SuggestionEvent> training_points(const LabeledCorpus& corpus, bool all_turns);

class NeuralNet;

struct TrainingLog {
    std::vector<double> loss;
    std::vector<double> validation_loss;
    std::string status;  // optimizer status for CRF variants
    int iterations = 0;
};

struct Model {
    ModelConfig config;
    std::optional<CfIndex> cf;
    TopicHead cf_head;   // CF
    TopicHead ccf_head;  // Contextual-CF
    crf::CrfModel crf;
    std::shared_ptr<const NeuralNet> net;
    TrainingLog log;
    std::string training_corpus_hash;  // SHA-256 of the serialized training split
};

/// Throws std::invalid_argument on an empty training set and
/// std::logic_error on test-split provenance.
Model train_model(const Corpus& train, const ModelConfig& config);

/// Per-topic scores for the suggestion made at point i of c (c carries
/// training labels). Neural and head-based variants return probabilities.
TopicScores forward(const Model& m, const Conversation& c, int i);

/// forward() ranking with topics rejected so far in this session moved to
/// the bottom.
std::vector<Suggestible> suggest(const Model& m, const Conversation& session, int i);

/// Topics rejected (and not later accepted) in turns 1..i.
std::vector<Suggestible> rejected_topics(const Conversation& c, int i);

/// Popularity scores: the fixed order with already suggested topics last.
TopicScores popularity_scores(const Conversation& c, int i);

}  // namespace cts
