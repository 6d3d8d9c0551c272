#pragma once

#include <functional>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "cts/models.hpp"

namespace cts {

struct TopicAccuracy {
    int n_events = 0;
    int correct = 0;
    double accuracy = 0;
};

struct IndexBucket {
    int index = 0;  // ordinal suggestion number
    int n_events = 0;
    int correct = 0;
    double accuracy = 0;
};

/// One scored event: the accepted topic, the prediction and the ordinal.
struct Outcome {
    Suggestible truth = Suggestible::Movie;
    Suggestible predicted = Suggestible::Movie;
    int ordinal = 1;
    bool correct() const { return truth == predicted; }
};

struct EvalReport {
    std::string variant;
    std::uint64_t seed = 0;
    std::string corpus_hash;
    int n_events = 0;
    int n_correct = 0;
    double micro_accuracy = 0;
    double macro_accuracy = 0;
    std::map<Suggestible, TopicAccuracy> per_topic;  // topics with events only
    std::vector<Suggestible> excluded_topics;       // no events, left out of macro
    std::vector<IndexBucket> by_suggestion_index;
    std::map<Suggestible, double> acceptance_rate;
    std::vector<Outcome> outcomes;  // not serialized
};

/// Micro/macro, per-topic and per-index aggregates. Throws
/// std::invalid_argument when there are no outcomes.
EvalReport score_outcomes(std::vector<Outcome> outcomes);
double macro_accuracy(const std::vector<Outcome>& outcomes);
std::vector<IndexBucket> accuracy_by_suggestion_index(const std::vector<Outcome>& outcomes);

using Predictor = std::function<TopicScores(const Conversation& c, int i)>;

/// Scores every Accept event of the promoted labeling; the predictor sees
/// the conversation under training labels.
std::vector<Outcome> predict_events(const Predictor& predict, const LabeledCorpus& test);
EvalReport evaluate(const Predictor& predict, const LabeledCorpus& test);
EvalReport evaluate(const Model& model, const Corpus& test);

/// accepts / (accepts + rejects) per topic under the corpus labels; topics
/// never suggested are omitted.
std::map<Suggestible, double> acceptance_rate_by_topic(const Corpus& labeled);

/// SHA-256 of the serialized corpus, hex.
std::string corpus_hash(const Corpus& corpus);

nlohmann::json to_json(const EvalReport& r);
std::string render_text(const EvalReport& r);
/// "index,n_events,correct,accuracy" rows.
std::string by_index_csv(const EvalReport& r);
/// "topic,acceptance_rate" rows.
std::string acceptance_csv(const EvalReport& r);

// ---- significance ----------------------------------------------------------

struct Significance {
    double macro_difference = 0;  // a - b
    double p_bootstrap = 1;       // one-sided, H1: a > b
    double p_ttest = 1;           // one-tailed paired t-test on per-event correctness
    int resamples = 0;
};

/// Paired comparison over the same event list.
Significance compare_paired(const std::vector<Outcome>& a, const std::vector<Outcome>& b, int resamples,
                            std::uint64_t seed);

// ---- ablation --------------------------------------------------------------

/// Feature columns: "none", "topical", "user-profile", "all", "+cf".
struct AblationRequest {
    std::vector<Variant> variants{Variant::CtsRnn};
    std::vector<int> contexts{1, 3, 5};
    std::vector<std::string> columns{"none", "topical", "user-profile", "all", "+cf"};
    ModelConfig base;
    int resamples = 10000;
};

struct AblationCell {
    Variant variant = Variant::CtsRnn;
    int context = 5;
    std::string column;
    double macro_accuracy = 0;
    double micro_accuracy = 0;
    std::optional<Significance> vs_none;  // against the "none" column of the row
    std::optional<std::string> error;
    std::vector<Outcome> outcomes;
};

struct AblationGrid {
    std::vector<AblationCell> cells;  // in request order
    const AblationCell* find(Variant v, int context, const std::string& column) const;
};

/// Trains and evaluates every requested cell; a failing cell records its
/// error and the others continue.
AblationGrid run_ablation(const AblationRequest& request, const Corpus& train, const Corpus& test);

nlohmann::json to_json(const AblationGrid& g);
std::string render_text(const AblationGrid& g);

}  // namespace cts
