#include "cts/eval.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "cts/hash.hpp"

namespace cts {

// ---- metrics ---------------------------------------------------------------

double macro_accuracy(const std::vector<Outcome>& outcomes) {
    std::array<int, kNumSuggestible> n{}, correct{};
    for (const Outcome& o : outcomes) {
        ++n[code(o.truth)];
        correct[code(o.truth)] += o.correct();
    }
    double sum = 0;
    int topics = 0;
    for (int t = 0; t < kNumSuggestible; ++t) {
        if (n[t] == 0) continue;
        sum += static_cast<double>(correct[t]) / n[t];
        ++topics;
    }
    return topics ? sum / topics : 0.0;
}

std::vector<IndexBucket> accuracy_by_suggestion_index(const std::vector<Outcome>& outcomes) {
    std::map<int, IndexBucket> buckets;
    for (const Outcome& o : outcomes) {
        IndexBucket& b = buckets[o.ordinal];
        b.index = o.ordinal;
        ++b.n_events;
        b.correct += o.correct();
    }
    std::vector<IndexBucket> out;
    for (auto& [k, b] : buckets) {
        b.accuracy = static_cast<double>(b.correct) / b.n_events;
        out.push_back(b);
    }
    return out;
}

EvalReport score_outcomes(std::vector<Outcome> outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("no scorable suggestion events");
    EvalReport r;
    for (const Outcome& o : outcomes) {
        TopicAccuracy& t = r.per_topic[o.truth];
        ++t.n_events;
        t.correct += o.correct();
        r.n_correct += o.correct();
    }
    r.n_events = static_cast<int>(outcomes.size());
    for (auto& [topic, t] : r.per_topic) t.accuracy = static_cast<double>(t.correct) / t.n_events;
    for (Suggestible t : kAllSuggestible)
        if (!r.per_topic.contains(t)) r.excluded_topics.push_back(t);
    r.micro_accuracy = static_cast<double>(r.n_correct) / r.n_events;
    r.macro_accuracy = macro_accuracy(outcomes);
    r.by_suggestion_index = accuracy_by_suggestion_index(outcomes);
    r.outcomes = std::move(outcomes);
    return r;
}

std::vector<Outcome> predict_events(const Predictor& predict, const LabeledCorpus& test) {
    const std::vector<SuggestionEvent> events = suggestion_events(test);
    std::vector<Outcome> out(events.size());
    parallel_for(static_cast<std::ptrdiff_t>(events.size()), [&](std::ptrdiff_t k) {
        const SuggestionEvent& e = events[k];
        const TopicScores s = predict(test.features.conversations[e.conversation], e.point);
        out[k] = {e.topic, s.best(), e.ordinal};
    });
    return out;
}

std::map<Suggestible, double> acceptance_rate_by_topic(const Corpus& labeled) {
    std::array<int, kNumSuggestible> acc{}, rej{};
    for (const auto& c : labeled.conversations)
        for (const auto& t : c.turns) {
            if (!t.label)
                throw std::invalid_argument("acceptance_rate_by_topic: unlabeled turn in " + c.conversation_id);
            if (t.label->is_accept()) ++acc[code(t.label->topic)];
            if (t.label->is_reject()) ++rej[code(t.label->topic)];
        }
    std::map<Suggestible, double> out;
    for (int t = 0; t < kNumSuggestible; ++t)
        if (acc[t] + rej[t] > 0) out[suggestible_from_code(t)] = static_cast<double>(acc[t]) / (acc[t] + rej[t]);
    return out;
}

std::string corpus_hash(const Corpus& corpus) { return sha256_hex(serialize_corpus(corpus)); }

EvalReport evaluate(const Predictor& predict, const LabeledCorpus& test) {
    EvalReport r = score_outcomes(predict_events(predict, test));
    r.acceptance_rate = acceptance_rate_by_topic(test.targets);
    return r;
}

EvalReport evaluate(const Model& model, const Corpus& test) {
    const LabeledCorpus lc = LabeledCorpus::from(test);
    EvalReport r = evaluate([&](const Conversation& c, int i) { return forward(model, c, i); }, lc);
    r.variant = std::string(to_string(model.config.variant));
    r.seed = model.config.seed;
    r.corpus_hash = corpus_hash(test);
    return r;
}

// ---- output ----------------------------------------------------------------

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_topic = nlohmann::json::object();
    for (const auto& [t, a] : r.per_topic)
        per_topic[std::string(to_string(t))] = {
            {"n_events", a.n_events}, {"correct", a.correct}, {"accuracy", a.accuracy}};
    nlohmann::json excluded = nlohmann::json::array();
    for (Suggestible t : r.excluded_topics) excluded.push_back(std::string(to_string(t)));
    nlohmann::json by_index = nlohmann::json::array();
    for (const auto& b : r.by_suggestion_index)
        by_index.push_back(
            {{"index", b.index}, {"n_events", b.n_events}, {"correct", b.correct}, {"accuracy", b.accuracy}});
    nlohmann::json rates = nlohmann::json::object();
    for (const auto& [t, v] : r.acceptance_rate) rates[std::string(to_string(t))] = v;
    return {{"variant", r.variant},
            {"seed", r.seed},
            {"corpus_hash", r.corpus_hash},
            {"n_events", r.n_events},
            {"n_correct", r.n_correct},
            {"micro_accuracy", r.micro_accuracy},
            {"macro_accuracy", r.macro_accuracy},
            {"per_topic", per_topic},
            {"excluded_topics", excluded},
            {"by_suggestion_index", by_index},
            {"acceptance_rate", rates}};
}

std::string render_text(const EvalReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(3);
    out << "variant " << (r.variant.empty() ? "-" : r.variant) << "\n";
    out << std::left << std::setw(24) << "topic" << std::right << std::setw(8) << "events" << std::setw(10)
        << "accuracy" << "\n";
    for (const auto& [t, a] : r.per_topic)
        out << std::left << std::setw(24) << to_string(t) << std::right << std::setw(8) << a.n_events
            << std::setw(10) << a.accuracy << "\n";
    out << std::left << std::setw(24) << "micro" << std::right << std::setw(8) << r.n_events << std::setw(10)
        << r.micro_accuracy << "\n";
    out << std::left << std::setw(24) << "macro" << std::right << std::setw(8) << "" << std::setw(10)
        << r.macro_accuracy << "\n";
    for (Suggestible t : r.excluded_topics) out << "excluded from macro (no events): " << to_string(t) << "\n";
    return out.str();
}

std::string by_index_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "index,n_events,correct,accuracy\n" << std::setprecision(17);
    for (const auto& b : r.by_suggestion_index)
        out << b.index << "," << b.n_events << "," << b.correct << "," << b.accuracy << "\n";
    return out.str();
}

std::string acceptance_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "topic,acceptance_rate\n" << std::setprecision(17);
    for (const auto& [t, v] : r.acceptance_rate) out << to_string(t) << "," << v << "\n";
    return out.str();
}

// ---- significance ----------------------------------------------------------

Significance compare_paired(const std::vector<Outcome>& a, const std::vector<Outcome>& b, int resamples,
                            std::uint64_t seed) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("paired comparison needs equal, nonempty event lists");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k].truth != b[k].truth) throw std::invalid_argument("paired comparison over different events");
    Significance s;
    s.resamples = resamples;
    s.macro_difference = macro_accuracy(a) - macro_accuracy(b);

    const std::size_t n = a.size();
    Rng rng = make_rng(seed, {40});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<Outcome> ra(n), rb(n);
    int not_better = 0;
    for (int r = 0; r < resamples; ++r) {
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t j = pick(rng);
            ra[k] = a[j];
            rb[k] = b[j];
        }
        not_better += macro_accuracy(ra) - macro_accuracy(rb) <= 0.0;
    }
    s.p_bootstrap = resamples > 0 ? (not_better + 1.0) / (resamples + 1.0) : 1.0;

    double mean = 0;
    for (std::size_t k = 0; k < n; ++k) mean += static_cast<double>(a[k].correct()) - b[k].correct();
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = static_cast<double>(a[k].correct()) - b[k].correct() - mean;
        var += d * d;
    }
    var /= n > 1 ? static_cast<double>(n - 1) : 1.0;
    if (var == 0.0 || n < 2) {
        s.p_ttest = mean > 0 ? 0.0 : 1.0;
    } else {
        const double t = mean / std::sqrt(var / static_cast<double>(n));
        const boost::math::students_t dist(static_cast<double>(n - 1));
        s.p_ttest = boost::math::cdf(boost::math::complement(dist, t));
    }
    return s;
}

// ---- ablation --------------------------------------------------------------

namespace {

Variant with_cf(Variant v) {
    switch (v) {
        case Variant::CtsCrf: return Variant::CtsCrfCf;
        case Variant::CtsCnn: return Variant::CtsCnnCf;
        case Variant::CtsRnn: return Variant::CtsRnnCf;
        default: throw std::invalid_argument("no CF hybrid of variant " + std::string(to_string(v)));
    }
}

}  // namespace

const AblationCell* AblationGrid::find(Variant v, int context, const std::string& column) const {
    for (const auto& c : cells)
        if (c.variant == v && c.context == context && c.column == column) return &c;
    return nullptr;
}

AblationGrid run_ablation(const AblationRequest& request, const Corpus& train, const Corpus& test) {
    AblationGrid grid;
    for (Variant v : request.variants)
        for (int context : request.contexts)
            for (const std::string& column : request.columns) {
                AblationCell cell;
                cell.variant = v;
                cell.context = context;
                cell.column = column;
                try {
                    if (!is_neural(v)) throw std::invalid_argument("feature ablation needs a neural variant");
                    ModelConfig cfg = request.base;
                    cfg.window = context;
                    if (column == "+cf") {
                        cfg.variant = with_cf(v);
                        cfg.features = FeatureGroups::All;
                    } else {
                        cfg.variant = v;
                        cfg.features = parse_feature_groups(column);
                    }
                    const EvalReport r = evaluate(train_model(train, cfg), test);
                    cell.macro_accuracy = r.macro_accuracy;
                    cell.micro_accuracy = r.micro_accuracy;
                    cell.outcomes = r.outcomes;
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                grid.cells.push_back(std::move(cell));
            }
    for (auto& cell : grid.cells) {
        if (cell.error || cell.column == "none") continue;
        const AblationCell* base = grid.find(cell.variant, cell.context, "none");
        if (!base || base->error) continue;
        cell.vs_none = compare_paired(cell.outcomes, base->outcomes, request.resamples, request.base.seed);
    }
    return grid;
}

nlohmann::json to_json(const AblationGrid& g) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : g.cells) {
        nlohmann::json j = {{"variant", std::string(to_string(c.variant))},
                            {"context", c.context},
                            {"features", c.column}};
        if (c.error) {
            j["error"] = *c.error;
        } else {
            j["macro_accuracy"] = c.macro_accuracy;
            j["micro_accuracy"] = c.micro_accuracy;
        }
        if (c.vs_none)
            j["vs_none"] = {{"macro_difference", c.vs_none->macro_difference},
                            {"p_bootstrap", c.vs_none->p_bootstrap},
                            {"p_ttest", c.vs_none->p_ttest},
                            {"resamples", c.vs_none->resamples}};
        cells.push_back(j);
    }
    return {{"cells", cells}};
}

std::string render_text(const AblationGrid& g) {
    std::vector<std::string> columns;
    std::vector<std::pair<Variant, int>> rows;
    for (const auto& c : g.cells) {
        if (std::find(columns.begin(), columns.end(), c.column) == columns.end()) columns.push_back(c.column);
        const auto row = std::make_pair(c.variant, c.context);
        if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    }
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << std::left << std::setw(12) << "model" << std::setw(9) << "context";
    for (const auto& col : columns) out << std::right << std::setw(14) << col;
    out << "\n";
    for (const auto& [v, ctx] : rows) {
        out << std::left << std::setw(12) << to_string(v) << std::setw(9) << ctx;
        for (const auto& col : columns) {
            const AblationCell* c = g.find(v, ctx, col);
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(3);
            if (!c || c->error)
                cell << "error";
            else
                cell << c->macro_accuracy << (c->vs_none && c->vs_none->p_bootstrap < 0.05 ? "*" : "");
            out << std::right << std::setw(14) << cell.str();
        }
        out << "\n";
    }
    out << "* paired bootstrap p < 0.05 against the none column\n";
    return out.str();
}

}  // namespace cts
