#include "cts/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

namespace cts {

using nlohmann::json;

namespace {

json topic_map(const TopicVector& v) {
    json j = json::object();
    for (Suggestible t : kAllSuggestible) j[std::string(to_string(t))] = v[code(t)];
    return j;
}

TopicVector topic_vector(const json& j, const std::string& key) {
    if (!j.is_object()) throw std::invalid_argument("config key \"" + key + "\" must be an object");
    TopicVector v{};
    std::set<Suggestible> seen;
    for (const auto& [name, value] : j.items()) {
        Suggestible t;
        try {
            t = parse_suggestible(name);
        } catch (const std::invalid_argument&) {
            throw std::invalid_argument("unknown config key \"" + key + "." + name + "\"");
        }
        v[code(t)] = value.get<double>();
        seen.insert(t);
    }
    if (seen.size() != kAllSuggestible.size())
        throw std::invalid_argument("config key \"" + key + "\" must list all 8 suggestible topics");
    return v;
}

class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw std::invalid_argument("config section \"" + prefix_ + "\" must be an object");
    }

    template <typename T>
    void take(const char* key, T& out) {
        known_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw std::invalid_argument("config key \"" + prefix_ + key + "\" has the wrong type");
        }
    }
    const json* section(const char* key) {
        known_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }
    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!known_.contains(key)) throw std::invalid_argument("unknown config key \"" + prefix_ + key + "\"");
    }

private:
    const json& j_;
    std::string prefix_;
    std::set<std::string> known_;
};

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
    seed = s;
    simulator.master_seed = s;
    model.seed = s;
}

json to_json(const SimConfig& c) {
    json j = {{"n_conversations", c.n_conversations},
              {"target_distribution", topic_map(c.target_distribution)},
              {"persona_count", c.persona_count},
              {"start_date", format_date(c.start_date)},
              {"n_days", c.n_days},
              {"preference_noise", c.preference_noise},
              {"affinity_scale", c.affinity_scale},
              {"fatigue_mean", c.fatigue_mean},
              {"followup_turns_mean", c.followup_turns_mean},
              {"user_initiative_prob", c.user_initiative_prob},
              {"switch_on_reject_prob", c.switch_on_reject_prob},
              {"return_to_rejected_prob", c.return_to_rejected_prob},
              {"leave_after_run_prob", c.leave_after_run_prob},
              {"leave_after_reject_prob", c.leave_after_reject_prob},
              {"max_turns", c.max_turns},
              {"policy_sharpness_first", c.policy_sharpness_first},
              {"policy_sharpness_decay", c.policy_sharpness_decay},
              {"policy_sharpness_min", c.policy_sharpness_min},
              {"calibration_conversations", c.calibration_conversations},
              {"calibration_rounds", c.calibration_rounds}};
    j["suggestion_weights"] = c.suggestion_weights ? topic_map(*c.suggestion_weights) : json(nullptr);
    return j;
}

SimConfig sim_config_from_json(const json& j, SimConfig c) {
    Reader r(j, "simulator.");
    r.take("n_conversations", c.n_conversations);
    if (const json* t = r.section("target_distribution"))
        c.target_distribution = topic_vector(*t, "simulator.target_distribution");
    r.take("persona_count", c.persona_count);
    std::string start = format_date(c.start_date);
    r.take("start_date", start);
    c.start_date = parse_date(start);
    r.take("n_days", c.n_days);
    r.take("preference_noise", c.preference_noise);
    r.take("affinity_scale", c.affinity_scale);
    r.take("fatigue_mean", c.fatigue_mean);
    r.take("followup_turns_mean", c.followup_turns_mean);
    r.take("user_initiative_prob", c.user_initiative_prob);
    r.take("switch_on_reject_prob", c.switch_on_reject_prob);
    r.take("return_to_rejected_prob", c.return_to_rejected_prob);
    r.take("leave_after_run_prob", c.leave_after_run_prob);
    r.take("leave_after_reject_prob", c.leave_after_reject_prob);
    r.take("max_turns", c.max_turns);
    r.take("policy_sharpness_first", c.policy_sharpness_first);
    r.take("policy_sharpness_decay", c.policy_sharpness_decay);
    r.take("policy_sharpness_min", c.policy_sharpness_min);
    r.take("calibration_conversations", c.calibration_conversations);
    r.take("calibration_rounds", c.calibration_rounds);
    if (const json* w = r.section("suggestion_weights")) {
        if (w->is_null())
            c.suggestion_weights.reset();
        else
            c.suggestion_weights = topic_vector(*w, "simulator.suggestion_weights");
    }
    r.finish();
    c.validate();
    return c;
}

json to_json(const RunConfig& c) {
    json model = to_json(c.model);
    model.erase("seed");
    std::vector<std::string> variants;
    for (Variant v : c.ablation_variants) variants.emplace_back(to_string(v));
    json sim = to_json(c.simulator);
    return {{"seed", c.seed},
            {"simulator", sim},
            {"split", {{"cutoff", format_date(c.split_cutoff)}}},
            {"model", model},
            {"eval", {{"resamples", c.resamples}}},
            {"ablation", {{"variants", variants}, {"contexts", c.ablation_contexts}, {"columns", c.ablation_columns}}},
            {"paths",
             {{"train", c.train_path}, {"test", c.test_path}, {"out", c.out_path}, {"report", c.report_path}}}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    Reader r(j, "");
    r.take("seed", c.seed);
    if (const json* s = r.section("simulator")) c.simulator = sim_config_from_json(*s, c.simulator);
    if (const json* s = r.section("split")) {
        Reader sr(*s, "split.");
        std::string cutoff = format_date(c.split_cutoff);
        sr.take("cutoff", cutoff);
        sr.finish();
        c.split_cutoff = parse_date(cutoff);
    }
    if (const json* m = r.section("model")) {
        if (m->is_object() && m->contains("seed"))
            throw std::invalid_argument("unknown config key \"model.seed\" (use the top-level seed)");
        c.model = model_config_from_json(*m, c.model);
    }
    if (const json* e = r.section("eval")) {
        Reader er(*e, "eval.");
        er.take("resamples", c.resamples);
        er.finish();
        if (c.resamples < 1) throw std::invalid_argument("eval.resamples must be >= 1");
    }
    if (const json* a = r.section("ablation")) {
        Reader ar(*a, "ablation.");
        std::vector<std::string> variants;
        for (Variant v : c.ablation_variants) variants.emplace_back(to_string(v));
        ar.take("variants", variants);
        ar.take("contexts", c.ablation_contexts);
        ar.take("columns", c.ablation_columns);
        ar.finish();
        c.ablation_variants.clear();
        for (const std::string& v : variants) c.ablation_variants.push_back(parse_variant(v));
        for (const std::string& col : c.ablation_columns)
            if (col != "+cf") parse_feature_groups(col);
        for (int m : c.ablation_contexts)
            if (m < 1) throw std::invalid_argument("ablation.contexts must be >= 1");
    }
    if (const json* p = r.section("paths")) {
        Reader pr(*p, "paths.");
        pr.take("train", c.train_path);
        pr.take("test", c.test_path);
        pr.take("out", c.out_path);
        pr.take("report", c.report_path);
        pr.finish();
    }
    r.finish();
    c.apply_seed(c.seed);
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config file " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

AblationRequest ablation_request(const RunConfig& c) {
    AblationRequest r;
    r.variants = c.ablation_variants;
    r.contexts = c.ablation_contexts;
    r.columns = c.ablation_columns;
    r.base = c.model;
    r.resamples = c.resamples;
    return r;
}

}  // namespace cts
