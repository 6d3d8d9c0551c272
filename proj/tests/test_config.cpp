#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "cts/config.hpp"

using namespace cts;
using nlohmann::json;

namespace {

void rejects(const json& j, const char* needle) {
    CHECK_THROWS_WITH_AS(run_config_from_json(j), doctest::Contains(needle), std::invalid_argument);
}

}  // namespace

TEST_CASE("defaults survive a JSON round trip") {
    const RunConfig c;
    const json j = to_json(c);
    CHECK(to_json(run_config_from_json(j)).dump() == j.dump());
    CHECK(to_json(run_config_from_json(json::object())).dump() == j.dump());
    CHECK(c.model.dims.embedding == 300);
    CHECK(c.model.dims.filters == 128);
    CHECK(c.model.dims.dropout == 0.5);
    CHECK(c.model.train.batch_size == 64);
    CHECK(c.model.window == 5);
    CHECK(format_date(c.split_cutoff) == "2018-08-11");
    CHECK_FALSE(j.at("model").contains("seed"));
}

TEST_CASE("unknown keys are rejected by name") {
    rejects({{"sead", 1}}, "\"sead\"");
    rejects({{"simulator", {{"n_conversation", 5}}}}, "\"simulator.n_conversation\"");
    rejects({{"model", {{"dims", {{"embeding", 5}}}}}}, "embeding");
    rejects({{"split", {{"date", "2018-01-01"}}}}, "\"split.date\"");
    rejects({{"paths", {{"checkpoint", "x"}}}}, "\"paths.checkpoint\"");
    rejects({{"simulator", {{"target_distribution", {{"Jazz", 1.0}}}}}}, "simulator.target_distribution.Jazz");
    rejects({{"model", {{"seed", 3}}}}, "model.seed");
}

TEST_CASE("invalid values are rejected") {
    rejects({{"seed", "forty-two"}}, "\"seed\" has the wrong type");
    rejects({{"model", {{"variant", "cts-gru"}}}}, "cts-gru");
    rejects({{"eval", {{"resamples", 0}}}}, "eval.resamples");
    rejects({{"ablation", {{"columns", {"all", "everything"}}}}}, "everything");
    rejects({{"ablation", {{"contexts", {0}}}}}, "ablation.contexts");
    CHECK_THROWS_AS(run_config_from_json({{"split", {{"cutoff", "2018-13-01"}}}}), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json({{"simulator", {{"target_distribution", {{"Movie", 1.0}}}}}}),
                    std::invalid_argument);
}

TEST_CASE("the master seed reaches simulator and model") {
    const RunConfig c = run_config_from_json({{"seed", 7}});
    CHECK(c.seed == 7);
    CHECK(c.simulator.master_seed == 7);
    CHECK(c.model.seed == 7);
    RunConfig d;
    d.apply_seed(9);
    CHECK(d.simulator.master_seed == 9);
    CHECK(d.model.seed == 9);
}

TEST_CASE("sections override defaults and files may carry comments") {
    const std::string path = "test_config_run.json";
    {
        std::ofstream out(path);
        out << "{\n  // reduced dimensions\n"
               "  \"model\": {\"variant\": \"cts-rnn-cf\", \"dims\": {\"embedding\": 50}},\n"
               "  \"simulator\": {\"n_conversations\": 12, \"suggestion_weights\": null},\n"
               "  \"ablation\": {\"variants\": [\"cts-cnn\"], \"contexts\": [1, 5]},\n"
               "  \"paths\": {\"out\": \"x.jsonl\"}\n}\n";
    }
    const RunConfig c = load_run_config(path);
    CHECK(c.model.variant == Variant::CtsRnnCf);
    CHECK(c.model.dims.embedding == 50);
    CHECK(c.model.dims.filters == 128);
    CHECK(c.simulator.n_conversations == 12);
    CHECK_FALSE(c.simulator.suggestion_weights.has_value());
    CHECK(c.out_path == "x.jsonl");
    const AblationRequest r = ablation_request(c);
    CHECK(r.variants == std::vector<Variant>{Variant::CtsCnn});
    CHECK(r.contexts == std::vector<int>{1, 5});
    CHECK(r.base.dims.embedding == 50);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_run_config("no-such-config.json"), std::runtime_error);
    {
        std::ofstream out(path);
        out << "{ \"seed\": ";
    }
    CHECK_THROWS_WITH_AS(load_run_config(path), doctest::Contains("not valid JSON"), std::invalid_argument);
    std::remove(path.c_str());
}
