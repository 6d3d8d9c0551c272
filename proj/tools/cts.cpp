// cts: corpus generation, training, evaluation, ablation and an interactive
// suggestion loop.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cts/checkpoint.hpp"
#include "cts/config.hpp"
#include "cts/eval.hpp"
#include "cts/features.hpp"
#include "cts/parallel.hpp"

using namespace cts;

namespace {

// Failures carry a category so scripts can dispatch on the first token.
struct Failure {
    std::string category;
    std::string message;
    int code;
};

[[noreturn]] void fail(const std::string& category, const std::string& message, int code) {
    throw Failure{category, message, code};
}

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> variant;
    std::string train, test, out, report;
    int threads = 0;
};

RunConfig resolve_config(const Common& o) {
    RunConfig c;
    try {
        if (!o.config_path.empty()) c = load_run_config(o.config_path);
        if (o.seed) c.apply_seed(*o.seed);
        if (o.variant) c.model.variant = parse_variant(*o.variant);
    } catch (const std::invalid_argument& e) {
        fail("config", e.what(), 3);
    } catch (const std::runtime_error& e) {
        fail("io", e.what(), 4);
    }
    return c;
}

std::string pick(const std::string& flag, const std::string& from_config, const char* name) {
    const std::string& v = flag.empty() ? from_config : flag;
    if (v.empty()) fail("usage", std::string("missing --") + name, 2);
    return v;
}

bool cannot_open(const std::string& what) { return what.rfind("cannot open", 0) == 0; }

Corpus read_corpus(const std::string& path) {
    try {
        return load_corpus(path);
    } catch (const CorpusError& e) {
        const std::string what = e.what();
        if (cannot_open(what)) fail("io", what, 4);
        fail("data", what, 5);
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("io", "cannot write " + path, 4);
    out << text;
    if (!out) fail("io", "write failed for " + path, 4);
}

Model read_checkpoint(const std::string& path) {
    try {
        return load_checkpoint(path);
    } catch (const CheckpointError& e) {
        const std::string what = e.what();
        if (cannot_open(what)) fail("io", what, 4);
        fail("checkpoint", what, 6);
    }
}

DateSplit split(const Corpus& c, const RunConfig& cfg) {
    DateSplit s = split_by_date(c, cfg.split_cutoff);
    for (const std::string& w : s.warnings) std::cerr << "warning: " << w << "\n";
    return s;
}

// ---- gen-corpus ------------------------------------------------------------

int cmd_gen_corpus(const Common& o) {
    const RunConfig cfg = resolve_config(o);
    const std::string out = pick(o.out, cfg.out_path, "out");
    Corpus corpus;
    try {
        corpus = generate_corpus(cfg.simulator);
    } catch (const std::invalid_argument& e) {
        fail("config", e.what(), 3);
    }
    try {
        save_corpus(out, corpus);
    } catch (const CorpusError& e) {
        fail("io", e.what(), 4);
    }
    double turns = 0;
    for (const Conversation& c : corpus.conversations) turns += static_cast<double>(c.turns.size());
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "conversations " << corpus.size() << "\n";
    std::cout << "mean_length " << (corpus.empty() ? 0.0 : turns / static_cast<double>(corpus.size())) << "\n";
    std::cout << "corpus_hash " << corpus_hash(corpus) << "\n";
    if (!corpus.empty())
        for (const auto& [t, share] : topic_distribution(corpus))
            std::cout << "topic " << to_string(t) << " " << share << "\n";
    return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const Common& o) {
    const RunConfig cfg = resolve_config(o);
    const std::string in = pick(o.train, cfg.train_path, "train");
    const std::string out = pick(o.out, cfg.out_path, "out");
    const DateSplit s = split(read_corpus(in), cfg);
    Model m;
    try {
        m = train_model(s.train, cfg.model);
    } catch (const std::invalid_argument& e) {
        fail("data", e.what(), 5);
    } catch (const std::logic_error& e) {
        fail("data", e.what(), 5);
    }
    try {
        save_checkpoint(out, m);
    } catch (const CheckpointError& e) {
        fail("io", e.what(), 4);
    }
    std::cout << "variant " << to_string(m.config.variant) << "\n";
    std::cout << "train_conversations " << s.train.size() << "\n";
    if (!m.log.status.empty()) std::cout << "status " << m.log.status << "\n";
    if (!m.log.loss.empty()) std::cout << "final_train_loss " << std::setprecision(6) << m.log.loss.back() << "\n";
    std::cout << "checkpoint " << out << "\n";
    return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const Common& o, const std::string& checkpoint, bool whole_corpus) {
    const RunConfig cfg = resolve_config(o);
    const Model m = read_checkpoint(checkpoint);
    const std::string in = pick(o.test, cfg.test_path, "test");
    Corpus test = read_corpus(in);
    if (!whole_corpus) test = split(test, cfg).test;
    test.provenance = Provenance::Test;
    EvalReport r;
    try {
        r = evaluate(m, test);
    } catch (const std::invalid_argument& e) {
        fail("data", e.what(), 5);
    }
    const std::string report = o.report.empty() ? cfg.report_path : o.report;
    if (!report.empty()) {
        write_text(report, to_json(r).dump(2) + "\n");
        write_text(report + ".by_index.csv", by_index_csv(r));
        write_text(report + ".acceptance.csv", acceptance_csv(r));
    }
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "micro " << r.micro_accuracy << "\n";
    std::cout << "macro " << r.macro_accuracy << "\n";
    std::cout << "events " << r.n_events << "\n";
    return 0;
}

// ---- ablate ----------------------------------------------------------------

int cmd_ablate(const Common& o) {
    const RunConfig cfg = resolve_config(o);
    const std::string in = pick(o.train, cfg.train_path, "train");
    const DateSplit s = split(read_corpus(in), cfg);
    const AblationGrid g = run_ablation(ablation_request(cfg), s.train, s.test);
    const std::string report = o.report.empty() ? cfg.report_path : o.report;
    if (!report.empty()) write_text(report, to_json(g).dump(2) + "\n");
    std::cout << render_text(g);
    for (const AblationCell& c : g.cells)
        if (c.error) std::cerr << "warning: cell " << to_string(c.variant) << "/" << c.context << "/" << c.column
                               << " failed: " << *c.error << "\n";
    return 0;
}

// ---- suggest ---------------------------------------------------------------

const char* kReplHelp =
    "commands:\n"
    "  <text>                 user turn without a topic (phatic)\n"
    "  :accept [text]         user takes up the top suggestion\n"
    "  :reject [text]         user turns the top suggestion down\n"
    "  :topic <Topic> [text]  user turn engaging a topic\n"
    "  :state                 dump the state features\n"
    "  :help                  this text\n"
    "  :quit                  leave\n";

struct Session {
    const Model& model;
    Conversation c;
    std::optional<Suggestible> pending;

    void add_turn(const std::string& text, Topic topic) {
        Turn t;
        t.index = static_cast<int>(c.turns.size()) + 1;
        t.user_utterance = tokenize(text);
        t.system_response = "";
        t.topic = topic;
        if (!c.turns.empty()) t.previous_state = c.turns.back().topic;
        t.previous_suggested_topic = pending;
        c.turns.push_back(std::move(t));
        c = assign_training_labels(c);
    }

    void show(std::ostream& out) {
        const int i = static_cast<int>(c.turns.size());
        const TopicScores scores = forward(model, c, i);
        const std::vector<Suggestible> ranking = suggest(model, c, i);
        pending = ranking.front();
        out << "turn " << i << (c.turns.empty() ? "" : " label " + to_string(*c.turns.back().label)) << "\n";
        out << std::fixed << std::setprecision(4);
        for (std::size_t k = 0; k < ranking.size(); ++k)
            out << "  " << k + 1 << ". " << std::left << std::setw(24) << to_string(ranking[k]) << std::right
                << scores.score[code(ranking[k])] << "\n";
    }

    void dump_state(std::ostream& out) const {
        const StateFeatures s = state_after(c, static_cast<int>(c.turns.size()));
        auto opt = [](const auto& v) { return v ? std::string(to_string(*v)) : std::string("None"); };
        out << "topic_response";
        for (Suggestible t : kAllSuggestible) out << " " << to_string(t) << "=" << int(s.topic_response[code(t)]);
        out << "\nprev_topic_1 " << opt(s.prev_topic_1) << "\nprev_topic_2 " << opt(s.prev_topic_2)
            << "\nprev_accepted " << opt(s.prev_accepted) << "\nprev_rejected " << opt(s.prev_rejected)
            << "\nname_given " << s.name_given << "\ngender " << s.gender << "\ntime_of_day "
            << to_string(s.time_of_day) << "\n";
    }
};

std::string rest_of(std::istringstream& in) {
    std::string rest;
    std::getline(in >> std::ws, rest);
    return rest;
}

int cmd_suggest(const std::string& checkpoint, const std::string& time_of_day, int gender, bool name_given) {
    const Model m = read_checkpoint(checkpoint);
    Session s{m, {}, std::nullopt};
    s.c.conversation_id = "session";
    s.c.user_id = "operator";
    try {
        s.c.time_of_day = parse_time_of_day(time_of_day);
    } catch (const std::invalid_argument& e) {
        fail("usage", e.what(), 2);
    }
    if (gender < -1 || gender > 1) fail("usage", "gender must be -1, 0 or 1", 2);
    s.c.gender = gender;
    s.c.name_given = name_given;
    s.show(std::cout);
    std::string line;
    while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
        std::istringstream in(line);
        std::string head;
        in >> head;
        if (head.empty()) continue;
        if (head == ":quit") break;
        if (head == ":help") {
            std::cout << kReplHelp;
        } else if (head == ":state") {
            s.dump_state(std::cout);
        } else if (head == ":accept") {
            const std::string text = rest_of(in);
            s.add_turn(text.empty() ? "sure" : text, to_topic(*s.pending));
            s.show(std::cout);
        } else if (head == ":reject") {
            const std::string text = rest_of(in);
            s.add_turn(text.empty() ? "no thanks" : text, Topic::Phatic);
            s.show(std::cout);
        } else if (head == ":topic") {
            std::string name;
            in >> name;
            Topic t;
            try {
                t = parse_topic(name);
            } catch (const std::invalid_argument& e) {
                std::cout << "error: " << e.what() << "\n" << kReplHelp;
                continue;
            }
            s.add_turn(rest_of(in), t);
            s.show(std::cout);
        } else if (head[0] == ':') {
            std::cout << "unknown command " << head << "\n" << kReplHelp;
        } else {
            s.add_turn(line, Topic::Phatic);
            s.show(std::cout);
        }
    }
    std::cout << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conversational topic suggestion: simulate, train, evaluate, probe."};
    app.require_subcommand(1);
    Common o;
    std::uint64_t seed = 0;
    std::string variant;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "run config JSON");
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--threads", o.threads, "OpenMP threads (0 = default)");
    };

    CLI::App* gen = app.add_subcommand("gen-corpus", "generate a simulated corpus");
    add_common(gen);
    gen->add_option("--out", o.out, "corpus JSONL to write");

    CLI::App* train = app.add_subcommand("train", "train a variant on the training side of the date split");
    add_common(train);
    train->add_option("--variant", variant, "model variant");
    train->add_option("--train", o.train, "corpus JSONL");
    train->add_option("--out", o.out, "checkpoint to write");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test side of the date split");
    add_common(eval);
    std::string checkpoint;
    bool whole = false;
    eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--test", o.test, "corpus JSONL");
    eval->add_option("--report", o.report, "report JSON (CSV curves are written next to it)");
    eval->add_flag("--all", whole, "score the whole corpus instead of the test side");

    CLI::App* ablate = app.add_subcommand("ablate", "feature and context ablation grid");
    add_common(ablate);
    ablate->add_option("--train", o.train, "corpus JSONL (split by date)");
    ablate->add_option("--report", o.report, "grid JSON");

    CLI::App* show = app.add_subcommand("config", "print the resolved run config as JSON");
    add_common(show);

    CLI::App* sug = app.add_subcommand("suggest", "interactive suggestion session");
    std::string time_of_day = "Evening";
    int gender = 0;
    bool name_given = false;
    sug->add_option("checkpoint", checkpoint, "checkpoint file")->required();
    sug->add_option("--time-of-day", time_of_day, "Morning, Day, Evening or Night");
    sug->add_option("--gender", gender, "-1, 0 or 1");
    sug->add_flag("--name-given", name_given, "the user gave a name");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    for (CLI::App* sub : {gen, train, eval, ablate, show}) {
        if (!sub->parsed()) continue;
        if (sub->count("--seed")) o.seed = seed;
        if (sub == train && train->count("--variant")) o.variant = variant;
    }
    set_thread_count(o.threads);

    try {
        if (gen->parsed()) return cmd_gen_corpus(o);
        if (train->parsed()) return cmd_train(o);
        if (eval->parsed()) return cmd_eval(o, checkpoint, whole);
        if (ablate->parsed()) return cmd_ablate(o);
        if (show->parsed()) {
            std::cout << to_json(resolve_config(o)).dump(2) << "\n";
            return 0;
        }
        if (sug->parsed()) return cmd_suggest(checkpoint, time_of_day, gender, name_given);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.category << ": " << f.message << "\n";
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
