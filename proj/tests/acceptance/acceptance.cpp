// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance [--config configs/acceptance.json] [--only 1,2,...] [--out DIR]
// Exit status is nonzero when any selected criterion fails.

#include <CLI11.hpp>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "cts/checkpoint.hpp"
#include "cts/config.hpp"
#include "cts/eval.hpp"
#include "cts/neural_model.hpp"
#include "cts/nn/optim.hpp"
#include "cts/parallel.hpp"
#include "crf_oracle.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace cts;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s.setf(std::ios::scientific);
    s.precision(1);
    s << v;
    return s.str();
}

// ---- 1: gradients ----------------------------------------------------------

void gradients(Verdict& v) {
    std::mt19937_64 rng(1);
    double worst = 0;
    auto track = [&](const testing::GradCheck& g, const std::string& what) {
        worst = std::max(worst, g.relative_error);
        v.require(g.relative_error < 1e-6, what + " rel " + sci(g.relative_error));
    };

    for (int trial = 0; trial < 5; ++trial) {
        const testing::Instance inst = testing::random_instance(rng, 3, 4, 6, 2);
        const std::vector<crf::Sequence> data = {{inst.x, testing::random_labels(rng, 3, 4)},
                                                 {inst.x, testing::random_labels(rng, 3, 4)}};
        std::vector<double> g(inst.model.n_weights());
        crf::nll_and_gradient(inst.model, data, 0.01, g, Exec::Serial);
        std::vector<double> scratch(g.size());
        crf::CrfModel m = inst.model;
        track(testing::check_gradient(
                  [&](std::span<const double> w) {
                      m.weights.assign(w.begin(), w.end());
                      return crf::nll_and_gradient(m, data, 0.01, scratch, Exec::Serial);
                  },
                  inst.model.weights, g),
              "crf nll");
    }

    SimConfig sc;
    sc.n_conversations = 40;
    sc.persona_count = 10;
    sc.suggestion_weights = default_target_distribution();
    Corpus corpus = generate_corpus(sc);
    for (Conversation& c : corpus.conversations) c = assign_training_labels(c);
    const CfIndex cf(build_training_users(corpus), 5);
    std::vector<std::vector<std::string>> sentences;
    for (const Conversation& c : corpus.conversations)
        for (const Turn& t : c.turns) sentences.push_back(t.user_utterance);
    NeuralDims dims;
    dims.embedding = 4;
    dims.filters = 3;
    dims.widths = {1, 2};
    dims.rnn_hidden = 3;
    dims.attention = 3;
    dims.window_hidden = 4;
    dims.dense = 5;
    for (EncoderKind kind : {EncoderKind::Cnn, EncoderKind::Rnn}) {
        NeuralNet net(kind, dims, nn::Vocabulary::build(sentences), true, FeatureGroups::All);
        net.init(7);
        const Conversation& c = corpus.conversations[2];
        const SlotWindow w = net.make_window(c, std::min<int>(4, static_cast<int>(c.turns.size())), 3, &cf);
        std::vector<double> g(net.params.size(), 0.0), scratch(g.size());
        net.loss(net.params, g, w, 2, nullptr);
        track(testing::check_gradient(
                  [&](std::span<const double> p) {
                      std::fill(scratch.begin(), scratch.end(), 0.0);
                      return net.loss(p, scratch, w, 2, nullptr);
                  },
                  net.params, g),
              kind == EncoderKind::Cnn ? "cnn net" : "rnn net");
    }

    for (int hidden : {0, 6}) {
        TopicHead head(8, hidden, 0.5);
        std::vector<double> p(head.layout().size());
        std::normal_distribution<double> nd(0, 0.3);
        for (double& x : p) x = nd(rng);
        std::vector<double> input(8);
        for (double& x : input) x = nd(rng);
        std::vector<double> g(p.size(), 0.0), scratch(p.size());
        head.loss(p, g, input, 5, nullptr);
        track(testing::check_gradient(
                  [&](std::span<const double> q) {
                      std::fill(scratch.begin(), scratch.end(), 0.0);
                      return head.loss(q, scratch, input, 5, nullptr);
                  },
                  p, g),
              "topic head");
    }
    v.detail << "crf nll, cnn, rnn and topic heads; worst relative error " << sci(worst);
}

// ---- 2: forward-backward and Viterbi -----------------------------------------

void inference(Verdict& v) {
    std::mt19937_64 rng(2);
    double worst = 0;
    int viterbi_ok = 0, trials = 0;
    for (int L = 2; L <= 4; ++L)
        for (int n = 1; n <= 5; ++n)
            for (int rep = 0; rep < 8; ++rep) {
                const testing::Instance inst = testing::random_instance(rng, L, n, 6, 2, 1.5);
                const testing::Enumeration e = testing::enumerate(inst.model, inst.x);
                const crf::Marginals m = crf::log_partition_and_marginals(inst.model, inst.x);
                worst = std::max({worst, std::abs(m.log_z - e.log_z), std::abs(m.log_z_backward - e.log_z)});
                for (int j = 0; j < n; ++j)
                    for (int a = 0; a < L; ++a) {
                        worst = std::max(worst, std::abs(m.node[j][a] - e.node[j][a]));
                        if (j > 0)
                            for (int b = 0; b < L; ++b)
                                worst = std::max(worst, std::abs(m.edge[j][a][b] - e.edge[j][a][b]));
                    }
                viterbi_ok += crf::viterbi(inst.model, inst.x) == e.best;
                ++trials;
            }
    v.require(worst <= 1e-10, "max deviation " + sci(worst));
    v.require(viterbi_ok == trials, "viterbi " + std::to_string(viterbi_ok) + "/" + std::to_string(trials));
    v.detail << trials << " random chains vs enumeration, max deviation " << sci(worst) << ", viterbi " << viterbi_ok
             << "/" << trials;
}

// ---- 3: KNN ----------------------------------------------------------------

void knn(Verdict& v) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> tri(-1, 1);
    std::bernoulli_distribution sparse(0.3);
    auto random_vector = [&] {
        UserVector u{};
        for (double& x : u) x = sparse(rng) ? tri(rng) : 0;
        return u;
    };
    std::vector<TrainingUser> users(1000);
    for (int k = 0; k < 1000; ++k) {
        char id[16];
        std::snprintf(id, sizeof id, "user%04d", (k * 7919) % 1000);
        users[k].id = id;
        users[k].u = random_vector();
    }
    int matches = 0;
    for (int q = 0; q < 100; ++q) {
        const UserVector u = random_vector();
        // Brute force: cosine of every row, sorted by (similarity desc, id asc).
        std::vector<std::pair<double, std::string>> all;
        for (const TrainingUser& r : users) {
            double dot = 0, na = 0, nb = 0;
            for (int d = 0; d < kUserDim; ++d) {
                dot += u[d] * r.u[d];
                na += u[d] * u[d];
                nb += r.u[d] * r.u[d];
            }
            all.emplace_back(na == 0 || nb == 0 ? 0.0 : dot / std::sqrt(na * nb), r.id);
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        bool ok = true;
        for (Exec exec : {Exec::Serial, Exec::Parallel}) {
            const NeighborSet got = knn_neighbors(u, users, kDefaultNeighbors, exec);
            ok = ok && got.size() == static_cast<std::size_t>(kDefaultNeighbors);
            for (std::size_t k = 0; ok && k < got.size(); ++k)
                ok = got[k].id == all[k].second && std::abs(got[k].similarity - all[k].first) <= 1e-12;
        }
        matches += ok;
    }
    v.require(matches == 100, std::to_string(matches) + "/100 queries");
    v.detail << "1000 users x 100 queries, K=" << kDefaultNeighbors << ", serial and parallel: " << matches
             << "/100 identical to brute force";
}

// ---- 4: optimizers -----------------------------------------------------------

void optimizers(Verdict& v) {
    double worst_q = 0;
    for (unsigned seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd;
        const int n = 12;
        Eigen::MatrixXd R(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) R(i, j) = nd(rng);
        const Eigen::MatrixXd A = R * R.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) b(i) = nd(rng);
        auto f = [&](std::span<const double> x, std::span<double> g) {
            Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
            Eigen::Map<Eigen::VectorXd>(g.data(), n) = A * xv - b;
            return 0.5 * xv.dot(A * xv) - b.dot(xv);
        };
        nn::LbfgsConfig cfg;
        cfg.gradient_tolerance = 1e-10;
        const nn::LbfgsResult r = nn::lbfgs_minimize(f, std::vector<double>(n, 0.0), cfg);
        worst_q = std::max(worst_q, (Eigen::Map<const Eigen::VectorXd>(r.x.data(), n) - A.ldlt().solve(b)).norm());
    }
    v.require(worst_q < 1e-6, "quadratic error " + sci(worst_q));

    auto rosenbrock = [](std::span<const double> x, std::span<double> g) {
        const double a = 1 - x[0], b = x[1] - x[0] * x[0];
        g[0] = -2 * a - 400 * x[0] * b;
        g[1] = 200 * b;
        return a * a + 100 * b * b;
    };
    nn::LbfgsConfig cfg;
    cfg.gradient_tolerance = 1e-10;
    const nn::LbfgsResult r = nn::lbfgs_minimize(rosenbrock, {-1.2, 1.0}, cfg);
    std::vector<double> g(2);
    const double fr = rosenbrock(r.x, g);
    v.require(fr < 1e-8, "rosenbrock f " + sci(fr));

    nn::ParamLayout layout;
    layout.add("x", 1);
    nn::AdamConfig adam;
    adam.learning_rate = 0.01;
    std::vector<double> p = {5.0}, grad(1);
    nn::OptimState st;
    int steps = 0;
    while (std::abs(p[0]) >= 1e-2 && steps < 2000) {
        grad[0] = 2 * p[0];
        nn::adam_step(p, grad, st, adam, layout);
        ++steps;
    }
    v.require(std::abs(p[0]) < 1e-2, "adam |x| " + sci(std::abs(p[0])));
    v.detail << "lbfgs quadratic error " << sci(worst_q) << ", rosenbrock f " << sci(fr) << " in " << r.iterations
             << " iterations, adam x^2 from 5 reaches " << sci(p[0]) << " in " << steps << " steps";
}

// ---- 5: labels ---------------------------------------------------------------

std::vector<std::string> label_strings(const Conversation& c) {
    std::vector<std::string> out;
    for (const Turn& t : c.turns) out.push_back(to_string(*t.label));
    return out;
}

void labels(Verdict& v) {
    const std::vector<std::string> table1 = {"chat",          "Music_accept", "follow-up", "chat",
                                             "Travel_accept", "follow-up",    "follow-up", "chat",
                                             "News_reject",   "Movie_accept", "follow-up", "chat"};
    const Conversation c = testing::table1_conversation();
    v.require(label_strings(assign_training_labels(c)) == table1, "Table 1 training labels");
    v.require(label_strings(assign_test_labels(c)) == table1, "Table 1 test labels without a later News turn");

    Conversation extended = c;
    for (int k = 13; k <= 14; ++k) {
        Turn t;
        t.index = k;
        t.topic = k == 13 ? Topic::Phatic : Topic::News;
        t.previous_state = Topic::Phatic;
        t.previous_suggested_topic = Suggestible::Movie;
        extended.turns.push_back(t);
    }
    const std::vector<std::string> train = label_strings(assign_training_labels(extended));
    const std::vector<std::string> test = label_strings(assign_test_labels(extended));
    int changed = 0;
    for (std::size_t k = 0; k < train.size(); ++k) changed += train[k] != test[k];
    v.require(train[8] == "News_reject" && test[8] == "News_accept" && changed == 1, "promotion of turn 9");

    SimConfig sc;
    sc.n_conversations = 500;
    sc.suggestion_weights = default_target_distribution();
    int promotions = 0, bad = 0;
    for (const Conversation& raw : generate_corpus(sc).conversations) {
        const Conversation a = assign_training_labels(raw), b = assign_test_labels(raw);
        for (std::size_t k = 0; k < raw.turns.size(); ++k) {
            if (*a.turns[k].label == *b.turns[k].label) continue;
            const bool ok = a.turns[k].label->is_reject() && b.turns[k].label->is_accept() &&
                            a.turns[k].label->topic == b.turns[k].label->topic;
            bad += !ok;
            promotions += ok;
        }
    }
    v.require(bad == 0 && promotions > 0, "simulated promotions");
    v.detail << "Table 1 labels exact; turn 14 News promotes turn 9 only; " << promotions
             << " promotions on 500 simulated conversations, all Reject->Accept of the same topic";
}

// ---- 6: metrics --------------------------------------------------------------

void metrics(Verdict& v) {
    using S = Suggestible;
    const EvalReport r = score_outcomes({{S::Movie, S::Movie, 1},
                                         {S::Movie, S::Movie, 1},
                                         {S::News, S::Movie, 1},
                                         {S::News, S::Music, 2}});
    v.require(r.micro_accuracy == 0.5 && r.macro_accuracy == 0.5, "fixture");
    const EvalReport perfect = score_outcomes({{S::Games, S::Games, 1}, {S::Travel, S::Travel, 1}});
    v.require(perfect.micro_accuracy == 1.0 && perfect.macro_accuracy == 1.0, "perfect predictor");
    v.detail << "4-event fixture: micro " << r.micro_accuracy << ", macro " << r.macro_accuracy;
}

// ---- 7-10: experiments ---------------------------------------------------------

struct Experiment {
    RunConfig config;
    Corpus corpus;
    DateSplit split;
    fs::path out;
    std::map<std::string, EvalReport> reports;
    std::map<std::string, double> seconds;

    EvalReport& run(const std::string& key, const ModelConfig& mc) {
        if (auto it = reports.find(key); it != reports.end()) return it->second;
        const auto t0 = std::chrono::steady_clock::now();
        const Model m = train_model(split.train, mc);
        EvalReport r = evaluate(m, split.test);
        seconds[key] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "  %-18s micro %.4f macro %.4f  %.0fs\n", key.c_str(), r.micro_accuracy,
                     r.macro_accuracy, seconds[key]);
        if (!out.empty()) std::ofstream(out / (key + ".json")) << to_json(r).dump(2) << "\n";
        return reports.emplace(key, std::move(r)).first->second;
    }
    EvalReport& variant(Variant v) {
        ModelConfig mc = config.model;
        mc.variant = v;
        return run(std::string(to_string(v)), mc);
    }
};

void table4(Experiment& x, Verdict& v) {
    std::map<Variant, double> micro;
    for (Variant var : kAllVariants) micro[var] = x.variant(var).micro_accuracy;
    const double pop = micro[Variant::Popularity], crf = micro[Variant::CtsCrf];
    v.require(crf - pop >= 0.10, "(a) CTS-CRF - Popularity = " + fmt(crf - pop));
    v.require(micro[Variant::ContextualCF] > micro[Variant::CF], "(b) Contextual-CF > CF");
    bool strict = false;
    const std::pair<Variant, Variant> pairs[] = {{Variant::CtsCrfCf, Variant::CtsCrf},
                                                 {Variant::CtsCnnCf, Variant::CtsCnn},
                                                 {Variant::CtsRnnCf, Variant::CtsRnn}};
    for (const auto& [hybrid, base] : pairs) {
        v.require(micro[hybrid] >= micro[base] - 0.01,
                  "(c) " + std::string(to_string(hybrid)) + " below " + std::string(to_string(base)) + " - 1pt");
        strict = strict || micro[hybrid] > micro[base];
    }
    v.require(strict, "(c) no hybrid strictly better");
    double total = 0;
    for (const auto& [k, s] : x.seconds) total += s;
    v.detail << "micro:";
    for (Variant var : kAllVariants) v.detail << " " << to_string(var) << " " << fmt(micro[var]);
    v.detail << "; train+eval " << fmt(total / 60, 1) << " min on " << thread_count() << " thread(s)";
}

void table7(Experiment& x, Verdict& v) {
    auto cell = [&](int context, FeatureGroups g) -> EvalReport& {
        ModelConfig mc = x.config.model;
        mc.variant = Variant::CtsRnn;
        mc.window = context;
        mc.features = g;
        const bool is_default = context == x.config.model.window && g == x.config.model.features;
        return x.run(is_default ? "cts-rnn" : "cts-rnn-ctx" + std::to_string(context) + "-" + std::string(to_string(g)),
                     mc);
    };
    const double none1 = cell(1, FeatureGroups::None).macro_accuracy;
    const double all1 = cell(1, FeatureGroups::All).macro_accuracy;
    const double all3 = cell(3, FeatureGroups::All).macro_accuracy;
    const double all5 = cell(5, FeatureGroups::All).macro_accuracy;
    v.require(all5 - none1 >= 0.05, "all/ctx5 - none/ctx1 = " + fmt(all5 - none1));
    v.require(all3 >= all1 - 0.01 && all5 >= all3 - 0.01, "context trend");
    const Significance s = compare_paired(cell(5, FeatureGroups::All).outcomes, cell(1, FeatureGroups::None).outcomes,
                                          x.config.resamples, x.config.seed);
    v.detail << "CTS-RNN macro: none/ctx1 " << fmt(none1) << ", all/ctx1 " << fmt(all1) << ", all/ctx3 " << fmt(all3)
             << ", all/ctx5 " << fmt(all5) << " (bootstrap p " << fmt(s.p_bootstrap) << ", t-test p "
             << sci(s.p_ttest) << ")";
}

void figure3(Experiment& x, Verdict& v) {
    const EvalReport& r = x.variant(Variant::CtsCrf);
    v.require(r.by_suggestion_index.size() >= 3, "fewer than 3 buckets");
    if (r.by_suggestion_index.size() < 3) return;
    const auto& b = r.by_suggestion_index;
    v.require(b[1].accuracy <= b[0].accuracy + 0.02 && b[2].accuracy <= b[1].accuracy + 0.02, "trend");
    v.detail << "CTS-CRF by suggestion index:";
    for (std::size_t k = 0; k < std::min<std::size_t>(5, b.size()); ++k)
        v.detail << " " << b[k].index << ":" << fmt(b[k].accuracy, 3) << " (n=" << b[k].n_events << ")";
}

void determinism(Experiment& x, Verdict& v) {
    const int saved = thread_count();
    auto with_threads = [&](int n, auto&& f) {
        set_thread_count(n);
        auto result = f();
        set_thread_count(saved);
        return result;
    };
    const std::string base = serialize_corpus(x.corpus);
    const std::string c1 = with_threads(1, [&] { return serialize_corpus(generate_corpus(x.config.simulator)); });
    const std::string c4 = with_threads(4, [&] { return serialize_corpus(generate_corpus(x.config.simulator)); });
    const std::string cs =
        serialize_corpus(generate_corpus(x.config.simulator, Exec::Serial));
    v.require(c1 == base && c4 == base && cs == base, "corpus bytes");

    // Checkpoints and reports on a slice, so every variant family is covered.
    Corpus train, test;
    train.provenance = x.split.train.provenance;
    test.provenance = x.split.test.provenance;
    train.conversations.assign(x.split.train.conversations.begin(), x.split.train.conversations.begin() + 1200);
    test.conversations.assign(x.split.test.conversations.begin(), x.split.test.conversations.begin() + 600);
    int identical = 0, total = 0;
    for (Variant var : {Variant::ContextualCF, Variant::CtsCrfCf, Variant::CtsCnnCf, Variant::CtsRnnCf}) {
        ModelConfig mc = x.config.model;
        mc.variant = var;
        mc.train.epochs = 2;
        mc.crf.max_iterations = 30;
        std::vector<std::string> ckpts, reports;
        for (int n : {1, 4, 1}) {
            with_threads(n, [&] {
                const Model m = train_model(train, mc);
                ckpts.push_back(checkpoint_to_json(m).dump());
                reports.push_back(to_json(evaluate(m, test)).dump());
                return 0;
            });
        }
        const bool same = ckpts[0] == ckpts[1] && ckpts[0] == ckpts[2] && reports[0] == reports[1] &&
                          reports[0] == reports[2];
        v.require(same, std::string(to_string(var)));
        identical += same;
        ++total;
    }
    v.detail << "10k corpus identical across runs, threads {1,4} and the serial reference; checkpoints and reports of "
             << identical << "/" << total << " variant families identical across runs and threads {1,4}";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string config_path = CTS_ACCEPTANCE_CONFIG;
    std::string only;
    std::string out;
    app.add_option("--config", config_path, "run config");
    app.add_option("--only", only, "comma-separated criteria to run");
    app.add_option("--out", out, "directory for per-model reports");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    for (int k = 1; k <= 10; ++k) selected.insert(k);
    if (!only.empty()) {
        selected.clear();
        std::stringstream s(only);
        for (std::string tok; std::getline(s, tok, ',');) selected.insert(std::stoi(tok));
    }

    Experiment x;
    const bool heavy = selected.count(7) || selected.count(8) || selected.count(9) || selected.count(10);
    if (heavy) {
        x.config = load_run_config(config_path);
        x.corpus = generate_corpus(x.config.simulator);
        x.split = split_by_date(x.corpus, x.config.split_cutoff);
        if (!out.empty()) {
            x.out = out;
            fs::create_directories(x.out);
        }
        std::fprintf(stderr, "corpus %zu conversations (train %zu, test %zu), %d thread(s)\n", x.corpus.size(),
                     x.split.train.size(), x.split.test.size(), thread_count());
    }

    const std::vector<std::pair<int, std::function<void(Verdict&)>>> criteria = {
        {1, gradients},
        {2, inference},
        {3, knn},
        {4, optimizers},
        {5, labels},
        {6, metrics},
        {7, [&](Verdict& v) { table4(x, v); }},
        {8, [&](Verdict& v) { table7(x, v); }},
        {9, [&](Verdict& v) { figure3(x, v); }},
        {10, [&](Verdict& v) { determinism(x, v); }},
    };
    int failures = 0;
    for (const auto& [k, check] : criteria) {
        if (!selected.count(k)) continue;
        Verdict v;
        try {
            check(v);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << "[exception: " << e.what() << "]";
        }
        failures += !v.pass;
        std::printf("criterion %d: %s  %s\n", k, v.pass ? "PASS" : "FAIL", v.detail.str().c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
