#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "cts/crf.hpp"
#include "crf_oracle.hpp"
#include "gradcheck.hpp"

using namespace cts;
using namespace cts::crf;
using namespace cts::testing;

TEST_CASE("label set has 18 labels in a fixed order") {
    CHECK(label_name(0) == "Movie_accept");
    CHECK(label_name(kNumSuggestible + code(Suggestible::Music)) == "Music_reject");
    CHECK(label_name(kFollowUp) == "follow-up");
    CHECK(label_name(kChat) == "chat");
    for (int y = 0; y < kNumLabels; ++y) CHECK(label_id(label_from_id(y)) == y);
}

TEST_CASE("activate_features") {
    const CrfModel m = CrfModel::make(fv_layout::kDim);
    const SparseInput zero = SparseInput::from_dense(std::vector<double>(fv_layout::kDim, 0.0));
    const auto only_bias = activate_features(m, zero, 3, std::nullopt);
    REQUIRE(only_bias.size() == 1);
    CHECK(only_bias[0].id == m.bias_index(3));

    std::mt19937_64 rng(5);
    std::bernoulli_distribution on(0.2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> dense(fv_layout::kDim, 0.0);
        int nnz = 0;
        for (double& v : dense)
            if (on(rng)) {
                v = 1.0;
                ++nnz;
            }
        const SparseInput x = SparseInput::from_dense(dense);
        const int label = static_cast<int>(rng() % kNumLabels);
        const auto a = activate_features(m, x, label, std::nullopt);
        CHECK(static_cast<int>(a.size()) == nnz + 1);
        CHECK(a == activate_features(m, x, label, std::nullopt));
        // Naive count with a previous label: every nonzero coordinate, the
        // bias, the plain transition and one per nonzero context coordinate.
        int ctx_nnz = 0;
        for (int c : m.context) ctx_nnz += dense[c] != 0.0;
        CHECK(static_cast<int>(activate_features(m, x, label, 2).size()) == nnz + 1 + 1 + ctx_nnz);
        std::set<std::size_t> ids;
        for (const auto& f : activate_features(m, x, label, 2)) ids.insert(f.id);
        CHECK(ids.size() == static_cast<std::size_t>(nnz + 2 + ctx_nnz));
    }
}

TEST_CASE("uniform model: logZ = n ln L and uniform marginals") {
    for (int L : {2, 5, 18})
        for (int n : {1, 3, 6}) {
            CrfModel m = CrfModel::make_generic(L, 4, {3});
            std::vector<SparseInput> x(n, SparseInput::from_dense(std::vector<double>{1, 0, 2, 1}));
            const Marginals mg = log_partition_and_marginals(m, x);
            CHECK(mg.log_z == doctest::Approx(n * std::log(L)).epsilon(1e-12));
            for (const auto& row : mg.node)
                for (double p : row) CHECK(p == doctest::Approx(1.0 / L));
        }
}

TEST_CASE("forward-backward and Viterbi match exhaustive enumeration") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 120; ++trial) {
        const int L = 1 + static_cast<int>(rng() % 4);
        const int n = 1 + static_cast<int>(rng() % 6);
        const Instance inst = random_instance(rng, L, n);
        const Marginals mg = log_partition_and_marginals(inst.model, inst.x);
        const Enumeration e = enumerate(inst.model, inst.x);
        CHECK(std::abs(mg.log_z - e.log_z) <= 1e-10);
        CHECK(std::abs(mg.log_z - mg.log_z_backward) <= 1e-8);
        for (int j = 0; j < n; ++j) {
            double total = 0;
            for (int y = 0; y < L; ++y) {
                CHECK(std::abs(mg.node[j][y] - e.node[j][y]) <= 1e-10);
                CHECK(mg.node[j][y] >= 0.0);
                total += mg.node[j][y];
                if (j > 0)
                    for (int q = 0; q < L; ++q) CHECK(std::abs(mg.edge[j][q][y] - e.edge[j][q][y]) <= 1e-10);
            }
            CHECK(std::abs(total - 1.0) <= 1e-9);
        }
        const std::vector<int> v = viterbi(inst.model, inst.x);
        const double best = path_score(inst.model, inst.x, e.best);
        CHECK(path_score(inst.model, inst.x, v) == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("extreme weights: inference stays exact where scaled recursions underflow") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const int L = 2 + static_cast<int>(rng() % 3);
        const int n = 2 + static_cast<int>(rng() % 4);
        const Instance inst = random_instance(rng, L, n, 5, 2, 400.0);
        const Marginals mg = log_partition_and_marginals(inst.model, inst.x);
        const Enumeration e = enumerate(inst.model, inst.x);
        CHECK(mg.log_z == doctest::Approx(e.log_z).epsilon(1e-12));
        for (int j = 0; j < n; ++j)
            for (int y = 0; y < L; ++y) {
                CHECK(std::isfinite(mg.node[j][y]));
                CHECK(std::abs(mg.node[j][y] - e.node[j][y]) <= 1e-9);
            }
    }
}
TEST_CASE("NaN weights are rejected") {
    CrfModel m = CrfModel::make_generic(3, 2, {});
    m.weights[1] = std::nan("");
    CHECK_THROWS_AS(log_partition_and_marginals(m, {SparseInput::from_dense(std::vector<double>{1, 0})}),
                    std::domain_error);
}

TEST_CASE("NLL: uniform value, finite differences, convexity") {
    {
        const CrfModel m = CrfModel::make_generic(7, 3, {});
        std::vector<double> g(m.n_weights());
        const Sequence s{{SparseInput::from_dense(std::vector<double>{0.5, 0, 1})}, {4}};
        CHECK(nll_and_gradient(m, {s}, 0.0, g) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
        CHECK_THROWS(nll_and_gradient(m, {}, 0.0, g));
    }
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const int L = 2 + static_cast<int>(rng() % 3);
        std::vector<Sequence> data;
        Instance inst = random_instance(rng, L, 1);
        for (int k = 0; k < 3; ++k) {
            const int n = 1 + static_cast<int>(rng() % 4);
            Instance other = random_instance(rng, L, n);
            data.push_back({other.x, random_labels(rng, L, n)});
        }
        const double l2 = 0.1 * (trial % 3);
        std::vector<double> g(inst.model.n_weights());
        nll_and_gradient(inst.model, data, l2, g, Exec::Serial);
        auto loss = [&](std::span<const double> w) {
            CrfModel m = inst.model;
            m.weights.assign(w.begin(), w.end());
            std::vector<double> scratch(m.n_weights());
            return nll_and_gradient(m, data, l2, scratch, Exec::Serial);
        };
        CHECK(cts::testing::check_gradient(loss, inst.model.weights, g).relative_error <= 1e-4);

        // Convexity along a random chord.
        CrfModel a = inst.model, b = random_instance(rng, L, 1).model, mid = a;
        for (std::size_t k = 0; k < mid.weights.size(); ++k) mid.weights[k] = 0.5 * (a.weights[k] + b.weights[k]);
        const double fa = loss(a.weights), fb = loss(b.weights), fm = loss(mid.weights);
        CHECK(fm <= 0.5 * (fa + fb) + 1e-9);
    }
}

TEST_CASE("parallel NLL agrees with the serial reference and ignores thread count") {
    std::mt19937_64 rng(7);
    const Instance base = random_instance(rng, 4, 1, 8, 3);
    std::vector<Sequence> data;
    for (int k = 0; k < 1500; ++k) {
        const int n = 1 + static_cast<int>(rng() % 5);
        data.push_back({random_instance(rng, 4, n, 8, 3).x, random_labels(rng, 4, n)});
    }
    std::vector<double> gs(base.model.n_weights()), g1(gs.size()), g4(gs.size());
    const double fs = nll_and_gradient(base.model, data, 0.01, gs, Exec::Serial);
    const int saved = thread_count();
    set_thread_count(1);
    const double f1 = nll_and_gradient(base.model, data, 0.01, g1, Exec::Parallel);
    set_thread_count(4);
    const double f4 = nll_and_gradient(base.model, data, 0.01, g4, Exec::Parallel);
    set_thread_count(saved);
    CHECK(f1 == f4);
    CHECK(g1 == g4);
    CHECK(std::abs(fs - f1) <= 1e-9 * std::abs(fs));
    for (std::size_t k = 0; k < gs.size(); ++k) CHECK(std::abs(gs[k] - g1[k]) <= 1e-9 * (1 + std::abs(gs[k])));
}

TEST_CASE("training recovers a label determined by one coordinate") {
    // Label = (coordinate 0 > 0) at every position; a fresh held-out set is
    // decoded perfectly.
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    auto make = [&](int count) {
        std::vector<Sequence> out;
        for (int k = 0; k < count; ++k) {
            Sequence s;
            const int n = 1 + static_cast<int>(rng() % 4);
            for (int j = 0; j < n; ++j) {
                double v = nd(rng);
                if (std::abs(v) < 0.2) v = v < 0 ? -0.2 : 0.2;
                s.x.push_back(SparseInput::from_dense(std::vector<double>{v, nd(rng), 1.0}));
                s.labels.push_back(v > 0 ? 1 : 0);
            }
            out.push_back(std::move(s));
        }
        return out;
    };
    const auto train = make(200), test = make(100);
    CrfTrainConfig cfg;
    cfg.l1 = 0.01;
    cfg.l2 = 0.001;
    const CrfTrainResult r = train_crf(train, cfg, CrfModel::make_generic(2, 3, {2}));
    int correct = 0, total = 0;
    for (const auto& s : test) {
        const auto path = viterbi(r.model, s.x);
        for (std::size_t j = 0; j < path.size(); ++j, ++total) correct += path[j] == s.labels[j];
    }
    CHECK(correct == total);
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1]);
}

TEST_CASE("smooth training reaches a stationary point") {
    std::mt19937_64 rng(13);
    std::vector<Sequence> data;
    for (int k = 0; k < 20; ++k) data.push_back({random_instance(rng, 3, 3, 4, 1).x, random_labels(rng, 3, 3)});
    CrfTrainConfig cfg;
    cfg.l1 = 0;
    cfg.l2 = 0.05;
    cfg.gradient_tolerance = 1e-6;
    cfg.relative_tolerance = 0;
    cfg.max_iterations = 2000;
    const CrfTrainResult r = train_crf(data, cfg, CrfModel::make_generic(3, 4, {3}));
    std::vector<double> g(r.model.n_weights());
    nll_and_gradient(r.model, data, cfg.l2, g);
    double norm = 0;
    for (double v : g) norm += v * v;
    CHECK(std::sqrt(norm) < 1e-5);
    CHECK_FALSE(r.warning());
}

TEST_CASE("a dominant L1 penalty zeroes every non-bias weight") {
    std::mt19937_64 rng(17);
    std::vector<Sequence> data;
    for (int k = 0; k < 30; ++k) data.push_back({random_instance(rng, 3, 3, 4, 1).x, random_labels(rng, 3, 3)});
    CrfTrainConfig cfg;
    cfg.l1 = 10.0;
    const CrfTrainResult r = train_crf(data, cfg, CrfModel::make_generic(3, 4, {3}));
    for (std::size_t w = 0; w < r.model.weights.size(); ++w)
        if (!r.model.is_bias(w)) CHECK(r.model.weights[w] == 0.0);
}

TEST_CASE("prediction: uniform projection, shift invariance, checkpoint round trip") {
    Conversation c;
    c.conversation_id = "x";
    for (int i = 1; i <= 4; ++i) {
        Turn t;
        t.index = i;
        t.topic = Topic::Phatic;
        if (i > 1) t.previous_state = Topic::Phatic;
        c.turns.push_back(t);
    }
    CrfModel m = CrfModel::make(fv_layout::kDim);
    for (int i = 0; i <= 4; ++i) {
        const auto s = predict_next_topic(m, c, i);
        for (double v : s.score) CHECK(v == doctest::Approx(0.125).epsilon(1e-12));
    }
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (double& w : m.weights) w = nd(rng);
    const TopicScores before = predict_next_topic(m, c, 3);
    CrfModel shifted = m;
    for (int y = 0; y < kNumLabels; ++y) shifted.weights[shifted.bias_index(y)] += 2.5;
    CHECK(predict_next_topic(shifted, c, 3).ranking() == before.ranking());

    const nlohmann::json j = to_json(m);
    const CrfModel back = crf_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.weights == m.weights);
    CHECK(predict_next_topic(back, c, 3).score == before.score);
    nlohmann::json stale = j;
    stale["fv_layout_version"] = fv_layout::kVersion + 1;
    CHECK_THROWS_AS(crf_from_json(stale), std::runtime_error);
}
