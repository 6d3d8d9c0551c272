#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "cts/features.hpp"
#include "fixtures.hpp"

using namespace cts;

namespace {

// Backward scan over turns 1..i-1, written independently of the forward fold.
StateFeatures replay(const Conversation& c, int i) {
    StateFeatures s;
    s.name_given = c.name_given;
    s.gender = c.gender;
    s.time_of_day = c.time_of_day;
    for (Suggestible t : kAllSuggestible) {
        bool accepted = false;
        std::optional<bool> last_was_reject;
        for (int k = 1; k < i; ++k) {
            const TurnLabel& l = *c.turns[k - 1].label;
            if (!l.is_suggestion_event() || l.topic != t) continue;
            accepted = accepted || l.is_accept();
            last_was_reject = l.is_reject();
        }
        s.topic_response[code(t)] = accepted ? 1 : (last_was_reject.value_or(false) ? -1 : 0);
    }
    for (int k = i - 1; k >= 1; --k) {
        const TurnLabel& l = *c.turns[k - 1].label;
        if (!s.prev_accepted && l.is_accept()) s.prev_accepted = l.topic;
        if (!s.prev_rejected && l.is_reject()) s.prev_rejected = l.topic;
        const Topic t = c.turns[k - 1].topic;
        if (t == Topic::Phatic) continue;
        if (!s.prev_topic_1)
            s.prev_topic_1 = t;
        else if (!s.prev_topic_2 && t != *s.prev_topic_1)
            s.prev_topic_2 = t;
    }
    return s;
}

}  // namespace

TEST_CASE("fv layout") {
    CHECK(fv_layout::kDim == 68);
    int total = 0;
    for (const auto& b : fv_layout::kBlocks) {
        CHECK(b.offset == total);
        total += b.size;
    }
    CHECK(total == 68);
    CHECK(fv_layout::describe().rfind("fv/v1:", 0) == 0);
}

TEST_CASE("empty history") {
    const Conversation c = assign_training_labels(testing::table1_conversation());
    const StateFeatures s = extract_state_features(c, 1);
    for (auto v : s.topic_response) CHECK(v == 0);
    CHECK_FALSE(s.prev_topic_1);
    CHECK_FALSE(s.prev_topic_2);
    CHECK_FALSE(s.prev_accepted);
    CHECK_FALSE(s.prev_rejected);
    CHECK_THROWS_AS(extract_state_features(c, 0), std::out_of_range);
    CHECK_THROWS_AS(extract_state_features(c, 13), std::out_of_range);
}

TEST_CASE("Table 1 state at turn 6") {
    const Conversation c = assign_training_labels(testing::table1_conversation());
    const StateFeatures s = extract_state_features(c, 6);
    for (Suggestible t : kAllSuggestible) {
        const int expect = (t == Suggestible::Music || t == Suggestible::Travel) ? 1 : 0;
        CHECK(s.topic_response[code(t)] == expect);
    }
    CHECK(s.prev_accepted == Suggestible::Travel);
    CHECK_FALSE(s.prev_rejected);
    CHECK(s.prev_topic_1 == Topic::Travel);
    CHECK(s.prev_topic_2 == Topic::Music);
    CHECK(s.name_given);
    CHECK(s.gender == -1);
    CHECK(s.time_of_day == TimeOfDay::Evening);

    const StateFeatures late = extract_state_features(c, 12);
    CHECK(late.topic_response[code(Suggestible::News)] == -1);
    CHECK(late.topic_response[code(Suggestible::Movie)] == 1);
    CHECK(late.prev_rejected == Suggestible::News);
    CHECK(late.prev_accepted == Suggestible::Movie);
}

TEST_CASE("replay oracle agrees at every prefix of simulated conversations") {
    const Corpus corpus = testing::small_labeled_corpus(300);
    for (const Conversation& c : corpus.conversations) {
        const auto traj = state_trajectory(c);
        for (int i = 1; i <= static_cast<int>(c.turns.size()); ++i) {
            const StateFeatures s = extract_state_features(c, i);
            CHECK(s == replay(c, i));
            CHECK(s == traj[i - 1]);
        }
    }
}

TEST_CASE("causality and monotone accept memory") {
    const Corpus corpus = testing::small_labeled_corpus(100, 11);
    for (const Conversation& c : corpus.conversations) {
        const int n = static_cast<int>(c.turns.size());
        for (int i = 1; i <= n; ++i) {
            Conversation mutated = c;
            for (int k = i; k < n; ++k) {
                mutated.turns[k].topic = Topic::Weather;
                mutated.turns[k].label = TurnLabel::reject(Suggestible::Movie);
            }
            CHECK(extract_state_features(mutated, i) == extract_state_features(c, i));
        }
        const auto traj = state_trajectory(c);
        for (std::size_t j = 1; j < traj.size(); ++j)
            for (int t = 0; t < kNumSuggestible; ++t) {
                CHECK(traj[j].topic_response[t] >= -1);
                CHECK(traj[j].topic_response[t] <= 1);
                if (traj[j - 1].topic_response[t] == 1) CHECK(traj[j].topic_response[t] == 1);
            }
    }
}

TEST_CASE("assemble_fv") {
    SUBCASE("empty state: None slots hot") {
        StateFeatures s;
        const FeatureVector fv = assemble_fv(s);
        CHECK(fv[fv_layout::kPrevTopic1 + kNumTopics] == 1.0);
        CHECK(fv[fv_layout::kPrevTopic2 + kNumTopics] == 1.0);
        CHECK(fv[fv_layout::kPrevAccepted + kNumSuggestible] == 1.0);
        CHECK(fv[fv_layout::kPrevRejected + kNumSuggestible] == 1.0);
        CHECK(fv[fv_layout::kTime] == 1.0);
        CHECK(std::count(fv.begin(), fv.end(), 0.0) == 63);
    }
    SUBCASE("one-hot blocks sum to one") {
        const Corpus corpus = testing::small_labeled_corpus(50);
        for (const Conversation& c : corpus.conversations)
            for (const StateFeatures& s : state_trajectory(c)) {
                const FeatureVector fv = assemble_fv(s);
                for (const auto& b : fv_layout::kBlocks) {
                    if (b.size == 1 || b.offset == fv_layout::kTopicResponse) continue;
                    CHECK(std::accumulate(fv.begin() + b.offset, fv.begin() + b.offset + b.size, 0.0) == 1.0);
                }
            }
    }
    SUBCASE("gender changes exactly one coordinate") {
        StateFeatures a, b;
        a.gender = 1;
        b.gender = -1;
        const FeatureVector fa = assemble_fv(a), fb = assemble_fv(b);
        int diff = 0;
        for (int k = 0; k < fv_layout::kDim; ++k) diff += fa[k] != fb[k];
        CHECK(diff == 1);
    }
    SUBCASE("injective on distinct states") {
        const Corpus corpus = testing::small_labeled_corpus(80, 3);
        std::vector<StateFeatures> states;
        for (const Conversation& c : corpus.conversations)
            for (const StateFeatures& s : state_trajectory(c)) states.push_back(s);
        std::map<FeatureVector, StateFeatures> seen;
        for (const StateFeatures& s : states) {
            auto [it, fresh] = seen.emplace(assemble_fv(s), s);
            if (!fresh) CHECK(it->second == s);
        }
    }
}

TEST_CASE("feature group masking") {
    StateFeatures s;
    s.topic_response[0] = 1;
    s.prev_topic_1 = Topic::Music;
    s.name_given = true;
    s.gender = 1;
    const FeatureVector full = assemble_fv(s);
    FeatureVector fv = full;
    mask_fv(fv, FeatureGroups::None);
    CHECK(std::all_of(fv.begin(), fv.end(), [](double v) { return v == 0.0; }));
    fv = full;
    mask_fv(fv, FeatureGroups::Topical);
    for (int k = 0; k < fv_layout::kDim; ++k) CHECK(fv[k] == (k < fv_layout::kTopicalEnd ? full[k] : 0.0));
    fv = full;
    mask_fv(fv, FeatureGroups::UserProfile);
    for (int k = 0; k < fv_layout::kDim; ++k) CHECK(fv[k] == (k >= fv_layout::kProfileBegin ? full[k] : 0.0));
    fv = full;
    mask_fv(fv, FeatureGroups::All);
    CHECK(fv == full);
    for (auto g : {FeatureGroups::None, FeatureGroups::Topical, FeatureGroups::UserProfile, FeatureGroups::All})
        CHECK(parse_feature_groups(to_string(g)) == g);
    CHECK_THROWS(parse_feature_groups("text"));
}

TEST_CASE("context windows") {
    const Conversation c = assign_training_labels(testing::table1_conversation());
    SUBCASE("i = 1, m = 5: four pads then turn 1") {
        const ContextWindow w = make_window(c, 1, 5);
        REQUIRE(w.turns.size() == 5);
        for (int k = 0; k < 4; ++k) {
            CHECK(w.turns[k].pad);
            CHECK(w.turns[k].tokens == nullptr);
        }
        CHECK_FALSE(w.turns[4].pad);
        CHECK(w.turns[4].turn_index == 1);
    }
    SUBCASE("i = 7, m = 5: turns 3..7") {
        const ContextWindow w = make_window(c, 7, 5);
        for (int k = 0; k < 5; ++k) {
            CHECK_FALSE(w.turns[k].pad);
            CHECK(w.turns[k].turn_index == 3 + k);
            CHECK(w.turns[k].state == state_after(c, 3 + k));
            CHECK(*w.turns[k].tokens == c.turns[2 + k].user_utterance);
        }
    }
    SUBCASE("contiguous and ending at i") {
        for (int m = 1; m <= 7; ++m)
            for (int i = 1; i <= 12; ++i) {
                const ContextWindow w = make_window(c, i, m);
                REQUIRE(static_cast<int>(w.turns.size()) == m);
                CHECK(w.turns.back().turn_index == i);
                for (int k = 1; k < m; ++k)
                    if (!w.turns[k - 1].pad) CHECK(w.turns[k].turn_index == w.turns[k - 1].turn_index + 1);
            }
    }
    CHECK_THROWS(make_window(c, 3, 0));
}
