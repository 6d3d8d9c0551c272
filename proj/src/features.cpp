#include "cts/features.hpp"

#include <sstream>
#include <stdexcept>

namespace cts {

std::string fv_layout::describe() {
    std::ostringstream out;
    out << "fv/v" << kVersion << ":";
    for (const Block& b : kBlocks) out << b.name << "@" << b.offset << "+" << b.size << ";";
    out << "topics=";
    for (int i = 0; i < kNumTopics; ++i) out << (i ? "," : "") << to_string(topic_from_code(i));
    out << ";suggestible=";
    for (int i = 0; i < kNumSuggestible; ++i)
        out << (i ? "," : "") << to_string(suggestible_from_code(i));
    out << ";times=";
    for (int i = 0; i < kNumTimesOfDay; ++i)
        out << (i ? "," : "") << to_string(static_cast<TimeOfDay>(i));
    return out.str();
}

namespace {

StateFeatures profile_only(const Conversation& c) {
    StateFeatures s;
    s.name_given = c.name_given;
    s.gender = c.gender;
    s.time_of_day = c.time_of_day;
    return s;
}

// Folds turn `t` into the running state.
void advance(StateFeatures& s, const Turn& t) {
    if (t.label) {
        const TurnLabel& l = *t.label;
        auto& slot = s.topic_response[code(l.topic)];
        if (l.is_accept()) {
            slot = 1;
            s.prev_accepted = l.topic;
        } else if (l.is_reject()) {
            if (slot != 1) slot = -1;
            s.prev_rejected = l.topic;
        }
    }
    if (t.topic != Topic::Phatic && s.prev_topic_1 != t.topic) {
        s.prev_topic_2 = s.prev_topic_1;
        s.prev_topic_1 = t.topic;
    }
}

}  // namespace

StateFeatures state_after(const Conversation& c, int j) {
    if (j < 0 || j > static_cast<int>(c.turns.size()))
        throw std::out_of_range("state_after: turn count out of range");
    StateFeatures s = profile_only(c);
    for (int k = 0; k < j; ++k) advance(s, c.turns[k]);
    return s;
}

StateFeatures extract_state_features(const Conversation& c, int i) {
    if (i < 1 || i > static_cast<int>(c.turns.size()))
        throw std::out_of_range("extract_state_features: turn " + std::to_string(i) +
                                " out of range 1.." + std::to_string(c.turns.size()));
    return state_after(c, i - 1);
}

std::vector<StateFeatures> state_trajectory(const Conversation& c) {
    std::vector<StateFeatures> out;
    out.reserve(c.turns.size() + 1);
    StateFeatures s = profile_only(c);
    out.push_back(s);
    for (const Turn& t : c.turns) {
        advance(s, t);
        out.push_back(s);
    }
    return out;
}

FeatureVector assemble_fv(const StateFeatures& s) {
    using namespace fv_layout;
    FeatureVector fv{};
    for (int k = 0; k < kNumSuggestible; ++k) fv[kTopicResponse + k] = s.topic_response[k];
    fv[kPrevTopic1 + (s.prev_topic_1 ? code(*s.prev_topic_1) : kNumTopics)] = 1.0;
    fv[kPrevTopic2 + (s.prev_topic_2 ? code(*s.prev_topic_2) : kNumTopics)] = 1.0;
    fv[kPrevAccepted + (s.prev_accepted ? code(*s.prev_accepted) : kNumSuggestible)] = 1.0;
    fv[kPrevRejected + (s.prev_rejected ? code(*s.prev_rejected) : kNumSuggestible)] = 1.0;
    fv[kNameGiven] = s.name_given ? 1.0 : 0.0;
    fv[kGender] = s.gender;
    fv[kTime + code(s.time_of_day)] = 1.0;
    return fv;
}

std::string_view to_string(FeatureGroups g) {
    switch (g) {
        case FeatureGroups::None: return "none";
        case FeatureGroups::Topical: return "topical";
        case FeatureGroups::UserProfile: return "user-profile";
        case FeatureGroups::All: return "all";
    }
    return "?";
}

FeatureGroups parse_feature_groups(std::string_view s) {
    for (auto g : {FeatureGroups::None, FeatureGroups::Topical, FeatureGroups::UserProfile,
                   FeatureGroups::All})
        if (to_string(g) == s) return g;
    throw std::invalid_argument("unknown feature group \"" + std::string(s) + "\"");
}

void mask_fv(std::span<double> fv, FeatureGroups groups) {
    using namespace fv_layout;
    const bool keep_topical = groups == FeatureGroups::Topical || groups == FeatureGroups::All;
    const bool keep_profile = groups == FeatureGroups::UserProfile || groups == FeatureGroups::All;
    if (!keep_topical)
        for (int k = 0; k < kTopicalEnd; ++k) fv[k] = 0.0;
    if (!keep_profile)
        for (int k = kProfileBegin; k < kDim; ++k) fv[k] = 0.0;
}

ContextWindow make_window(const Conversation& c, int i, int m) {
    if (m < 1) throw std::invalid_argument("make_window: m must be >= 1");
    if (i < 0 || i > static_cast<int>(c.turns.size()))
        throw std::out_of_range("make_window: turn index out of range");
    const std::vector<StateFeatures> traj = state_trajectory(c);
    ContextWindow w;
    w.m = m;
    w.turns.resize(m);
    for (int slot = 0; slot < m; ++slot) {
        const int turn = i - m + 1 + slot;
        TurnView& v = w.turns[slot];
        if (turn < 1) continue;
        v.pad = false;
        v.turn_index = turn;
        v.tokens = &c.turns[turn - 1].user_utterance;
        v.state = traj[turn];
    }
    return w;
}

}  // namespace cts
