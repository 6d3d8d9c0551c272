#pragma once

#include <algorithm>
#include <optional>

#include "cts/corpus.hpp"
#include "cts/simulator.hpp"

namespace cts::testing {

/// Small simulated corpus with training labels; the suggestion weights are
/// fixed so no calibration pass runs.
inline Corpus small_labeled_corpus(std::size_t n, std::uint64_t seed = 7) {
    SimConfig cfg;
    cfg.n_conversations = n;
    cfg.persona_count = std::max<std::size_t>(n / 4, 1);
    cfg.master_seed = seed;
    cfg.suggestion_weights = default_target_distribution();
    return assign_training_labels(generate_corpus(cfg));
}

/// The twelve-turn example conversation with its annotated columns. The
/// "Opening" previous state of turn 2 is encoded as Phatic.
inline Conversation table1_conversation() {
    struct Row {
        const char* user;
        const char* system;
        Topic topic;
        std::optional<Topic> ps;
        std::optional<Suggestible> pst;
    };
    using T = Topic;
    using S = Suggestible;
    const Row rows[] = {
        {"Alexa, let's chat.", "Hi! What would you like to talk about?", T::Music, std::nullopt, std::nullopt},
        {"Tell me recent songs.", "Would you like to talk about Billy?", T::Music, T::Phatic, S::Music},
        {"No I do not.", "Alright. How about some info on Khalid?", T::Music, T::Music, S::Music},
        {"Oh, no.", "Ok, do you want to hear about some places to travel?", T::Phatic, T::Music, S::Music},
        {"I love traveling.", "Cool! Which country do you want to visit?", T::Travel, T::Music, S::Travel},
        {"Somewhere in Australia.", "Do you like beaches?", T::Travel, T::Travel, S::Travel},
        {"Yes.", "I recommend Bondi Beach. Wanna hear more about it?", T::Travel, T::Travel, S::Travel},
        {"No thanks, let's talk about something else.", "Would you like to discuss the news?", T::Phatic,
         T::Travel, S::Travel},
        {"No, news is boring.", "Do you want to talk about recent movies?", T::Phatic, T::Phatic, S::News},
        {"Okay, that sounds interesting.", "Which genre do you prefer?", T::Movie, T::Phatic, S::News},
        {"I like both.", "How about The Favourite?", T::Movie, T::Movie, S::Movie},
        {"I have to go Alexa, bye!", "Nice talking to you, good bye!", T::Phatic, T::Movie, S::Movie},
    };
    Conversation c;
    c.conversation_id = "table1";
    c.user_id = "u1";
    c.date = parse_date("2018-08-01");
    c.time_of_day = TimeOfDay::Evening;
    c.name_given = true;
    c.gender = -1;
    int index = 1;
    for (const Row& r : rows) {
        Turn t;
        t.index = index++;
        t.user_utterance = tokenize(r.user);
        t.system_response = r.system;
        t.topic = r.topic;
        t.previous_state = r.ps;
        t.previous_suggested_topic = r.pst;
        c.turns.push_back(std::move(t));
    }
    return c;
}

}  // namespace cts::testing
