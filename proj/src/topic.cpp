#include "cts/topic.hpp"

#include <stdexcept>

namespace cts {

namespace {

constexpr std::array<std::string_view, kNumTopics> kTopicNames = {
    "Movie",      "Music",       "News",    "Pets_Animal", "Sci_Tech",
    "Sports",     "Travel",      "Games",   "Celebrities", "Literature",
    "Food_Drinks", "Other",      "Weather", "Fashion",     "Fitness",
    "Entertainment_and_Cars",    "Phatic"};

constexpr std::array<Topic, kNumSuggestible> kSuggestibleToTopic = {
    Topic::Movie,  Topic::Music,  Topic::Travel, Topic::Pets_Animal,
    Topic::News,   Topic::Sports, Topic::Entertainment_and_Cars, Topic::Games};

constexpr std::array<std::string_view, kNumTimesOfDay> kTimeNames = {
    "Morning", "Day", "Evening", "Night"};

}  // namespace

std::string_view to_string(Topic t) { return kTopicNames.at(code(t)); }

std::string_view to_string(Suggestible t) { return to_string(to_topic(t)); }

std::string_view to_string(TimeOfDay t) { return kTimeNames.at(code(t)); }

Topic parse_topic(std::string_view s) {
    for (int i = 0; i < kNumTopics; ++i)
        if (kTopicNames[i] == s) return static_cast<Topic>(i);
    throw std::invalid_argument("unknown topic \"" + std::string(s) + "\"");
}

Suggestible parse_suggestible(std::string_view s) {
    const Topic t = parse_topic(s);
    if (auto st = to_suggestible(t)) return *st;
    throw std::invalid_argument("topic \"" + std::string(s) + "\" is not suggestible");
}

TimeOfDay parse_time_of_day(std::string_view s) {
    for (int i = 0; i < kNumTimesOfDay; ++i)
        if (kTimeNames[i] == s) return static_cast<TimeOfDay>(i);
    throw std::invalid_argument("unknown time_of_day \"" + std::string(s) + "\"");
}

Topic to_topic(Suggestible s) { return kSuggestibleToTopic.at(code(s)); }

std::optional<Suggestible> to_suggestible(Topic t) {
    for (int i = 0; i < kNumSuggestible; ++i)
        if (kSuggestibleToTopic[i] == t) return static_cast<Suggestible>(i);
    return std::nullopt;
}

int frequency_rank(Suggestible t) {
    for (int i = 0; i < kNumSuggestible; ++i)
        if (kFrequencyOrder[i] == t) return i;
    return kNumSuggestible;
}

}  // namespace cts
