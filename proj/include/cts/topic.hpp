#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cts {

// Integer codes are stable and part of the on-disk feature layout:
//   0 Movie, 1 Music, 2 News, 3 Pets_Animal, 4 Sci_Tech, 5 Sports, 6 Travel,
//   7 Games, 8 Celebrities, 9 Literature, 10 Food_Drinks, 11 Other,
//   12 Weather, 13 Fashion, 14 Fitness, 15 Entertainment_and_Cars, 16 Phatic
enum class Topic : std::uint8_t {
    Movie = 0,
    Music,
    News,
    Pets_Animal,
    Sci_Tech,
    Sports,
    Travel,
    Games,
    Celebrities,
    Literature,
    Food_Drinks,
    Other,
    Weather,
    Fashion,
    Fitness,
    Entertainment_and_Cars,
    Phatic,
};

inline constexpr int kNumTopics = 17;

// The topics the agent may propose. Codes 0..7:
//   0 Movie, 1 Music, 2 Travel, 3 Pets_Animal, 4 News, 5 Sports,
//   6 Entertainment_and_Cars, 7 Games
enum class Suggestible : std::uint8_t {
    Movie = 0,
    Music,
    Travel,
    Pets_Animal,
    News,
    Sports,
    Entertainment_and_Cars,
    Games,
};

inline constexpr int kNumSuggestible = 8;

enum class TimeOfDay : std::uint8_t { Morning = 0, Day, Evening, Night };
inline constexpr int kNumTimesOfDay = 4;

std::string_view to_string(Topic t);
std::string_view to_string(Suggestible t);
std::string_view to_string(TimeOfDay t);

// Throw std::invalid_argument naming the offending string.
Topic parse_topic(std::string_view s);
Suggestible parse_suggestible(std::string_view s);
TimeOfDay parse_time_of_day(std::string_view s);

Topic to_topic(Suggestible s);
std::optional<Suggestible> to_suggestible(Topic t);

constexpr int code(Topic t) { return static_cast<int>(t); }
constexpr int code(Suggestible t) { return static_cast<int>(t); }
constexpr int code(TimeOfDay t) { return static_cast<int>(t); }

inline Suggestible suggestible_from_code(int c) { return static_cast<Suggestible>(c); }
inline Topic topic_from_code(int c) { return static_cast<Topic>(c); }

inline constexpr std::array<Suggestible, kNumSuggestible> kAllSuggestible = {
    Suggestible::Movie,  Suggestible::Music,  Suggestible::Travel,
    Suggestible::Pets_Animal, Suggestible::News, Suggestible::Sports,
    Suggestible::Entertainment_and_Cars, Suggestible::Games};

/// Share of each suggestible topic in the Alexa topic distribution, in
/// percent, indexed by Suggestible code (not yet normalized).
inline constexpr std::array<double, kNumSuggestible> kTopicFrequencyPercent = {
    20.1, 14.4, 9.1, 10.0, 18.4, 6.0, 1.0, 6.0};

/// Suggestible topics by descending global frequency; ties keep table order.
inline constexpr std::array<Suggestible, kNumSuggestible> kFrequencyOrder = {
    Suggestible::Movie,  Suggestible::News,   Suggestible::Music,
    Suggestible::Pets_Animal, Suggestible::Travel, Suggestible::Sports,
    Suggestible::Games,  Suggestible::Entertainment_and_Cars};

/// Rank of a topic in kFrequencyOrder (0 = most frequent).
int frequency_rank(Suggestible t);

}  // namespace cts
