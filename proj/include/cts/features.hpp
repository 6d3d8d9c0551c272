#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cts/corpus.hpp"

namespace cts {

/// Dialogue-manager state at a point in a conversation (features F1-F15).
struct StateFeatures {
    std::array<std::int8_t, kNumSuggestible> topic_response{};  // F1-F8: +1 / 0 / -1
    std::optional<Topic> prev_topic_1;        // F9, most recent engaged component
    std::optional<Topic> prev_topic_2;        // F10
    std::optional<Suggestible> prev_accepted; // F11
    std::optional<Suggestible> prev_rejected; // F12
    bool name_given = false;                  // F13
    int gender = 0;                           // F14
    TimeOfDay time_of_day = TimeOfDay::Morning;  // F15

    bool operator==(const StateFeatures&) const = default;
};

// fv layout, block order fixed:
//   F1-F8 (8) | F9 one-hot (18) | F10 one-hot (18) | F11 one-hot (9) |
//   F12 one-hot (9) | F13 (1) | F14 (1) | F15 one-hot (4)
// Topic one-hots use Topic codes 0..16 with None at 17; suggestible one-hots
// use Suggestible codes 0..7 with None at 8.
namespace fv_layout {
inline constexpr int kVersion = 1;
inline constexpr int kTopicResponse = 0;
inline constexpr int kPrevTopic1 = 8;
inline constexpr int kPrevTopic2 = kPrevTopic1 + kNumTopics + 1;        // 26
inline constexpr int kPrevAccepted = kPrevTopic2 + kNumTopics + 1;      // 44
inline constexpr int kPrevRejected = kPrevAccepted + kNumSuggestible + 1;  // 53
inline constexpr int kNameGiven = kPrevRejected + kNumSuggestible + 1;  // 62
inline constexpr int kGender = kNameGiven + 1;                          // 63
inline constexpr int kTime = kGender + 1;                               // 64
inline constexpr int kDim = kTime + kNumTimesOfDay;                     // 68
// F1-F12 vs F13-F15.
inline constexpr int kTopicalEnd = kNameGiven;
inline constexpr int kProfileBegin = kNameGiven;

struct Block {
    const char* name;
    int offset;
    int size;
};
inline constexpr std::array<Block, 8> kBlocks = {{{"F1-F8", kTopicResponse, 8},
                                                  {"F9", kPrevTopic1, kNumTopics + 1},
                                                  {"F10", kPrevTopic2, kNumTopics + 1},
                                                  {"F11", kPrevAccepted, kNumSuggestible + 1},
                                                  {"F12", kPrevRejected, kNumSuggestible + 1},
                                                  {"F13", kNameGiven, 1},
                                                  {"F14", kGender, 1},
                                                  {"F15", kTime, kNumTimesOfDay}}};

/// Stable textual description written into checkpoints and checked on load.
std::string describe();
}  // namespace fv_layout

using FeatureVector = std::array<double, fv_layout::kDim>;

/// State after observing turns 1..j (j = 0 gives the empty history).
StateFeatures state_after(const Conversation& c, int j);

/// Features at turn i (1-based) from turns 1..i-1 only. Throws
/// std::out_of_range when i is not a valid turn index.
StateFeatures extract_state_features(const Conversation& c, int i);

/// All states after 0..n turns in one pass; element j equals state_after(c, j).
std::vector<StateFeatures> state_trajectory(const Conversation& c);

FeatureVector assemble_fv(const StateFeatures& s);

enum class FeatureGroups : std::uint8_t { None, Topical, UserProfile, All };
std::string_view to_string(FeatureGroups g);
FeatureGroups parse_feature_groups(std::string_view s);

/// Zero the blocks not selected by the group switch.
void mask_fv(std::span<double> fv, FeatureGroups groups);

struct TurnView {
    bool pad = true;
    int turn_index = 0;                         // 0 for padding
    const std::vector<std::string>* tokens = nullptr;  // null for padding
    StateFeatures state;                        // state after this turn
};

struct ContextWindow {
    std::vector<TurnView> turns;  // exactly m, oldest first
    int m = 0;
};

/// Turns i-m+1 .. i, left-padded. i = 0 yields an all-padding window.
ContextWindow make_window(const Conversation& c, int i, int m);

}  // namespace cts
