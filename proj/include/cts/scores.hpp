#pragma once

#include <array>
#include <vector>

#include "cts/topic.hpp"

namespace cts {

/// Per-topic scores in Suggestible code order.
struct TopicScores {
    std::array<double, kNumSuggestible> score{};

    double operator[](Suggestible t) const { return score[code(t)]; }
    double& operator[](Suggestible t) { return score[code(t)]; }

    /// Scores divided by their sum; uniform when the sum is not positive.
    std::array<double, kNumSuggestible> normalized() const;
    /// All 8 topics by descending score; ties follow the global frequency order.
    std::vector<Suggestible> ranking() const;
    Suggestible best() const { return ranking().front(); }
};

TopicScores uniform_scores();

}  // namespace cts
