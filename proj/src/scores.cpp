#include "cts/scores.hpp"

#include <algorithm>

namespace cts {

std::array<double, kNumSuggestible> TopicScores::normalized() const {
    double total = 0;
    for (double s : score) total += s;
    std::array<double, kNumSuggestible> out{};
    for (int k = 0; k < kNumSuggestible; ++k)
        out[k] = total > 0 ? score[k] / total : 1.0 / kNumSuggestible;
    return out;
}

std::vector<Suggestible> TopicScores::ranking() const {
    std::vector<Suggestible> order(kFrequencyOrder.begin(), kFrequencyOrder.end());
    std::stable_sort(order.begin(), order.end(),
                     [this](Suggestible a, Suggestible b) { return score[code(a)] > score[code(b)]; });
    return order;
}

TopicScores uniform_scores() {
    TopicScores s;
    s.score.fill(1.0 / kNumSuggestible);
    return s;
}

}  // namespace cts
