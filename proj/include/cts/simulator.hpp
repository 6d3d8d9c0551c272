#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cts/corpus.hpp"
#include "cts/parallel.hpp"
#include "cts/rng.hpp"

namespace cts {

using TopicVector = std::array<double, kNumSuggestible>;
using TopicMatrix = std::array<TopicVector, kNumSuggestible>;

struct Persona {
    TopicVector preference{};          // per suggestible topic, in [0,1]
    TopicMatrix transition_affinity{}; // [engaged][next], in [0,1], zero diagonal
    double fatigue = 0.0;              // acceptance decay per extra suggestion
    double name_giving_prob = 0.5;
    int gender = 0;
    std::array<double, kNumTimesOfDay> time_profile{0.25, 0.25, 0.25, 0.25};
    double mean_followup_turns = 2.0;
    int archetype = 0;
};

/// Table 5 shares renormalized over the 8 suggestible topics.
TopicVector default_target_distribution();

struct SimConfig {
    std::size_t n_conversations = 10000;
    TopicVector target_distribution = default_target_distribution();
    std::size_t persona_count = 2000;
    std::uint64_t master_seed = 42;
    Date start_date{std::chrono::year{2018}, std::chrono::month{8}, std::chrono::day{1}};
    int n_days = 15;

    // Behavioural knobs of the synthetic population.
    double preference_noise = 0.12;
    double affinity_scale = 1.0;
    double fatigue_mean = 0.06;
    double followup_turns_mean = 2.0;
    double user_initiative_prob = 0.35;  // user names a topic after the greeting
    double switch_on_reject_prob = 0.1;  // rejects and asks for something else
    double return_to_rejected_prob = 0.15;
    double leave_after_run_prob = 0.22;
    double leave_after_reject_prob = 0.18;
    int max_turns = 40;
    // The simulated agent samples its k-th suggestion with probability
    // proportional to weight^sharpness_k, where sharpness starts at
    // policy_sharpness_first and drops by policy_sharpness_decay per
    // suggestion down to policy_sharpness_min.
    double policy_sharpness_first = 3.0;
    double policy_sharpness_decay = 1.0;
    double policy_sharpness_min = 0.5;

    /// Sampling weights of the simulated agent's suggestion policy. Empty
    /// means "calibrate against target_distribution" in generate_corpus.
    std::optional<TopicVector> suggestion_weights;
    std::size_t calibration_conversations = 3000;
    int calibration_rounds = 6;

    void validate() const;
};

Persona sample_persona(Rng& rng, const SimConfig& config);

/// One synthetic conversation; ids and date are placeholders that
/// generate_corpus overwrites.
Conversation generate_conversation(const Persona& p, Rng& rng, const SimConfig& config);

/// Fits the agent's suggestion weights so that the engagement distribution
/// of a pilot population approaches the target distribution.
TopicVector calibrate_suggestion_weights(const SimConfig& config);

/// Seeded corpus; output depends only on the config, never on the thread
/// count. Exec::Serial is the reference implementation.
Corpus generate_corpus(const SimConfig& config, Exec exec = Exec::Parallel);

/// Same population of personas generate_corpus draws from.
std::vector<Persona> persona_pool(const SimConfig& config);

/// Acceptance probability of the k-th suggestion (1-based) of `topic`
/// right after engaging with `engaged`.
double acceptance_probability(const Persona& p, Suggestible topic,
                              std::optional<Suggestible> engaged, int k);

}  // namespace cts
