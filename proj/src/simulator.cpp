#include "cts/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cts {

TopicVector default_target_distribution() {
    TopicVector d{};
    double total = 0;
    for (int k = 0; k < kNumSuggestible; ++k) total += kTopicFrequencyPercent[k];
    for (int k = 0; k < kNumSuggestible; ++k) d[k] = kTopicFrequencyPercent[k] / total;
    return d;
}

void SimConfig::validate() const {
    double s = 0;
    for (double v : target_distribution) {
        if (v < 0) throw std::invalid_argument("target_distribution entries must be >= 0");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument("target_distribution must sum to 1");
    if (persona_count == 0) throw std::invalid_argument("persona_count must be positive");
    if (n_days < 1) throw std::invalid_argument("n_days must be positive");
    if (max_turns < 4) throw std::invalid_argument("max_turns must be at least 4");
    for (double p : {user_initiative_prob, switch_on_reject_prob, return_to_rejected_prob,
                     leave_after_run_prob, leave_after_reject_prob})
        if (p < 0 || p > 1) throw std::invalid_argument("probabilities must lie in [0,1]");
    if (followup_turns_mean < 0 || fatigue_mean < 0)
        throw std::invalid_argument("followup_turns_mean and fatigue_mean must be >= 0");
}

namespace {

using S = Suggestible;

struct Archetype {
    double share;
    TopicVector preference;  // Movie Music Travel Pets News Sports Cars Games
    double male_prob;
    std::array<double, kNumTimesOfDay> time_profile;
};

// Taste clusters of the synthetic population. Movie has the highest mean
// preference; each cluster ties its tastes to a gender and time-of-day skew.
const std::array<Archetype, 5> kArchetypes = {{
    {0.25, {0.90, 0.55, 0.30, 0.30, 0.25, 0.20, 0.15, 0.40}, 0.50, {0.10, 0.20, 0.40, 0.30}},
    {0.20, {0.45, 0.25, 0.30, 0.20, 0.85, 0.80, 0.45, 0.15}, 0.75, {0.50, 0.30, 0.15, 0.05}},
    {0.20, {0.50, 0.40, 0.85, 0.85, 0.30, 0.25, 0.10, 0.10}, 0.35, {0.25, 0.50, 0.20, 0.05}},
    {0.15, {0.60, 0.45, 0.15, 0.20, 0.10, 0.35, 0.60, 0.90}, 0.70, {0.05, 0.15, 0.30, 0.50}},
    {0.20, {0.60, 0.90, 0.50, 0.35, 0.20, 0.10, 0.15, 0.30}, 0.40, {0.15, 0.40, 0.35, 0.10}},
}};

TopicMatrix base_affinity() {
    TopicMatrix m{};
    auto set = [&m](S a, S b, double v) { m[code(a)][code(b)] = v; };
    set(S::Movie, S::Music, 0.20);
    set(S::Music, S::Movie, 0.20);
    set(S::Movie, S::Games, 0.10);
    set(S::Music, S::Travel, 0.10);
    set(S::Games, S::Entertainment_and_Cars, 0.20);
    set(S::Entertainment_and_Cars, S::Games, 0.15);
    set(S::Travel, S::Pets_Animal, 0.20);
    set(S::Pets_Animal, S::Travel, 0.20);
    set(S::News, S::Sports, 0.25);
    set(S::Sports, S::News, 0.20);
    set(S::Sports, S::Entertainment_and_Cars, 0.10);
    return m;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

template <std::size_t N>
int sample_categorical(Rng& rng, const std::array<double, N>& w) {
    double total = 0;
    for (double v : w) total += v;
    double u = uniform01(rng) * total;
    for (std::size_t k = 0; k < N; ++k) {
        if (u < w[k]) return static_cast<int>(k);
        u -= w[k];
    }
    for (std::size_t k = N; k-- > 0;)
        if (w[k] > 0) return static_cast<int>(k);
    return 0;
}

// ---- utterance templates ---------------------------------------------------

const std::array<std::vector<std::string>, kNumSuggestible> kKeywords = {{
    {"movies", "film", "actor", "comedy", "drama", "cinema", "director", "oscars", "netflix", "trailer"},
    {"music", "songs", "album", "band", "singer", "concert", "guitar", "playlist", "rap", "lyrics"},
    {"travel", "trip", "beach", "country", "flight", "vacation", "city", "hotel", "australia", "mountains"},
    {"animals", "dog", "cat", "puppy", "pets", "zoo", "bird", "horse", "kitten", "wildlife"},
    {"news", "politics", "election", "headlines", "president", "economy", "world", "report", "story", "today's"},
    {"sports", "football", "basketball", "team", "score", "soccer", "player", "league", "match", "coach"},
    {"cars", "engine", "tesla", "racing", "drive", "truck", "speed", "celebrity", "show", "electric"},
    {"games", "video", "xbox", "minecraft", "fortnite", "console", "level", "play", "nintendo", "gamer"},
}};

const std::array<const char*, kNumSuggestible> kTopicPhrase = {
    "movies", "music", "travel", "animals", "the news", "sports", "cars", "video games"};

template <typename C>
const auto& pick(Rng& rng, const C& items) {
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

std::string keyword(Rng& rng, S t) { return pick(rng, kKeywords[code(t)]); }

std::string fill(Rng& rng, const std::string& pattern, S t) {
    std::string out;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern.compare(i, 4, "{kw}") == 0) {
            out += keyword(rng, t);
            i += 3;
        } else {
            out.push_back(pattern[i]);
        }
    }
    return out;
}

const std::vector<std::string> kGreeting = {"alexa let's chat", "hi there", "hello", "let's talk",
                                            "hey alexa", "let's chat"};
const std::vector<std::string> kBye = {"bye", "i have to go alexa bye", "stop", "goodbye",
                                       "that's enough for today", "i'm done"};
const std::vector<std::string> kSomethingElse = {"let's talk about something else", "ok", "hmm",
                                                 "what else", "i don't know", "cool",
                                                 "no thanks let's talk about something else"};
const std::vector<std::string> kAccept = {"sure let's talk about {kw}", "yes {kw} sounds good",
                                          "okay that sounds interesting", "i love {kw}",
                                          "yes please", "sure why not"};
const std::vector<std::string> kReject = {"no thanks", "no {kw} is boring", "not really",
                                          "i don't like {kw}", "nope", "no i do not"};
const std::vector<std::string> kRequest = {"let's talk about {kw}", "i want to talk about {kw}",
                                           "tell me about {kw}", "can we talk about {kw}"};
const std::vector<std::string> kFollowUp = {"tell me more about the {kw}", "i like {kw}",
                                            "what about {kw} and {kw}", "that {kw} is cool",
                                            "yes", "really", "wow", "my favorite is the {kw}",
                                            "i saw that {kw}", "what do you think about {kw}"};

// ---- conversation builder ----------------------------------------------------

class Builder {
public:
    void add(const std::string& utterance, std::string response, Topic topic) {
        Turn t;
        t.index = static_cast<int>(c_.turns.size()) + 1;
        t.user_utterance = tokenize(utterance);
        t.system_response = std::move(response);
        t.topic = topic;
        if (!c_.turns.empty()) t.previous_state = c_.turns.back().topic;
        t.previous_suggested_topic = pst_;
        c_.turns.push_back(std::move(t));
    }
    void set_pending(S t) { pst_ = t; }
    int size() const { return static_cast<int>(c_.turns.size()); }
    Conversation& conversation() { return c_; }

private:
    Conversation c_;
    std::optional<S> pst_;
};

std::string suggestion_text(S t) {
    return std::string("Would you like to talk about ") + kTopicPhrase[code(t)] + "?";
}

std::string content_text(S t) {
    return std::string("Here is something interesting about ") + kTopicPhrase[code(t)] + ".";
}

int geometric_run(Rng& rng, double mean) {
    if (mean <= 0) return 0;
    return std::geometric_distribution<int>(1.0 / (1.0 + mean))(rng);
}

}  // namespace

double acceptance_probability(const Persona& p, Suggestible topic,
                              std::optional<Suggestible> engaged, int k) {
    const double bonus = engaged ? p.transition_affinity[code(*engaged)][code(topic)] : 0.0;
    return clamp01(p.preference[code(topic)] + bonus - p.fatigue * (k - 1));
}

Persona sample_persona(Rng& rng, const SimConfig& config) {
    std::array<double, kArchetypes.size()> shares{};
    for (std::size_t a = 0; a < kArchetypes.size(); ++a) shares[a] = kArchetypes[a].share;
    const int a = sample_categorical(rng, shares);
    const Archetype& arch = kArchetypes[a];

    Persona p;
    p.archetype = a;
    std::normal_distribution<double> noise(0.0, config.preference_noise);
    for (int k = 0; k < kNumSuggestible; ++k) p.preference[k] = clamp01(arch.preference[k] + noise(rng));

    const TopicMatrix base = base_affinity();
    const double scale = config.affinity_scale * (0.5 + uniform01(rng));
    for (int i = 0; i < kNumSuggestible; ++i)
        for (int j = 0; j < kNumSuggestible; ++j)
            p.transition_affinity[i][j] = i == j ? 0.0 : clamp01(base[i][j] * scale);

    p.fatigue = config.fatigue_mean * (0.5 + uniform01(rng));
    p.name_giving_prob = 0.2 + 0.6 * uniform01(rng);
    p.gender = uniform01(rng) < arch.male_prob ? 1 : -1;
    p.time_profile = arch.time_profile;
    p.mean_followup_turns = config.followup_turns_mean * (0.5 + uniform01(rng));
    return p;
}

namespace {

Conversation simulate(const Persona& p, Rng& rng, const SimConfig& config,
                      const TopicVector& weights) {
    Builder b;
    Conversation& c = b.conversation();
    c.conversation_id = "c0";
    c.user_id = "u0";
    c.date = config.start_date;
    c.time_of_day = static_cast<TimeOfDay>(sample_categorical(rng, p.time_profile));
    c.name_given = uniform01(rng) < p.name_giving_prob;
    c.gender = c.name_given ? p.gender : 0;

    std::array<bool, kNumSuggestible> suggested{};
    std::array<bool, kNumSuggestible> engaged_ever{};
    std::vector<S> rejected;
    std::optional<S> engaged;
    int k = 0;
    const int budget = config.max_turns - 1;  // reserve the goodbye turn

    // Picks the agent's next suggestion; nullopt when nothing is left.
    auto next_suggestion = [&]() -> std::optional<S> {
        const double sharpness = std::max(config.policy_sharpness_min,
                                          config.policy_sharpness_first - config.policy_sharpness_decay * k);
        TopicVector w{};
        bool any = false;
        for (int t = 0; t < kNumSuggestible; ++t)
            if (!suggested[t] && !engaged_ever[t]) {
                w[t] = std::pow(weights[t], sharpness);
                any = any || w[t] > 0;
            }
        if (!any) return std::nullopt;
        return suggestible_from_code(sample_categorical(rng, w));
    };

    auto engage_run = [&](S t) {
        engaged = t;
        engaged_ever[code(t)] = true;
        const int run = geometric_run(rng, p.mean_followup_turns);
        for (int r = 0; r < run && b.size() < budget; ++r)
            b.add(fill(rng, pick(rng, kFollowUp), t), content_text(t), to_topic(t));
    };

    // Opening.
    std::optional<S> pending;
    if (uniform01(rng) < config.user_initiative_prob) {
        b.add(pick(rng, kGreeting), "Hi! What would you like to talk about?", Topic::Phatic);
        TopicVector w{};
        for (int t = 0; t < kNumSuggestible; ++t) w[t] = p.preference[t] * p.preference[t] + 1e-3;
        const S x = suggestible_from_code(sample_categorical(rng, w));
        b.add(fill(rng, pick(rng, kRequest), x), content_text(x), to_topic(x));
        engage_run(x);
        // Falls through to the "something else" step below.
    } else {
        pending = next_suggestion();
        b.add(pick(rng, kGreeting),
              "Hi! " + (pending ? suggestion_text(*pending) : std::string("How are you?")),
              Topic::Phatic);
    }

    bool done = false;
    while (!done && b.size() < budget) {
        if (pending) {
            const S t = *pending;
            pending.reset();
            suggested[code(t)] = true;
            ++k;
            b.set_pending(t);
            if (uniform01(rng) < acceptance_probability(p, t, engaged, k)) {
                b.add(fill(rng, pick(rng, kAccept), t), content_text(t), to_topic(t));
                engage_run(t);
                continue;  // to the "something else" step
            }
            rejected.push_back(t);
            if (uniform01(rng) < config.switch_on_reject_prob) {
                TopicVector w{};
                for (int x = 0; x < kNumSuggestible; ++x)
                    if (!suggested[x] && !engaged_ever[x]) w[x] = p.preference[x];
                if (std::accumulate(w.begin(), w.end(), 0.0) > 0) {
                    const S x = suggestible_from_code(sample_categorical(rng, w));
                    b.add(fill(rng, "no let's talk about {kw}", x), content_text(x), to_topic(x));
                    engage_run(x);
                    continue;
                }
            }
            if (uniform01(rng) < config.leave_after_reject_prob || b.size() + 1 >= budget) {
                b.add(fill(rng, pick(rng, kReject), t), "Alright.", Topic::Phatic);
                done = true;
                break;
            }
            pending = next_suggestion();
            b.add(fill(rng, pick(rng, kReject), t),
                  pending ? "Sure. " + suggestion_text(*pending) : std::string("Alright."),
                  Topic::Phatic);
            if (!pending) done = true;
            continue;
        }

        // End of a topical run: the user may leave, return to a topic they
        // turned down earlier, or hand the initiative back to the agent.
        if (uniform01(rng) < config.leave_after_run_prob) break;
        if (!rejected.empty() && uniform01(rng) < config.return_to_rejected_prob) {
            TopicVector w{};
            for (S r : rejected)
                if (!engaged_ever[code(r)]) w[code(r)] = p.preference[code(r)];
            if (std::accumulate(w.begin(), w.end(), 0.0) > 0) {
                const S r = suggestible_from_code(sample_categorical(rng, w));
                b.add(fill(rng, "actually let's talk about {kw}", r), content_text(r), to_topic(r));
                engage_run(r);
                continue;
            }
        }
        pending = next_suggestion();
        if (!pending) break;
        b.add(pick(rng, kSomethingElse), suggestion_text(*pending), Topic::Phatic);
    }

    while (b.size() < 3) b.add("hmm", "Tell me more about your day.", Topic::Phatic);
    b.add(pick(rng, kBye), "Nice talking to you, good bye!", Topic::Phatic);
    return std::move(c);
}

Conversation corpus_member(const std::vector<Persona>& pool, const SimConfig& config,
                           const TopicVector& weights, std::size_t index, std::uint64_t purpose) {
    Rng rng = make_rng(config.master_seed, {purpose, index});
    const std::size_t who = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    const int day = std::uniform_int_distribution<int>(0, config.n_days - 1)(rng);
    Conversation c = simulate(pool[who], rng, config, weights);
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%06zu", index);
    c.conversation_id = buf;
    std::snprintf(buf, sizeof buf, "u%05zu", who);
    c.user_id = buf;
    c.date = Date{std::chrono::sys_days{config.start_date} + std::chrono::days{day}};
    return c;
}

TopicVector normalized(TopicVector v) {
    double s = 0;
    for (double x : v) s += x;
    for (double& x : v) x /= s;
    return v;
}

}  // namespace

Conversation generate_conversation(const Persona& p, Rng& rng, const SimConfig& config) {
    return simulate(p, rng, config, config.suggestion_weights.value_or(config.target_distribution));
}

std::vector<Persona> persona_pool(const SimConfig& config) {
    std::vector<Persona> pool(config.persona_count);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        Rng rng = make_rng(config.master_seed, {1, i});
        pool[i] = sample_persona(rng, config);
    }
    return pool;
}

TopicVector calibrate_suggestion_weights(const SimConfig& config) {
    config.validate();
    const std::vector<Persona> pool = persona_pool(config);
    TopicVector w = config.target_distribution;
    for (int round = 0; round < config.calibration_rounds; ++round) {
        std::vector<Conversation> pilot(config.calibration_conversations);
        parallel_for(static_cast<std::ptrdiff_t>(pilot.size()), [&](std::ptrdiff_t i) {
            pilot[i] = corpus_member(pool, config, w, static_cast<std::size_t>(i),
                                     1000 + static_cast<std::uint64_t>(round));
        });
        Corpus corpus{std::move(pilot), Provenance::Full};
        const auto observed = topic_distribution(corpus);
        for (int t = 0; t < kNumSuggestible; ++t) {
            const double obs = std::max(observed.at(suggestible_from_code(t)), 1e-4);
            w[t] *= std::sqrt(config.target_distribution[t] / obs);
        }
        w = normalized(w);
    }
    return w;
}

Corpus generate_corpus(const SimConfig& config, Exec exec) {
    config.validate();
    Corpus corpus;
    if (config.n_conversations == 0) return corpus;
    const TopicVector weights =
        config.suggestion_weights ? *config.suggestion_weights : calibrate_suggestion_weights(config);
    const std::vector<Persona> pool = persona_pool(config);
    corpus.conversations.resize(config.n_conversations);
    auto make = [&](std::ptrdiff_t i) {
        corpus.conversations[i] = corpus_member(pool, config, weights, static_cast<std::size_t>(i), 2);
    };
    if (exec == Exec::Serial) {
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(config.n_conversations); ++i) make(i);
    } else {
        parallel_for(static_cast<std::ptrdiff_t>(config.n_conversations), make);
    }
    return corpus;
}

}  // namespace cts
