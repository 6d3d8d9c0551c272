#pragma once

#include <chrono>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cts/topic.hpp"

namespace cts {

using Date = std::chrono::year_month_day;

Date parse_date(std::string_view iso);  // "YYYY-MM-DD"
std::string format_date(const Date& d);

struct TurnLabel {
    enum class Kind : std::uint8_t { Accept, Reject, FollowUp, Chat };

    Kind kind = Kind::Chat;
    Suggestible topic = Suggestible::Movie;  // meaningful for Accept/Reject only

    static TurnLabel accept(Suggestible t) { return {Kind::Accept, t}; }
    static TurnLabel reject(Suggestible t) { return {Kind::Reject, t}; }
    static TurnLabel follow_up() { return {Kind::FollowUp, Suggestible::Movie}; }
    static TurnLabel chat() { return {Kind::Chat, Suggestible::Movie}; }

    bool is_accept() const { return kind == Kind::Accept; }
    bool is_reject() const { return kind == Kind::Reject; }
    bool is_suggestion_event() const { return is_accept() || is_reject(); }

    friend bool operator==(const TurnLabel& a, const TurnLabel& b) {
        if (a.kind != b.kind) return false;
        return !a.is_suggestion_event() || a.topic == b.topic;
    }
};

/// "Music_accept", "News_reject", "follow-up", "chat".
std::string to_string(const TurnLabel& l);

struct Turn {
    int index = 1;                        // 1-based
    std::vector<std::string> user_utterance;  // lowercased tokens
    std::string system_response;
    Topic topic = Topic::Phatic;
    std::optional<Topic> previous_state;
    std::optional<Suggestible> previous_suggested_topic;
    std::optional<TurnLabel> label;       // derived, never serialized

    bool operator==(const Turn&) const = default;
};

struct Conversation {
    std::string conversation_id;
    std::string user_id;
    Date date{};
    TimeOfDay time_of_day = TimeOfDay::Morning;
    bool name_given = false;
    int gender = 0;  // -1 female, +1 male, 0 unknown
    std::vector<Turn> turns;

    bool operator==(const Conversation&) const = default;
};

enum class Provenance : std::uint8_t { Full, Train, Test };

struct Corpus {
    std::vector<Conversation> conversations;
    Provenance provenance = Provenance::Full;

    bool operator==(const Corpus&) const = default;
    std::size_t size() const { return conversations.size(); }
    bool empty() const { return conversations.empty(); }
};

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lowercase and split on anything that is not a letter, digit or apostrophe.
std::vector<std::string> tokenize(std::string_view text);

/// Checks the structural invariants (>= 4 turns, 1-based consecutive
/// indices, previous_state of turn 1 is None, gender in {-1,0,1}).
void validate(const Conversation& c);

// JSONL, one conversation per line. Labels are never written.
std::string serialize_conversation(const Conversation& c);
Conversation parse_conversation(std::string_view line);
void write_corpus(std::ostream& out, const Corpus& corpus);
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::istream& in);
Corpus parse_corpus(std::string_view text);
Corpus load_corpus(const std::string& path);
void save_corpus(const std::string& path, const Corpus& corpus);

/// Fraction of turns engaged with each suggestible topic.
std::map<Suggestible, double> topic_distribution(const Corpus& corpus);

// Ground-truth labeling. A turn reacts to a new suggestion when its
// previous_suggested_topic differs from that of the turn before.
Conversation assign_training_labels(const Conversation& c);
/// Training labels, then Reject(T) becomes Accept(T) when any later turn
/// engages with T.
Conversation assign_test_labels(const Conversation& c);
Corpus assign_training_labels(const Corpus& corpus);

struct DateSplit {
    Corpus train;
    Corpus test;
    std::vector<std::string> warnings;
};

/// train: date < cutoff; test: date >= cutoff.
DateSplit split_by_date(const Corpus& corpus, const Date& cutoff);

}  // namespace cts
