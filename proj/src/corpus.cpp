#include "cts/corpus.hpp"

#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cts {

using nlohmann::json;

Date parse_date(std::string_view iso) {
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream in{std::string(iso)};
    if (!(in >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-' || iso.size() != 10)
        throw std::invalid_argument("bad date \"" + std::string(iso) + "\"");
    Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw std::invalid_argument("bad date \"" + std::string(iso) + "\"");
    return date;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

std::string to_string(const TurnLabel& l) {
    switch (l.kind) {
        case TurnLabel::Kind::Accept: return std::string(to_string(l.topic)) + "_accept";
        case TurnLabel::Kind::Reject: return std::string(to_string(l.topic)) + "_reject";
        case TurnLabel::Kind::FollowUp: return "follow-up";
        case TurnLabel::Kind::Chat: return "chat";
    }
    return "?";
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u) || ch == '\'') {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

void validate(const Conversation& c) {
    if (c.turns.size() < 4)
        throw CorpusError("conversation " + c.conversation_id + " has fewer than 4 turns");
    for (std::size_t i = 0; i < c.turns.size(); ++i)
        if (c.turns[i].index != static_cast<int>(i) + 1)
            throw CorpusError("conversation " + c.conversation_id +
                              ": turn indices must be 1-based and consecutive");
    if (c.turns.front().previous_state)
        throw CorpusError("conversation " + c.conversation_id +
                          ": previous_state of turn 1 must be null");
    if (c.gender < -1 || c.gender > 1)
        throw CorpusError("conversation " + c.conversation_id + ": gender must be -1, 0 or 1");
}

namespace {

std::string join_tokens(const std::vector<std::string>& toks) {
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i) s.push_back(' ');
        s += toks[i];
    }
    return s;
}

json to_json(const Conversation& c) {
    json turns = json::array();
    for (const Turn& t : c.turns) {
        json jt;
        jt["index"] = t.index;
        jt["user_utterance"] = join_tokens(t.user_utterance);
        jt["system_response"] = t.system_response;
        jt["topic"] = to_string(t.topic);
        jt["previous_state"] = t.previous_state ? json(to_string(*t.previous_state)) : json(nullptr);
        jt["previous_suggested_topic"] =
            t.previous_suggested_topic ? json(to_string(*t.previous_suggested_topic)) : json(nullptr);
        turns.push_back(std::move(jt));
    }
    json j;
    j["conversation_id"] = c.conversation_id;
    j["user_id"] = c.user_id;
    j["date"] = format_date(c.date);
    j["time_of_day"] = to_string(c.time_of_day);
    j["name_given"] = c.name_given;
    j["gender"] = c.gender;
    j["turns"] = std::move(turns);
    return j;
}

template <typename T>
T field(const json& j, const char* name) {
    if (!j.contains(name)) throw CorpusError(std::string("missing field \"") + name + "\"");
    return j.at(name).get<T>();
}

Conversation from_json(const json& j) {
    Conversation c;
    c.conversation_id = field<std::string>(j, "conversation_id");
    c.user_id = field<std::string>(j, "user_id");
    c.date = parse_date(field<std::string>(j, "date"));
    c.time_of_day = parse_time_of_day(field<std::string>(j, "time_of_day"));
    c.name_given = field<bool>(j, "name_given");
    c.gender = field<int>(j, "gender");
    if (!j.contains("turns") || !j["turns"].is_array()) throw CorpusError("missing field \"turns\"");
    for (const json& jt : j["turns"]) {
        Turn t;
        t.index = field<int>(jt, "index");
        t.user_utterance = tokenize(field<std::string>(jt, "user_utterance"));
        t.system_response = field<std::string>(jt, "system_response");
        t.topic = parse_topic(field<std::string>(jt, "topic"));
        if (jt.contains("previous_state") && !jt["previous_state"].is_null())
            t.previous_state = parse_topic(jt["previous_state"].get<std::string>());
        if (jt.contains("previous_suggested_topic") && !jt["previous_suggested_topic"].is_null())
            t.previous_suggested_topic =
                parse_suggestible(jt["previous_suggested_topic"].get<std::string>());
        c.turns.push_back(std::move(t));
    }
    validate(c);
    return c;
}

}  // namespace

std::string serialize_conversation(const Conversation& c) { return to_json(c).dump(); }

Conversation parse_conversation(std::string_view line) {
    try {
        return from_json(json::parse(line));
    } catch (const json::exception& e) {
        throw CorpusError(e.what());
    } catch (const std::invalid_argument& e) {
        throw CorpusError(e.what());
    }
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const Conversation& c : corpus.conversations) out << serialize_conversation(c) << '\n';
}

std::string serialize_corpus(const Corpus& corpus) {
    std::ostringstream out;
    write_corpus(out, corpus);
    return out.str();
}

Corpus parse_corpus(std::istream& in) {
    Corpus corpus;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Conversation c;
        try {
            c = parse_conversation(line);
        } catch (const CorpusError& e) {
            throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(c.conversation_id).second)
            throw CorpusError("line " + std::to_string(line_no) + ": duplicate conversation_id \"" +
                              c.conversation_id + "\"");
        corpus.conversations.push_back(std::move(c));
    }
    return corpus;
}

Corpus parse_corpus(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_corpus(in);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open corpus file " + path);
    return parse_corpus(in);
}

void save_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusError("cannot write corpus file " + path);
    write_corpus(out, corpus);
    if (!out) throw CorpusError("write failed for " + path);
}

std::map<Suggestible, double> topic_distribution(const Corpus& corpus) {
    std::array<double, kNumSuggestible> counts{};
    double total = 0;
    for (const Conversation& c : corpus.conversations)
        for (const Turn& t : c.turns)
            if (auto s = to_suggestible(t.topic)) {
                counts[code(*s)] += 1;
                total += 1;
            }
    std::map<Suggestible, double> out;
    for (Suggestible s : kAllSuggestible) out[s] = total > 0 ? counts[code(s)] / total : 0.0;
    return out;
}

Conversation assign_training_labels(const Conversation& c) {
    Conversation out = c;
    std::optional<Suggestible> prev_pst;
    std::optional<TurnLabel> prev_label;
    std::optional<Suggestible> taken_up;  // re-suggestion already labeled
    for (Turn& t : out.turns) {
        const auto& pst = t.previous_suggested_topic;
        const bool new_suggestion = pst && pst != prev_pst && pst != taken_up;
        TurnLabel label;
        if (new_suggestion) {
            taken_up.reset();
            label = t.topic == to_topic(*pst) ? TurnLabel::accept(*pst) : TurnLabel::reject(*pst);
        } else if (prev_label && prev_label->is_reject() && to_suggestible(t.topic) &&
                   *to_suggestible(t.topic) != prev_label->topic) {
            // The agent re-suggests right after a rejection; engaging with a
            // fresh suggestible topic on the next turn takes it up.
            label = TurnLabel::accept(*to_suggestible(t.topic));
            taken_up = label.topic;
        } else if (t.topic != Topic::Phatic && t.previous_state == t.topic) {
            label = TurnLabel::follow_up();
        } else {
            label = TurnLabel::chat();
        }
        t.label = label;
        prev_label = label;
        prev_pst = pst;
    }
    return out;
}

Conversation assign_test_labels(const Conversation& c) {
    Conversation out = assign_training_labels(c);
    for (std::size_t i = 0; i < out.turns.size(); ++i) {
        TurnLabel& l = *out.turns[i].label;
        if (!l.is_reject()) continue;
        const Topic wanted = to_topic(l.topic);
        for (std::size_t j = i + 1; j < out.turns.size(); ++j)
            if (out.turns[j].topic == wanted) {
                l = TurnLabel::accept(l.topic);
                break;
            }
    }
    return out;
}

Corpus assign_training_labels(const Corpus& corpus) {
    Corpus out;
    out.provenance = corpus.provenance;
    out.conversations.reserve(corpus.size());
    for (const Conversation& c : corpus.conversations)
        out.conversations.push_back(assign_training_labels(c));
    return out;
}

DateSplit split_by_date(const Corpus& corpus, const Date& cutoff) {
    DateSplit split;
    split.train.provenance = Provenance::Train;
    split.test.provenance = Provenance::Test;
    for (const Conversation& c : corpus.conversations)
        (c.date < cutoff ? split.train : split.test).conversations.push_back(c);
    if (split.train.empty())
        split.warnings.push_back("date split: training side is empty (cutoff " + format_date(cutoff) + ")");
    if (split.test.empty())
        split.warnings.push_back("date split: test side is empty (cutoff " + format_date(cutoff) + ")");
    return split;
}

}  // namespace cts
