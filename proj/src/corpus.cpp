#include "moodcast/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "moodcast/util.hpp"

namespace moodcast {

namespace {

using ordered_json = nlohmann::ordered_json;

const char* kLevelNames[] = {"IN", "ID", "BR", "AT"};
const char* kMoodNames[] = {"Depressed", "Manic",     "Anxiety",
                            "Irritability", "Remission", "Other"};
const char* kBdTypeNames[] = {"BD-I", "BD-II", "NOS"};

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
    throw ValidationError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string_view to_string(SuicidalityLevel level) { return kLevelNames[static_cast<int>(level)]; }
std::string_view to_string(Mood mood) { return kMoodNames[static_cast<int>(mood)]; }
std::string_view to_string(BdType type) { return kBdTypeNames[static_cast<int>(type)]; }

std::optional<SuicidalityLevel> parse_level(std::string_view s) {
    for (int i = 0; i < kNumLevels; ++i)
        if (s == kLevelNames[i]) return static_cast<SuicidalityLevel>(i);
    return std::nullopt;
}

std::optional<Mood> parse_mood(std::string_view s) {
    for (int i = 0; i < kNumMoods; ++i)
        if (s == kMoodNames[i]) return static_cast<Mood>(i);
    return std::nullopt;
}

std::optional<BdType> parse_bd_type(std::string_view s) {
    for (int i = 0; i < 3; ++i)
        if (s == kBdTypeNames[i]) return static_cast<BdType>(i);
    return std::nullopt;
}

const UserRecord* Corpus::find_user(std::string_view user_id) const {
    for (const auto& u : users)
        if (u.user_id == user_id) return &u;
    return nullptr;
}

std::size_t Corpus::total_posts() const {
    std::size_t n = 0;
    for (const auto& u : users) n += u.posts.size();
    return n;
}

std::int64_t corpus_epoch_min() {
    static const std::int64_t v = parse_iso8601("2000-01-01T00:00:00Z");
    return v;
}

std::int64_t corpus_epoch_max() {
    static const std::int64_t v = parse_iso8601("2100-01-01T00:00:00Z");
    return v;
}

namespace {

struct RawPost {
    Post post;
    BdType bd_type;
    std::size_t line;
};

RawPost parse_line(const std::string& line_text, std::size_t line_no,
                   const ParseOptions& options, ParseStats* stats) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line_text);
    } catch (const nlohmann::json::parse_error& e) {
        line_error(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) line_error(line_no, "expected a JSON object");

    static const std::set<std::string> known = {"user_id", "bd_type",  "post_id",
                                               "timestamp", "text",    "mood",
                                               "somatic",   "suicidality"};
    for (const auto& [key, _] : obj.items()) {
        if (!known.count(key) && stats) ++stats->unknown_field_warnings;
    }

    auto require_string = [&](const char* key) -> std::string {
        if (!obj.contains(key) || !obj[key].is_string())
            line_error(line_no, std::string("missing or non-string field \"") + key + "\"");
        return obj[key].get<std::string>();
    };

    RawPost raw;
    raw.line = line_no;
    raw.post.user_id = require_string("user_id");
    raw.post.post_id = require_string("post_id");
    raw.post.text = require_string("text");
    if (options.normalize_text) raw.post.text = normalize_text(raw.post.text);
    if (trim(raw.post.text).empty())
        line_error(line_no, "field \"text\" is empty after trimming");

    try {
        raw.post.timestamp = parse_iso8601(require_string("timestamp"));
    } catch (const ValidationError& e) {
        line_error(line_no, e.what());
    }
    if (raw.post.timestamp < corpus_epoch_min() || raw.post.timestamp >= corpus_epoch_max())
        line_error(line_no, "field \"timestamp\" outside corpus epoch bounds");

    const std::string bd = require_string("bd_type");
    if (auto t = parse_bd_type(bd)) raw.bd_type = *t;
    else line_error(line_no, "unknown value \"" + bd + "\" for field \"bd_type\"");

    const std::string mood = require_string("mood");
    if (auto m = parse_mood(mood)) raw.post.symptom.mood = *m;
    else line_error(line_no, "unknown value \"" + mood + "\" for field \"mood\"");

    const std::string level = require_string("suicidality");
    if (auto l = parse_level(level)) raw.post.suicidality = *l;
    else line_error(line_no, "unknown value \"" + level + "\" for field \"suicidality\"");

    if (obj.contains("somatic")) {
        if (!obj["somatic"].is_array())
            line_error(line_no, "field \"somatic\" must be an array");
        for (const auto& item : obj["somatic"]) {
            if (!item.is_string()) line_error(line_no, "field \"somatic\" must hold strings");
            const std::string v = item.get<std::string>();
            if (v == "Somatic") raw.post.symptom.somatic = true;
            else if (v == "Psychosis") raw.post.symptom.psychosis = true;
            else if (v == "Both") {  // legacy annotation value: expand
                raw.post.symptom.somatic = true;
                raw.post.symptom.psychosis = true;
            } else {
                line_error(line_no, "unknown value \"" + v + "\" for field \"somatic\"");
            }
        }
    }
    return raw;
}

Corpus assemble(std::vector<RawPost> raws) {
    std::set<std::string_view> post_ids;
    for (const auto& r : raws) {
        if (!post_ids.insert(r.post.post_id).second)
            line_error(r.line, "duplicate post_id \"" + r.post.post_id + "\"");
    }

    std::map<std::string, UserRecord> users;
    std::map<std::string, std::size_t> first_line;
    for (auto& r : raws) {
        auto [it, inserted] = users.try_emplace(r.post.user_id);
        if (inserted) {
            it->second.user_id = r.post.user_id;
            it->second.bd_type = r.bd_type;
            first_line[r.post.user_id] = r.line;
        } else if (it->second.bd_type != r.bd_type) {
            line_error(r.line, "conflicting bd_type for user \"" + r.post.user_id +
                                   "\" (first seen on line " +
                                   std::to_string(first_line[r.post.user_id]) + ")");
        }
        it->second.posts.push_back(std::move(r.post));
    }

    Corpus corpus;
    corpus.users.reserve(users.size());
    for (auto& [_, user] : users) {
        std::sort(user.posts.begin(), user.posts.end(), [](const Post& a, const Post& b) {
            return std::tie(a.timestamp, a.post_id) < std::tie(b.timestamp, b.post_id);
        });
        corpus.users.push_back(std::move(user));
    }
    return corpus;
}

}  // namespace

Corpus parse_corpus_text(std::string_view content, const ParseOptions& options,
                         ParseStats* stats) {
    std::vector<RawPost> raws;
    std::size_t line_no = 0;
    std::size_t begin = 0;
    while (begin <= content.size()) {
        std::size_t end = content.find('\n', begin);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(begin, end - begin);
        const bool last = end == content.size();
        begin = end + 1;
        if (last && trim(line).empty()) break;
        ++line_no;
        if (stats) stats->lines = line_no;
        if (trim(line).empty()) continue;
        raws.push_back(parse_line(std::string(line), line_no, options, stats));
    }
    return assemble(std::move(raws));
}

Corpus parse_corpus(const std::string& path, const ParseOptions& options, ParseStats* stats) {
    return parse_corpus_text(read_file(path), options, stats);
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& user : corpus.users) {
        for (const auto& post : user.posts) {
            ordered_json obj;
            obj["user_id"] = post.user_id;
            obj["bd_type"] = std::string(to_string(user.bd_type));
            obj["post_id"] = post.post_id;
            obj["timestamp"] = format_iso8601(post.timestamp);
            obj["text"] = post.text;
            obj["mood"] = std::string(to_string(post.symptom.mood));
            auto somatic = ordered_json::array();
            if (post.symptom.somatic) somatic.push_back("Somatic");
            if (post.symptom.psychosis) somatic.push_back("Psychosis");
            obj["somatic"] = somatic;
            obj["suicidality"] = std::string(to_string(post.suicidality));
            out += obj.dump();
            out += '\n';
        }
    }
    return out;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
    atomic_write_file(path, serialize_corpus(corpus));
}

void validate_corpus(const Corpus& corpus) {
    std::set<std::string_view> user_ids;
    std::set<std::string_view> post_ids;
    for (const auto& user : corpus.users) {
        if (!user_ids.insert(user.user_id).second)
            throw ValidationError("duplicate user_id \"" + user.user_id + "\"");
        const Post* prev = nullptr;
        for (const auto& post : user.posts) {
            if (post.user_id != user.user_id)
                throw ValidationError("post \"" + post.post_id + "\" user_id mismatch");
            if (!post_ids.insert(post.post_id).second)
                throw ValidationError("duplicate post_id \"" + post.post_id + "\"");
            if (trim(post.text).empty())
                throw ValidationError("post \"" + post.post_id + "\" has empty text");
            if (post.timestamp < corpus_epoch_min() || post.timestamp >= corpus_epoch_max())
                throw ValidationError("post \"" + post.post_id + "\" timestamp out of bounds");
            if (prev && std::tie(prev->timestamp, prev->post_id) >=
                            std::tie(post.timestamp, post.post_id))
                throw ValidationError("posts of user \"" + user.user_id +
                                      "\" not strictly ordered");
            prev = &post;
        }
    }
}

}  // namespace moodcast
