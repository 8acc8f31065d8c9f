#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moodcast {

/// Ordinal suicidality levels (C-SSRS derived), IN < ID < BR < AT.
enum class SuicidalityLevel : int {
    Indicator = 0,
    Ideation = 1,
    Behavior = 2,
    Attempt = 3,
};
inline constexpr int kNumLevels = 4;

enum class Mood : int {
    Depressed = 0,
    Manic = 1,
    Anxiety = 2,
    Irritability = 3,
    Remission = 4,
    Other = 5,
};
inline constexpr int kNumMoods = 6;

enum class BdType : int { BD1 = 0, BD2 = 1, NOS = 2 };

/// Eight symptom dimensions in target order: six moods then two somatic.
inline constexpr int kNumSymptoms = 8;
inline constexpr int kSomaticDim = 6;
inline constexpr int kPsychosisDim = 7;

std::string_view to_string(SuicidalityLevel level);
std::string_view to_string(Mood mood);
std::string_view to_string(BdType type);
std::optional<SuicidalityLevel> parse_level(std::string_view s);
std::optional<Mood> parse_mood(std::string_view s);
std::optional<BdType> parse_bd_type(std::string_view s);

/// One mood label plus an optional subset of the two somatic symptoms.
struct SymptomLabel {
    Mood mood = Mood::Other;
    bool somatic = false;
    bool psychosis = false;

    int somatic_count() const { return int(somatic) + int(psychosis); }
    bool operator==(const SymptomLabel&) const = default;
};

struct Post {
    std::string post_id;
    std::string user_id;
    std::int64_t timestamp = 0;  // UTC epoch seconds
    std::string text;
    SymptomLabel symptom;
    SuicidalityLevel suicidality = SuicidalityLevel::Indicator;

    bool operator==(const Post&) const = default;
};

struct UserRecord {
    std::string user_id;
    BdType bd_type = BdType::NOS;
    std::vector<Post> posts;  // strictly ordered by (timestamp, post_id)

    bool operator==(const UserRecord&) const = default;
};

struct Corpus {
    std::vector<UserRecord> users;  // sorted by user_id, ids unique
    std::string metadata;           // provenance (generator seed etc.), not serialized

    const UserRecord* find_user(std::string_view user_id) const;
    std::size_t total_posts() const;
    // Provenance is advisory; equality covers content only.
    bool operator==(const Corpus& other) const { return users == other.users; }
};

/// Accepted timestamp bounds for corpus posts.
std::int64_t corpus_epoch_min();
std::int64_t corpus_epoch_max();

struct ParseOptions {
    bool normalize_text = false;  // lowercase + whitespace collapse
};

struct ParseStats {
    std::size_t unknown_field_warnings = 0;
    std::size_t lines = 0;
};

/// Parses a UTF-8 JSON-lines corpus file (one post object per line).
/// Posts are grouped per user and sorted; a "Both" somatic value expands to
/// the {Somatic, Psychosis} subset. Unknown object fields are counted in
/// stats, not rejected. Throws ValidationError with the offending line
/// number on malformed input, duplicate post ids, or unknown label values.
Corpus parse_corpus(const std::string& path, const ParseOptions& options = {},
                    ParseStats* stats = nullptr);

/// Same, from an in-memory string (used by round-trip tests).
Corpus parse_corpus_text(std::string_view content, const ParseOptions& options = {},
                         ParseStats* stats = nullptr);

/// Canonical JSON-lines serialization (users in stored order, fixed key
/// order); parse(serialize(c)) == c for every valid corpus.
std::string serialize_corpus(const Corpus& corpus);
void write_corpus(const Corpus& corpus, const std::string& path);

/// Validates all corpus invariants (ordering, uniqueness, label bounds);
/// throws ValidationError naming the first violation.
void validate_corpus(const Corpus& corpus);

}  // namespace moodcast
