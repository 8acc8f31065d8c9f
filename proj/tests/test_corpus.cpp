#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "moodcast/corpus.hpp"
#include "moodcast/synth.hpp"
#include "moodcast/util.hpp"

using namespace moodcast;

namespace {

std::string line(const std::string& post_id, const std::string& user, std::int64_t ts,
                 const std::string& text, const std::string& mood = "Other",
                 const std::string& somatic = "[]", const std::string& level = "IN",
                 const std::string& bd = "BD-II") {
    return std::string("{\"user_id\":\"") + user + "\",\"bd_type\":\"" + bd +
           "\",\"post_id\":\"" + post_id + "\",\"timestamp\":\"" +
           format_iso8601(ts) + "\",\"text\":\"" + text + "\",\"mood\":\"" + mood +
           "\",\"somatic\":" + somatic + ",\"suicidality\":\"" + level + "\"}\n";
}

constexpr std::int64_t kBase = 1500000000;

}  // namespace

TEST_CASE("label enums round-trip through names") {
    for (int i = 0; i < kNumLevels; ++i) {
        const auto level = static_cast<SuicidalityLevel>(i);
        REQUIRE(parse_level(to_string(level)) == level);
    }
    for (int i = 0; i < kNumMoods; ++i) {
        const auto mood = static_cast<Mood>(i);
        REQUIRE(parse_mood(to_string(mood)) == mood);
    }
    for (int i = 0; i < 3; ++i) {
        const auto bd = static_cast<BdType>(i);
        REQUIRE(parse_bd_type(to_string(bd)) == bd);
    }
    CHECK_FALSE(parse_level("SEVERE").has_value());
    CHECK_FALSE(parse_mood("").has_value());
}

TEST_CASE("parse groups by user and sorts posts by timestamp") {
    std::string text;
    text += line("p2", "bob", kBase + 200, "later post");
    text += line("p1", "alice", kBase + 100, "first", "Depressed", "[\"Somatic\"]", "ID");
    text += line("p0", "bob", kBase, "earlier post");
    const Corpus c = parse_corpus_text(text);
    REQUIRE(c.users.size() == 2);
    CHECK(c.users[0].user_id == "alice");
    CHECK(c.users[1].user_id == "bob");
    REQUIRE(c.users[1].posts.size() == 2);
    CHECK(c.users[1].posts[0].post_id == "p0");
    CHECK(c.users[1].posts[1].post_id == "p2");
    CHECK(c.users[0].posts[0].symptom.mood == Mood::Depressed);
    CHECK(c.users[0].posts[0].symptom.somatic);
    CHECK_FALSE(c.users[0].posts[0].symptom.psychosis);
    CHECK(c.users[0].posts[0].suicidality == SuicidalityLevel::Ideation);
    CHECK(c.total_posts() == 3);
    CHECK(c.find_user("bob") == &c.users[1]);
    CHECK(c.find_user("carol") == nullptr);
}

TEST_CASE("tied timestamps fall back to post_id order") {
    std::string text;
    text += line("b", "u", kBase, "two");
    text += line("a", "u", kBase, "one");
    const Corpus c = parse_corpus_text(text);
    REQUIRE(c.users.size() == 1);
    CHECK(c.users[0].posts[0].post_id == "a");
    CHECK(c.users[0].posts[1].post_id == "b");
}

TEST_CASE("Both expands to the full somatic subset") {
    const Corpus c = parse_corpus_text(line("p", "u", kBase, "t", "Manic", "[\"Both\"]"));
    CHECK(c.users[0].posts[0].symptom.somatic);
    CHECK(c.users[0].posts[0].symptom.psychosis);
    CHECK(c.users[0].posts[0].symptom.somatic_count() == 2);
}

TEST_CASE("unknown object fields warn instead of failing") {
    std::string one = line("p", "u", kBase, "t");
    one.insert(one.size() - 2, ",\"extra_field\":42");
    ParseStats stats;
    const Corpus c = parse_corpus_text(one, {}, &stats);
    CHECK(c.total_posts() == 1);
    CHECK(stats.unknown_field_warnings == 1);
    CHECK(stats.lines == 1);
}

TEST_CASE("malformed input names the offending line") {
    auto expect_line = [](const std::string& text, const char* needle) {
        try {
            parse_corpus_text(text);
            FAIL_CHECK("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_line(line("p", "u", kBase, "t") + "{not json\n", "line 2");
    expect_line(line("p", "u", kBase, "t", "Cheerful"), "line 1");
    expect_line(line("p", "u", kBase, "t", "Other", "[]", "XX"), "line 1");
    expect_line(line("p", "u", kBase, "t") + line("p", "u", kBase + 1, "t"), "line 2");
    // Same user id with conflicting bd_type.
    expect_line(line("p0", "u", kBase, "t") + line("p1", "u", kBase + 1, "t", "Other",
                                                   "[]", "IN", "BD-I"),
                "line 2");
    // Timestamp outside the accepted window.
    expect_line(line("p", "u", 100, "t"), "line 1");
}

TEST_CASE("text normalization lowercases and collapses whitespace") {
    ParseOptions opts;
    opts.normalize_text = true;
    const Corpus c =
        parse_corpus_text(line("p", "u", kBase, "Feeling  VERY\\tlow today "), opts);
    CHECK(c.users[0].posts[0].text == "feeling very low today");
    const Corpus raw = parse_corpus_text(line("p", "u", kBase, "Feeling  VERY\\tlow today "));
    CHECK(raw.users[0].posts[0].text == "Feeling  VERY\tlow today ");
}

TEST_CASE("serialize then parse is the identity") {
    SynthSpec spec;
    spec.n_users = 12;
    const Corpus c = generate_synthetic_corpus(spec, 5);
    const std::string text = serialize_corpus(c);
    const Corpus back = parse_corpus_text(text);
    REQUIRE(back == c);
    CHECK(serialize_corpus(back) == text);
}

TEST_CASE("file round trip matches in-memory round trip") {
    SynthSpec spec;
    spec.n_users = 6;
    const Corpus c = generate_synthetic_corpus(spec, 11);
    const auto path = std::filesystem::temp_directory_path() / "moodcast_corpus_rt.jsonl";
    write_corpus(c, path.string());
    const Corpus back = parse_corpus(path.string());
    CHECK(back == c);
    std::filesystem::remove(path);
}

TEST_CASE("validate_corpus rejects broken invariants") {
    SynthSpec spec;
    spec.n_users = 4;
    Corpus c = generate_synthetic_corpus(spec, 3);
    CHECK_NOTHROW(validate_corpus(c));

    Corpus unsorted = c;
    std::swap(unsorted.users[0].posts[0], unsorted.users[0].posts[1]);
    CHECK_THROWS_AS(validate_corpus(unsorted), ValidationError);

    Corpus mislabeled = c;
    mislabeled.users[1].posts[0].user_id = "someone-else";
    CHECK_THROWS_AS(validate_corpus(mislabeled), ValidationError);

    Corpus dup = c;
    dup.users[0].posts[1].post_id = dup.users[0].posts[0].post_id;
    CHECK_THROWS_AS(validate_corpus(dup), ValidationError);
}

TEST_CASE("generator is deterministic and respects its spec") {
    SynthSpec spec;
    spec.n_users = 30;
    spec.posts_min = 5;
    spec.posts_max = 9;
    const Corpus a = generate_synthetic_corpus(spec, 99);
    const Corpus b = generate_synthetic_corpus(spec, 99);
    CHECK(serialize_corpus(a) == serialize_corpus(b));
    const Corpus other = generate_synthetic_corpus(spec, 100);
    CHECK(serialize_corpus(a) != serialize_corpus(other));

    REQUIRE(a.users.size() == 30);
    for (const auto& user : a.users) {
        CHECK(user.posts.size() >= 5);
        CHECK(user.posts.size() <= 9);
        for (const auto& post : user.posts) {
            CHECK(post.timestamp >= spec.start_epoch);
            CHECK(post.timestamp < spec.end_epoch);
            CHECK_FALSE(post.text.empty());
        }
    }
    CHECK_NOTHROW(validate_corpus(a));
}

TEST_CASE("synth spec json round-trips and validates") {
    SynthSpec spec;
    spec.n_users = 17;
    spec.severity_persistence = 0.5;
    const SynthSpec back = parse_synth_spec_json(serialize_synth_spec(spec));
    CHECK(back.n_users == 17);
    CHECK(back.severity_persistence == doctest::Approx(0.5));
    CHECK_THROWS_AS(parse_synth_spec_json("{\"n_userz\":3}"), ValidationError);
    SynthSpec bad;
    bad.posts_min = 10;
    bad.posts_max = 4;
    CHECK_THROWS_AS(validate_synth_spec(bad), ValidationError);
}
