#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "json.hpp"
#include "moodcast/encoder.hpp"
#include "moodcast/synth.hpp"
#include "moodcast/util.hpp"

// Last: resolv.h (pulled in here) defines macros that collide with Eigen
// template parameter names.
#include <httplib.h>

using namespace moodcast;

namespace {

constexpr std::int64_t kDay = 86400;
constexpr std::int64_t kBase = 1500000000;

Timeline make_timeline(int n_posts) {
    Timeline tl;
    tl.timeline_id = "u@u-p" + std::to_string(n_posts - 1);
    tl.user_id = "u";
    tl.anchor_time = kBase + (n_posts - 1) * kDay;
    for (int i = 0; i < n_posts; ++i) {
        Post p;
        p.post_id = "u-p" + std::to_string(i);
        p.user_id = "u";
        p.timestamp = kBase + i * kDay;
        p.text = "post number " + std::to_string(i) + " feeling tired";
        p.symptom.mood = static_cast<Mood>(i % kNumMoods);
        p.symptom.somatic = i % 2 == 0;
        p.symptom.psychosis = i % 3 == 0;
        tl.posts.push_back(p);
        tl.deltas.push_back(static_cast<double>(n_posts - 1 - i));
    }
    tl.future_label = SuicidalityLevel::Behavior;
    tl.l_months = 6;
    tl.m_months = 1;
    return tl;
}

}  // namespace

TEST_CASE("symptom target columns follow the fixed order") {
    SymptomLabel label;
    label.mood = Mood::Anxiety;
    label.somatic = true;
    label.psychosis = false;
    const Eigen::VectorXd t = symptom_target(label);
    REQUIRE(t.size() == kNumSymptoms);
    for (int i = 0; i < kNumSymptoms; ++i) {
        const double expect = (i == static_cast<int>(Mood::Anxiety) || i == kSomaticDim) ? 1 : 0;
        CHECK(t[i] == expect);
    }
    label.mood = Mood::Depressed;
    label.somatic = false;
    label.psychosis = true;
    const Eigen::VectorXd t2 = symptom_target(label);
    CHECK(t2[0] == 1);
    CHECK(t2[kPsychosisDim] == 1);
    CHECK(t2.sum() == 2);
}

TEST_CASE("hashed provider is deterministic, unit-norm, and seed-sensitive") {
    HashedEmbeddingProvider a(64, 128, 42);
    HashedEmbeddingProvider b(64, 128, 42);
    HashedEmbeddingProvider other_seed(64, 128, 43);
    CHECK(a.dimension() == 64);
    CHECK(a.name() == "hashed-d64-b128-s42");

    const std::string text = "feeling very low tonight";
    const Eigen::VectorXd va = a.encode(text);
    REQUIRE(va.size() == 64);
    CHECK(va.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((va - b.encode(text)).norm() == 0.0);
    CHECK((va - other_seed.encode(text)).norm() > 1e-6);
    CHECK((va - a.encode("a different sentence")).norm() > 1e-6);

    // Token order changes nothing (bag of tokens), casing does not either
    // because tokenization lowercases.
    CHECK((a.encode("very feeling tonight low") - va).norm() == 0.0);
    CHECK((a.encode("FEELING very LOW tonight") - va).norm() == 0.0);

    // Empty text still yields a finite, zero vector rather than NaN.
    const Eigen::VectorXd empty = a.encode("...");
    CHECK(empty.allFinite());
    CHECK(empty.norm() == 0.0);
}

TEST_CASE("encode_post validates provider output") {
    struct BadDim final : EmbeddingProvider {
        std::string n = "bad-dim";
        int dimension() const override { return 8; }
        const std::string& name() const override { return n; }
        Eigen::VectorXd encode(const std::string&) const override {
            return Eigen::VectorXd::Zero(5);
        }
    } bad_dim;
    CHECK_THROWS_AS(encode_post(bad_dim, "x"), ProviderError);

    struct BadValue final : EmbeddingProvider {
        std::string n = "bad-value";
        int dimension() const override { return 4; }
        const std::string& name() const override { return n; }
        Eigen::VectorXd encode(const std::string&) const override {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
            v[2] = std::numeric_limits<double>::quiet_NaN();
            return v;
        }
    } bad_value;
    CHECK_THROWS_AS(encode_post(bad_value, "x"), ProviderError);
}

TEST_CASE("encode_timeline pads at the end and keeps the newest posts") {
    HashedEmbeddingProvider provider(32, 64, 7);
    const Timeline tl = make_timeline(5);
    const EncodedSequence seq = encode_timeline(provider, tl, 8);
    REQUIRE(seq.embeddings.rows() == 8);
    REQUIRE(seq.embeddings.cols() == 32);
    REQUIRE(seq.mask.size() == 8);
    CHECK(seq.real_count() == 5);
    for (int i = 0; i < 8; ++i) CHECK(seq.mask[static_cast<std::size_t>(i)] == (i < 5));
    for (int i = 5; i < 8; ++i) {
        CHECK(seq.embeddings.row(i).norm() == 0.0);
        CHECK(seq.deltas[i] == 0.0);
        CHECK(seq.symptom_targets.row(i).norm() == 0.0);
    }
    CHECK(seq.future_label == static_cast<int>(SuicidalityLevel::Behavior));
    CHECK(seq.timeline_id == tl.timeline_id);
    CHECK(seq.user_id == "u");
    for (int i = 0; i < 5; ++i) {
        CHECK((seq.embeddings.row(i).transpose() - provider.encode(tl.posts[i].text)).norm() ==
              0.0);
        CHECK(seq.deltas[i] == tl.deltas[i]);
        CHECK((seq.symptom_targets.row(i).transpose() - symptom_target(tl.posts[i].symptom))
                  .norm() == 0.0);
    }

    // With max_len below the post count only the most recent survive.
    const EncodedSequence cut = encode_timeline(provider, tl, 3);
    CHECK(cut.real_count() == 3);
    CHECK((cut.embeddings.row(0).transpose() - provider.encode(tl.posts[2].text)).norm() == 0.0);
    CHECK(cut.deltas[0] == tl.deltas[2]);
    CHECK(cut.deltas[2] == 0.0);
    CHECK(cut.mask[2]);
}

TEST_CASE("lookup-based assembly matches the provider path") {
    HashedEmbeddingProvider provider(16, 32, 3);
    const Timeline tl = make_timeline(4);
    const EncodedSequence direct = encode_timeline(provider, tl, 6);
    const EmbeddingLookup lookup = [&](const Post& p) { return provider.encode(p.text); };
    const EncodedSequence via = encode_timeline_with(lookup, provider.dimension(), tl, 6);
    CHECK((direct.embeddings - via.embeddings).norm() == 0.0);
    CHECK((direct.deltas - via.deltas).norm() == 0.0);
    CHECK(direct.mask == via.mask);
    CHECK((direct.symptom_targets - via.symptom_targets).norm() == 0.0);
    CHECK(direct.future_label == via.future_label);
}

TEST_CASE("embedding cache round-trips and rejects mismatched providers") {
    SynthSpec spec;
    spec.n_users = 5;
    const Corpus c = generate_synthetic_corpus(spec, 17);
    HashedEmbeddingProvider provider(24, 48, 5);
    const EmbeddingCache cache = build_embedding_cache(provider, c);
    CHECK(cache.provider == provider.name());
    CHECK(cache.dimension == 24);
    CHECK(cache.entries.size() == c.total_posts());

    const auto path = std::filesystem::temp_directory_path() / "moodcast_cache_test.emb";
    write_embedding_cache(cache, path.string());
    const EmbeddingCache back = read_embedding_cache(path.string());
    CHECK(back.provider == cache.provider);
    CHECK(back.dimension == cache.dimension);
    REQUIRE(back.entries.size() == cache.entries.size());
    for (std::size_t i = 0; i < cache.entries.size(); ++i) {
        CHECK(back.entries[i].first == cache.entries[i].first);
        CHECK((back.entries[i].second - cache.entries[i].second).norm() == 0.0);
    }
    const std::string first_id = cache.entries.front().first;
    REQUIRE(back.find(first_id) != nullptr);
    CHECK(back.find("no-such-post") == nullptr);

    // Corrupt header -> ValidationError.
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_embedding_cache(path.string()), ValidationError);
}

TEST_CASE("remote provider speaks the encode protocol") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/encode", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        const auto body = nlohmann::json::parse(req.body);
        REQUIRE(body.contains("texts"));
        REQUIRE(body["texts"].is_array());
        nlohmann::json out;
        out["embeddings"] = nlohmann::json::array();
        for (const auto& text : body["texts"]) {
            const std::string s = text.get<std::string>();
            std::vector<double> v = {static_cast<double>(s.size()), 1.0, -2.5};
            out["embeddings"].push_back(v);
        }
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteEmbeddingProvider provider("127.0.0.1", port, 3, 5);
    CHECK(provider.name() == "remote-127.0.0.1:" + std::to_string(port));
    const Eigen::VectorXd v = provider.encode("hello");
    REQUIRE(v.size() == 3);
    CHECK(v[0] == 5.0);
    CHECK(v[1] == 1.0);
    CHECK(v[2] == -2.5);
    CHECK(calls.load() == 1);

    server.stop();
    serve.join();
}

TEST_CASE("remote provider surfaces transport and contract failures") {
    // Nothing listens on the bound-then-closed port.
    int dead_port = 0;
    {
        httplib::Server probe;
        dead_port = probe.bind_to_any_port("127.0.0.1");
        probe.stop();
    }
    RemoteEmbeddingProvider unreachable("127.0.0.1", dead_port, 4, 1);
    CHECK_THROWS_AS(unreachable.encode("x"), ProviderError);

    httplib::Server server;
    server.Post("/encode", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"embeddings\": [[1.0, 2.0]]}", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    RemoteEmbeddingProvider wrong_dim("127.0.0.1", port, 4, 5);
    CHECK_THROWS_AS(wrong_dim.encode("x"), ProviderError);
    server.stop();
    serve.join();
}
