#include "moodcast/encoder.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "httplib.h"
#include "json.hpp"
#include "moodcast/util.hpp"

namespace moodcast {

namespace {

// Box-Muller over rng_u01 draws; std::normal_distribution is
// implementation-defined and would break cross-toolchain reproducibility.
double draw_normal(std::mt19937_64& rng) {
    double u1 = rng_u01(rng);
    while (u1 <= 0.0) u1 = rng_u01(rng);
    const double u2 = rng_u01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

HashedEmbeddingProvider::HashedEmbeddingProvider(int dimension, int buckets,
                                                 std::uint64_t seed) {
    if (dimension < 1 || buckets < 1)
        throw ValidationError("hashed provider needs positive dimension and bucket count");
    std::mt19937_64 rng(mix_seed(seed, 0xE3BED));
    projection_.resize(dimension, buckets);
    for (int r = 0; r < dimension; ++r)
        for (int c = 0; c < buckets; ++c) projection_(r, c) = draw_normal(rng);
    projection_ /= std::sqrt(static_cast<double>(buckets));
    name_ = "hashed-d" + std::to_string(dimension) + "-b" + std::to_string(buckets) + "-s" +
            std::to_string(seed);
}

Eigen::VectorXd HashedEmbeddingProvider::encode(const std::string& text) const {
    const auto buckets = static_cast<std::uint64_t>(projection_.cols());
    Eigen::VectorXd bag = Eigen::VectorXd::Zero(projection_.cols());
    for (const auto& token : tokenize(text)) {
        const std::uint64_t h = fnv1a64(token);
        const auto bucket = static_cast<Eigen::Index>(h % buckets);
        bag[bucket] += ((h / buckets) & 1) ? 1.0 : -1.0;
    }
    Eigen::VectorXd v = projection_ * bag;
    const double n = v.norm();
    if (n > 0.0) v /= n;
    return v;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(const std::string& host, int port,
                                                 int dimension, int timeout_seconds)
    : host_(host), port_(port), dimension_(dimension), timeout_seconds_(timeout_seconds) {
    if (dimension < 1) throw ValidationError("remote provider needs a positive dimension");
    name_ = "remote-" + host + ":" + std::to_string(port);
}

Eigen::VectorXd RemoteEmbeddingProvider::encode(const std::string& text) const {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);

    nlohmann::json request;
    request["texts"] = {text};
    auto res = client.Post("/encode", request.dump(), "application/json");
    if (!res)
        throw ProviderError("embedding service unreachable at " + host_ + ":" +
                            std::to_string(port_));
    if (res->status != 200)
        throw ProviderError("embedding service returned HTTP " + std::to_string(res->status));

    nlohmann::json body;
    try {
        body = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProviderError(std::string("embedding service sent malformed JSON: ") + e.what());
    }
    if (!body.contains("embeddings") || !body["embeddings"].is_array() ||
        body["embeddings"].size() != 1 || !body["embeddings"][0].is_array())
        throw ProviderError("embedding service response missing \"embeddings\" array");
    const auto& row = body["embeddings"][0];
    if (static_cast<int>(row.size()) != dimension_)
        throw ProviderError("embedding service returned dimension " +
                            std::to_string(row.size()) + ", expected " +
                            std::to_string(dimension_));
    Eigen::VectorXd v(dimension_);
    for (int i = 0; i < dimension_; ++i) {
        if (!row[i].is_number())
            throw ProviderError("embedding service returned a non-numeric component");
        v[i] = row[i].get<double>();
        if (!std::isfinite(v[i]))
            throw ProviderError("embedding service returned a non-finite component");
    }
    return v;
}

Eigen::VectorXd symptom_target(const SymptomLabel& label) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(kNumSymptoms);
    v[static_cast<int>(label.mood)] = 1.0;
    if (label.somatic) v[kSomaticDim] = 1.0;
    if (label.psychosis) v[kPsychosisDim] = 1.0;
    return v;
}

Eigen::VectorXd encode_post(const EmbeddingProvider& provider, const std::string& text) {
    if (trim(text).empty()) throw ValidationError("cannot encode empty text");
    Eigen::VectorXd v = provider.encode(text);
    if (v.size() != provider.dimension())
        throw ProviderError("provider \"" + provider.name() + "\" returned length " +
                            std::to_string(v.size()) + ", expected " +
                            std::to_string(provider.dimension()));
    if (!v.allFinite())
        throw ProviderError("provider \"" + provider.name() + "\" returned non-finite values");
    return v;
}

EncodedSequence encode_timeline_with(const EmbeddingLookup& lookup, int dimension,
                                     const Timeline& timeline, int max_len) {
    if (max_len < 1) throw ValidationError("max_len must be >= 1");
    if (timeline.posts.empty() || timeline.posts.size() != timeline.deltas.size())
        throw ValidationError("timeline \"" + timeline.timeline_id + "\" is malformed");

    const std::size_t keep =
        std::min(timeline.posts.size(), static_cast<std::size_t>(max_len));
    const std::size_t start = timeline.posts.size() - keep;

    EncodedSequence seq;
    seq.embeddings = Eigen::MatrixXd::Zero(max_len, dimension);
    seq.deltas = Eigen::VectorXd::Zero(max_len);
    seq.mask.assign(static_cast<std::size_t>(max_len), false);
    seq.symptom_targets = Eigen::MatrixXd::Zero(max_len, kNumSymptoms);
    seq.future_label = static_cast<int>(timeline.future_label);
    seq.timeline_id = timeline.timeline_id;
    seq.user_id = timeline.user_id;

    for (std::size_t i = 0; i < keep; ++i) {
        const Post& post = timeline.posts[start + i];
        Eigen::VectorXd e = lookup(post);
        if (e.size() != dimension)
            throw ValidationError("embedding for post \"" + post.post_id +
                                  "\" has length " + std::to_string(e.size()) +
                                  ", expected " + std::to_string(dimension));
        const auto row = static_cast<Eigen::Index>(i);
        seq.embeddings.row(row) = e.transpose();
        seq.deltas[row] = timeline.deltas[start + i];
        seq.mask[i] = true;
        seq.symptom_targets.row(row) = symptom_target(post.symptom).transpose();
    }
    return seq;
}

EncodedSequence encode_timeline(const EmbeddingProvider& provider, const Timeline& timeline,
                                int max_len) {
    return encode_timeline_with(
        [&provider](const Post& post) { return encode_post(provider, post.text); },
        provider.dimension(), timeline, max_len);
}

const Eigen::VectorXd* EmbeddingCache::find(const std::string& post_id) const {
    for (const auto& [id, vec] : entries)
        if (id == post_id) return &vec;
    return nullptr;
}

EmbeddingCache build_embedding_cache(const EmbeddingProvider& provider, const Corpus& corpus) {
    EmbeddingCache cache;
    cache.provider = provider.name();
    cache.dimension = provider.dimension();
    cache.entries.reserve(corpus.total_posts());
    for (const auto& user : corpus.users)
        for (const auto& post : user.posts)
            cache.entries.emplace_back(post.post_id, encode_post(provider, post.text));
    return cache;
}

namespace {
constexpr char kCacheMagic[] = "MCEMB1\n";

void append_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}
}  // namespace

void write_embedding_cache(const EmbeddingCache& cache, const std::string& path) {
    std::string out = kCacheMagic;
    nlohmann::ordered_json header;
    header["provider"] = cache.provider;
    header["dimension"] = cache.dimension;
    header["count"] = cache.entries.size();
    out += header.dump();
    out += '\n';
    for (const auto& [id, vec] : cache.entries) {
        append_u32(out, static_cast<std::uint32_t>(id.size()));
        out += id;
        const auto bytes = static_cast<std::size_t>(vec.size()) * sizeof(double);
        const std::size_t at = out.size();
        out.resize(at + bytes);
        std::memcpy(out.data() + at, vec.data(), bytes);
    }
    atomic_write_file(path, out);
}

EmbeddingCache read_embedding_cache(const std::string& path) {
    const std::string data = read_file(path);
    const std::size_t magic_len = sizeof(kCacheMagic) - 1;
    if (data.size() < magic_len || data.compare(0, magic_len, kCacheMagic) != 0)
        throw ValidationError("embedding cache \"" + path + "\" has a bad magic header");
    const std::size_t header_end = data.find('\n', magic_len);
    if (header_end == std::string::npos)
        throw ValidationError("embedding cache \"" + path + "\" is truncated");

    EmbeddingCache cache;
    std::size_t count = 0;
    try {
        const auto header =
            nlohmann::json::parse(data.substr(magic_len, header_end - magic_len));
        cache.provider = header.at("provider").get<std::string>();
        cache.dimension = header.at("dimension").get<int>();
        count = header.at("count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("embedding cache \"" + path + "\" has a malformed header: " +
                              e.what());
    }
    if (cache.dimension < 1)
        throw ValidationError("embedding cache \"" + path + "\" declares a bad dimension");

    std::size_t at = header_end + 1;
    const auto need = [&](std::size_t n) {
        if (at + n > data.size())
            throw ValidationError("embedding cache \"" + path + "\" is truncated");
    };
    cache.entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        need(4);
        std::uint32_t id_len = 0;
        std::memcpy(&id_len, data.data() + at, 4);
        at += 4;
        need(id_len);
        std::string id = data.substr(at, id_len);
        at += id_len;
        const std::size_t bytes = static_cast<std::size_t>(cache.dimension) * sizeof(double);
        need(bytes);
        Eigen::VectorXd vec(cache.dimension);
        std::memcpy(vec.data(), data.data() + at, bytes);
        at += bytes;
        cache.entries.emplace_back(std::move(id), std::move(vec));
    }
    if (at != data.size())
        throw ValidationError("embedding cache \"" + path + "\" has trailing bytes");
    return cache;
}

}  // namespace moodcast
