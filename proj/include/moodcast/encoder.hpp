#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "moodcast/timeline.hpp"

namespace moodcast {

// Sentence-embedding source. encode must be deterministic per instance and
// safe for concurrent read-only use.
class EmbeddingProvider {
   public:
    virtual ~EmbeddingProvider() = default;
    virtual int dimension() const = 0;
    virtual const std::string& name() const = 0;
    virtual Eigen::VectorXd encode(const std::string& text) const = 0;
};

// Offline test provider: signed-hash bag of tokens projected by a seeded
// Gaussian matrix, then L2-normalized. Identical (dimension, buckets, seed)
// reproduces the same matrix, so embeddings are stable across runs.
class HashedEmbeddingProvider final : public EmbeddingProvider {
   public:
    explicit HashedEmbeddingProvider(int dimension = 1024, int buckets = 512,
                                     std::uint64_t seed = 42);

    int dimension() const override { return static_cast<int>(projection_.rows()); }
    const std::string& name() const override { return name_; }
    Eigen::VectorXd encode(const std::string& text) const override;

   private:
    Eigen::MatrixXd projection_;  // dimension x buckets
    std::string name_;
};

// Adapter for an external sentence-encoder service speaking JSON over HTTP
// (POST /encode {"texts": [...]} -> {"embeddings": [[...], ...]}).
class RemoteEmbeddingProvider final : public EmbeddingProvider {
   public:
    RemoteEmbeddingProvider(const std::string& host, int port, int dimension = 1024,
                            int timeout_seconds = 30);

    int dimension() const override { return dimension_; }
    const std::string& name() const override { return name_; }
    Eigen::VectorXd encode(const std::string& text) const override;

   private:
    std::string host_;
    int port_;
    int dimension_;
    int timeout_seconds_;
    std::string name_;
};

// Model-ready view of one timeline: fixed-length matrices padded at the end.
struct EncodedSequence {
    Eigen::MatrixXd embeddings;       // max_len x dimension; padded rows zero
    Eigen::VectorXd deltas;           // days back from anchor; padded entries zero
    std::vector<bool> mask;           // true for real posts (a prefix)
    Eigen::MatrixXd symptom_targets;  // max_len x kNumSymptoms multi-hot
    int future_label = 0;
    std::string timeline_id;
    std::string user_id;

    int real_count() const {
        int n = 0;
        for (bool b : mask) n += b ? 1 : 0;
        return n;
    }
};

// Multi-hot symptom target, columns [Depressed, Manic, Anxiety, Irritability,
// Remission, Other, Somatic, Psychosis].
Eigen::VectorXd symptom_target(const SymptomLabel& label);

Eigen::VectorXd encode_post(const EmbeddingProvider& provider, const std::string& text);

// Keeps the most recent max_len posts and pads the tail.
EncodedSequence encode_timeline(const EmbeddingProvider& provider, const Timeline& timeline,
                                int max_len = 64);

// Same assembly, embeddings supplied by post_id (cache-backed batch paths).
using EmbeddingLookup = std::function<Eigen::VectorXd(const Post&)>;
EncodedSequence encode_timeline_with(const EmbeddingLookup& lookup, int dimension,
                                     const Timeline& timeline, int max_len = 64);

// Binary embedding cache keyed by post_id. Header records provider name and
// dimension; loading with a mismatched provider raises ValidationError.
struct EmbeddingCache {
    std::string provider;
    int dimension = 0;
    std::vector<std::pair<std::string, Eigen::VectorXd>> entries;  // insertion order

    const Eigen::VectorXd* find(const std::string& post_id) const;
};

EmbeddingCache build_embedding_cache(const EmbeddingProvider& provider, const Corpus& corpus);
void write_embedding_cache(const EmbeddingCache& cache, const std::string& path);
EmbeddingCache read_embedding_cache(const std::string& path);

}  // namespace moodcast
