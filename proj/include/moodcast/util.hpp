#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace moodcast {

/// Raised when input data (corpus files, configs, label values) fails
/// validation. Maps to CLI exit code 3.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when an embedding provider fails at runtime (unreachable service,
/// malformed response). Distinct from invalid caller input.
struct ProviderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when optimization produces a non-finite loss. Maps to CLI exit
/// code 4.
struct TrainingDivergence : std::runtime_error {
    TrainingDivergence(const std::string& what, int epoch_, int batch_)
        : std::runtime_error(what), epoch(epoch_), batch(batch_) {}
    int epoch = -1;
    int batch = -1;
};

// ---------------------------------------------------------------------------
// Time. Timestamps are UTC epoch seconds throughout.

inline constexpr std::int64_t kSecondsPerDay = 86400;

/// Parses an ISO-8601 instant ("2020-03-01T12:30:00Z", offset or date-only
/// forms accepted; fractional seconds truncated) to UTC epoch seconds.
/// Throws ValidationError on malformed input.
std::int64_t parse_iso8601(std::string_view s);

/// Formats epoch seconds as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(std::int64_t epoch_seconds);

// ---------------------------------------------------------------------------
// Text.

/// Lowercased alphanumeric tokens; non-ASCII bytes are treated as letters so
/// UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

/// Trims ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

/// Optional normalization pass: lowercases and collapses runs of whitespace.
std::string normalize_text(std::string_view s);

// ---------------------------------------------------------------------------
// Hashing / RNG seeds.

std::uint64_t fnv1a64(std::string_view bytes);

/// FNV-1a over a whole file, hex-encoded. Throws ValidationError if the file
/// cannot be read.
std::string hash_file_hex(const std::string& path);

/// splitmix64 step; used to derive independent RNG streams from one seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// std::<distribution> output is implementation-defined, so anything that must
// reproduce byte-identical artifacts across toolchains samples through these.

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double rng_u01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [lo, hi].
inline int rng_int(std::mt19937_64& rng, int lo, int hi) {
    const double u = rng_u01(rng);
    return std::min(hi, lo + static_cast<int>(u * (static_cast<double>(hi) - lo + 1.0)));
}

inline std::int64_t rng_i64(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    const double u = rng_u01(rng);
    const double span = static_cast<double>(hi) - static_cast<double>(lo) + 1.0;
    return std::min(hi, lo + static_cast<std::int64_t>(u * span));
}

/// Fisher-Yates with rng_int draws.
template <typename T>
void rng_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng_int(rng, 0, static_cast<int>(i) - 1));
        std::swap(items[i - 1], items[j]);
    }
}

// ---------------------------------------------------------------------------
// Files.

/// Writes content to path via a temp file and atomic rename.
void atomic_write_file(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF records, quoting only where needed).

std::string csv_escape(std::string_view field);

/// Joins fields into one CRLF-terminated record.
std::string csv_row(const std::vector<std::string>& fields);

}  // namespace moodcast
