#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "moodcast/corpus.hpp"

namespace moodcast {

// Knobs for the seeded corpus generator. Marginals are weights, not
// probabilities; they are normalized before sampling. Defaults reproduce the
// published cohort label proportions.
struct SynthSpec {
    int n_users = 100;
    int posts_min = 8;
    int posts_max = 40;
    std::int64_t start_epoch = 1451606400;  // 2016-01-01T00:00:00Z
    std::int64_t end_epoch = 1546300800;    // 2019-01-01T00:00:00Z
    // Probability that a post repeats the previous post's suicidality level
    // instead of drawing fresh from level_marginals.
    double severity_persistence = 0.85;
    std::array<double, kNumMoods> mood_marginals = {47.7, 12.9, 11.3, 6.6, 6.8, 14.3};
    std::array<double, kNumLevels> level_marginals = {83.0, 12.0, 3.5, 1.3};
    std::array<double, 3> bd_type_marginals = {27.3, 61.2, 11.3};
    double somatic_rate = 0.23;
    // Weights for {Somatic}, {Psychosis}, {Somatic, Psychosis} given any flag.
    std::array<double, 3> somatic_split = {74.0, 24.5, 1.4};
    int tokens_min = 6;
    int tokens_max = 18;
    // Tokens drawn from the level-specific vocabulary pocket per post; raising
    // this sharpens class separability for the deterministic encoder.
    int severity_tokens = 2;
};

// Parses a flat JSON object of SynthSpec fields; absent keys keep defaults,
// unknown keys raise ValidationError.
SynthSpec parse_synth_spec_json(const std::string& json_text);
SynthSpec load_synth_spec(const std::string& path);
std::string serialize_synth_spec(const SynthSpec& spec);

void validate_synth_spec(const SynthSpec& spec);

// Deterministic for a fixed (spec, seed): same bytes from serialize_corpus.
Corpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed);

}  // namespace moodcast
