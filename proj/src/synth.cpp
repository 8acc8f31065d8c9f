#include "moodcast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "json.hpp"
#include "moodcast/util.hpp"

namespace moodcast {

namespace {

template <std::size_t N>
int draw_weighted(std::mt19937_64& rng, const std::array<double, N>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng_u01(rng) * total;
    for (std::size_t i = 0; i + 1 < N; ++i) {
        u -= weights[i];
        if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(N) - 1;
}

std::string padded(const char* prefix, int value, int width) {
    std::string digits = std::to_string(value);
    std::string out = prefix;
    out.append(static_cast<std::size_t>(std::max(0, width - static_cast<int>(digits.size()))),
               '0');
    out += digits;
    return out;
}

}  // namespace

void validate_synth_spec(const SynthSpec& spec) {
    if (spec.n_users < 1) throw ValidationError("synth spec: n_users must be >= 1");
    if (spec.posts_min < 1 || spec.posts_max < spec.posts_min)
        throw ValidationError("synth spec: posts range must satisfy 1 <= posts_min <= posts_max");
    if (spec.end_epoch - spec.start_epoch < kSecondsPerDay)
        throw ValidationError("synth spec: date range must span at least one day");
    if (spec.start_epoch < corpus_epoch_min() || spec.end_epoch > corpus_epoch_max())
        throw ValidationError("synth spec: date range outside corpus epoch bounds");
    if (spec.severity_persistence < 0.0 || spec.severity_persistence > 1.0)
        throw ValidationError("synth spec: severity_persistence must lie in [0, 1]");
    if (spec.somatic_rate < 0.0 || spec.somatic_rate > 1.0)
        throw ValidationError("synth spec: somatic_rate must lie in [0, 1]");
    if (spec.tokens_min < 1 || spec.tokens_max < spec.tokens_min)
        throw ValidationError("synth spec: token range must satisfy 1 <= tokens_min <= tokens_max");
    if (spec.severity_tokens < 0)
        throw ValidationError("synth spec: severity_tokens must be >= 0");
    auto positive_sum = [](const auto& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) return false;
            total += w;
        }
        return total > 0.0;
    };
    if (!positive_sum(spec.mood_marginals) || !positive_sum(spec.level_marginals) ||
        !positive_sum(spec.bd_type_marginals) || !positive_sum(spec.somatic_split))
        throw ValidationError("synth spec: marginal weights must be nonnegative with positive sum");
}

SynthSpec parse_synth_spec_json(const std::string& json_text) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("synth spec: malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ValidationError("synth spec: expected a JSON object");

    SynthSpec spec;
    auto take_int = [&](const char* key, int& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_number_integer())
            throw ValidationError(std::string("synth spec: field \"") + key + "\" must be an integer");
        field = obj[key].get<int>();
    };
    auto take_double = [&](const char* key, double& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_number())
            throw ValidationError(std::string("synth spec: field \"") + key + "\" must be a number");
        field = obj[key].get<double>();
    };
    auto take_time = [&](const char* key, std::int64_t& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_string())
            throw ValidationError(std::string("synth spec: field \"") + key +
                                  "\" must be an ISO-8601 string");
        field = parse_iso8601(obj[key].get<std::string>());
    };
    auto take_weights = [&](const char* key, auto& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_array() || obj[key].size() != field.size())
            throw ValidationError(std::string("synth spec: field \"") + key + "\" must be an array of " +
                                  std::to_string(field.size()) + " numbers");
        for (std::size_t i = 0; i < field.size(); ++i) {
            if (!obj[key][i].is_number())
                throw ValidationError(std::string("synth spec: field \"") + key +
                                      "\" must hold numbers");
            field[i] = obj[key][i].get<double>();
        }
    };

    take_int("n_users", spec.n_users);
    take_int("posts_min", spec.posts_min);
    take_int("posts_max", spec.posts_max);
    take_time("start", spec.start_epoch);
    take_time("end", spec.end_epoch);
    take_double("severity_persistence", spec.severity_persistence);
    take_weights("mood_marginals", spec.mood_marginals);
    take_weights("level_marginals", spec.level_marginals);
    take_weights("bd_type_marginals", spec.bd_type_marginals);
    take_double("somatic_rate", spec.somatic_rate);
    take_weights("somatic_split", spec.somatic_split);
    take_int("tokens_min", spec.tokens_min);
    take_int("tokens_max", spec.tokens_max);
    take_int("severity_tokens", spec.severity_tokens);

    static const std::set<std::string> known = {
        "n_users",        "posts_min",         "posts_max",      "start",
        "end",            "severity_persistence", "mood_marginals", "level_marginals",
        "bd_type_marginals", "somatic_rate",   "somatic_split",  "tokens_min",
        "tokens_max",     "severity_tokens"};
    for (const auto& [key, _] : obj.items()) {
        if (!known.count(key))
            throw ValidationError("synth spec: unknown field \"" + key + "\"");
    }

    validate_synth_spec(spec);
    return spec;
}

SynthSpec load_synth_spec(const std::string& path) {
    return parse_synth_spec_json(read_file(path));
}

std::string serialize_synth_spec(const SynthSpec& spec) {
    nlohmann::ordered_json obj;
    obj["n_users"] = spec.n_users;
    obj["posts_min"] = spec.posts_min;
    obj["posts_max"] = spec.posts_max;
    obj["start"] = format_iso8601(spec.start_epoch);
    obj["end"] = format_iso8601(spec.end_epoch);
    obj["severity_persistence"] = spec.severity_persistence;
    obj["mood_marginals"] = spec.mood_marginals;
    obj["level_marginals"] = spec.level_marginals;
    obj["bd_type_marginals"] = spec.bd_type_marginals;
    obj["somatic_rate"] = spec.somatic_rate;
    obj["somatic_split"] = spec.somatic_split;
    obj["tokens_min"] = spec.tokens_min;
    obj["tokens_max"] = spec.tokens_max;
    obj["severity_tokens"] = spec.severity_tokens;
    return obj.dump(2) + "\n";
}

Corpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed) {
    validate_synth_spec(spec);
    std::mt19937_64 rng(mix_seed(seed, 0xC03F5EED));

    const int user_width = static_cast<int>(std::to_string(spec.n_users).size());
    Corpus corpus;
    corpus.metadata = "synthetic-v1 seed=" + std::to_string(seed);
    corpus.users.reserve(static_cast<std::size_t>(spec.n_users));

    for (int ui = 0; ui < spec.n_users; ++ui) {
        UserRecord user;
        user.user_id = padded("u", ui, user_width);
        user.bd_type = static_cast<BdType>(draw_weighted(rng, spec.bd_type_marginals));

        const int n_posts = rng_int(rng, spec.posts_min, spec.posts_max);
        std::vector<std::int64_t> times(static_cast<std::size_t>(n_posts));
        for (auto& t : times) t = rng_i64(rng, spec.start_epoch, spec.end_epoch - 1);
        std::sort(times.begin(), times.end());
        for (std::size_t i = 1; i < times.size(); ++i)
            if (times[i] <= times[i - 1]) times[i] = times[i - 1] + 1;

        int prev_level = -1;
        const int post_width = static_cast<int>(std::to_string(n_posts).size());
        for (int pi = 0; pi < n_posts; ++pi) {
            Post post;
            post.user_id = user.user_id;
            post.post_id = user.user_id + padded("-p", pi, post_width);
            post.timestamp = times[static_cast<std::size_t>(pi)];

            int level;
            if (prev_level >= 0 && rng_u01(rng) < spec.severity_persistence)
                level = prev_level;
            else
                level = draw_weighted(rng, spec.level_marginals);
            prev_level = level;
            post.suicidality = static_cast<SuicidalityLevel>(level);

            const int mood = draw_weighted(rng, spec.mood_marginals);
            post.symptom.mood = static_cast<Mood>(mood);
            if (rng_u01(rng) < spec.somatic_rate) {
                switch (draw_weighted(rng, spec.somatic_split)) {
                    case 0: post.symptom.somatic = true; break;
                    case 1: post.symptom.psychosis = true; break;
                    default:
                        post.symptom.somatic = true;
                        post.symptom.psychosis = true;
                }
            }

            // Vocabulary pockets: shared filler plus label-correlated tokens so
            // a bag-of-words encoder separates classes.
            std::string text;
            auto add_token = [&](const std::string& tok) {
                if (!text.empty()) text += ' ';
                text += tok;
            };
            const int n_filler = rng_int(rng, spec.tokens_min, spec.tokens_max);
            for (int i = 0; i < n_filler; ++i)
                add_token("fw" + std::to_string(rng_int(rng, 0, 49)));
            for (int i = 0; i < 3; ++i)
                add_token("m" + std::to_string(mood) + "w" + std::to_string(rng_int(rng, 0, 19)));
            for (int i = 0; i < spec.severity_tokens; ++i)
                add_token("sv" + std::to_string(level) + "w" +
                          std::to_string(rng_int(rng, 0, 19)));
            if (post.symptom.somatic)
                add_token("sow" + std::to_string(rng_int(rng, 0, 9)));
            if (post.symptom.psychosis)
                add_token("psw" + std::to_string(rng_int(rng, 0, 9)));
            post.text = std::move(text);
            user.posts.push_back(std::move(post));
        }
        corpus.users.push_back(std::move(user));
    }
    validate_corpus(corpus);
    return corpus;
}

}  // namespace moodcast
