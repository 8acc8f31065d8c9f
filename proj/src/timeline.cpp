#include "moodcast/timeline.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <random>

#include "json.hpp"
#include "moodcast/util.hpp"

namespace moodcast {

std::vector<Timeline> build_timelines(const Corpus& corpus, int l_months, int m_months,
                                      int min_posts) {
    if (l_months < 1 || m_months < 1)
        throw ValidationError("window lengths must be >= 1 month");
    if (min_posts < 1) throw ValidationError("min_posts must be >= 1");

    const std::int64_t obs_span = static_cast<std::int64_t>(l_months) * 30 * kSecondsPerDay;
    const std::int64_t fc_span = static_cast<std::int64_t>(m_months) * 30 * kSecondsPerDay;

    std::vector<Timeline> out;
    for (const auto& user : corpus.users) {
        const auto& posts = user.posts;
        std::vector<std::int64_t> times(posts.size());
        for (std::size_t i = 0; i < posts.size(); ++i) times[i] = posts[i].timestamp;

        for (std::size_t ai = 0; ai < posts.size(); ++ai) {
            const std::int64_t anchor = times[ai];
            // Observation (anchor - l*30d, anchor]; forecast (anchor, anchor + m*30d].
            const auto obs_lo = std::upper_bound(times.begin(), times.end(), anchor - obs_span);
            const auto obs_hi = std::upper_bound(times.begin(), times.end(), anchor);
            const auto fc_hi = std::upper_bound(times.begin(), times.end(), anchor + fc_span);
            const auto n_obs = static_cast<std::size_t>(obs_hi - obs_lo);
            if (n_obs < static_cast<std::size_t>(min_posts) || fc_hi == obs_hi) continue;

            Timeline tl;
            tl.user_id = user.user_id;
            tl.anchor_time = anchor;
            tl.timeline_id = user.user_id + "@" + posts[ai].post_id;
            tl.l_months = l_months;
            tl.m_months = m_months;
            const auto first = static_cast<std::size_t>(obs_lo - times.begin());
            for (std::size_t i = first; i < first + n_obs; ++i) {
                tl.posts.push_back(posts[i]);
                tl.deltas.push_back(static_cast<double>(anchor - times[i]) /
                                    static_cast<double>(kSecondsPerDay));
            }
            auto level = SuicidalityLevel::Indicator;
            for (auto it = obs_hi; it != fc_hi; ++it) {
                const auto& p = posts[static_cast<std::size_t>(it - times.begin())];
                level = std::max(level, p.suicidality);
            }
            tl.future_label = level;
            out.push_back(std::move(tl));
        }
    }
    return out;
}

int merge_levels(SuicidalityLevel level, int scheme) {
    const int code = static_cast<int>(level);
    switch (scheme) {
        case 4: return code;
        case 3: return std::min(code, 2);
        case 2: return std::min(code, 1);
        default: throw ValidationError("level scheme must be one of {4, 3, 2}");
    }
}

int merged_class_count(int scheme) {
    if (scheme != 4 && scheme != 3 && scheme != 2)
        throw ValidationError("level scheme must be one of {4, 3, 2}");
    return scheme;
}

FoldSplit split_user_disjoint_folds(const std::vector<Timeline>& timelines, int k,
                                    std::uint64_t seed) {
    if (k < 2) throw ValidationError("fold count must be >= 2");

    struct UserInfo {
        std::string user_id;
        std::vector<std::size_t> indices;
        SuicidalityLevel max_label = SuicidalityLevel::Indicator;
    };
    std::map<std::string, UserInfo> by_user;
    for (std::size_t i = 0; i < timelines.size(); ++i) {
        auto& info = by_user[timelines[i].user_id];
        info.user_id = timelines[i].user_id;
        info.indices.push_back(i);
        info.max_label = std::max(info.max_label, timelines[i].future_label);
    }
    if (by_user.size() < static_cast<std::size_t>(k))
        throw ValidationError("need at least " + std::to_string(k) +
                              " users with timelines, have " + std::to_string(by_user.size()));

    // Stratify users by their worst future label; deal each stratum round-robin
    // with a rolling fold cursor so fold sizes stay balanced across strata.
    std::array<std::vector<const UserInfo*>, kNumLevels> strata;
    for (const auto& [_, info] : by_user)
        strata[static_cast<std::size_t>(info.max_label)].push_back(&info);

    FoldSplit split;
    split.k = k;
    split.folds.resize(static_cast<std::size_t>(k));
    std::vector<std::vector<const UserInfo*>> fold_users(static_cast<std::size_t>(k));
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto& group = strata[s];
        std::mt19937_64 rng(mix_seed(seed, 0x5717A7 + s));
        rng_shuffle(group, rng);
        for (const UserInfo* info : group)
            fold_users[cursor++ % static_cast<std::size_t>(k)].push_back(info);
    }

    for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
        FoldRole& role = split.folds[f];
        std::vector<const UserInfo*> trainval;
        for (std::size_t g = 0; g < static_cast<std::size_t>(k); ++g) {
            for (const UserInfo* info : fold_users[g]) {
                if (g == f)
                    role.test.insert(role.test.end(), info->indices.begin(),
                                     info->indices.end());
                else
                    trainval.push_back(info);
            }
        }

        std::size_t trainval_count = 0;
        for (const UserInfo* info : trainval) trainval_count += info->indices.size();

        // Hold out whole users until validation covers >= 10% of the
        // non-test timelines; at least one train user always remains, so a
        // single-user fold trains without a validation set.
        std::mt19937_64 rng(mix_seed(seed, 0x7A1D + f));
        rng_shuffle(trainval, rng);
        const double target = 0.10 * static_cast<double>(trainval_count);
        std::size_t val_count = 0;
        std::size_t taken = 0;
        while (taken < trainval.size() && trainval.size() - taken > 1 &&
               static_cast<double>(val_count) < target) {
            val_count += trainval[taken]->indices.size();
            ++taken;
        }
        for (std::size_t u = 0; u < trainval.size(); ++u) {
            auto& dst = u < taken ? role.validation : role.train;
            dst.insert(dst.end(), trainval[u]->indices.begin(), trainval[u]->indices.end());
        }
        std::sort(role.train.begin(), role.train.end());
        std::sort(role.validation.begin(), role.validation.end());
        std::sort(role.test.begin(), role.test.end());
    }
    return split;
}

std::vector<Timeline> oversample(const std::vector<Timeline>& train, std::uint64_t seed) {
    if (train.empty()) throw ValidationError("cannot oversample an empty training set");

    std::array<std::vector<std::size_t>, kNumLevels> by_class;
    for (std::size_t i = 0; i < train.size(); ++i)
        by_class[static_cast<std::size_t>(train[i].future_label)].push_back(i);
    std::size_t majority = 0;
    for (const auto& cls : by_class) majority = std::max(majority, cls.size());

    std::vector<Timeline> out = train;
    std::mt19937_64 rng(mix_seed(seed, 0x0BE55));
    for (const auto& cls : by_class) {
        if (cls.empty()) continue;
        for (std::size_t n = cls.size(); n < majority; ++n) {
            const auto pick = static_cast<std::size_t>(
                rng_int(rng, 0, static_cast<int>(cls.size()) - 1));
            out.push_back(train[cls[pick]]);
        }
    }
    return out;
}

std::string serialize_timelines(const std::vector<Timeline>& timelines) {
    std::string out;
    for (const auto& tl : timelines) {
        nlohmann::ordered_json obj;
        obj["timeline_id"] = tl.timeline_id;
        obj["user_id"] = tl.user_id;
        obj["anchor"] = format_iso8601(tl.anchor_time);
        obj["l_months"] = tl.l_months;
        obj["m_months"] = tl.m_months;
        obj["future_label"] = std::string(to_string(tl.future_label));
        auto posts = nlohmann::ordered_json::array();
        for (const auto& p : tl.posts) posts.push_back(p.post_id);
        obj["posts"] = posts;
        obj["deltas"] = tl.deltas;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void write_timelines(const std::vector<Timeline>& timelines, const std::string& path) {
    atomic_write_file(path, serialize_timelines(timelines));
}

std::string serialize_fold_csv(const std::vector<Timeline>& timelines, const FoldSplit& split) {
    std::string out = csv_row({"timeline_id", "fold", "role"});
    for (std::size_t f = 0; f < split.folds.size(); ++f) {
        const auto emit = [&](const std::vector<std::size_t>& ids, const char* role) {
            for (std::size_t i : ids)
                out += csv_row({timelines[i].timeline_id, std::to_string(f), role});
        };
        emit(split.folds[f].train, "train");
        emit(split.folds[f].validation, "validation");
        emit(split.folds[f].test, "test");
    }
    return out;
}

void write_fold_csv(const std::vector<Timeline>& timelines, const FoldSplit& split,
                    const std::string& path) {
    atomic_write_file(path, serialize_fold_csv(timelines, split));
}

}  // namespace moodcast
