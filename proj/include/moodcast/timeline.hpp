#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moodcast/corpus.hpp"

namespace moodcast {

// One observation window anchored at a post, labeled by the worst suicidality
// level seen in the forecast window.
struct Timeline {
    std::string timeline_id;  // "<user_id>@<anchor post_id>"
    std::string user_id;
    std::int64_t anchor_time = 0;
    std::vector<Post> posts;    // time-ordered, within (anchor - l*30d, anchor]
    std::vector<double> deltas; // days back from anchor; last entry is 0
    SuicidalityLevel future_label = SuicidalityLevel::Indicator;
    int l_months = 0;
    int m_months = 0;

    bool operator==(const Timeline&) const = default;
};

struct FoldRole {
    std::vector<std::size_t> train;  // indices into the timeline list
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

struct FoldSplit {
    int k = 0;
    std::vector<FoldRole> folds;
};

std::vector<Timeline> build_timelines(const Corpus& corpus, int l_months, int m_months,
                                      int min_posts = 3);

// scheme 4 is the identity; 3 merges {BR, AT}; 2 merges {ID, BR, AT}.
int merge_levels(SuicidalityLevel level, int scheme);
int merged_class_count(int scheme);

// Users are stratified by their maximum future_label and dealt round-robin
// into k groups; validation holds out whole users until it covers >= 10% of
// the fold's non-test timelines.
FoldSplit split_user_disjoint_folds(const std::vector<Timeline>& timelines, int k,
                                    std::uint64_t seed);

// Resamples every class with replacement up to the majority count; the
// originals are all retained.
std::vector<Timeline> oversample(const std::vector<Timeline>& train, std::uint64_t seed);

std::string serialize_timelines(const std::vector<Timeline>& timelines);
void write_timelines(const std::vector<Timeline>& timelines, const std::string& path);

// CSV rows (timeline_id, fold, role) with role in {train, validation, test}.
std::string serialize_fold_csv(const std::vector<Timeline>& timelines, const FoldSplit& split);
void write_fold_csv(const std::vector<Timeline>& timelines, const FoldSplit& split,
                    const std::string& path);

}  // namespace moodcast
