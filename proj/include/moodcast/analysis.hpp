#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "moodcast/corpus.hpp"
#include "moodcast/encoder.hpp"
#include "moodcast/model.hpp"
#include "moodcast/timeline.hpp"

namespace moodcast {

// ---------------------------------------------------------------------------
// Survival.

struct SurvivalCurve {
    BdType group = BdType::BD1;
    std::vector<double> times;           // event times, days since each user's first post
    std::vector<double> survival;        // product-limit S after each event time
    std::vector<std::size_t> at_risk;    // risk-set size at each event time
    std::size_t n_users = 0;
    std::size_t n_events = 0;
};

// Per-user posting survival, one curve per BD type (in enum order). A user's
// clock starts at their first post; the event is the first gap longer than
// `observation_days` between consecutive posts (timed at the last post seen),
// with the span from the final post to the corpus end treated as one more gap.
// Users whose trailing span stays within the window are censored at their
// last post. Groups with no users yield empty curves.
std::vector<SurvivalCurve> kaplan_meier(const Corpus& corpus, int observation_days = 180);

// S(t) for one curve; 1 before the first event.
double survival_at(const SurvivalCurve& curve, double t_days);

std::string survival_csv(const std::vector<SurvivalCurve>& curves);
nlohmann::ordered_json survival_json(const std::vector<SurvivalCurve>& curves);
std::string survival_svg(const std::vector<SurvivalCurve>& curves);

// ---------------------------------------------------------------------------
// Group statistics.

struct WelchResult {
    double t = 0;
    double df = 0;
    double p = 1;
};

// Unequal-variance t with Welch-Satterthwaite degrees of freedom and a
// two-sided p from the t distribution. Requires both samples to have at
// least 2 values and a nonzero combined variance.
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Continued-fraction I_x(a, b); exact endpoints at x <= 0 and x >= 1.
double regularized_incomplete_beta(double a, double b, double x);
double student_t_two_sided_p(double t, double df);

struct FeatureExtractor {
    std::string name;
    std::function<double(const Timeline&)> fn;
};

struct GroupCompareRow {
    std::string feature;
    double mean_severe = 0;  // future level above the indicator floor
    double mean_low = 0;
    double t = 0;
    double p = 1;
};

// Welch comparison of each feature between severe-future timelines
// (future_label >= ideation) and low ones. With skip_degenerate, features
// whose test cannot run (tiny group or zero variance) are dropped from the
// table instead of raising.
std::vector<GroupCompareRow> group_compare(const std::vector<Timeline>& timelines,
                                           const std::vector<FeatureExtractor>& features,
                                           bool skip_degenerate = false);

std::string group_compare_csv(const std::vector<GroupCompareRow>& rows);

// ---------------------------------------------------------------------------
// Lexicon counting.

// Ordered category -> word/prefix list; entries ending in '*' match by prefix.
using Lexicon = std::vector<std::pair<std::string, std::vector<std::string>>>;

Lexicon parse_lexicon_json(const nlohmann::ordered_json& obj);
Lexicon load_lexicon(const std::string& path);

// Per-post fraction of tokens matching each category (rows = posts, columns =
// categories in lexicon order). Token-free posts count as all zeros.
Eigen::MatrixXd lexicon_counts(const std::vector<Post>& posts, const Lexicon& lexicon);

// Observation-window mood/somatic/past-severity frequencies plus mean lexicon
// proportions, for group_compare.
std::vector<FeatureExtractor> standard_features(const Lexicon& lexicon = {});

// ---------------------------------------------------------------------------
// Agreement.

// kappa = (p_o - p_e) / (1 - p_e) over two equal-length label vectors;
// chance agreement 1 (a single shared category) is undefined and raises.
double cohens_kappa(const std::vector<int>& a, const std::vector<int>& b);

// 1 - D_o/D_e with the nominal metric over a units x coders matrix; ratings
// below 0 are missing. Requires at least one unit with two ratings and a
// nonzero expected disagreement.
double krippendorff_alpha(const std::vector<std::vector<int>>& ratings);

// ---------------------------------------------------------------------------
// Attention aggregation.

struct AttentionProfile {
    Eigen::MatrixXd mean;     // mood (6) x merged future level; 0 where empty
    Eigen::MatrixXi counts;   // posts contributing to each cell
};

// Mean eval-mode attention weight per (post mood, merged future level) cell.
// Rows follow mood enum order; columns are the model's merged levels.
AttentionProfile aggregate_attention(const Model<double>& model,
                                     const EmbeddingLookup& lookup, int dimension,
                                     const std::vector<Timeline>& timelines,
                                     int max_len = 64);
AttentionProfile aggregate_attention(const Model<double>& model,
                                     const EmbeddingProvider& provider,
                                     const std::vector<Timeline>& timelines,
                                     int max_len = 64);

std::string attention_csv(const AttentionProfile& profile);
nlohmann::ordered_json attention_json(const AttentionProfile& profile);
std::string attention_svg(const AttentionProfile& profile);

}  // namespace moodcast
