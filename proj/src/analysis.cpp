#include "moodcast/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "moodcast/util.hpp"

namespace moodcast {

namespace {

std::string fmt(double v, int digits = 6) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

std::string merged_level_name(int scheme, int idx) {
    if (scheme == 4) return std::string(to_string(static_cast<SuicidalityLevel>(idx)));
    if (scheme == 3) return idx == 2 ? "BR+AT" : std::string(to_string(static_cast<SuicidalityLevel>(idx)));
    return idx == 0 ? "IN" : "ID+";
}

}  // namespace

// ---------------------------------------------------------------------------
// Survival.

namespace {

struct Outcome {
    double time = 0;  // days since the user's first post
    bool event = false;
};

Outcome user_outcome(const UserRecord& user, std::int64_t corpus_end, int window_days) {
    const auto& posts = user.posts;
    const double t0 = static_cast<double>(posts.front().timestamp);
    const double window = static_cast<double>(window_days);
    auto day_of = [&](std::size_t i) {
        return (static_cast<double>(posts[i].timestamp) - t0) / kSecondsPerDay;
    };
    for (std::size_t i = 0; i + 1 < posts.size(); ++i)
        if (day_of(i + 1) - day_of(i) > window) return {day_of(i), true};
    const double tail =
        (static_cast<double>(corpus_end) - static_cast<double>(posts.back().timestamp)) /
        kSecondsPerDay;
    return {day_of(posts.size() - 1), tail > window};
}

SurvivalCurve product_limit(BdType group, std::vector<Outcome> outcomes) {
    SurvivalCurve curve;
    curve.group = group;
    curve.n_users = outcomes.size();
    std::sort(outcomes.begin(), outcomes.end(),
              [](const Outcome& a, const Outcome& b) { return a.time < b.time; });

    std::vector<double> event_times;
    for (const auto& o : outcomes)
        if (o.event) event_times.push_back(o.time);
    event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());

    double s = 1.0;
    for (double t : event_times) {
        std::size_t at_risk = 0, events = 0;
        for (const auto& o : outcomes) {
            at_risk += o.time >= t;
            events += o.event && o.time == t;
        }
        s *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
        curve.times.push_back(t);
        curve.survival.push_back(s);
        curve.at_risk.push_back(at_risk);
        curve.n_events += events;
    }
    return curve;
}

}  // namespace

std::vector<SurvivalCurve> kaplan_meier(const Corpus& corpus, int observation_days) {
    if (observation_days < 1) throw ValidationError("observation window must be >= 1 day");
    std::int64_t corpus_end = 0;
    for (const auto& user : corpus.users)
        for (const auto& post : user.posts) corpus_end = std::max(corpus_end, post.timestamp);

    std::array<std::vector<Outcome>, 3> by_group;
    for (const auto& user : corpus.users) {
        if (user.posts.empty()) continue;
        by_group[static_cast<std::size_t>(user.bd_type)].push_back(
            user_outcome(user, corpus_end, observation_days));
    }
    std::vector<SurvivalCurve> curves;
    for (int g = 0; g < 3; ++g)
        curves.push_back(product_limit(static_cast<BdType>(g),
                                       std::move(by_group[static_cast<std::size_t>(g)])));
    return curves;
}

double survival_at(const SurvivalCurve& curve, double t_days) {
    double s = 1.0;
    for (std::size_t i = 0; i < curve.times.size() && curve.times[i] <= t_days; ++i)
        s = curve.survival[i];
    return s;
}

std::string survival_csv(const std::vector<SurvivalCurve>& curves) {
    std::string out = csv_row({"group", "time_days", "survival", "at_risk"});
    for (const auto& curve : curves)
        for (std::size_t i = 0; i < curve.times.size(); ++i)
            out += csv_row({std::string(to_string(curve.group)), fmt(curve.times[i], 3),
                            fmt(curve.survival[i]), std::to_string(curve.at_risk[i])});
    return out;
}

nlohmann::ordered_json survival_json(const std::vector<SurvivalCurve>& curves) {
    nlohmann::ordered_json root;
    root["curves"] = nlohmann::ordered_json::array();
    for (const auto& curve : curves) {
        nlohmann::ordered_json entry;
        entry["group"] = std::string(to_string(curve.group));
        entry["n_users"] = curve.n_users;
        entry["n_events"] = curve.n_events;
        entry["times"] = curve.times;
        entry["survival"] = curve.survival;
        entry["at_risk"] = curve.at_risk;
        root["curves"].push_back(std::move(entry));
    }
    return root;
}

std::string survival_svg(const std::vector<SurvivalCurve>& curves) {
    const double width = 640, height = 400, left = 60, bottom = 40, top = 20, right = 20;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    double t_max = 1.0;
    for (const auto& curve : curves)
        if (!curve.times.empty()) t_max = std::max(t_max, curve.times.back());
    const char* colors[3] = {"#1f77b4", "#d62728", "#2ca02c"};

    auto x_of = [&](double t) { return left + plot_w * t / t_max; };
    auto y_of = [&](double s) { return top + plot_h * (1.0 - s); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\" font-size=\"12\">days since first post</text>\n"
        << "<text x=\"14\" y=\"" << top + plot_h / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
        << top + plot_h / 2 << ")\">S(t)</text>\n";
    for (int g = 0; g < 3 && g < static_cast<int>(curves.size()); ++g) {
        const auto& curve = curves[static_cast<std::size_t>(g)];
        std::ostringstream path;
        path << "M " << x_of(0) << " " << y_of(1.0);
        double s = 1.0;
        for (std::size_t i = 0; i < curve.times.size(); ++i) {
            path << " L " << x_of(curve.times[i]) << " " << y_of(s);
            s = curve.survival[i];
            path << " L " << x_of(curve.times[i]) << " " << y_of(s);
        }
        path << " L " << x_of(t_max) << " " << y_of(s);
        svg << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << colors[g]
            << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << left + plot_w - 80 << "\" y=\"" << top + 16 + 16 * g
            << "\" font-size=\"12\" fill=\"" << colors[g] << "\">"
            << to_string(curve.group) << " (n=" << curve.n_users << ")</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// Welch t-test and the t distribution.

namespace {

std::pair<double, double> mean_var(const std::vector<double>& xs) {
    const auto n = static_cast<double>(xs.size());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n - 1.0;
    return {mean, var};
}

// Lentz continued fraction for the incomplete beta.
double beta_cf(double a, double b, double x) {
    const double eps = 3e-12, floor = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < floor) d = floor;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < floor) d = floor;
        c = 1.0 + aa / c;
        if (std::fabs(c) < floor) c = floor;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < floor) d = floor;
        c = 1.0 + aa / c;
        if (std::fabs(c) < floor) c = floor;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw ValidationError("incomplete beta needs positive shape parameters");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(log_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
    return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw ValidationError("degrees of freedom must be positive");
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ValidationError("welch t-test needs at least 2 values per sample");
    const auto [ma, va] = mean_var(a);
    const auto [mb, vb] = mean_var(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double se2 = va / na + vb / nb;
    if (se2 <= 0.0)
        throw ValidationError("welch t-test is undefined when both samples are constant");
    WelchResult result;
    result.t = (ma - mb) / std::sqrt(se2);
    result.df = se2 * se2 /
                (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    result.p = student_t_two_sided_p(result.t, result.df);
    return result;
}

// ---------------------------------------------------------------------------
// Group comparison.

std::vector<GroupCompareRow> group_compare(const std::vector<Timeline>& timelines,
                                           const std::vector<FeatureExtractor>& features,
                                           bool skip_degenerate) {
    std::vector<GroupCompareRow> rows;
    for (const auto& feature : features) {
        std::vector<double> severe, low;
        for (const auto& tl : timelines)
            (tl.future_label > SuicidalityLevel::Indicator ? severe : low)
                .push_back(feature.fn(tl));
        try {
            const WelchResult w = welch_t_test(severe, low);
            GroupCompareRow row;
            row.feature = feature.name;
            row.mean_severe = mean_var(severe).first;
            row.mean_low = mean_var(low).first;
            row.t = w.t;
            row.p = w.p;
            rows.push_back(std::move(row));
        } catch (const ValidationError&) {
            if (!skip_degenerate) throw;
        }
    }
    return rows;
}

std::string group_compare_csv(const std::vector<GroupCompareRow>& rows) {
    std::string out = csv_row({"feature", "mean_severe", "mean_low", "t", "p"});
    for (const auto& row : rows)
        out += csv_row({row.feature, fmt(row.mean_severe), fmt(row.mean_low), fmt(row.t, 4),
                        fmt(row.p)});
    return out;
}

// ---------------------------------------------------------------------------
// Lexicon counting.

Lexicon parse_lexicon_json(const nlohmann::ordered_json& obj) {
    if (!obj.is_object()) throw ValidationError("lexicon must be a JSON object");
    Lexicon lexicon;
    for (const auto& [category, words] : obj.items()) {
        if (!words.is_array())
            throw ValidationError("lexicon category \"" + category + "\" must be an array");
        std::vector<std::string> list;
        for (const auto& word : words) {
            if (!word.is_string())
                throw ValidationError("lexicon category \"" + category +
                                      "\" contains a non-string entry");
            std::string w = word.get<std::string>();
            std::transform(w.begin(), w.end(), w.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (w.empty() || w == "*")
                throw ValidationError("lexicon category \"" + category +
                                      "\" contains an empty entry");
            list.push_back(std::move(w));
        }
        lexicon.emplace_back(category, std::move(list));
    }
    return lexicon;
}

Lexicon load_lexicon(const std::string& path) {
    const std::string content = read_file(path);
    nlohmann::ordered_json obj;
    try {
        obj = nlohmann::ordered_json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("lexicon file " + path + ": " + e.what());
    }
    return parse_lexicon_json(obj);
}

namespace {

bool lexicon_match(const std::string& token, const std::vector<std::string>& entries) {
    for (const auto& entry : entries) {
        if (entry.back() == '*') {
            if (token.compare(0, entry.size() - 1, entry, 0, entry.size() - 1) == 0)
                return true;
        } else if (token == entry) {
            return true;
        }
    }
    return false;
}

}  // namespace

Eigen::MatrixXd lexicon_counts(const std::vector<Post>& posts, const Lexicon& lexicon) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(posts.size()),
                                                static_cast<Eigen::Index>(lexicon.size()));
    for (std::size_t r = 0; r < posts.size(); ++r) {
        const auto tokens = tokenize(posts[r].text);
        if (tokens.empty()) continue;
        for (std::size_t c = 0; c < lexicon.size(); ++c) {
            std::size_t hits = 0;
            for (const auto& token : tokens) hits += lexicon_match(token, lexicon[c].second);
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                static_cast<double>(hits) / static_cast<double>(tokens.size());
        }
    }
    return out;
}

std::vector<FeatureExtractor> standard_features(const Lexicon& lexicon) {
    std::vector<FeatureExtractor> features;
    for (int m = 0; m < kNumMoods; ++m) {
        const Mood mood = static_cast<Mood>(m);
        features.push_back({"mood_" + std::string(to_string(mood)) + "_freq",
                            [mood](const Timeline& tl) {
                                double hits = 0;
                                for (const auto& post : tl.posts)
                                    hits += post.symptom.mood == mood;
                                return hits / static_cast<double>(tl.posts.size());
                            }});
    }
    features.push_back({"somatic_freq", [](const Timeline& tl) {
                            double hits = 0;
                            for (const auto& post : tl.posts) hits += post.symptom.somatic;
                            return hits / static_cast<double>(tl.posts.size());
                        }});
    features.push_back({"psychosis_freq", [](const Timeline& tl) {
                            double hits = 0;
                            for (const auto& post : tl.posts) hits += post.symptom.psychosis;
                            return hits / static_cast<double>(tl.posts.size());
                        }});
    for (int level = 0; level < kNumLevels; ++level) {
        const auto target = static_cast<SuicidalityLevel>(level);
        features.push_back({"past_" + std::string(to_string(target)) + "_freq",
                            [target](const Timeline& tl) {
                                double hits = 0;
                                for (const auto& post : tl.posts)
                                    hits += post.suicidality == target;
                                return hits / static_cast<double>(tl.posts.size());
                            }});
    }
    for (std::size_t c = 0; c < lexicon.size(); ++c) {
        Lexicon one = {lexicon[c]};
        features.push_back({"lex_" + lexicon[c].first, [one](const Timeline& tl) {
                                const Eigen::MatrixXd counts = lexicon_counts(tl.posts, one);
                                return counts.col(0).mean();
                            }});
    }
    return features;
}

// ---------------------------------------------------------------------------
// Agreement.

double cohens_kappa(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw ValidationError("label vectors have different lengths");
    if (a.empty()) throw ValidationError("cannot compute agreement over zero items");
    const auto n = static_cast<double>(a.size());
    std::map<int, double> count_a, count_b;
    double agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++count_a[a[i]];
        ++count_b[b[i]];
        agree += a[i] == b[i];
    }
    const double p_o = agree / n;
    double p_e = 0;
    for (const auto& [label, ca] : count_a) {
        const auto it = count_b.find(label);
        if (it != count_b.end()) p_e += (ca / n) * (it->second / n);
    }
    if (p_e >= 1.0)
        throw ValidationError("kappa is undefined when chance agreement is 1");
    return (p_o - p_e) / (1.0 - p_e);
}

double krippendorff_alpha(const std::vector<std::vector<int>>& ratings) {
    int max_value = -1;
    for (const auto& unit : ratings)
        for (int v : unit) max_value = std::max(max_value, v);
    if (max_value < 0) throw ValidationError("ratings matrix holds no values");
    const auto n_values = static_cast<std::size_t>(max_value) + 1;

    // Coincidence matrix: each unit contributes its ordered pairs with
    // weight 1/(m_u - 1).
    std::vector<std::vector<double>> co(n_values, std::vector<double>(n_values, 0.0));
    bool any_pair = false;
    for (const auto& unit : ratings) {
        std::vector<int> present;
        for (int v : unit)
            if (v >= 0) present.push_back(v);
        if (present.size() < 2) continue;
        any_pair = true;
        const double w = 1.0 / static_cast<double>(present.size() - 1);
        for (std::size_t i = 0; i < present.size(); ++i)
            for (std::size_t j = 0; j < present.size(); ++j)
                if (i != j)
                    co[static_cast<std::size_t>(present[i])]
                      [static_cast<std::size_t>(present[j])] += w;
    }
    if (!any_pair)
        throw ValidationError("alpha needs at least one unit with two ratings");

    std::vector<double> totals(n_values, 0.0);
    double n = 0;
    for (std::size_t v = 0; v < n_values; ++v)
        for (std::size_t u = 0; u < n_values; ++u) {
            totals[v] += co[v][u];
            n += co[v][u];
        }
    double d_o = 0, d_e = 0;
    for (std::size_t v = 0; v < n_values; ++v)
        for (std::size_t u = 0; u < n_values; ++u)
            if (v != u) {
                d_o += co[v][u];
                d_e += totals[v] * totals[u];
            }
    d_e /= n - 1.0;
    if (d_e <= 0.0)
        throw ValidationError("alpha is undefined when expected disagreement is 0");
    return 1.0 - d_o / d_e;
}

// ---------------------------------------------------------------------------
// Attention aggregation.

AttentionProfile aggregate_attention(const Model<double>& model,
                                     const EmbeddingLookup& lookup, int dimension,
                                     const std::vector<Timeline>& timelines, int max_len) {
    const int n_levels = model.config().n_levels;
    AttentionProfile profile;
    profile.mean = Eigen::MatrixXd::Zero(kNumMoods, n_levels);
    profile.counts = Eigen::MatrixXi::Zero(kNumMoods, n_levels);

    for (const auto& tl : timelines) {
        if (tl.posts.empty()) continue;
        const EncodedSequence seq = encode_timeline_with(lookup, dimension, tl, max_len);
        const auto out = model.forward(seq);
        const int real = seq.real_count();
        const std::size_t offset = tl.posts.size() - static_cast<std::size_t>(real);
        const int level = merge_levels(tl.future_label, n_levels);
        for (int t = 0; t < real; ++t) {
            const int mood =
                static_cast<int>(tl.posts[offset + static_cast<std::size_t>(t)].symptom.mood);
            profile.mean(mood, level) += out.attention(t);
            profile.counts(mood, level) += 1;
        }
    }
    for (int r = 0; r < profile.mean.rows(); ++r)
        for (int c = 0; c < profile.mean.cols(); ++c)
            if (profile.counts(r, c) > 0)
                profile.mean(r, c) /= static_cast<double>(profile.counts(r, c));
    return profile;
}

AttentionProfile aggregate_attention(const Model<double>& model,
                                     const EmbeddingProvider& provider,
                                     const std::vector<Timeline>& timelines, int max_len) {
    EmbeddingLookup lookup = [&provider](const Post& post) {
        return encode_post(provider, post.text);
    };
    return aggregate_attention(model, lookup, provider.dimension(), timelines, max_len);
}

std::string attention_csv(const AttentionProfile& profile) {
    const int scheme = static_cast<int>(profile.mean.cols());
    std::string out = csv_row({"mood", "future_level", "mean_attention", "count"});
    for (int r = 0; r < profile.mean.rows(); ++r)
        for (int c = 0; c < profile.mean.cols(); ++c)
            out += csv_row({std::string(to_string(static_cast<Mood>(r))),
                            merged_level_name(scheme, c),
                            profile.counts(r, c) > 0 ? fmt(profile.mean(r, c)) : "",
                            std::to_string(profile.counts(r, c))});
    return out;
}

nlohmann::ordered_json attention_json(const AttentionProfile& profile) {
    const int scheme = static_cast<int>(profile.mean.cols());
    nlohmann::ordered_json root;
    root["moods"] = nlohmann::ordered_json::array();
    for (int m = 0; m < kNumMoods; ++m)
        root["moods"].push_back(std::string(to_string(static_cast<Mood>(m))));
    root["levels"] = nlohmann::ordered_json::array();
    for (int c = 0; c < scheme; ++c) root["levels"].push_back(merged_level_name(scheme, c));
    root["mean"] = nlohmann::ordered_json::array();
    root["counts"] = nlohmann::ordered_json::array();
    for (int r = 0; r < profile.mean.rows(); ++r) {
        nlohmann::ordered_json mean_row = nlohmann::ordered_json::array();
        nlohmann::ordered_json count_row = nlohmann::ordered_json::array();
        for (int c = 0; c < profile.mean.cols(); ++c) {
            if (profile.counts(r, c) > 0)
                mean_row.push_back(profile.mean(r, c));
            else
                mean_row.push_back(nullptr);
            count_row.push_back(profile.counts(r, c));
        }
        root["mean"].push_back(std::move(mean_row));
        root["counts"].push_back(std::move(count_row));
    }
    return root;
}

std::string attention_svg(const AttentionProfile& profile) {
    const int rows = static_cast<int>(profile.mean.rows());
    const int cols = static_cast<int>(profile.mean.cols());
    const double cell = 64, left = 110, top = 40;
    const double width = left + cols * cell + 20, height = top + rows * cell + 20;
    double peak = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (profile.counts(r, c) > 0) peak = std::max(peak, profile.mean(r, c));
    if (peak <= 0) peak = 1;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int c = 0; c < cols; ++c)
        svg << "<text x=\"" << left + (c + 0.5) * cell << "\" y=\"" << top - 10
            << "\" text-anchor=\"middle\" font-size=\"12\">" << merged_level_name(cols, c)
            << "</text>\n";
    for (int r = 0; r < rows; ++r) {
        svg << "<text x=\"" << left - 8 << "\" y=\"" << top + (r + 0.5) * cell + 4
            << "\" text-anchor=\"end\" font-size=\"12\">"
            << to_string(static_cast<Mood>(r)) << "</text>\n";
        for (int c = 0; c < cols; ++c) {
            const bool filled = profile.counts(r, c) > 0;
            const double frac = filled ? profile.mean(r, c) / peak : 0.0;
            const int blue = 255 - static_cast<int>(std::lround(frac * 180.0));
            std::ostringstream color;
            if (filled)
                color << "rgb(" << blue - 40 << "," << blue - 20 << ",255)";
            else
                color << "#eeeeee";
            svg << "<rect x=\"" << left + c * cell << "\" y=\"" << top + r * cell
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
                << color.str() << "\" stroke=\"#999\"/>\n";
            if (filled)
                svg << "<text x=\"" << left + (c + 0.5) * cell << "\" y=\""
                    << top + (r + 0.5) * cell + 4
                    << "\" text-anchor=\"middle\" font-size=\"11\">"
                    << fmt(profile.mean(r, c), 3) << "</text>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace moodcast
