#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "moodcast/encoder.hpp"
#include "moodcast/util.hpp"

namespace moodcast {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ModelConfig {
    int embedding_dim = 1024;
    int hidden_size = 512;  // per-direction recurrent width
    int lstm_layers = 2;
    double dropout = 0.1;
    double alpha = 1.8;  // ordinal soft-label sharpness
    int n_levels = 4;
    int n_symptoms = 8;
    int head_hidden = 0;  // 0 means hidden_size

    bool no_temporal_attention = false;
    bool no_bilstm = false;
    bool no_uncertainty = false;
    bool no_somatic = false;
    bool no_mood = false;
    bool single_task = false;
};

inline int head_hidden_size(const ModelConfig& cfg) {
    return cfg.head_hidden > 0 ? cfg.head_hidden : cfg.hidden_size;
}

// Column range of the symptom targets the auxiliary task trains on.
struct SymptomCols {
    int offset = 0;
    int count = 0;
};

inline SymptomCols symptom_cols(const ModelConfig& cfg) {
    if (cfg.no_somatic) return {0, kNumMoods};
    if (cfg.no_mood) return {kNumMoods, kNumSymptoms - kNumMoods};
    return {0, kNumSymptoms};
}

inline void validate_config(const ModelConfig& cfg) {
    if (cfg.embedding_dim < 1) throw ValidationError("embedding_dim must be positive");
    if (cfg.hidden_size < 1) throw ValidationError("hidden_size must be positive");
    if (cfg.lstm_layers < 1) throw ValidationError("lstm_layers must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw ValidationError("dropout must lie in [0, 1)");
    if (cfg.alpha < 0.0) throw ValidationError("alpha must be >= 0");
    if (cfg.n_levels < 2 || cfg.n_levels > kNumLevels)
        throw ValidationError("n_levels must be one of {4, 3, 2}");
    if (cfg.n_symptoms != kNumSymptoms)
        throw ValidationError("n_symptoms is fixed by the symptom target layout");
    if (cfg.head_hidden < 0) throw ValidationError("head_hidden must be >= 0");
    if (cfg.no_somatic && cfg.no_mood)
        throw ValidationError("cannot drop both symptom groups");
}

// ---------------------------------------------------------------------------
// Parameters: named dense blocks in a fixed construction order. The order is
// the contract for optimizer state, serialization, and gradient checking.

template <typename Scalar>
struct ParamSet {
    struct Block {
        std::string name;
        MatX<Scalar> value;
    };
    std::vector<Block> blocks;

    MatX<Scalar>& at(std::string_view name) {
        for (auto& b : blocks)
            if (b.name == name) return b.value;
        throw ValidationError("unknown parameter block \"" + std::string(name) + "\"");
    }
    const MatX<Scalar>& at(std::string_view name) const {
        for (const auto& b : blocks)
            if (b.name == name) return b.value;
        throw ValidationError("unknown parameter block \"" + std::string(name) + "\"");
    }

    struct BlockView {
        std::string_view name;
        Scalar* data;
        std::size_t size;
    };
    std::vector<BlockView> views() {
        std::vector<BlockView> out;
        out.reserve(blocks.size());
        for (auto& b : blocks)
            out.push_back({b.name, b.value.data(), static_cast<std::size_t>(b.value.size())});
        return out;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += static_cast<std::size_t>(b.value.size());
        return n;
    }

    void set_zero() {
        for (auto& b : blocks) b.value.setZero();
    }

    // Same block names and shapes, all zeros. Gradient accumulators start here.
    ParamSet zeros_like() const {
        ParamSet out;
        out.blocks.reserve(blocks.size());
        for (const auto& b : blocks)
            out.blocks.push_back({b.name, MatX<Scalar>::Zero(b.value.rows(), b.value.cols())});
        return out;
    }
};

// Weight decay applies to multiplicative weights only; biases and the
// log-variance scalars are exempt. Encoded in the block naming scheme.
inline bool is_decayed_block(std::string_view name) {
    const auto dot = name.rfind('.');
    const std::string_view last = dot == std::string_view::npos ? name : name.substr(dot + 1);
    return !last.empty() && (last[0] == 'W' || last[0] == 'U' || last[0] == 'w');
}

namespace detail {

template <typename Scalar>
void add_block(ParamSet<Scalar>& params, std::string name, Eigen::Index rows,
               Eigen::Index cols, bool init_uniform, std::mt19937_64& rng) {
    MatX<Scalar> m = MatX<Scalar>::Zero(rows, cols);
    if (init_uniform) {
        const double limit = 1.0 / std::sqrt(static_cast<double>(cols));
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                m(r, c) = static_cast<Scalar>((2.0 * rng_u01(rng) - 1.0) * limit);
    }
    params.blocks.push_back({std::move(name), std::move(m)});
}

}  // namespace detail

template <typename Scalar>
ParamSet<Scalar> make_params(const ModelConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    std::mt19937_64 rng(mix_seed(seed, 0x1317));
    ParamSet<Scalar> p;
    const int H = cfg.hidden_size;
    const int ctx = 2 * H;
    const int hh = head_hidden_size(cfg);
    const int gamma = symptom_cols(cfg).count;

    if (cfg.no_bilstm) {
        detail::add_block(p, "proj.W", ctx, cfg.embedding_dim, true, rng);
        detail::add_block(p, "proj.b", ctx, 1, false, rng);
    } else {
        for (int layer = 0; layer < cfg.lstm_layers; ++layer) {
            const int in_dim = layer == 0 ? cfg.embedding_dim : ctx;
            for (const char* dir : {"fwd", "bwd"}) {
                const std::string base =
                    "lstm.l" + std::to_string(layer) + "." + dir + ".";
                detail::add_block(p, base + "W", 4 * H, in_dim, true, rng);
                detail::add_block(p, base + "U", 4 * H, H, true, rng);
                detail::add_block(p, base + "b", 4 * H, 1, false, rng);
            }
        }
    }
    detail::add_block(p, "attn.w_theta", 1, ctx, true, rng);
    detail::add_block(p, "attn.b_theta", 1, 1, false, rng);
    detail::add_block(p, "attn.w_mu", 1, ctx, true, rng);
    detail::add_block(p, "attn.b_mu", 1, 1, false, rng);
    detail::add_block(p, "attn.w_score", 1, ctx, true, rng);
    detail::add_block(p, "attn.b_score", 1, 1, false, rng);
    detail::add_block(p, "fs.W_hidden", hh, ctx, true, rng);
    detail::add_block(p, "fs.b_hidden", hh, 1, false, rng);
    detail::add_block(p, "fs.W_out", cfg.n_levels, hh, true, rng);
    detail::add_block(p, "fs.b_out", cfg.n_levels, 1, false, rng);
    detail::add_block(p, "bd.W_hidden", hh, cfg.embedding_dim, true, rng);
    detail::add_block(p, "bd.b_hidden", hh, 1, false, rng);
    detail::add_block(p, "bd.W_out", gamma, hh, true, rng);
    detail::add_block(p, "bd.b_out", gamma, 1, false, rng);
    detail::add_block(p, "loss.s_fs", 1, 1, false, rng);
    detail::add_block(p, "loss.s_bd", 1, 1, false, rng);
    return p;
}

// ---------------------------------------------------------------------------
// Scalar nonlinearities.

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar stable_softplus(Scalar x) {
    if (x > Scalar(30)) return x;
    return std::log1p(std::exp(x));
}

template <typename Scalar>
VecX<Scalar> softmax(const VecX<Scalar>& z) {
    VecX<Scalar> out = (z.array() - z.maxCoeff()).exp();
    out /= out.sum();
    return out;
}

inline constexpr double kProbFloor = 1e-12;

// ---------------------------------------------------------------------------
// Recurrent context layer. Gate order inside the stacked pre-activation is
// [input, forget, cell, output].

template <typename Scalar>
struct LstmDirCache {
    MatX<Scalar> i, f, g, o, c, tanh_c, h;  // T x H each, original time order
};

template <typename Scalar>
struct ContextCache {
    std::vector<MatX<Scalar>> layer_inputs;  // per layer, T x in_dim
    std::vector<LstmDirCache<Scalar>> dirs;  // 2 per layer: fwd then bwd
};

namespace detail {

// One direction over the whole sequence. `order` lists time indices in
// processing order; the state before order.front() is zero.
template <typename Scalar>
void lstm_direction(const MatX<Scalar>& X, const MatX<Scalar>& W, const MatX<Scalar>& U,
                    const MatX<Scalar>& b, const std::vector<Eigen::Index>& order,
                    LstmDirCache<Scalar>& cache) {
    const Eigen::Index T = X.rows();
    const Eigen::Index H = U.cols();
    for (auto* m : {&cache.i, &cache.f, &cache.g, &cache.o, &cache.c, &cache.tanh_c, &cache.h})
        m->resize(T, H);

    VecX<Scalar> h_prev = VecX<Scalar>::Zero(H);
    VecX<Scalar> c_prev = VecX<Scalar>::Zero(H);
    VecX<Scalar> z(4 * H);
    for (Eigen::Index t : order) {
        z.noalias() = W * X.row(t).transpose();
        z.noalias() += U * h_prev;
        z += b.col(0);
        for (Eigen::Index k = 0; k < H; ++k) {
            const Scalar i = stable_sigmoid(z[k]);
            const Scalar f = stable_sigmoid(z[H + k]);
            const Scalar g = std::tanh(z[2 * H + k]);
            const Scalar o = stable_sigmoid(z[3 * H + k]);
            const Scalar c = f * c_prev[k] + i * g;
            const Scalar tc = std::tanh(c);
            cache.i(t, k) = i;
            cache.f(t, k) = f;
            cache.g(t, k) = g;
            cache.o(t, k) = o;
            cache.c(t, k) = c;
            cache.tanh_c(t, k) = tc;
            cache.h(t, k) = o * tc;
        }
        h_prev = cache.h.row(t).transpose();
        c_prev = cache.c.row(t).transpose();
    }
}

inline std::vector<Eigen::Index> time_order(Eigen::Index T, bool reversed) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t)
        order[static_cast<std::size_t>(t)] = reversed ? T - 1 - t : t;
    return order;
}

}  // namespace detail

// Contextual states for the unmasked rows of `embeddings` (T x dim, real posts
// only): stacked bidirectional recurrence, or a linear projection under the
// no_bilstm ablation. Output is T x 2H.
template <typename Scalar>
MatX<Scalar> bilstm_context(const MatX<Scalar>& embeddings, const ParamSet<Scalar>& params,
                            const ModelConfig& cfg, ContextCache<Scalar>* cache = nullptr) {
    if (embeddings.cols() != cfg.embedding_dim)
        throw ValidationError("embedding width does not match embedding_dim");
    const Eigen::Index T = embeddings.rows();
    const int H = cfg.hidden_size;

    if (cfg.no_bilstm) {
        MatX<Scalar> out = embeddings * params.at("proj.W").transpose();
        out.rowwise() += params.at("proj.b").col(0).transpose();
        if (cache) {
            cache->layer_inputs.assign(1, embeddings);
            cache->dirs.clear();
        }
        return out;
    }

    ContextCache<Scalar> local;
    ContextCache<Scalar>& cc = cache ? *cache : local;
    cc.layer_inputs.clear();
    cc.dirs.assign(static_cast<std::size_t>(2 * cfg.lstm_layers), {});

    MatX<Scalar> input = embeddings;
    MatX<Scalar> out(T, 2 * H);
    for (int layer = 0; layer < cfg.lstm_layers; ++layer) {
        cc.layer_inputs.push_back(input);
        const std::string base = "lstm.l" + std::to_string(layer) + ".";
        auto& fwd = cc.dirs[static_cast<std::size_t>(2 * layer)];
        auto& bwd = cc.dirs[static_cast<std::size_t>(2 * layer + 1)];
        detail::lstm_direction(input, params.at(base + "fwd.W"), params.at(base + "fwd.U"),
                               params.at(base + "fwd.b"), detail::time_order(T, false), fwd);
        detail::lstm_direction(input, params.at(base + "bwd.W"), params.at(base + "bwd.U"),
                               params.at(base + "bwd.b"), detail::time_order(T, true), bwd);
        out.leftCols(H) = fwd.h;
        out.rightCols(H) = bwd.h;
        input = out;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Temporal symptom-aware attention.

template <typename Scalar>
struct AttnCache {
    VecX<Scalar> theta, pre_mu, mu, gate;  // per post
    MatX<Scalar> delta_vec;                // T x 2H gated vectors
    VecX<Scalar> score_pre, score, attention;
    MatX<Scalar> H_in;
    VecX<Scalar> deltas;
};

// Time-decayed gating of one contextual state: sigmoid(theta(h) - mu(h) * dt) * h
// with theta linear in h and mu softplus-linear in h.
template <typename Scalar>
VecX<Scalar> temporal_gate(const VecX<Scalar>& h, Scalar delta_days,
                           const ParamSet<Scalar>& params) {
    const Scalar theta =
        (params.at("attn.w_theta") * h)(0, 0) + params.at("attn.b_theta")(0, 0);
    const Scalar mu = stable_softplus(
        (params.at("attn.w_mu") * h)(0, 0) + params.at("attn.b_mu")(0, 0));
    return stable_sigmoid(theta - mu * delta_days) * h;
}

// Softmax(tanh(F(.))) pooling over the real posts; scores see the gated
// vectors, the pooled representation g sums the raw contextual states.
// Under no_temporal_attention the scores see the raw states instead.
template <typename Scalar>
std::pair<VecX<Scalar>, VecX<Scalar>> attention_pool(const MatX<Scalar>& H_in,
                                                     const VecX<Scalar>& deltas,
                                                     const ParamSet<Scalar>& params,
                                                     const ModelConfig& cfg,
                                                     AttnCache<Scalar>* cache = nullptr) {
    const Eigen::Index T = H_in.rows();
    if (T == 0) throw ValidationError("attention over an empty sequence");
    if (deltas.size() != T) throw ValidationError("deltas do not match sequence length");

    AttnCache<Scalar> local;
    AttnCache<Scalar>& cc = cache ? *cache : local;
    cc.H_in = H_in;
    cc.deltas = deltas;
    cc.delta_vec.resize(T, H_in.cols());
    cc.theta.resize(T);
    cc.pre_mu.resize(T);
    cc.mu.resize(T);
    cc.gate.resize(T);
    cc.score_pre.resize(T);
    cc.score.resize(T);

    const auto& w_theta = params.at("attn.w_theta");
    const auto& w_mu = params.at("attn.w_mu");
    const auto& w_score = params.at("attn.w_score");
    const Scalar b_theta = params.at("attn.b_theta")(0, 0);
    const Scalar b_mu = params.at("attn.b_mu")(0, 0);
    const Scalar b_score = params.at("attn.b_score")(0, 0);

    for (Eigen::Index t = 0; t < T; ++t) {
        const VecX<Scalar> h = H_in.row(t).transpose();
        if (cfg.no_temporal_attention) {
            cc.delta_vec.row(t) = H_in.row(t);
        } else {
            cc.theta[t] = (w_theta * h)(0, 0) + b_theta;
            cc.pre_mu[t] = (w_mu * h)(0, 0) + b_mu;
            cc.mu[t] = stable_softplus(cc.pre_mu[t]);
            cc.gate[t] = stable_sigmoid(cc.theta[t] - cc.mu[t] * deltas[t]);
            cc.delta_vec.row(t) = cc.gate[t] * H_in.row(t);
        }
        cc.score_pre[t] = (w_score * cc.delta_vec.row(t).transpose())(0, 0) + b_score;
        cc.score[t] = std::tanh(cc.score_pre[t]);
    }
    cc.attention = softmax<Scalar>(cc.score);
    VecX<Scalar> g = H_in.transpose() * cc.attention;
    return {std::move(g), cc.attention};
}

// ---------------------------------------------------------------------------
// Heads.

template <typename Scalar>
VecX<Scalar> suicidality_head(const VecX<Scalar>& g, const ParamSet<Scalar>& params) {
    const VecX<Scalar> hidden =
        ((params.at("fs.W_hidden") * g + params.at("fs.b_hidden").col(0)).array().max(Scalar(0)))
            .matrix();
    return params.at("fs.W_out") * hidden + params.at("fs.b_out").col(0);
}

// Per-post symptom logits from the post embedding (not the contextual state).
template <typename Scalar>
VecX<Scalar> symptom_head(const VecX<Scalar>& embedding, const ParamSet<Scalar>& params) {
    const VecX<Scalar> hidden =
        ((params.at("bd.W_hidden") * embedding + params.at("bd.b_hidden").col(0))
             .array()
             .max(Scalar(0)))
            .matrix();
    return params.at("bd.W_out") * hidden + params.at("bd.b_out").col(0);
}

// ---------------------------------------------------------------------------
// Losses.

// Soft ordinal target: y_i proportional to exp(-alpha * |r - i|).
template <typename Scalar>
VecX<Scalar> sord_soft_labels(int r, Scalar alpha, int n_levels) {
    if (r < 0 || r >= n_levels) throw ValidationError("ordinal label outside [0, n_levels)");
    VecX<Scalar> y(n_levels);
    for (int i = 0; i < n_levels; ++i)
        y[i] = std::exp(-alpha * std::abs(Scalar(r) - Scalar(i)));
    y /= y.sum();
    return y;
}

// Soft-label cross-entropy, mean over the batch.
template <typename Scalar>
Scalar loss_fs(const std::vector<VecX<Scalar>>& probs,
               const std::vector<VecX<Scalar>>& soft_labels) {
    if (probs.empty() || probs.size() != soft_labels.size())
        throw ValidationError("loss_fs batch mismatch");
    Scalar total = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        for (Eigen::Index k = 0; k < probs[i].size(); ++k)
            total -= soft_labels[i][k] *
                     std::log(std::max(probs[i][k], Scalar(kProbFloor)));
    }
    return total / Scalar(probs.size());
}

// Per-post binary cross-entropy summed over symptom dims, mean over all real
// posts in the batch. Each matrix holds real posts only (row per post).
template <typename Scalar>
Scalar loss_bd(const std::vector<MatX<Scalar>>& probs,
               const std::vector<MatX<Scalar>>& targets) {
    if (probs.size() != targets.size()) throw ValidationError("loss_bd batch mismatch");
    Scalar total = 0;
    Eigen::Index n_posts = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].rows() != targets[i].rows() || probs[i].cols() != targets[i].cols())
            throw ValidationError("loss_bd shape mismatch");
        n_posts += probs[i].rows();
        for (Eigen::Index r = 0; r < probs[i].rows(); ++r) {
            for (Eigen::Index c = 0; c < probs[i].cols(); ++c) {
                const Scalar p = std::min(std::max(probs[i](r, c), Scalar(kProbFloor)),
                                          Scalar(1) - Scalar(kProbFloor));
                const Scalar y = targets[i](r, c);
                total -= y * std::log(p) + (Scalar(1) - y) * std::log(Scalar(1) - p);
            }
        }
    }
    if (n_posts == 0) throw ValidationError("loss_bd over zero posts");
    return total / Scalar(n_posts);
}

// Uncertainty-weighted combination in log-variance form. Ablations reduce to
// the unweighted sum or the main task alone.
template <typename Scalar>
Scalar total_loss(Scalar l_fs, Scalar l_bd, Scalar s_fs, Scalar s_bd,
                  const ModelConfig& cfg) {
    if (cfg.single_task) return l_fs;
    if (cfg.no_uncertainty) return l_fs + l_bd;
    return std::exp(-s_fs) / Scalar(2) * l_fs + std::exp(-s_bd) / Scalar(2) * l_bd +
           (s_fs + s_bd) / Scalar(2);
}

// d(total)/d(l_fs), d(total)/d(l_bd) for the active loss form.
template <typename Scalar>
std::pair<Scalar, Scalar> loss_weights(Scalar s_fs, Scalar s_bd, const ModelConfig& cfg) {
    if (cfg.single_task) return {Scalar(1), Scalar(0)};
    if (cfg.no_uncertainty) return {Scalar(1), Scalar(1)};
    return {std::exp(-s_fs) / Scalar(2), std::exp(-s_bd) / Scalar(2)};
}

// d(total)/d(s_fs), d(total)/d(s_bd); zero when the ablation removes them.
template <typename Scalar>
std::pair<Scalar, Scalar> loss_s_grads(Scalar l_fs, Scalar l_bd, Scalar s_fs, Scalar s_bd,
                                       const ModelConfig& cfg) {
    if (cfg.single_task || cfg.no_uncertainty) return {Scalar(0), Scalar(0)};
    return {Scalar(0.5) - std::exp(-s_fs) / Scalar(2) * l_fs,
            Scalar(0.5) - std::exp(-s_bd) / Scalar(2) * l_bd};
}

// ---------------------------------------------------------------------------
// Sequence input and full forward / backward.

// Dense view of one encoded timeline restricted to checks the model needs:
// the mask must be a true-prefix, so padded rows can simply be dropped.
template <typename Scalar>
struct SequenceInput {
    MatX<Scalar> embeddings;       // T_real x dim
    VecX<Scalar> deltas;           // T_real
    MatX<Scalar> symptom_targets;  // T_real x kNumSymptoms
    int future_label = 0;          // raw 4-level code
};

template <typename Scalar>
SequenceInput<Scalar> to_sequence_input(const EncodedSequence& seq) {
    bool in_pad = false;
    int real = 0;
    for (bool b : seq.mask) {
        if (b && in_pad) throw ValidationError("mask must be a contiguous prefix");
        if (b) ++real;
        else in_pad = true;
    }
    if (real == 0) throw ValidationError("sequence \"" + seq.timeline_id + "\" is fully masked");
    SequenceInput<Scalar> input;
    input.embeddings = seq.embeddings.topRows(real).template cast<Scalar>();
    input.deltas = seq.deltas.head(real).template cast<Scalar>();
    input.symptom_targets = seq.symptom_targets.topRows(real).template cast<Scalar>();
    input.future_label = seq.future_label;
    return input;
}

template <typename Scalar>
struct ModelOutput {
    VecX<Scalar> logits;         // n_levels
    VecX<Scalar> probs;          // softmax of logits
    MatX<Scalar> symptom_probs;  // T_real x gamma_effective
    VecX<Scalar> attention;      // T_real, sums to 1
    VecX<Scalar> g;              // 2H sequence representation
};

template <typename Scalar>
struct ForwardCache {
    MatX<Scalar> emb_dropped;   // embeddings after input dropout
    MatX<Scalar> emb_mask;      // inverted-dropout multipliers (empty if off)
    ContextCache<Scalar> ctx;
    MatX<Scalar> H_ctx;
    AttnCache<Scalar> attn;
    VecX<Scalar> g_raw, g_dropped, g_mask;
    VecX<Scalar> fs_hidden;     // post-ReLU
    VecX<Scalar> fs_logits, fs_probs;
    MatX<Scalar> bd_hidden;     // T x hh, post-ReLU
    MatX<Scalar> bd_logits, bd_probs;
};

template <typename Scalar>
class Model {
   public:
    Model(const ModelConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), params_(make_params<Scalar>(cfg, seed)) {}

    const ModelConfig& config() const { return cfg_; }
    ParamSet<Scalar>& params() { return params_; }
    const ParamSet<Scalar>& params() const { return params_; }

    // Deterministic eval-mode forward.
    ModelOutput<Scalar> forward(const SequenceInput<Scalar>& input) const {
        ForwardCache<Scalar> cache;
        run_forward(input, nullptr, cache);
        return package(cache);
    }

    ModelOutput<Scalar> forward(const EncodedSequence& seq) const {
        return forward(to_sequence_input<Scalar>(seq));
    }

    struct SeqLoss {
        Scalar fs = 0;       // soft-label cross-entropy of this sequence
        Scalar bd_sum = 0;   // BCE summed over this sequence's posts and dims
        Eigen::Index n_posts = 0;
    };

    // Training-mode forward (dropout active when rng given) plus backprop.
    // Accumulates weight_fs * d(fs)/dW + weight_bd * d(bd_sum)/dW into grads;
    // the caller folds in batch normalization and uncertainty weights.
    SeqLoss forward_backward(const SequenceInput<Scalar>& input,
                             const VecX<Scalar>& soft_label, Scalar weight_fs,
                             Scalar weight_bd, ParamSet<Scalar>& grads,
                             std::mt19937_64* dropout_rng) const {
        ForwardCache<Scalar> cache;
        run_forward(input, dropout_rng, cache);
        SeqLoss loss = eval_losses(input, soft_label, cache);
        backward(input, soft_label, weight_fs, weight_bd, cache, grads);
        return loss;
    }

    // Loss values without gradient work (validation batches).
    SeqLoss losses(const SequenceInput<Scalar>& input, const VecX<Scalar>& soft_label) const {
        ForwardCache<Scalar> cache;
        run_forward(input, nullptr, cache);
        return eval_losses(input, soft_label, cache);
    }

   private:
    ModelConfig cfg_;
    ParamSet<Scalar> params_;

    static MatX<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p,
                                     std::mt19937_64& rng) {
        MatX<Scalar> m(rows, cols);
        const Scalar keep_inv = Scalar(1) / Scalar(1 - p);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                m(r, c) = rng_u01(rng) < p ? Scalar(0) : keep_inv;
        return m;
    }

    void run_forward(const SequenceInput<Scalar>& input, std::mt19937_64* rng,
                     ForwardCache<Scalar>& cache) const {
        if (input.embeddings.rows() == 0)
            throw ValidationError("model input has no real posts");
        if (input.embeddings.cols() != cfg_.embedding_dim)
            throw ValidationError("model input embedding width mismatch");

        const bool drop = rng != nullptr && cfg_.dropout > 0.0;
        if (drop) {
            cache.emb_mask = dropout_mask(input.embeddings.rows(), input.embeddings.cols(),
                                          cfg_.dropout, *rng);
            cache.emb_dropped = input.embeddings.cwiseProduct(cache.emb_mask);
        } else {
            cache.emb_mask.resize(0, 0);
            cache.emb_dropped = input.embeddings;
        }

        cache.H_ctx = bilstm_context(cache.emb_dropped, params_, cfg_, &cache.ctx);
        auto [g, attention] =
            attention_pool(cache.H_ctx, input.deltas, params_, cfg_, &cache.attn);
        cache.g_raw = std::move(g);
        (void)attention;  // kept inside cache.attn

        if (drop) {
            cache.g_mask = dropout_mask(cache.g_raw.size(), 1, cfg_.dropout, *rng).col(0);
            cache.g_dropped = cache.g_raw.cwiseProduct(cache.g_mask);
        } else {
            cache.g_mask.resize(0);
            cache.g_dropped = cache.g_raw;
        }

        cache.fs_hidden = ((params_.at("fs.W_hidden") * cache.g_dropped +
                            params_.at("fs.b_hidden").col(0))
                               .array()
                               .max(Scalar(0)))
                              .matrix();
        cache.fs_logits =
            params_.at("fs.W_out") * cache.fs_hidden + params_.at("fs.b_out").col(0);
        cache.fs_probs = softmax<Scalar>(cache.fs_logits);

        const Eigen::Index T = input.embeddings.rows();
        const auto& Wd = params_.at("bd.W_hidden");
        const auto& Wc = params_.at("bd.W_out");
        cache.bd_hidden.resize(T, Wd.rows());
        cache.bd_logits.resize(T, Wc.rows());
        cache.bd_probs.resize(T, Wc.rows());
        for (Eigen::Index t = 0; t < T; ++t) {
            const VecX<Scalar> hidden =
                ((Wd * cache.emb_dropped.row(t).transpose() + params_.at("bd.b_hidden").col(0))
                     .array()
                     .max(Scalar(0)))
                    .matrix();
            cache.bd_hidden.row(t) = hidden.transpose();
            const VecX<Scalar> logits = Wc * hidden + params_.at("bd.b_out").col(0);
            cache.bd_logits.row(t) = logits.transpose();
            for (Eigen::Index k = 0; k < logits.size(); ++k)
                cache.bd_probs(t, k) = stable_sigmoid(logits[k]);
        }
    }

    ModelOutput<Scalar> package(ForwardCache<Scalar>& cache) const {
        ModelOutput<Scalar> out;
        out.logits = cache.fs_logits;
        out.probs = cache.fs_probs;
        out.symptom_probs = cache.bd_probs;
        out.attention = cache.attn.attention;
        out.g = cache.g_raw;
        return out;
    }

    SeqLoss eval_losses(const SequenceInput<Scalar>& input, const VecX<Scalar>& soft_label,
                        const ForwardCache<Scalar>& cache) const {
        SeqLoss loss;
        loss.n_posts = input.embeddings.rows();
        for (Eigen::Index k = 0; k < soft_label.size(); ++k)
            loss.fs -= soft_label[k] *
                       std::log(std::max(cache.fs_probs[k], Scalar(kProbFloor)));
        const auto cols = symptom_cols(cfg_);
        for (Eigen::Index t = 0; t < loss.n_posts; ++t) {
            for (int k = 0; k < cols.count; ++k) {
                const Scalar p = std::min(std::max(cache.bd_probs(t, k), Scalar(kProbFloor)),
                                          Scalar(1) - Scalar(kProbFloor));
                const Scalar y = input.symptom_targets(t, cols.offset + k);
                loss.bd_sum -= y * std::log(p) + (Scalar(1) - y) * std::log(Scalar(1) - p);
            }
        }
        return loss;
    }

    void backward(const SequenceInput<Scalar>& input, const VecX<Scalar>& soft_label,
                  Scalar weight_fs, Scalar weight_bd, const ForwardCache<Scalar>& cache,
                  ParamSet<Scalar>& grads) const {
        const Eigen::Index T = input.embeddings.rows();
        const auto cols = symptom_cols(cfg_);

        // Symptom path: logits grad is sigmoid(z) - y, scaled by weight_bd.
        if (weight_bd != Scalar(0)) {
            MatX<Scalar> d_logits(T, cols.count);
            for (Eigen::Index t = 0; t < T; ++t)
                for (int k = 0; k < cols.count; ++k)
                    d_logits(t, k) = weight_bd * (cache.bd_probs(t, k) -
                                                  input.symptom_targets(t, cols.offset + k));
            grads.at("bd.W_out").noalias() += d_logits.transpose() * cache.bd_hidden;
            grads.at("bd.b_out").col(0) += d_logits.colwise().sum().transpose();
            MatX<Scalar> d_hidden = d_logits * params_.at("bd.W_out");
            d_hidden = (cache.bd_hidden.array() > Scalar(0)).select(d_hidden, Scalar(0));
            grads.at("bd.W_hidden").noalias() += d_hidden.transpose() * cache.emb_dropped;
            grads.at("bd.b_hidden").col(0) += d_hidden.colwise().sum().transpose();
        }

        if (weight_fs == Scalar(0)) return;

        // Suicidality head: softmax + soft-label cross-entropy.
        VecX<Scalar> d_logits = weight_fs * (cache.fs_probs - soft_label);
        grads.at("fs.W_out").noalias() += d_logits * cache.fs_hidden.transpose();
        grads.at("fs.b_out").col(0) += d_logits;
        VecX<Scalar> d_hidden = params_.at("fs.W_out").transpose() * d_logits;
        d_hidden =
            (cache.fs_hidden.array() > Scalar(0)).select(d_hidden.array(), Scalar(0)).matrix();
        grads.at("fs.W_hidden").noalias() += d_hidden * cache.g_dropped.transpose();
        grads.at("fs.b_hidden").col(0) += d_hidden;

        VecX<Scalar> d_g = params_.at("fs.W_hidden").transpose() * d_hidden;
        if (cache.g_mask.size() > 0) d_g = d_g.cwiseProduct(cache.g_mask);

        // Attention backward: d_g flows into the pooled sum and the scores.
        const auto& attn = cache.attn;
        const VecX<Scalar>& a = attn.attention;
        MatX<Scalar> d_H = MatX<Scalar>::Zero(T, cache.H_ctx.cols());
        VecX<Scalar> d_a(T);
        for (Eigen::Index t = 0; t < T; ++t) {
            d_a[t] = cache.H_ctx.row(t).dot(d_g);
            d_H.row(t) += a[t] * d_g.transpose();
        }
        const Scalar a_dot = a.dot(d_a);
        VecX<Scalar> d_score = a.cwiseProduct(d_a - VecX<Scalar>::Constant(T, a_dot));
        const auto& w_score = params_.at("attn.w_score");
        const auto& w_theta = params_.at("attn.w_theta");
        const auto& w_mu = params_.at("attn.w_mu");
        for (Eigen::Index t = 0; t < T; ++t) {
            const Scalar d_pre = d_score[t] * (Scalar(1) - attn.score[t] * attn.score[t]);
            grads.at("attn.w_score").noalias() += d_pre * attn.delta_vec.row(t);
            grads.at("attn.b_score")(0, 0) += d_pre;
            const VecX<Scalar> d_delta = d_pre * w_score.transpose();
            if (cfg_.no_temporal_attention) {
                d_H.row(t) += d_delta.transpose();
                continue;
            }
            const VecX<Scalar> h = cache.H_ctx.row(t).transpose();
            const Scalar u = attn.gate[t];
            const Scalar d_u = d_delta.dot(h);
            d_H.row(t) += u * d_delta.transpose();
            const Scalar d_v = d_u * u * (Scalar(1) - u);
            const Scalar d_theta = d_v;
            const Scalar d_mu = -d_v * attn.deltas[t];
            const Scalar d_pre_mu = d_mu * stable_sigmoid(attn.pre_mu[t]);
            grads.at("attn.w_theta").noalias() += d_theta * cache.H_ctx.row(t);
            grads.at("attn.b_theta")(0, 0) += d_theta;
            grads.at("attn.w_mu").noalias() += d_pre_mu * cache.H_ctx.row(t);
            grads.at("attn.b_mu")(0, 0) += d_pre_mu;
            d_H.row(t) += d_theta * w_theta + d_pre_mu * w_mu;
        }

        context_backward(d_H, cache, grads);
    }

    void context_backward(MatX<Scalar>& d_out, const ForwardCache<Scalar>& cache,
                          ParamSet<Scalar>& grads) const {
        if (cfg_.no_bilstm) {
            grads.at("proj.W").noalias() += d_out.transpose() * cache.emb_dropped;
            grads.at("proj.b").col(0) += d_out.colwise().sum().transpose();
            return;
        }
        const int H = cfg_.hidden_size;
        const Eigen::Index T = d_out.rows();
        for (int layer = cfg_.lstm_layers - 1; layer >= 0; --layer) {
            const std::string base = "lstm.l" + std::to_string(layer) + ".";
            const auto& X = cache.ctx.layer_inputs[static_cast<std::size_t>(layer)];
            MatX<Scalar> d_X = MatX<Scalar>::Zero(X.rows(), X.cols());
            const bool need_dx = layer > 0;
            for (int dir = 0; dir < 2; ++dir) {
                const auto& dc =
                    cache.ctx.dirs[static_cast<std::size_t>(2 * layer + dir)];
                const std::string prefix = base + (dir == 0 ? "fwd." : "bwd.");
                const auto& W = params_.at(prefix + "W");
                const auto& U = params_.at(prefix + "U");
                auto& dW = grads.at(prefix + "W");
                auto& dU = grads.at(prefix + "U");
                auto& db = grads.at(prefix + "b");

                // Walk processing order in reverse; prev(t) is the state the
                // step consumed.
                const auto order = detail::time_order(T, dir == 1);
                VecX<Scalar> dh_rec = VecX<Scalar>::Zero(H);
                VecX<Scalar> dc_carry = VecX<Scalar>::Zero(H);
                VecX<Scalar> dz(4 * H);
                for (auto it = order.rbegin(); it != order.rend(); ++it) {
                    const Eigen::Index t = *it;
                    const auto next = it + 1;
                    const bool has_prev = next != order.rend();
                    const Eigen::Index tp = has_prev ? *next : -1;
                    for (Eigen::Index k = 0; k < H; ++k) {
                        const Scalar dh =
                            d_out(t, dir == 0 ? k : H + k) + dh_rec[k];
                        const Scalar o = dc.o(t, k);
                        const Scalar tc = dc.tanh_c(t, k);
                        const Scalar d_o = dh * tc;
                        Scalar d_c = dc_carry[k] + dh * o * (Scalar(1) - tc * tc);
                        const Scalar c_prev = has_prev ? dc.c(tp, k) : Scalar(0);
                        const Scalar i = dc.i(t, k);
                        const Scalar f = dc.f(t, k);
                        const Scalar g = dc.g(t, k);
                        dz[k] = d_c * g * i * (Scalar(1) - i);
                        dz[H + k] = d_c * c_prev * f * (Scalar(1) - f);
                        dz[2 * H + k] = d_c * i * (Scalar(1) - g * g);
                        dz[3 * H + k] = d_o * o * (Scalar(1) - o);
                        dc_carry[k] = d_c * f;
                    }
                    dW.noalias() += dz * X.row(t);
                    if (has_prev) dU.noalias() += dz * dc.h.row(tp);
                    db.col(0) += dz;
                    if (need_dx) d_X.row(t) += (W.transpose() * dz).transpose();
                    dh_rec.noalias() = U.transpose() * dz;
                }
            }
            if (need_dx) d_out = std::move(d_X);
        }
    }
};

}  // namespace moodcast
