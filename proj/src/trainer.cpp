#include "moodcast/trainer.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "moodcast/util.hpp"

namespace moodcast {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0) throw ValidationError("learning_rate must be positive");
    if (cfg.weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
    if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (cfg.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
    if (cfg.patience < 1 || cfg.patience > cfg.max_epochs)
        throw ValidationError("patience must lie in [1, max_epochs]");
    if (cfg.lr_gamma <= 0.0 || cfg.lr_gamma > 1.0)
        throw ValidationError("lr_gamma must lie in (0, 1]");
    if (cfg.adam_beta1 < 0.0 || cfg.adam_beta1 >= 1.0 || cfg.adam_beta2 < 0.0 ||
        cfg.adam_beta2 >= 1.0)
        throw ValidationError("adam betas must lie in [0, 1)");
    if (cfg.adam_eps <= 0.0) throw ValidationError("adam_eps must be positive");
    if (cfg.scheme != 4 && cfg.scheme != 3 && cfg.scheme != 2)
        throw ValidationError("scheme must be one of {4, 3, 2}");
    if (cfg.max_len < 1) throw ValidationError("max_len must be >= 1");
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json obj;
    obj["learning_rate"] = cfg.learning_rate;
    obj["weight_decay"] = cfg.weight_decay;
    obj["batch_size"] = cfg.batch_size;
    obj["max_epochs"] = cfg.max_epochs;
    obj["patience"] = cfg.patience;
    obj["lr_gamma"] = cfg.lr_gamma;
    obj["literal_gamma_per_epoch"] = cfg.literal_gamma_per_epoch;
    obj["adam_beta1"] = cfg.adam_beta1;
    obj["adam_beta2"] = cfg.adam_beta2;
    obj["adam_eps"] = cfg.adam_eps;
    obj["seed"] = cfg.seed;
    obj["scheme"] = cfg.scheme;
    obj["max_len"] = cfg.max_len;
    obj["oversample_train"] = cfg.oversample_train;
    return obj;
}

TrainConfig train_config_from_json(const nlohmann::json& obj, bool reject_unknown) {
    if (!obj.is_object()) throw ValidationError("train config must be a JSON object");
    TrainConfig cfg;
    auto take_double = [&](const char* key, double& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_number())
            throw ValidationError(std::string("train config field \"") + key +
                                  "\" must be a number");
        field = obj[key].get<double>();
    };
    auto take_int = [&](const char* key, int& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_number_integer())
            throw ValidationError(std::string("train config field \"") + key +
                                  "\" must be an integer");
        field = obj[key].get<int>();
    };
    auto take_bool = [&](const char* key, bool& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_boolean())
            throw ValidationError(std::string("train config field \"") + key +
                                  "\" must be a boolean");
        field = obj[key].get<bool>();
    };
    take_double("learning_rate", cfg.learning_rate);
    take_double("weight_decay", cfg.weight_decay);
    take_int("batch_size", cfg.batch_size);
    take_int("max_epochs", cfg.max_epochs);
    take_int("patience", cfg.patience);
    take_double("lr_gamma", cfg.lr_gamma);
    take_bool("literal_gamma_per_epoch", cfg.literal_gamma_per_epoch);
    take_double("adam_beta1", cfg.adam_beta1);
    take_double("adam_beta2", cfg.adam_beta2);
    take_double("adam_eps", cfg.adam_eps);
    if (obj.contains("seed")) {
        if (!obj["seed"].is_number_unsigned() && !obj["seed"].is_number_integer())
            throw ValidationError("train config field \"seed\" must be an integer");
        cfg.seed = obj["seed"].get<std::uint64_t>();
    }
    take_int("scheme", cfg.scheme);
    take_int("max_len", cfg.max_len);
    take_bool("oversample_train", cfg.oversample_train);

    if (reject_unknown) {
        static const std::set<std::string> known = {
            "learning_rate", "weight_decay", "batch_size", "max_epochs", "patience",
            "lr_gamma", "literal_gamma_per_epoch", "adam_beta1", "adam_beta2",
            "adam_eps", "seed", "scheme", "max_len", "oversample_train"};
        for (const auto& [key, _] : obj.items())
            if (!known.count(key))
                throw ValidationError("train config: unknown field \"" + key + "\"");
    }
    validate_train_config(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Metrics.

Metrics weighted_prf(const std::vector<int>& truth, const std::vector<int>& pred,
                     int n_classes) {
    if (truth.empty()) throw ValidationError("cannot compute metrics over zero labels");
    if (truth.size() != pred.size())
        throw ValidationError("label vectors have different lengths");
    if (n_classes < 1) throw ValidationError("n_classes must be positive");

    Metrics m;
    m.confusion.assign(static_cast<std::size_t>(n_classes),
                       std::vector<std::size_t>(static_cast<std::size_t>(n_classes), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes)
            throw ValidationError("label outside [0, n_classes)");
        ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    }

    m.per_class.resize(static_cast<std::size_t>(n_classes));
    double total = 0;
    for (int c = 0; c < n_classes; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        std::size_t tp = m.confusion[cu][cu];
        std::size_t support = 0, predicted = 0;
        for (int k = 0; k < n_classes; ++k) {
            support += m.confusion[cu][static_cast<std::size_t>(k)];
            predicted += m.confusion[static_cast<std::size_t>(k)][cu];
        }
        ClassMetrics& cm = m.per_class[cu];
        cm.support = support;
        cm.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted)
                                     : 0.0;
        cm.recall = support > 0 ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
        cm.f1 = cm.precision + cm.recall > 0.0
                    ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                    : 0.0;
        const auto w = static_cast<double>(support);
        m.precision += w * cm.precision;
        m.recall += w * cm.recall;
        m.f1 += w * cm.f1;
        total += w;
    }
    m.precision /= total;
    m.recall /= total;
    m.f1 /= total;
    return m;
}

Metrics multilabel_prf(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
        throw ValidationError("multilabel matrices have different shapes");
    if (truth.rows() == 0) throw ValidationError("cannot compute metrics over zero posts");

    Metrics m;
    m.per_class.resize(static_cast<std::size_t>(truth.cols()));
    double total = 0;
    for (Eigen::Index c = 0; c < truth.cols(); ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (Eigen::Index r = 0; r < truth.rows(); ++r) {
            const bool t = truth(r, c) > 0.5;
            const bool p = pred(r, c) > 0.5;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        ClassMetrics& cm = m.per_class[static_cast<std::size_t>(c)];
        cm.support = tp + fn;
        cm.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                                   : 0.0;
        cm.recall = cm.support > 0 ? static_cast<double>(tp) / static_cast<double>(cm.support)
                                   : 0.0;
        cm.f1 = cm.precision + cm.recall > 0.0
                    ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                    : 0.0;
        const auto w = static_cast<double>(cm.support);
        m.precision += w * cm.precision;
        m.recall += w * cm.recall;
        m.f1 += w * cm.f1;
        total += w;
    }
    if (total > 0) {
        m.precision /= total;
        m.recall /= total;
        m.f1 /= total;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Training.

namespace {

struct PreparedSeq {
    SequenceInput<double> input;
    VecX<double> soft_label;
    int merged_label = 0;
};

std::vector<PreparedSeq> prepare(const std::vector<EncodedSequence>& seqs,
                                 const ModelConfig& cfg, int scheme) {
    std::vector<PreparedSeq> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) {
        PreparedSeq p;
        p.input = to_sequence_input<double>(s);
        p.merged_label =
            merge_levels(static_cast<SuicidalityLevel>(s.future_label), scheme);
        p.soft_label = sord_soft_labels<double>(p.merged_label, cfg.alpha, cfg.n_levels);
        out.push_back(std::move(p));
    }
    return out;
}

int argmax(const VecX<double>& v) {
    Eigen::Index best = 0;
    v.maxCoeff(&best);
    return static_cast<int>(best);
}

double eval_train_f1(const Model<double>& model, const std::vector<PreparedSeq>& seqs,
                     int n_levels) {
    std::vector<int> truth, pred;
    truth.reserve(seqs.size());
    pred.reserve(seqs.size());
    for (const auto& s : seqs) {
        truth.push_back(s.merged_label);
        pred.push_back(argmax(model.forward(s.input).probs));
    }
    return weighted_prf(truth, pred, n_levels).f1;
}

struct AdamState {
    ParamSet<double> m;
    ParamSet<double> v;
    long step = 0;
};

void adamw_step(ParamSet<double>& params, const ParamSet<double>& grads, AdamState& state,
                double lr, const TrainConfig& cfg) {
    ++state.step;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        auto& p = params.blocks[i].value;
        const auto& g = grads.blocks[i].value;
        auto& m = state.m.blocks[i].value;
        auto& v = state.v.blocks[i].value;
        m = b1 * m + (1.0 - b1) * g;
        v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
        const auto m_hat = m.array() / bc1;
        const auto v_hat = v.array() / bc2;
        p.array() -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        if (cfg.weight_decay > 0.0 && is_decayed_block(params.blocks[i].name))
            p.array() -= lr * cfg.weight_decay * p.array();
    }
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<EncodedSequence>& train_seqs,
                  const std::vector<EncodedSequence>& val_seqs) {
    validate_config(model_cfg);
    validate_train_config(train_cfg);
    if (train_cfg.scheme != model_cfg.n_levels)
        throw ValidationError("train scheme does not match the model's n_levels");
    if (train_seqs.empty()) throw ValidationError("training set is empty");

    const auto train_data = prepare(train_seqs, model_cfg, train_cfg.scheme);
    const auto val_data = prepare(val_seqs, model_cfg, train_cfg.scheme);

    TrainResult result{Model<double>(model_cfg, train_cfg.seed), {}, 0, 0.0, false};
    Model<double>& model = result.model;
    ParamSet<double> grads = model.params().zeros_like();
    AdamState adam{model.params().zeros_like(), model.params().zeros_like(), 0};
    std::mt19937_64 dropout_rng(mix_seed(train_cfg.seed, 0xD809));

    const double per_epoch_decay =
        train_cfg.literal_gamma_per_epoch
            ? train_cfg.lr_gamma
            : std::pow(train_cfg.lr_gamma, 1.0 / static_cast<double>(train_cfg.max_epochs));

    std::vector<std::size_t> order(train_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best = -1.0;
    int since_best = 0;
    std::vector<ParamSet<double>::Block> best_blocks = model.params().blocks;

    for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
        const double lr =
            train_cfg.learning_rate * std::pow(per_epoch_decay, static_cast<double>(epoch - 1));
        std::mt19937_64 shuffle_rng(mix_seed(train_cfg.seed, 0xE000 + epoch));
        rng_shuffle(order, shuffle_rng);

        double loss_sum = 0, fs_sum = 0, bd_sum = 0;
        int n_batches = 0;
        for (std::size_t at = 0; at < order.size(); at += train_cfg.batch_size) {
            const std::size_t end =
                std::min(order.size(), at + static_cast<std::size_t>(train_cfg.batch_size));
            const auto b = static_cast<double>(end - at);
            Eigen::Index batch_posts = 0;
            for (std::size_t i = at; i < end; ++i)
                batch_posts += train_data[order[i]].input.embeddings.rows();

            const double s_fs = model.params().at("loss.s_fs")(0, 0);
            const double s_bd = model.params().at("loss.s_bd")(0, 0);
            const auto [c_fs, c_bd] = loss_weights(s_fs, s_bd, model_cfg);

            grads.set_zero();
            double batch_fs = 0, batch_bd = 0;
            for (std::size_t i = at; i < end; ++i) {
                const auto& item = train_data[order[i]];
                const auto seq_loss = model.forward_backward(
                    item.input, item.soft_label, c_fs / b,
                    c_bd / static_cast<double>(batch_posts), grads, &dropout_rng);
                batch_fs += seq_loss.fs;
                batch_bd += seq_loss.bd_sum;
            }
            batch_fs /= b;
            batch_bd /= static_cast<double>(batch_posts);
            const auto [gs_fs, gs_bd] = loss_s_grads(batch_fs, batch_bd, s_fs, s_bd, model_cfg);
            grads.at("loss.s_fs")(0, 0) += gs_fs;
            grads.at("loss.s_bd")(0, 0) += gs_bd;

            const double batch_total = total_loss(batch_fs, batch_bd, s_fs, s_bd, model_cfg);
            if (!std::isfinite(batch_total))
                throw TrainingDivergence("non-finite training loss", epoch, n_batches);

            adamw_step(model.params(), grads, adam, lr, train_cfg);
            loss_sum += batch_total;
            fs_sum += batch_fs;
            bd_sum += batch_bd;
            ++n_batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / n_batches;
        stats.loss_fs = fs_sum / n_batches;
        stats.loss_bd = bd_sum / n_batches;
        stats.s_fs = model.params().at("loss.s_fs")(0, 0);
        stats.s_bd = model.params().at("loss.s_bd")(0, 0);
        stats.train_f1 = eval_train_f1(model, train_data, model_cfg.n_levels);
        stats.val_f1 =
            val_data.empty() ? 0.0 : eval_train_f1(model, val_data, model_cfg.n_levels);
        result.history.push_back(stats);

        const double score = val_data.empty() ? stats.train_f1 : stats.val_f1;
        if (score > best) {
            best = score;
            since_best = 0;
            result.best_epoch = epoch;
            result.best_score = score;
            best_blocks = model.params().blocks;
        } else if (++since_best >= train_cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    model.params().blocks = std::move(best_blocks);
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation.

namespace {

void predict_main(const Model<double>& model, const std::vector<EncodedSequence>& seqs,
                  int scheme, std::vector<int>& truth, std::vector<int>& pred) {
    for (const auto& s : seqs) {
        truth.push_back(merge_levels(static_cast<SuicidalityLevel>(s.future_label), scheme));
        pred.push_back(argmax(model.forward(s).probs));
    }
}

void predict_symptoms(const Model<double>& model, const std::vector<EncodedSequence>& seqs,
                      Eigen::MatrixXd& truth, Eigen::MatrixXd& pred) {
    const auto cols = symptom_cols(model.config());
    Eigen::Index rows = 0;
    for (const auto& s : seqs) rows += to_sequence_input<double>(s).embeddings.rows();
    Eigen::Index old = truth.rows();
    truth.conservativeResize(old + rows, cols.count);
    pred.conservativeResize(old + rows, cols.count);
    for (const auto& s : seqs) {
        const auto input = to_sequence_input<double>(s);
        const auto out = model.forward(input);
        for (Eigen::Index t = 0; t < input.embeddings.rows(); ++t) {
            for (int k = 0; k < cols.count; ++k) {
                truth(old, k) = input.symptom_targets(t, cols.offset + k);
                pred(old, k) = out.symptom_probs(t, k) >= 0.5 ? 1.0 : 0.0;
            }
            ++old;
        }
    }
}

}  // namespace

EvalResult evaluate(const Model<double>& model, const std::vector<EncodedSequence>& seqs,
                    int scheme) {
    if (merged_class_count(scheme) != model.config().n_levels)
        throw ValidationError("evaluation scheme does not match the model's n_levels");
    if (seqs.empty()) throw ValidationError("evaluation set is empty");

    std::vector<int> truth, pred;
    truth.reserve(seqs.size());
    pred.reserve(seqs.size());
    predict_main(model, seqs, scheme, truth, pred);

    Eigen::MatrixXd sym_truth(0, 0), sym_pred(0, 0);
    predict_symptoms(model, seqs, sym_truth, sym_pred);

    EvalResult result;
    result.main = weighted_prf(truth, pred, scheme);
    result.symptom = multilabel_prf(sym_truth, sym_pred);
    return result;
}

// ---------------------------------------------------------------------------
// Cross-validated pipeline.

namespace {

struct FoldRaw {
    FoldOutcome outcome;
    std::vector<int> main_truth, main_pred;
    Eigen::MatrixXd sym_truth{0, 0}, sym_pred{0, 0};
};

using EmbeddingTable = std::unordered_map<std::string, Eigen::VectorXd>;

EmbeddingTable build_table(const EmbeddingProvider& provider,
                           const std::vector<Timeline>& timelines) {
    EmbeddingTable table;
    for (const auto& tl : timelines)
        for (const auto& post : tl.posts)
            if (!table.count(post.post_id))
                table.emplace(post.post_id, encode_post(provider, post.text));
    return table;
}

std::vector<EncodedSequence> encode_set(const EmbeddingTable& table, int dimension,
                                        const std::vector<Timeline>& tls, int max_len) {
    EmbeddingLookup lookup = [&table](const Post& post) {
        const auto it = table.find(post.post_id);
        if (it == table.end())
            throw ValidationError("no embedding for post \"" + post.post_id + "\"");
        return it->second;
    };
    std::vector<EncodedSequence> out;
    out.reserve(tls.size());
    for (const auto& tl : tls)
        out.push_back(encode_timeline_with(lookup, dimension, tl, max_len));
    return out;
}

std::vector<Timeline> select(const std::vector<Timeline>& timelines,
                             const std::vector<std::size_t>& ids) {
    std::vector<Timeline> out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(timelines[i]);
    return out;
}

FoldRaw run_fold(int fold, const std::vector<Timeline>& timelines, const FoldSplit& split,
                 const EmbeddingTable& table, const ModelConfig& model_cfg,
                 const TrainConfig& train_cfg, int dimension) {
    const std::uint64_t fold_seed =
        mix_seed(train_cfg.seed, 0xF01D0 + static_cast<std::uint64_t>(fold));
    TrainConfig fold_cfg = train_cfg;
    fold_cfg.seed = fold_seed;

    const auto& role = split.folds[static_cast<std::size_t>(fold)];
    auto train_tl = select(timelines, role.train);
    if (fold_cfg.oversample_train) train_tl = oversample(train_tl, fold_seed);
    const auto val_tl = select(timelines, role.validation);
    const auto test_tl = select(timelines, role.test);

    const auto train_seqs = encode_set(table, dimension, train_tl, fold_cfg.max_len);
    const auto val_seqs = encode_set(table, dimension, val_tl, fold_cfg.max_len);
    const auto test_seqs = encode_set(table, dimension, test_tl, fold_cfg.max_len);

    auto trained = train(model_cfg, fold_cfg, train_seqs, val_seqs);

    FoldRaw raw;
    raw.outcome.fold = fold;
    raw.outcome.best_epoch = trained.best_epoch;
    raw.outcome.best_score = trained.best_score;
    raw.outcome.history = std::move(trained.history);
    raw.outcome.eval = evaluate(trained.model, test_seqs, fold_cfg.scheme);
    predict_main(trained.model, test_seqs, fold_cfg.scheme, raw.main_truth, raw.main_pred);
    predict_symptoms(trained.model, test_seqs, raw.sym_truth, raw.sym_pred);
    return raw;
}

Metrics mean_metrics(const std::vector<const Metrics*>& parts) {
    Metrics m;
    for (const Metrics* p : parts) {
        m.precision += p->precision;
        m.recall += p->recall;
        m.f1 += p->f1;
    }
    const auto n = static_cast<double>(parts.size());
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    return m;
}

}  // namespace

CvResult run_cv(const Corpus& corpus, const EmbeddingProvider& provider,
                const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                const CvOptions& options) {
    validate_config(model_cfg);
    validate_train_config(train_cfg);
    if (options.k < 2) throw ValidationError("fold count must be >= 2");
    if (options.jobs < 1) throw ValidationError("jobs must be >= 1");

    const auto timelines =
        build_timelines(corpus, options.l_months, options.m_months, options.min_posts);
    if (timelines.empty())
        throw ValidationError("corpus admits no timelines for the given windows");
    const auto split = split_user_disjoint_folds(timelines, options.k, train_cfg.seed);
    const auto table = build_table(provider, timelines);

    std::vector<FoldRaw> raws(static_cast<std::size_t>(options.k));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(options.k));
    const int workers = std::min(options.jobs, options.k);
    if (workers <= 1) {
        for (int f = 0; f < options.k; ++f)
            raws[static_cast<std::size_t>(f)] =
                run_fold(f, timelines, split, table, model_cfg, train_cfg,
                         provider.dimension());
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (int f = next.fetch_add(1); f < options.k; f = next.fetch_add(1)) {
                    try {
                        raws[static_cast<std::size_t>(f)] =
                            run_fold(f, timelines, split, table, model_cfg, train_cfg,
                                     provider.dimension());
                    } catch (...) {
                        errors[static_cast<std::size_t>(f)] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    CvResult result;
    result.n_timelines = timelines.size();
    std::vector<const Metrics*> mains, syms;
    for (auto& raw : raws) {
        mains.push_back(&raw.outcome.eval.main);
        syms.push_back(&raw.outcome.eval.symptom);
        result.folds.push_back(std::move(raw.outcome));
    }

    if (options.pool_predictions) {
        std::vector<int> truth, pred;
        Eigen::MatrixXd sym_truth(0, 0), sym_pred(0, 0);
        for (const auto& raw : raws) {
            truth.insert(truth.end(), raw.main_truth.begin(), raw.main_truth.end());
            pred.insert(pred.end(), raw.main_pred.begin(), raw.main_pred.end());
            const Eigen::Index old = sym_truth.rows();
            sym_truth.conservativeResize(old + raw.sym_truth.rows(), raw.sym_truth.cols());
            sym_pred.conservativeResize(old + raw.sym_pred.rows(), raw.sym_pred.cols());
            sym_truth.bottomRows(raw.sym_truth.rows()) = raw.sym_truth;
            sym_pred.bottomRows(raw.sym_pred.rows()) = raw.sym_pred;
        }
        result.main = weighted_prf(truth, pred, train_cfg.scheme);
        result.symptom = multilabel_prf(sym_truth, sym_pred);
    } else {
        result.main = mean_metrics(mains);
        result.symptom = mean_metrics(syms);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Ablations and sweep.

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> variants = {
        "mtl_all",    "wo_uncertainty", "wo_temporal_attention",
        "wo_bilstm",  "wo_somatic",     "wo_moods"};
    return variants;
}

ModelConfig ablation_config(const ModelConfig& base, const std::string& variant) {
    ModelConfig cfg = base;
    if (variant == "mtl_all") return cfg;
    if (variant == "wo_uncertainty") {
        cfg.no_uncertainty = true;
        return cfg;
    }
    if (variant == "wo_temporal_attention") {
        cfg.no_temporal_attention = true;
        return cfg;
    }
    if (variant == "wo_bilstm") {
        cfg.no_bilstm = true;
        return cfg;
    }
    if (variant == "wo_somatic") {
        cfg.no_somatic = true;
        return cfg;
    }
    if (variant == "wo_moods") {
        cfg.no_mood = true;
        return cfg;
    }
    if (variant == "stl") {
        cfg.single_task = true;
        return cfg;
    }
    std::string valid;
    for (const auto& v : ablation_variants()) valid += v + ", ";
    valid += "stl";
    throw ValidationError("unknown ablation variant \"" + variant + "\"; valid: " + valid);
}

AblationRow run_ablation(const std::string& variant, const Corpus& corpus,
                         const EmbeddingProvider& provider, const ModelConfig& base_cfg,
                         const TrainConfig& train_cfg, const CvOptions& options) {
    const ModelConfig cfg = ablation_config(base_cfg, variant);
    return {variant, run_cv(corpus, provider, cfg, train_cfg, options)};
}

std::vector<SweepCell> sweep_periods(const Corpus& corpus, const EmbeddingProvider& provider,
                                     const std::vector<int>& l_values,
                                     const std::vector<int>& m_values,
                                     const ModelConfig& model_cfg,
                                     const TrainConfig& train_cfg, const CvOptions& options) {
    if (l_values.empty() || m_values.empty())
        throw ValidationError("sweep needs at least one l and one m value");
    std::vector<SweepCell> cells;
    for (int l : l_values) {
        for (int m : m_values) {
            SweepCell cell;
            cell.l_months = l;
            cell.m_months = m;
            CvOptions cell_options = options;
            cell_options.l_months = l;
            cell_options.m_months = m;
            try {
                cell.n_timelines = build_timelines(corpus, l, m, options.min_posts).size();
                const CvResult res =
                    run_cv(corpus, provider, model_cfg, train_cfg, cell_options);
                cell.f1 = res.main.f1;
                cell.recall = res.main.recall;
            } catch (const ValidationError& e) {
                cell.empty = true;
                cell.note = e.what();
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Reporting.

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = csv_row({"run_id", "task", "scheme", "precision", "recall", "f1"});
    for (const auto& row : rows) {
        std::ostringstream p, r, f;
        p << std::fixed << std::setprecision(6) << row.precision;
        r << std::fixed << std::setprecision(6) << row.recall;
        f << std::fixed << std::setprecision(6) << row.f1;
        out += csv_row(
            {row.run_id, row.task, std::to_string(row.scheme), p.str(), r.str(), f.str()});
    }
    return out;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    atomic_write_file(path, metrics_csv(rows));
}

void write_run_manifest(const nlohmann::ordered_json& manifest, const std::string& path) {
    atomic_write_file(path, manifest.dump(2) + "\n");
}

}  // namespace moodcast
