#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "moodcast/analysis.hpp"
#include "moodcast/model_io.hpp"
#include "moodcast/synth.hpp"
#include "moodcast/trainer.hpp"
#include "moodcast/util.hpp"

namespace fs = std::filesystem;
using namespace moodcast;

namespace {

std::string now_iso() { return format_iso8601(static_cast<std::int64_t>(std::time(nullptr))); }

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Embedding plumbing shared by the pipeline commands.

struct EncoderFlags {
    std::string kind = "hashed";
    int dimension = 1024;
    int buckets = 512;
    std::uint64_t seed = 42;
    std::string host = "127.0.0.1";
    int port = 8900;
};

void add_encoder_flags(CLI::App* cmd, EncoderFlags& e) {
    cmd->add_option("--encoder", e.kind, "embedding provider")
        ->check(CLI::IsMember({"hashed", "remote"}))
        ->capture_default_str();
    cmd->add_option("--encoder-dim", e.dimension, "embedding dimension")->capture_default_str();
    cmd->add_option("--encoder-buckets", e.buckets, "hash buckets (hashed encoder)")
        ->capture_default_str();
    cmd->add_option("--encoder-seed", e.seed, "projection seed (hashed encoder)")
        ->capture_default_str();
    cmd->add_option("--remote-host", e.host, "encoder service host")->capture_default_str();
    cmd->add_option("--remote-port", e.port, "encoder service port")->capture_default_str();
}

std::unique_ptr<EmbeddingProvider> make_provider(const EncoderFlags& e) {
    if (e.kind == "remote")
        return std::make_unique<RemoteEmbeddingProvider>(e.host, e.port, e.dimension);
    return std::make_unique<HashedEmbeddingProvider>(e.dimension, e.buckets, e.seed);
}

// Rebuilds the offline provider recorded in a checkpoint; remote providers
// must be re-specified with encoder flags.
std::unique_ptr<EmbeddingProvider> provider_from_meta(const CheckpointMeta& meta) {
    int dim = 0, buckets = 0, consumed = 0;
    unsigned long long seed = 0;
    if (std::sscanf(meta.provider.c_str(), "hashed-d%d-b%d-s%llu%n", &dim, &buckets, &seed,
                    &consumed) == 3 &&
        consumed == static_cast<int>(meta.provider.size()))
        return std::make_unique<HashedEmbeddingProvider>(dim, buckets, seed);
    return nullptr;
}

// Serves every corpus post from one in-memory table keyed by text, backed by
// an on-disk cache under MOODCAST_CACHE_DIR when that is set.
class TableProvider final : public EmbeddingProvider {
   public:
    TableProvider(const EmbeddingProvider& base,
                  std::unordered_map<std::string, Eigen::VectorXd> by_text)
        : base_(base), by_text_(std::move(by_text)) {}

    int dimension() const override { return base_.dimension(); }
    const std::string& name() const override { return base_.name(); }
    Eigen::VectorXd encode(const std::string& text) const override {
        const auto it = by_text_.find(text);
        if (it != by_text_.end()) return it->second;
        return base_.encode(text);
    }

   private:
    const EmbeddingProvider& base_;
    std::unordered_map<std::string, Eigen::VectorXd> by_text_;
};

TableProvider make_table_provider(const Corpus& corpus, const EmbeddingProvider& base,
                                  const std::string& corpus_hash) {
    EmbeddingCache cache;
    std::string cache_path;
    bool loaded = false;
    if (const char* dir = std::getenv("MOODCAST_CACHE_DIR"); dir && *dir) {
        fs::create_directories(dir);
        cache_path = std::string(dir) + "/" + base.name() + "-" + corpus_hash + ".emb";
        if (fs::exists(cache_path)) {
            try {
                cache = read_embedding_cache(cache_path);
                loaded = cache.provider == base.name() && cache.dimension == base.dimension();
            } catch (const ValidationError&) {
                loaded = false;  // stale or truncated cache; rebuild below
            }
        }
    }
    if (!loaded) {
        cache = build_embedding_cache(base, corpus);
        if (!cache_path.empty()) write_embedding_cache(cache, cache_path);
    }

    std::unordered_map<std::string, const Eigen::VectorXd*> by_id;
    by_id.reserve(cache.entries.size());
    for (const auto& [id, vec] : cache.entries) by_id.emplace(id, &vec);

    std::unordered_map<std::string, Eigen::VectorXd> by_text;
    for (const auto& user : corpus.users)
        for (const auto& post : user.posts) {
            if (by_text.count(post.text)) continue;
            const auto it = by_id.find(post.post_id);
            by_text.emplace(post.text, it != by_id.end() ? *it->second
                                                         : encode_post(base, post.text));
        }
    return TableProvider(base, std::move(by_text));
}

// ---------------------------------------------------------------------------
// Shared pipeline flags (train / ablate / sweep).

struct PipelineArgs {
    CLI::App* cmd = nullptr;
    std::string corpus_path;
    std::string config_path;
    int folds = 5;
    int jobs = 1;
    int l_months = 6;
    int m_months = 1;
    int min_posts = 3;
    bool pool = false;

    double lr = 1e-5;
    int batch_size = 64;
    int max_epochs = 200;
    int patience = 20;
    double lr_gamma = 0.001;
    std::uint64_t seed = 7;
    int scheme = 4;
    int max_len = 64;
    bool no_oversample = false;

    int hidden_size = 512;
    int embedding_dim = 1024;
    int lstm_layers = 2;
    double dropout = 0.1;
    double alpha = 1.8;
    int head_hidden = 0;

    EncoderFlags enc;
};

void add_pipeline_flags(CLI::App* cmd, PipelineArgs& a) {
    a.cmd = cmd;
    cmd->add_option("--corpus", a.corpus_path, "corpus JSON-lines file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--config", a.config_path, "flat JSON config (model + training keys)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--folds", a.folds, "cross-validation folds")->capture_default_str();
    cmd->add_option("--jobs", a.jobs, "parallel fold workers")->capture_default_str();
    cmd->add_option("--l", a.l_months, "observation period, months")->capture_default_str();
    cmd->add_option("--m", a.m_months, "forecast period, months")->capture_default_str();
    cmd->add_option("--min-posts", a.min_posts, "minimum posts per observation window")
        ->capture_default_str();
    cmd->add_flag("--pool", a.pool, "pool fold predictions instead of averaging metrics");

    cmd->add_option("--lr", a.lr, "learning rate")->capture_default_str();
    cmd->add_option("--batch-size", a.batch_size, "mini-batch size")->capture_default_str();
    cmd->add_option("--max-epochs", a.max_epochs, "epoch budget")->capture_default_str();
    cmd->add_option("--patience", a.patience, "early-stop patience, epochs")
        ->capture_default_str();
    cmd->add_option("--lr-gamma", a.lr_gamma, "total exponential LR decay over the run")
        ->capture_default_str();
    cmd->add_option("--seed", a.seed, "run seed")->capture_default_str();
    cmd->add_option("--scheme", a.scheme, "suicidality level scheme (4, 3 or 2 classes)")
        ->check(CLI::IsMember({4, 3, 2}))
        ->capture_default_str();
    cmd->add_option("--max-len", a.max_len, "posts kept per window (most recent)")
        ->capture_default_str();
    cmd->add_flag("--no-oversample", a.no_oversample, "skip minority-class oversampling");

    cmd->add_option("--hidden-size", a.hidden_size, "recurrent hidden size per direction")
        ->capture_default_str();
    cmd->add_option("--embedding-dim", a.embedding_dim, "post embedding dimension")
        ->capture_default_str();
    cmd->add_option("--lstm-layers", a.lstm_layers, "recurrent layers")->capture_default_str();
    cmd->add_option("--dropout", a.dropout, "dropout rate")->capture_default_str();
    cmd->add_option("--alpha", a.alpha, "ordinal soft-label sharpness")->capture_default_str();
    cmd->add_option("--head-hidden", a.head_hidden,
                    "prediction head hidden width (0 = hidden size)")
        ->capture_default_str();
    add_encoder_flags(cmd, a.enc);
}

// Splits a flat JSON config into model and training keys; unknown keys raise.
void load_flat_config(const std::string& path, ModelConfig& mc, TrainConfig& tc) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config file " + path + ": " + e.what());
    }
    if (!obj.is_object()) throw ValidationError("config file must hold a JSON object");
    static const std::set<std::string> model_keys = {
        "embedding_dim", "hidden_size", "lstm_layers", "dropout", "alpha", "n_levels",
        "n_symptoms", "head_hidden", "single_task", "no_uncertainty",
        "no_temporal_attention", "no_bilstm", "no_somatic", "no_mood"};
    static const std::set<std::string> train_keys = {
        "learning_rate", "weight_decay", "batch_size", "max_epochs", "patience",
        "lr_gamma", "literal_gamma_per_epoch", "adam_beta1", "adam_beta2", "adam_eps",
        "seed", "scheme", "max_len", "oversample_train"};
    nlohmann::json model_obj = nlohmann::json::object();
    nlohmann::json train_obj = nlohmann::json::object();
    for (const auto& [key, value] : obj.items()) {
        if (model_keys.count(key))
            model_obj[key] = value;
        else if (train_keys.count(key))
            train_obj[key] = value;
        else
            throw ValidationError("config: unknown field \"" + key + "\"");
    }
    // Keep the label scheme consistent when only one side is specified, and
    // shrink the default patience to fit a shortened epoch budget.
    if (model_obj.contains("n_levels") && !train_obj.contains("scheme"))
        train_obj["scheme"] = model_obj["n_levels"];
    if (train_obj.contains("scheme") && !model_obj.contains("n_levels"))
        model_obj["n_levels"] = train_obj["scheme"];
    if (train_obj.contains("max_epochs") && !train_obj.contains("patience") &&
        train_obj["max_epochs"].is_number_integer() &&
        train_obj["max_epochs"].get<int>() < TrainConfig{}.patience)
        train_obj["patience"] = train_obj["max_epochs"];
    mc = model_config_from_json(model_obj);
    tc = train_config_from_json(train_obj);
}

struct ResolvedPipeline {
    ModelConfig mc;
    TrainConfig tc;
    CvOptions opts;
};

ResolvedPipeline resolve_pipeline(const PipelineArgs& a) {
    ResolvedPipeline r;
    if (!a.config_path.empty()) load_flat_config(a.config_path, r.mc, r.tc);

    const CLI::App* cmd = a.cmd;
    if (cmd->count("--lr")) r.tc.learning_rate = a.lr;
    if (cmd->count("--batch-size")) r.tc.batch_size = a.batch_size;
    if (cmd->count("--max-epochs")) {
        r.tc.max_epochs = a.max_epochs;
        if (!cmd->count("--patience") && r.tc.patience > a.max_epochs)
            r.tc.patience = a.max_epochs;
    }
    if (cmd->count("--patience")) r.tc.patience = a.patience;
    if (cmd->count("--lr-gamma")) r.tc.lr_gamma = a.lr_gamma;
    if (cmd->count("--seed")) r.tc.seed = a.seed;
    if (cmd->count("--max-len")) r.tc.max_len = a.max_len;
    if (cmd->count("--scheme")) {
        r.tc.scheme = a.scheme;
        r.mc.n_levels = a.scheme;
    }
    if (a.no_oversample) r.tc.oversample_train = false;

    if (cmd->count("--hidden-size")) r.mc.hidden_size = a.hidden_size;
    if (cmd->count("--embedding-dim")) r.mc.embedding_dim = a.embedding_dim;
    if (cmd->count("--lstm-layers")) r.mc.lstm_layers = a.lstm_layers;
    if (cmd->count("--dropout")) r.mc.dropout = a.dropout;
    if (cmd->count("--alpha")) r.mc.alpha = a.alpha;
    if (cmd->count("--head-hidden")) r.mc.head_hidden = a.head_hidden;

    validate_config(r.mc);
    validate_train_config(r.tc);
    if (r.tc.patience > r.tc.max_epochs)
        throw ValidationError("patience exceeds max_epochs");

    r.opts.k = a.folds;
    r.opts.l_months = a.l_months;
    r.opts.m_months = a.m_months;
    r.opts.min_posts = a.min_posts;
    r.opts.pool_predictions = a.pool;
    r.opts.jobs = a.jobs;
    return r;
}

EncoderFlags resolved_encoder(const PipelineArgs& a, const ModelConfig& mc) {
    EncoderFlags e = a.enc;
    if (a.cmd->count("--encoder-dim")) {
        if (e.dimension != mc.embedding_dim)
            throw ValidationError("encoder dimension " + std::to_string(e.dimension) +
                                  " does not match embedding_dim " +
                                  std::to_string(mc.embedding_dim));
    } else {
        e.dimension = mc.embedding_dim;
    }
    return e;
}

nlohmann::ordered_json pipeline_config_json(const ResolvedPipeline& r) {
    nlohmann::ordered_json cfg;
    cfg["model"] = model_config_to_json(r.mc);
    cfg["train"] = train_config_to_json(r.tc);
    nlohmann::ordered_json cv;
    cv["k"] = r.opts.k;
    cv["l_months"] = r.opts.l_months;
    cv["m_months"] = r.opts.m_months;
    cv["min_posts"] = r.opts.min_posts;
    cv["pool_predictions"] = r.opts.pool_predictions;
    cv["jobs"] = r.opts.jobs;
    cfg["cv"] = std::move(cv);
    return cfg;
}

void finish_manifest(nlohmann::ordered_json& manifest, const std::vector<std::string>& outputs,
                     const std::string& manifest_path) {
    manifest["outputs"] = outputs;
    manifest["finished"] = now_iso();
    write_run_manifest(manifest, manifest_path);
}

void emit(const std::string& path, const std::string& content) {
    atomic_write_file(path, content);
    std::cout << "wrote " << path << "\n";
}

std::vector<MetricsRow> result_rows(const std::string& run_id, int scheme,
                                    const EvalResult& eval) {
    return {{run_id, "suicidality", scheme, eval.main.precision, eval.main.recall,
             eval.main.f1},
            {run_id, "symptom", scheme, eval.symptom.precision, eval.symptom.recall,
             eval.symptom.f1}};
}

std::string epochs_csv(const std::vector<FoldOutcome>& folds) {
    std::string out = csv_row({"fold", "epoch", "lr", "train_loss", "loss_fs", "loss_bd",
                               "s_fs", "s_bd", "train_f1", "val_f1"});
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.8g", v);
        return std::string(buf);
    };
    for (const auto& fold : folds)
        for (const auto& e : fold.history)
            out += csv_row({std::to_string(fold.fold), std::to_string(e.epoch), num(e.lr),
                            num(e.train_loss), num(e.loss_fs), num(e.loss_bd), num(e.s_fs),
                            num(e.s_bd), num(e.train_f1), num(e.val_f1)});
    return out;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_synth(const std::string& spec_path, std::uint64_t seed, const std::string& out) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "synth";
    manifest["started"] = now_iso();

    SynthSpec spec;
    if (!spec_path.empty()) spec = load_synth_spec(spec_path);
    const Corpus corpus = generate_synthetic_corpus(spec, seed);
    write_corpus(corpus, out);
    std::cout << "wrote " << out << " (" << corpus.users.size() << " users, "
              << corpus.total_posts() << " posts)\n";

    manifest["config"] = nlohmann::ordered_json::parse(serialize_synth_spec(spec));
    manifest["seeds"] = {{"seed", seed}};
    manifest["corpus"] = {{"path", out}, {"hash", hash_file_hex(out)}};
    finish_manifest(manifest, {out}, out + ".manifest.json");
    return 0;
}

int cmd_timelines(const std::string& corpus_path, int l, int m, int min_posts,
                  const std::string& out, const std::string& folds_out, int k,
                  std::uint64_t seed) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "timelines";
    manifest["started"] = now_iso();

    const Corpus corpus = parse_corpus(corpus_path);
    const auto timelines = build_timelines(corpus, l, m, min_posts);
    write_timelines(timelines, out);
    std::cout << "wrote " << out << " (" << timelines.size() << " timelines)\n";
    std::vector<std::string> outputs = {out};
    if (!folds_out.empty()) {
        const FoldSplit split = split_user_disjoint_folds(timelines, k, seed);
        write_fold_csv(timelines, split, folds_out);
        std::cout << "wrote " << folds_out << "\n";
        outputs.push_back(folds_out);
    }

    manifest["config"] = {{"l_months", l}, {"m_months", m}, {"min_posts", min_posts},
                          {"k", k}};
    manifest["seeds"] = {{"seed", seed}};
    manifest["corpus"] = {{"path", corpus_path}, {"hash", hash_file_hex(corpus_path)}};
    finish_manifest(manifest, outputs, out + ".manifest.json");
    return 0;
}

int cmd_train(const PipelineArgs& a, const std::string& out_dir) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "train";
    manifest["started"] = now_iso();

    const ResolvedPipeline r = resolve_pipeline(a);
    const EncoderFlags enc = resolved_encoder(a, r.mc);
    const Corpus corpus = parse_corpus(a.corpus_path);
    const std::string corpus_hash = hash_file_hex(a.corpus_path);
    const auto base = make_provider(enc);
    const TableProvider provider = make_table_provider(corpus, *base, corpus_hash);

    const CvResult cv = run_cv(corpus, provider, r.mc, r.tc, r.opts);
    std::cout << "cv: " << cv.n_timelines << " timelines, main F1 " << fmt4(cv.main.f1)
              << ", symptom F1 " << fmt4(cv.symptom.f1) << "\n";

    fs::create_directories(out_dir);
    std::vector<MetricsRow> rows = result_rows("cv", r.tc.scheme, {cv.main, cv.symptom});
    for (const auto& fold : cv.folds) {
        const auto fold_rows =
            result_rows("fold-" + std::to_string(fold.fold), r.tc.scheme, fold.eval);
        rows.insert(rows.end(), fold_rows.begin(), fold_rows.end());
    }
    const std::string metrics_path = out_dir + "/metrics.csv";
    const std::string epochs_path = out_dir + "/epochs.csv";
    const std::string ckpt_path = out_dir + "/model.ckpt";
    emit(metrics_path, metrics_csv(rows));
    emit(epochs_path, epochs_csv(cv.folds));

    // Final artifact: one model trained on every timeline, early-stopped on
    // its own training score.
    auto timelines = build_timelines(corpus, r.opts.l_months, r.opts.m_months,
                                     r.opts.min_posts);
    if (r.tc.oversample_train) timelines = oversample(timelines, r.tc.seed);
    EmbeddingLookup lookup = [&provider](const Post& post) {
        return encode_post(provider, post.text);
    };
    std::vector<EncodedSequence> seqs;
    seqs.reserve(timelines.size());
    for (const auto& tl : timelines)
        seqs.push_back(encode_timeline_with(lookup, provider.dimension(), tl, r.tc.max_len));
    const TrainResult final_run = train(r.mc, r.tc, seqs, {});
    CheckpointMeta meta;
    meta.provider = provider.name();
    meta.provider_dimension = provider.dimension();
    meta.seed = r.tc.seed;
    meta.l_months = r.opts.l_months;
    meta.m_months = r.opts.m_months;
    meta.max_len = r.tc.max_len;
    save_checkpoint(final_run.model, meta, ckpt_path);
    std::cout << "wrote " << ckpt_path << " (best epoch " << final_run.best_epoch << ")\n";

    manifest["config"] = pipeline_config_json(r);
    manifest["provider"] = provider.name();
    manifest["seeds"] = {{"seed", r.tc.seed}, {"encoder_seed", enc.seed}};
    manifest["corpus"] = {{"path", a.corpus_path}, {"hash", corpus_hash}};
    finish_manifest(manifest, {metrics_path, epochs_path, ckpt_path},
                    out_dir + "/manifest.json");
    return 0;
}

int cmd_eval(const CLI::App* cmd, const std::string& ckpt_path,
             const std::string& corpus_path, int scheme, int l, int m, int min_posts,
             const EncoderFlags& enc_flags, const std::string& out) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "eval";
    manifest["started"] = now_iso();

    const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    const int use_l = cmd->count("--l") ? l : ckpt.meta.l_months;
    const int use_m = cmd->count("--m") ? m : ckpt.meta.m_months;
    const int use_scheme = cmd->count("--scheme") ? scheme : ckpt.model.config().n_levels;

    std::unique_ptr<EmbeddingProvider> base;
    if (cmd->count("--encoder")) {
        EncoderFlags e = enc_flags;
        if (!cmd->count("--encoder-dim")) e.dimension = ckpt.meta.provider_dimension;
        base = make_provider(e);
    } else {
        base = provider_from_meta(ckpt.meta);
        if (!base)
            throw ValidationError("checkpoint was built with provider \"" +
                                  ckpt.meta.provider +
                                  "\"; pass --encoder flags to reconstruct it");
    }
    if (base->dimension() != ckpt.meta.provider_dimension)
        throw ValidationError("encoder dimension does not match the checkpoint");

    const Corpus corpus = parse_corpus(corpus_path);
    const std::string corpus_hash = hash_file_hex(corpus_path);
    const TableProvider provider = make_table_provider(corpus, *base, corpus_hash);
    const auto timelines = build_timelines(corpus, use_l, use_m, min_posts);
    if (timelines.empty())
        throw ValidationError("corpus admits no timelines for the given windows");
    EmbeddingLookup lookup = [&provider](const Post& post) {
        return encode_post(provider, post.text);
    };
    std::vector<EncodedSequence> seqs;
    seqs.reserve(timelines.size());
    for (const auto& tl : timelines)
        seqs.push_back(
            encode_timeline_with(lookup, provider.dimension(), tl, ckpt.meta.max_len));

    const EvalResult eval = evaluate(ckpt.model, seqs, use_scheme);
    std::cout << "eval: " << seqs.size() << " timelines, main F1 " << fmt4(eval.main.f1)
              << ", symptom F1 " << fmt4(eval.symptom.f1) << "\n";
    const std::string run_id = fs::path(ckpt_path).stem().string();
    emit(out, metrics_csv(result_rows(run_id, use_scheme, eval)));

    manifest["config"] = {{"checkpoint", ckpt_path}, {"scheme", use_scheme},
                          {"l_months", use_l},       {"m_months", use_m},
                          {"min_posts", min_posts},  {"provider", provider.name()}};
    manifest["seeds"] = {{"seed", ckpt.meta.seed}};
    manifest["corpus"] = {{"path", corpus_path}, {"hash", corpus_hash}};
    finish_manifest(manifest, {out}, out + ".manifest.json");
    return 0;
}

int cmd_ablate(const PipelineArgs& a, std::string variant, const std::string& out) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "ablate";
    manifest["started"] = now_iso();

    const ResolvedPipeline r = resolve_pipeline(a);
    const EncoderFlags enc = resolved_encoder(a, r.mc);
    const Corpus corpus = parse_corpus(a.corpus_path);
    const std::string corpus_hash = hash_file_hex(a.corpus_path);
    const auto base = make_provider(enc);
    const TableProvider provider = make_table_provider(corpus, *base, corpus_hash);

    std::vector<std::string> variants;
    if (variant == "all")
        variants = ablation_variants();
    else
        variants.push_back(std::move(variant));

    std::vector<MetricsRow> rows;
    for (const auto& name : variants) {
        const AblationRow row = run_ablation(name, corpus, provider, r.mc, r.tc, r.opts);
        std::cout << name << ": main F1 " << fmt4(row.result.main.f1) << ", symptom F1 "
                  << fmt4(row.result.symptom.f1) << "\n";
        const auto two = result_rows(name, r.tc.scheme, {row.result.main, row.result.symptom});
        rows.insert(rows.end(), two.begin(), two.end());
    }
    emit(out, metrics_csv(rows));

    manifest["config"] = pipeline_config_json(r);
    manifest["config"]["variants"] = variants;
    manifest["seeds"] = {{"seed", r.tc.seed}, {"encoder_seed", enc.seed}};
    manifest["corpus"] = {{"path", a.corpus_path}, {"hash", corpus_hash}};
    finish_manifest(manifest, {out}, out + ".manifest.json");
    return 0;
}

int cmd_sweep(const PipelineArgs& a, const std::vector<int>& l_values,
              const std::vector<int>& m_values, const std::string& out) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "sweep";
    manifest["started"] = now_iso();

    const ResolvedPipeline r = resolve_pipeline(a);
    const EncoderFlags enc = resolved_encoder(a, r.mc);
    const Corpus corpus = parse_corpus(a.corpus_path);
    const std::string corpus_hash = hash_file_hex(a.corpus_path);
    const auto base = make_provider(enc);
    const TableProvider provider = make_table_provider(corpus, *base, corpus_hash);

    const auto cells =
        sweep_periods(corpus, provider, l_values, m_values, r.mc, r.tc, r.opts);
    std::string csv = csv_row({"l_months", "m_months", "n_timelines", "f1", "recall", "note"});
    for (const auto& cell : cells) {
        csv += csv_row({std::to_string(cell.l_months), std::to_string(cell.m_months),
                        std::to_string(cell.n_timelines),
                        cell.empty ? "" : fmt4(cell.f1),
                        cell.empty ? "" : fmt4(cell.recall), cell.note});
        std::cout << "l=" << cell.l_months << " m=" << cell.m_months << ": "
                  << (cell.empty ? "skipped (" + cell.note + ")" : "F1 " + fmt4(cell.f1))
                  << "\n";
    }
    emit(out, csv);

    manifest["config"] = pipeline_config_json(r);
    manifest["config"]["l_values"] = l_values;
    manifest["config"]["m_values"] = m_values;
    manifest["seeds"] = {{"seed", r.tc.seed}, {"encoder_seed", enc.seed}};
    manifest["corpus"] = {{"path", a.corpus_path}, {"hash", corpus_hash}};
    finish_manifest(manifest, {out}, out + ".manifest.json");
    return 0;
}

int cmd_survival(const std::string& corpus_path, int window_days, const std::string& out,
                 const std::string& json_out, const std::string& svg_out) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "survival";
    manifest["started"] = now_iso();

    const Corpus corpus = parse_corpus(corpus_path);
    const auto curves = kaplan_meier(corpus, window_days);
    for (const auto& curve : curves)
        std::cout << to_string(curve.group) << ": " << curve.n_users << " users, "
                  << curve.n_events << " events\n";
    emit(out, survival_csv(curves));
    std::vector<std::string> outputs = {out};
    if (!json_out.empty()) {
        emit(json_out, survival_json(curves).dump(2) + "\n");
        outputs.push_back(json_out);
    }
    if (!svg_out.empty()) {
        emit(svg_out, survival_svg(curves));
        outputs.push_back(svg_out);
    }

    manifest["config"] = {{"window_days", window_days}};
    manifest["corpus"] = {{"path", corpus_path}, {"hash", hash_file_hex(corpus_path)}};
    finish_manifest(manifest, outputs, out + ".manifest.json");
    return 0;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

// Ratings CSV: header row names the coders; each later row is one unit, an
// empty field meaning that coder skipped it.
std::pair<std::vector<std::string>, std::vector<std::vector<int>>> load_ratings(
    const std::string& path) {
    const std::string content = read_file(path);
    std::vector<std::string> coders;
    std::vector<std::vector<int>> matrix;
    std::unordered_map<std::string, int> codes;
    std::size_t at = 0;
    bool header = true;
    while (at < content.size()) {
        std::size_t end = content.find('\n', at);
        if (end == std::string::npos) end = content.size();
        const std::string line = content.substr(at, end - at);
        at = end + 1;
        if (std::string_view trimmed = trim(line); trimmed.empty()) continue;
        const auto fields = split_csv_line(line);
        if (header) {
            coders = fields;
            header = false;
            continue;
        }
        if (fields.size() != coders.size())
            throw ValidationError("ratings row has " + std::to_string(fields.size()) +
                                  " fields, expected " + std::to_string(coders.size()));
        std::vector<int> row;
        for (const auto& field : fields) {
            const std::string label(trim(field));
            if (label.empty()) {
                row.push_back(-1);
            } else {
                const auto [it, _] =
                    codes.emplace(label, static_cast<int>(codes.size()));
                row.push_back(it->second);
            }
        }
        matrix.push_back(std::move(row));
    }
    if (coders.empty()) throw ValidationError("ratings file has no header row");
    if (matrix.empty()) throw ValidationError("ratings file has no data rows");
    return {coders, matrix};
}

int cmd_stats(const std::string& corpus_path, const std::string& lexicon_path,
              const std::string& ratings_path, int l, int m, int min_posts,
              const std::string& out, std::string agreement_out) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "stats";
    manifest["started"] = now_iso();

    const Corpus corpus = parse_corpus(corpus_path);
    const auto timelines = build_timelines(corpus, l, m, min_posts);
    if (timelines.empty())
        throw ValidationError("corpus admits no timelines for the given windows");
    Lexicon lexicon;
    if (!lexicon_path.empty()) lexicon = load_lexicon(lexicon_path);
    const auto rows =
        group_compare(timelines, standard_features(lexicon), /*skip_degenerate=*/true);
    std::cout << "compared " << rows.size() << " features over " << timelines.size()
              << " timelines\n";
    emit(out, group_compare_csv(rows));
    std::vector<std::string> outputs = {out};

    if (!ratings_path.empty()) {
        if (agreement_out.empty()) agreement_out = out + ".agreement.csv";
        const auto [coders, matrix] = load_ratings(ratings_path);
        std::string csv = csv_row({"statistic", "coder_a", "coder_b", "value"});
        for (std::size_t i = 0; i < coders.size(); ++i)
            for (std::size_t j = i + 1; j < coders.size(); ++j) {
                std::vector<int> a, b;
                for (const auto& row : matrix)
                    if (row[i] >= 0 && row[j] >= 0) {
                        a.push_back(row[i]);
                        b.push_back(row[j]);
                    }
                std::string value;
                try {
                    value = fmt4(cohens_kappa(a, b));
                } catch (const ValidationError&) {
                    value = "";  // no overlap or degenerate pair
                }
                csv += csv_row({"cohens_kappa", coders[i], coders[j], value});
            }
        csv += csv_row({"krippendorff_alpha", "", "", fmt4(krippendorff_alpha(matrix))});
        emit(agreement_out, csv);
        outputs.push_back(agreement_out);
    }

    manifest["config"] = {{"l_months", l}, {"m_months", m}, {"min_posts", min_posts},
                          {"lexicon", lexicon_path}, {"ratings", ratings_path}};
    manifest["corpus"] = {{"path", corpus_path}, {"hash", hash_file_hex(corpus_path)}};
    finish_manifest(manifest, outputs, out + ".manifest.json");
    return 0;
}

int cmd_attention(const CLI::App* cmd, const std::string& ckpt_path,
                  const std::string& corpus_path, int l, int m, int min_posts,
                  const EncoderFlags& enc_flags, const std::string& out,
                  const std::string& csv_out, const std::string& svg_out) {
    nlohmann::ordered_json manifest;
    manifest["command"] = "attention";
    manifest["started"] = now_iso();

    const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    const int use_l = cmd->count("--l") ? l : ckpt.meta.l_months;
    const int use_m = cmd->count("--m") ? m : ckpt.meta.m_months;

    std::unique_ptr<EmbeddingProvider> base;
    if (cmd->count("--encoder")) {
        EncoderFlags e = enc_flags;
        if (!cmd->count("--encoder-dim")) e.dimension = ckpt.meta.provider_dimension;
        base = make_provider(e);
    } else {
        base = provider_from_meta(ckpt.meta);
        if (!base)
            throw ValidationError("checkpoint was built with provider \"" +
                                  ckpt.meta.provider +
                                  "\"; pass --encoder flags to reconstruct it");
    }

    const Corpus corpus = parse_corpus(corpus_path);
    const std::string corpus_hash = hash_file_hex(corpus_path);
    const TableProvider provider = make_table_provider(corpus, *base, corpus_hash);
    const auto timelines = build_timelines(corpus, use_l, use_m, min_posts);
    if (timelines.empty())
        throw ValidationError("corpus admits no timelines for the given windows");

    const AttentionProfile profile =
        aggregate_attention(ckpt.model, provider, timelines, ckpt.meta.max_len);
    emit(out, attention_json(profile).dump(2) + "\n");
    std::vector<std::string> outputs = {out};
    if (!csv_out.empty()) {
        emit(csv_out, attention_csv(profile));
        outputs.push_back(csv_out);
    }
    if (!svg_out.empty()) {
        emit(svg_out, attention_svg(profile));
        outputs.push_back(svg_out);
    }

    manifest["config"] = {{"checkpoint", ckpt_path}, {"l_months", use_l},
                          {"m_months", use_m},       {"min_posts", min_posts},
                          {"provider", provider.name()}};
    manifest["seeds"] = {{"seed", ckpt.meta.seed}};
    manifest["corpus"] = {{"path", corpus_path}, {"hash", corpus_hash}};
    finish_manifest(manifest, outputs, out + ".manifest.json");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mood-aware suicidality forecasting over posting timelines"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 7;
    synth->add_option("--spec", synth_spec, "generator spec JSON (defaults used if absent)")
        ->check(CLI::ExistingFile);
    synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "output corpus path")->required();

    // timelines
    auto* tl = app.add_subcommand("timelines", "build anchored observation windows");
    std::string tl_corpus, tl_out, tl_folds_out;
    int tl_l = 6, tl_m = 1, tl_min = 3, tl_k = 5;
    std::uint64_t tl_seed = 7;
    tl->add_option("--corpus", tl_corpus, "corpus JSON-lines file")
        ->required()
        ->check(CLI::ExistingFile);
    tl->add_option("--l", tl_l, "observation period, months")->capture_default_str();
    tl->add_option("--m", tl_m, "forecast period, months")->capture_default_str();
    tl->add_option("--min-posts", tl_min, "minimum posts per window")->capture_default_str();
    tl->add_option("--out", tl_out, "output timelines path")->required();
    tl->add_option("--folds-out", tl_folds_out, "also write a fold assignment CSV");
    tl->add_option("--k", tl_k, "fold count for --folds-out")->capture_default_str();
    tl->add_option("--seed", tl_seed, "fold split seed")->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "cross-validated training");
    PipelineArgs train_args;
    std::string train_out;
    add_pipeline_flags(train_cmd, train_args);
    train_cmd->add_option("--out", train_out, "output directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    std::string eval_ckpt, eval_corpus, eval_out;
    int eval_scheme = 4, eval_l = 6, eval_m = 1, eval_min = 3;
    EncoderFlags eval_enc;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--corpus", eval_corpus, "corpus JSON-lines file")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--scheme", eval_scheme, "level scheme (must match the model)")
        ->check(CLI::IsMember({4, 3, 2}));
    eval_cmd->add_option("--l", eval_l, "observation period (default: checkpoint's)");
    eval_cmd->add_option("--m", eval_m, "forecast period (default: checkpoint's)");
    eval_cmd->add_option("--min-posts", eval_min, "minimum posts per window")
        ->capture_default_str();
    add_encoder_flags(eval_cmd, eval_enc);
    eval_cmd->add_option("--out", eval_out, "metrics CSV path")->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run ablation variants");
    PipelineArgs ablate_args;
    std::string ablate_variant = "all", ablate_out;
    add_pipeline_flags(ablate_cmd, ablate_args);
    ablate_cmd
        ->add_option("--variant", ablate_variant,
                     "variant name (mtl_all, wo_uncertainty, wo_temporal_attention, "
                     "wo_bilstm, wo_somatic, wo_moods, stl) or \"all\"")
        ->capture_default_str();
    ablate_cmd->add_option("--out", ablate_out, "metrics CSV path")->required();

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "observation/forecast period sweep");
    PipelineArgs sweep_args;
    std::vector<int> sweep_l = {1, 3, 6, 12}, sweep_m = {1, 3, 6, 12};
    std::string sweep_out;
    add_pipeline_flags(sweep_cmd, sweep_args);
    sweep_cmd->add_option("--sweep-l", sweep_l, "observation periods to try")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--sweep-m", sweep_m, "forecast periods to try")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--out", sweep_out, "sweep CSV path")->required();

    // survival
    auto* surv_cmd = app.add_subcommand("survival", "posting survival by BD type");
    std::string surv_corpus, surv_out, surv_json, surv_svg;
    int surv_window = 180;
    surv_cmd->add_option("--corpus", surv_corpus, "corpus JSON-lines file")
        ->required()
        ->check(CLI::ExistingFile);
    surv_cmd->add_option("--window-days", surv_window, "inactivity window, days")
        ->capture_default_str();
    surv_cmd->add_option("--out", surv_out, "survival CSV path")->required();
    surv_cmd->add_option("--json", surv_json, "also write curves as JSON");
    surv_cmd->add_option("--svg", surv_svg, "also write a step plot");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "group comparisons and agreement");
    std::string stats_corpus, stats_lexicon, stats_ratings, stats_out, stats_agreement;
    int stats_l = 6, stats_m = 1, stats_min = 3;
    stats_cmd->add_option("--corpus", stats_corpus, "corpus JSON-lines file")
        ->required()
        ->check(CLI::ExistingFile);
    stats_cmd->add_option("--lexicon", stats_lexicon, "category word-list JSON")
        ->check(CLI::ExistingFile);
    stats_cmd->add_option("--ratings", stats_ratings, "annotator ratings CSV")
        ->check(CLI::ExistingFile);
    stats_cmd->add_option("--l", stats_l, "observation period, months")->capture_default_str();
    stats_cmd->add_option("--m", stats_m, "forecast period, months")->capture_default_str();
    stats_cmd->add_option("--min-posts", stats_min, "minimum posts per window")
        ->capture_default_str();
    stats_cmd->add_option("--out", stats_out, "group comparison CSV path")->required();
    stats_cmd
        ->add_option("--agreement-out", stats_agreement,
                     "agreement CSV path (default: <out>.agreement.csv)")
        ->needs(stats_cmd->get_option("--ratings"));

    // attention
    auto* attn_cmd = app.add_subcommand("attention", "aggregate attention by mood and level");
    std::string attn_ckpt, attn_corpus, attn_out, attn_csv, attn_svg;
    int attn_l = 6, attn_m = 1, attn_min = 3;
    EncoderFlags attn_enc;
    attn_cmd->add_option("--checkpoint", attn_ckpt, "model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    attn_cmd->add_option("--corpus", attn_corpus, "corpus JSON-lines file")
        ->required()
        ->check(CLI::ExistingFile);
    attn_cmd->add_option("--l", attn_l, "observation period (default: checkpoint's)");
    attn_cmd->add_option("--m", attn_m, "forecast period (default: checkpoint's)");
    attn_cmd->add_option("--min-posts", attn_min, "minimum posts per window")
        ->capture_default_str();
    add_encoder_flags(attn_cmd, attn_enc);
    attn_cmd->add_option("--out", attn_out, "profile JSON path")->required();
    attn_cmd->add_option("--csv", attn_csv, "also write the profile as CSV");
    attn_cmd->add_option("--svg", attn_svg, "also write a heat map");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*synth) return cmd_synth(synth_spec, synth_seed, synth_out);
        if (*tl)
            return cmd_timelines(tl_corpus, tl_l, tl_m, tl_min, tl_out, tl_folds_out, tl_k,
                                 tl_seed);
        if (*train_cmd) return cmd_train(train_args, train_out);
        if (*eval_cmd)
            return cmd_eval(eval_cmd, eval_ckpt, eval_corpus, eval_scheme, eval_l, eval_m,
                            eval_min, eval_enc, eval_out);
        if (*ablate_cmd) return cmd_ablate(ablate_args, ablate_variant, ablate_out);
        if (*sweep_cmd) return cmd_sweep(sweep_args, sweep_l, sweep_m, sweep_out);
        if (*surv_cmd)
            return cmd_survival(surv_corpus, surv_window, surv_out, surv_json, surv_svg);
        if (*stats_cmd)
            return cmd_stats(stats_corpus, stats_lexicon, stats_ratings, stats_l, stats_m,
                             stats_min, stats_out, stats_agreement);
        if (*attn_cmd)
            return cmd_attention(attn_cmd, attn_ckpt, attn_corpus, attn_l, attn_m, attn_min,
                                 attn_enc, attn_out, attn_csv, attn_svg);
        std::cerr << "error: usage: no subcommand selected\n";
        return 2;
    } catch (const TrainingDivergence& e) {
        std::cerr << "error: divergence: " << e.what() << " (epoch " << e.epoch << ", batch "
                  << e.batch << ")\n";
        return 4;
    } catch (const ProviderError& e) {
        std::cerr << "error: provider: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 3;
    }
}
