#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "moodcast/encoder.hpp"
#include "moodcast/model.hpp"
#include "moodcast/timeline.hpp"

namespace moodcast {

struct TrainConfig {
    double learning_rate = 1e-5;
    double weight_decay = 0.01;
    int batch_size = 64;
    int max_epochs = 200;
    int patience = 20;
    // Total multiplicative LR decay spread over the run; the literal flag
    // applies it per epoch instead (which collapses the LR almost instantly).
    double lr_gamma = 0.001;
    bool literal_gamma_per_epoch = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 7;
    int scheme = 4;  // level scheme; must equal the model's n_levels
    int max_len = 64;
    bool oversample_train = true;
};

void validate_train_config(const TrainConfig& cfg);
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& obj, bool reject_unknown = true);

// ---------------------------------------------------------------------------
// Metrics.

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t support = 0;
};

struct Metrics {
    double precision = 0;  // weighted by true-class support
    double recall = 0;
    double f1 = 0;
    std::vector<ClassMetrics> per_class;
    std::vector<std::vector<std::size_t>> confusion;  // truth x predicted
};

// Per-class precision/recall/F1 weighted by true-class support. A class never
// predicted contributes precision 0.
Metrics weighted_prf(const std::vector<int>& truth, const std::vector<int>& pred,
                     int n_classes);

// Per-label binary metrics over 0/1 matrices (rows = posts), weighted by
// positive support.
Metrics multilabel_prf(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred);

// ---------------------------------------------------------------------------
// Training.

struct EpochStats {
    int epoch = 0;  // 1-based
    double lr = 0;
    double train_loss = 0;  // mean total loss over batches
    double loss_fs = 0;
    double loss_bd = 0;
    double s_fs = 0;
    double s_bd = 0;
    double train_f1 = 0;  // eval-mode weighted F1 on the training set
    double val_f1 = 0;    // 0 when no validation split exists
};

struct TrainResult {
    Model<double> model;  // best-epoch parameters
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_score = 0;
    bool stopped_early = false;
};

// Optimizes on already-encoded (and already-oversampled) training sequences.
// Early stopping tracks validation weighted F1, falling back to training F1
// when the validation split is empty. Throws TrainingDivergence on a
// non-finite loss.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<EncodedSequence>& train_seqs,
                  const std::vector<EncodedSequence>& val_seqs);

struct EvalResult {
    Metrics main;
    Metrics symptom;
};

// Eval-mode metrics on both tasks. `scheme` must equal the model's n_levels;
// truth labels are merged into it, predictions are probability argmax, and
// symptom predictions threshold sigmoid probabilities at 0.5.
EvalResult evaluate(const Model<double>& model, const std::vector<EncodedSequence>& seqs,
                    int scheme);

// ---------------------------------------------------------------------------
// Cross-validated pipeline.

struct CvOptions {
    int k = 5;
    int l_months = 6;
    int m_months = 1;
    int min_posts = 3;
    bool pool_predictions = false;  // pool fold predictions instead of averaging metrics
    int jobs = 1;
};

struct FoldOutcome {
    int fold = 0;
    EvalResult eval;
    int best_epoch = 0;
    double best_score = 0;
    std::vector<EpochStats> history;
};

struct CvResult {
    std::vector<FoldOutcome> folds;
    Metrics main;     // averaged (or pooled) across folds
    Metrics symptom;
    std::size_t n_timelines = 0;
};

CvResult run_cv(const Corpus& corpus, const EmbeddingProvider& provider,
                const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                const CvOptions& options);

// ---------------------------------------------------------------------------
// Ablations and period sweep.

// Canonical study variants, in report order.
const std::vector<std::string>& ablation_variants();

// Maps a variant name to its config tweak; unknown names raise
// ValidationError listing the valid ones ("stl" is accepted as an extra).
ModelConfig ablation_config(const ModelConfig& base, const std::string& variant);

struct AblationRow {
    std::string variant;
    CvResult result;
};

AblationRow run_ablation(const std::string& variant, const Corpus& corpus,
                         const EmbeddingProvider& provider, const ModelConfig& base_cfg,
                         const TrainConfig& train_cfg, const CvOptions& options);

struct SweepCell {
    int l_months = 0;
    int m_months = 0;
    std::size_t n_timelines = 0;
    bool empty = false;       // too few timelines/users to run the pipeline
    std::string note;         // why the cell is empty
    double f1 = 0;
    double recall = 0;
};

std::vector<SweepCell> sweep_periods(const Corpus& corpus, const EmbeddingProvider& provider,
                                     const std::vector<int>& l_values,
                                     const std::vector<int>& m_values,
                                     const ModelConfig& model_cfg,
                                     const TrainConfig& train_cfg, const CvOptions& options);

// ---------------------------------------------------------------------------
// Reporting.

struct MetricsRow {
    std::string run_id;
    std::string task;  // "suicidality" or "symptom"
    int scheme = 4;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

// Run manifest: configs, seeds, and a content hash of the corpus file.
void write_run_manifest(const nlohmann::ordered_json& manifest, const std::string& path);

}  // namespace moodcast
