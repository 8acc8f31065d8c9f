#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "moodcast/synth.hpp"
#include "moodcast/trainer.hpp"
#include "oracles.hpp"

using namespace moodcast;

namespace {

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.embedding_dim = 16;
    cfg.hidden_size = 8;
    cfg.lstm_layers = 1;
    cfg.dropout = 0.0;
    cfg.head_hidden = 8;
    return cfg;
}

TrainConfig quick_train() {
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 16;
    tc.max_epochs = 3;
    tc.patience = 3;
    tc.lr_gamma = 1.0;
    tc.max_len = 12;
    return tc;
}

std::vector<EncodedSequence> encode_all(const EmbeddingProvider& provider,
                                        const std::vector<Timeline>& tls, int max_len) {
    std::vector<EncodedSequence> seqs;
    for (const auto& tl : tls) seqs.push_back(encode_timeline(provider, tl, max_len));
    return seqs;
}

Corpus small_corpus(std::uint64_t seed, int n_users = 14) {
    SynthSpec spec;
    spec.n_users = n_users;
    spec.posts_min = 10;
    spec.posts_max = 22;
    spec.level_marginals = {55, 25, 12, 8};
    spec.severity_persistence = 0.95;
    return generate_synthetic_corpus(spec, seed);
}

}  // namespace

TEST_CASE("train config json round-trips and flags bad values") {
    TrainConfig tc;
    tc.learning_rate = 3e-4;
    tc.patience = 5;
    tc.literal_gamma_per_epoch = true;
    const TrainConfig back = train_config_from_json(train_config_to_json(tc));
    CHECK(back.learning_rate == 3e-4);
    CHECK(back.patience == 5);
    CHECK(back.literal_gamma_per_epoch);

    CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"learning_rat", 0.1}}),
                    ValidationError);
    CHECK_NOTHROW(train_config_from_json(nlohmann::json{{"learning_rat", 0.1}}, false));

    auto reject = [](auto&& mutate) {
        TrainConfig bad;
        mutate(bad);
        CHECK_THROWS_AS(validate_train_config(bad), ValidationError);
    };
    reject([](TrainConfig& c) { c.learning_rate = 0; });
    reject([](TrainConfig& c) { c.weight_decay = -1; });
    reject([](TrainConfig& c) { c.batch_size = 0; });
    reject([](TrainConfig& c) { c.patience = 0; });
    reject([](TrainConfig& c) { c.patience = c.max_epochs + 1; });
    reject([](TrainConfig& c) { c.lr_gamma = 0; });
    reject([](TrainConfig& c) { c.lr_gamma = 1.5; });
    reject([](TrainConfig& c) { c.adam_beta1 = 1.0; });
    reject([](TrainConfig& c) { c.scheme = 5; });
    reject([](TrainConfig& c) { c.max_len = 0; });
}

TEST_CASE("weighted metrics equal the brute-force reference") {
    // Hand case: weighted F1 is exactly 2/3.
    const Metrics hand = weighted_prf({0, 0, 1}, {0, 1, 1}, 2);
    CHECK(hand.f1 == 2.0 / 3.0);
    CHECK(hand.precision == 5.0 / 6.0);
    CHECK(hand.recall == 2.0 / 3.0);
    REQUIRE(hand.per_class.size() == 2);
    CHECK(hand.per_class[0].support == 2);
    CHECK(hand.per_class[1].support == 1);
    REQUIRE(hand.confusion.size() == 2);
    CHECK(hand.confusion[0][0] == 1);
    CHECK(hand.confusion[0][1] == 1);
    CHECK(hand.confusion[1][1] == 1);

    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n_classes = rng_int(rng, 2, 4);
        const int n = rng_int(rng, 1, 40);
        std::vector<int> truth(static_cast<std::size_t>(n)), pred(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            truth[static_cast<std::size_t>(i)] = rng_int(rng, 0, n_classes - 1);
            pred[static_cast<std::size_t>(i)] = rng_int(rng, 0, n_classes - 1);
        }
        const Metrics got = weighted_prf(truth, pred, n_classes);
        const auto want = oracles::weighted_prf_reference(truth, pred, n_classes);
        REQUIRE(got.precision == want.precision);
        REQUIRE(got.recall == want.recall);
        REQUIRE(got.f1 == want.f1);
    }

    CHECK_THROWS_AS(weighted_prf({}, {}, 2), ValidationError);
    CHECK_THROWS_AS(weighted_prf({0}, {0, 1}, 2), ValidationError);
    CHECK_THROWS_AS(weighted_prf({0, 2}, {0, 1}, 2), ValidationError);
}

TEST_CASE("multilabel metrics weight columns by positive support") {
    Eigen::MatrixXd truth(4, 2), pred(4, 2);
    truth << 1, 0, 1, 0, 0, 1, 0, 0;
    pred = truth;
    const Metrics perfect = multilabel_prf(truth, pred);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    // Column 0: truth positives {0,1}, predictions {0,2} -> P=R=F1=1/2.
    // Column 1 has support 1 and is matched exactly.
    pred << 1, 0, 0, 0, 1, 1, 0, 0;
    const Metrics mixed = multilabel_prf(truth, pred);
    CHECK(mixed.precision == doctest::Approx((2 * 0.5 + 1 * 1.0) / 3.0));
    CHECK(mixed.recall == doctest::Approx((2 * 0.5 + 1 * 1.0) / 3.0));
    CHECK(mixed.f1 == doctest::Approx((2 * 0.5 + 1 * 1.0) / 3.0));

    // No positive truth anywhere -> all-zero metrics rather than NaN.
    const Metrics empty = multilabel_prf(Eigen::MatrixXd::Zero(3, 2),
                                         Eigen::MatrixXd::Zero(3, 2));
    CHECK(empty.f1 == 0.0);

    CHECK_THROWS_AS(multilabel_prf(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 2)),
                    ValidationError);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const Corpus corpus = small_corpus(211);
    const auto tls = build_timelines(corpus, 6, 1);
    REQUIRE(tls.size() >= 10);
    HashedEmbeddingProvider provider(16, 32, 5);
    const auto seqs = encode_all(provider, tls, 12);
    const std::vector<EncodedSequence> val(seqs.begin(), seqs.begin() + 3);
    const std::vector<EncodedSequence> train_set(seqs.begin() + 3, seqs.end());

    const ModelConfig mc = small_model();
    const TrainConfig tc = quick_train();
    const TrainResult a = train(mc, tc, train_set, val);
    const TrainResult b = train(mc, tc, train_set, val);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].train_loss == b.history[e].train_loss);
        CHECK(a.history[e].loss_fs == b.history[e].loss_fs);
        CHECK(a.history[e].loss_bd == b.history[e].loss_bd);
        CHECK(a.history[e].val_f1 == b.history[e].val_f1);
        CHECK(a.history[e].s_fs == b.history[e].s_fs);
    }
    for (std::size_t i = 0; i < a.model.params().blocks.size(); ++i)
        CHECK((a.model.params().blocks[i].value - b.model.params().blocks[i].value).norm() ==
              0.0);

    TrainConfig other = tc;
    other.seed = tc.seed + 1;
    const TrainResult c = train(mc, other, train_set, val);
    CHECK(a.history[0].train_loss != c.history[0].train_loss);
}

TEST_CASE("learning rate decays multiplicatively across the run") {
    const Corpus corpus = small_corpus(223, 10);
    const auto tls = build_timelines(corpus, 6, 1);
    HashedEmbeddingProvider provider(16, 32, 5);
    const auto seqs = encode_all(provider, tls, 12);

    TrainConfig tc = quick_train();
    tc.max_epochs = 4;
    tc.patience = 4;
    tc.lr_gamma = 0.001;
    const TrainResult spread = train(small_model(), tc, seqs, {});
    REQUIRE(spread.history.size() == 4);
    // Total decay reaches gamma by the last epoch: lr_e = lr * g^((e-1)/(E-1))
    // is not the contract; the per-epoch factor is gamma^(1/max_epochs).
    const double factor = std::pow(0.001, 1.0 / 4.0);
    for (std::size_t e = 0; e < 4; ++e)
        CHECK(spread.history[e].lr ==
              doctest::Approx(tc.learning_rate * std::pow(factor, e)).epsilon(1e-12));

    tc.literal_gamma_per_epoch = true;
    const TrainResult literal = train(small_model(), tc, seqs, {});
    for (std::size_t e = 0; e < literal.history.size(); ++e)
        CHECK(literal.history[e].lr ==
              doctest::Approx(tc.learning_rate * std::pow(0.001, e)).epsilon(1e-12));
}

TEST_CASE("early stopping needs strict improvement") {
    const Corpus corpus = small_corpus(227, 10);
    const auto tls = build_timelines(corpus, 6, 1);
    HashedEmbeddingProvider provider(16, 32, 5);
    const auto seqs = encode_all(provider, tls, 12);
    REQUIRE(seqs.size() >= 6);
    const std::vector<EncodedSequence> val(seqs.begin(), seqs.begin() + 3);
    const std::vector<EncodedSequence> train_set(seqs.begin() + 3, seqs.end());

    // A vanishing learning rate freezes the score, so with patience 1 the
    // second epoch fails to improve strictly and training stops.
    TrainConfig tc = quick_train();
    tc.learning_rate = 1e-30;
    tc.max_epochs = 50;
    tc.patience = 1;
    const TrainResult result = train(small_model(), tc, train_set, val);
    CHECK(result.history.size() == 2);
    CHECK(result.best_epoch == 1);
    CHECK(result.stopped_early);

    // Patience 3 tolerates two flat epochs before the third ends it.
    tc.patience = 3;
    const TrainResult longer = train(small_model(), tc, train_set, val);
    CHECK(longer.history.size() == 4);
    CHECK(longer.stopped_early);

    // The restored parameters reproduce the best epoch's validation score.
    const Metrics again = evaluate(longer.model, val, 4).main;
    CHECK(again.f1 == doctest::Approx(longer.best_score).epsilon(1e-12));
}

TEST_CASE("non-finite losses raise a divergence error") {
    const Corpus corpus = small_corpus(229, 8);
    const auto tls = build_timelines(corpus, 6, 1);
    HashedEmbeddingProvider provider(16, 32, 5);
    const auto seqs = encode_all(provider, tls, 12);
    REQUIRE_FALSE(seqs.empty());

    // One optimizer step at this rate pushes the head weights past the range
    // where their product still fits in a double.
    TrainConfig tc = quick_train();
    tc.learning_rate = 1e200;
    tc.batch_size = 1;
    try {
        train(small_model(), tc, seqs, {});
        FAIL("expected TrainingDivergence");
    } catch (const TrainingDivergence& e) {
        CHECK(e.epoch >= 1);
        CHECK(e.batch >= 1);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("evaluate enforces the scheme contract and merges labels") {
    const Corpus corpus = small_corpus(233, 10);
    const auto tls = build_timelines(corpus, 6, 1);
    HashedEmbeddingProvider provider(16, 32, 5);
    const auto seqs = encode_all(provider, tls, 12);

    ModelConfig mc = small_model();
    mc.n_levels = 3;
    Model<double> model(mc, 1);
    CHECK_THROWS_AS(evaluate(model, seqs, 4), ValidationError);
    const EvalResult r = evaluate(model, seqs, 3);
    CHECK(r.main.per_class.size() == 3);
    CHECK(r.symptom.per_class.size() == kNumSymptoms);
    CHECK(r.main.f1 >= 0.0);
    CHECK(r.main.f1 <= 1.0);
    CHECK_THROWS_AS(evaluate(model, {}, 3), ValidationError);
}

TEST_CASE("cross validation is reproducible and thread-count invariant") {
    const Corpus corpus = small_corpus(239, 12);
    HashedEmbeddingProvider provider(16, 32, 5);
    const ModelConfig mc = small_model();
    TrainConfig tc = quick_train();
    tc.max_epochs = 2;
    tc.patience = 2;
    CvOptions options;
    options.k = 3;
    options.jobs = 1;

    const CvResult serial = run_cv(corpus, provider, mc, tc, options);
    REQUIRE(serial.folds.size() == 3);
    CHECK(serial.n_timelines > 0);

    options.jobs = 3;
    const CvResult threaded = run_cv(corpus, provider, mc, tc, options);
    REQUIRE(threaded.folds.size() == 3);
    CHECK(serial.main.f1 == threaded.main.f1);
    CHECK(serial.main.precision == threaded.main.precision);
    CHECK(serial.symptom.f1 == threaded.symptom.f1);
    for (std::size_t f = 0; f < 3; ++f) {
        CHECK(serial.folds[f].eval.main.f1 == threaded.folds[f].eval.main.f1);
        CHECK(serial.folds[f].best_score == threaded.folds[f].best_score);
    }

    // Averaged metrics are the fold means.
    double mean_f1 = 0;
    for (const auto& fold : serial.folds) mean_f1 += fold.eval.main.f1;
    mean_f1 /= 3.0;
    CHECK(serial.main.f1 == doctest::Approx(mean_f1).epsilon(1e-12));

    // Pooling recomputes from concatenated predictions instead.
    options.jobs = 1;
    options.pool_predictions = true;
    const CvResult pooled = run_cv(corpus, provider, mc, tc, options);
    std::size_t pooled_support = 0;
    for (const auto& pc : pooled.main.per_class) pooled_support += pc.support;
    CHECK(pooled_support == pooled.n_timelines);
}

TEST_CASE("ablation names map to config tweaks") {
    const auto& names = ablation_variants();
    REQUIRE(names.size() == 6);
    CHECK(names[0] == "mtl_all");
    const ModelConfig base = small_model();
    CHECK_FALSE(ablation_config(base, "mtl_all").no_bilstm);
    CHECK(ablation_config(base, "wo_uncertainty").no_uncertainty);
    CHECK(ablation_config(base, "wo_temporal_attention").no_temporal_attention);
    CHECK(ablation_config(base, "wo_bilstm").no_bilstm);
    CHECK(ablation_config(base, "wo_somatic").no_somatic);
    CHECK(ablation_config(base, "wo_moods").no_mood);
    CHECK(ablation_config(base, "stl").single_task);
    try {
        ablation_config(base, "wo_everything");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("wo_bilstm") != std::string::npos);
    }
}

TEST_CASE("period sweep skips infeasible cells with a note") {
    HashedEmbeddingProvider provider(16, 32, 5);
    TrainConfig tc = quick_train();
    tc.max_epochs = 1;
    tc.patience = 1;
    CvOptions options;
    options.k = 3;

    // Two posts per user can never satisfy the three-post observation gate,
    // so every cell comes back empty with the reason recorded.
    SynthSpec sparse;
    sparse.n_users = 6;
    sparse.posts_min = 2;
    sparse.posts_max = 2;
    const Corpus thin = generate_synthetic_corpus(sparse, 77);
    const auto cells = sweep_periods(thin, provider, {1, 6}, {1}, small_model(), tc, options);
    REQUIRE(cells.size() == 2);
    for (const auto& cell : cells) {
        CHECK(cell.empty);
        CHECK(cell.note.find("no timelines") != std::string::npos);
        CHECK(cell.n_timelines == 0);
    }

    const Corpus corpus = small_corpus(241, 8);
    const auto ok = sweep_periods(corpus, provider, {6}, {1}, small_model(), tc, options);
    REQUIRE(ok.size() == 1);
    CHECK_FALSE(ok[0].empty);
    CHECK(ok[0].n_timelines > 0);
    CHECK(ok[0].f1 >= 0.0);
}

TEST_CASE("metrics csv carries six-decimal fixed columns") {
    std::vector<MetricsRow> rows(2);
    rows[0] = {"cv", "suicidality", 4, 0.5, 0.25, 1.0 / 3.0};
    rows[1] = {"fold0", "symptom", 4, 1.0, 0.0, 0.125};
    const std::string csv = metrics_csv(rows);
    CHECK(csv.find("run_id,task,scheme,precision,recall,f1") == 0);
    CHECK(csv.find("cv,suicidality,4,0.500000,0.250000,0.333333") != std::string::npos);
    CHECK(csv.find("fold0,symptom,4,1.000000,0.000000,0.125000") != std::string::npos);
}
