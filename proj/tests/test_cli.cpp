#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr interleaved
};

std::string binary_path() {
    const char* env = std::getenv("MOODCAST_BIN");
    REQUIRE_MESSAGE(env != nullptr, "MOODCAST_BIN must point at the CLI binary");
    return env;
}

RunResult run(const std::string& args, const std::string& env_prefix = "") {
    const std::string cmd = env_prefix + binary_path() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    char buffer[4096];
    while (std::size_t n = fread(buffer, 1, sizeof buffer, pipe))
        result.output.append(buffer, n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("moodcast_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    REQUIRE(out.good());
}

// Small everything: the pipeline tests exercise wiring, not learning.
const char* kTinyConfig = R"({
  "embedding_dim": 16,
  "hidden_size": 8,
  "lstm_layers": 1,
  "dropout": 0.0,
  "learning_rate": 0.001,
  "batch_size": 16,
  "max_epochs": 2,
  "patience": 2,
  "seed": 7
})";

std::string synth_small(const TempDir& dir, const std::string& name = "corpus.jsonl",
                        int seed = 5) {
    const std::string spec = dir.file("spec.json");
    write_text(spec, R"({"n_users": 10, "posts_min": 10, "posts_max": 20})");
    const std::string corpus = dir.file(name);
    const RunResult r = run("synth --spec " + spec + " --seed " + std::to_string(seed) +
                            " --out " + corpus);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    return corpus;
}

}  // namespace

TEST_CASE("usage errors exit 2, --help exits 0") {
    CHECK(run("").exit_code == 2);
    CHECK(run("--help").exit_code == 0);
    CHECK(run("synth --help").exit_code == 0);
    const RunResult unknown = run("frobnicate");
    CHECK(unknown.exit_code == 2);
    CHECK(unknown.output.find("error: usage:") != std::string::npos);
    const RunResult badflag = run("synth --does-not-exist x --out y");
    CHECK(badflag.exit_code == 2);
    const RunResult missing_required = run("synth");
    CHECK(missing_required.exit_code == 2);
}

TEST_CASE("synth writes a deterministic corpus") {
    TempDir dir;
    const std::string a = synth_small(dir, "a.jsonl", 5);
    const std::string b = synth_small(dir, "b.jsonl", 5);
    const std::string c = synth_small(dir, "c.jsonl", 6);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) != slurp(c));
    CHECK(count_lines(slurp(a)) > 50);
}

TEST_CASE("missing and malformed inputs exit 3 with one-line errors") {
    TempDir dir;
    // A nonexistent path fails flag validation, so it lands in the usage
    // category rather than data validation.
    const RunResult missing =
        run("timelines --corpus " + dir.file("nope.jsonl") + " --out " + dir.file("t.jsonl"));
    CHECK(missing.exit_code == 2);
    CHECK(missing.output.rfind("error:", 0) == 0);
    CHECK(count_lines(missing.output) == 1);

    const std::string bad = dir.file("bad.jsonl");
    write_text(bad, "this is not json\n");
    const RunResult malformed =
        run("timelines --corpus " + bad + " --out " + dir.file("t.jsonl"));
    CHECK(malformed.exit_code == 3);
    CHECK(malformed.output.find("line 1") != std::string::npos);

    const std::string corpus = synth_small(dir);
    const std::string cfg = dir.file("cfg.json");
    write_text(cfg, R"({"not_a_key": 1})");
    const RunResult badcfg = run("train --corpus " + corpus + " --config " + cfg + " --out " +
                                 dir.file("run"));
    CHECK(badcfg.exit_code == 3);
    CHECK(badcfg.output.find("unknown") != std::string::npos);
}

TEST_CASE("timelines emits windows and fold assignments") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string out = dir.file("timelines.jsonl");
    const std::string folds = dir.file("folds.csv");
    const RunResult r = run("timelines --corpus " + corpus + " --l 6 --m 1 --out " + out +
                            " --folds-out " + folds + " --k 3 --seed 2");
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const std::string tl_text = slurp(out);
    CHECK(count_lines(tl_text) > 0);
    CHECK(tl_text.find("\"future_label\"") != std::string::npos);
    const std::string fold_text = slurp(folds);
    CHECK(fold_text.rfind("timeline_id,fold,role", 0) == 0);
    CHECK(fold_text.find(",train") != std::string::npos);
    CHECK(fold_text.find(",test") != std::string::npos);
    CHECK(fold_text.find(",validation") != std::string::npos);

    // Determinism end to end.
    const std::string out2 = dir.file("timelines2.jsonl");
    const RunResult r2 = run("timelines --corpus " + corpus + " --l 6 --m 1 --out " + out2);
    REQUIRE(r2.exit_code == 0);
    const std::string first = slurp(out);
    const std::string second = slurp(out2);
    CHECK(first == second);
}

TEST_CASE("train produces metrics, history, manifest, and a usable checkpoint") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string cfg = dir.file("cfg.json");
    write_text(cfg, kTinyConfig);
    const std::string out_dir = dir.file("run");
    const RunResult r = run("train --corpus " + corpus + " --config " + cfg +
                            " --folds 3 --jobs 2 --out " + out_dir);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    CHECK(r.output.find("F1") != std::string::npos);

    const std::string metrics = slurp(fs::path(out_dir) / "metrics.csv");
    CHECK(metrics.rfind("run_id,task,scheme,precision,recall,f1", 0) == 0);
    CHECK(metrics.find("cv,suicidality,4") != std::string::npos);
    CHECK(metrics.find("cv,symptom,4") != std::string::npos);
    CHECK(metrics.find("fold-0,") != std::string::npos);

    const std::string epochs = slurp(fs::path(out_dir) / "epochs.csv");
    CHECK(epochs.rfind("fold,epoch,lr,", 0) == 0);

    const std::string manifest = slurp(fs::path(out_dir) / "manifest.json");
    CHECK(manifest.find("\"hash\"") != std::string::npos);
    CHECK(manifest.find("\"provider\"") != std::string::npos);
    CHECK(manifest.find("\"finished\"") != std::string::npos);

    REQUIRE(fs::exists(fs::path(out_dir) / "model.ckpt"));

    // The checkpoint drives eval without re-specifying the pipeline.
    const std::string eval_out = dir.file("eval.csv");
    const RunResult ev = run("eval --checkpoint " + (fs::path(out_dir) / "model.ckpt").string() +
                             " --corpus " + corpus + " --out " + eval_out);
    REQUIRE_MESSAGE(ev.exit_code == 0, ev.output);
    const std::string eval_csv = slurp(eval_out);
    CHECK(eval_csv.rfind("run_id,task,scheme,", 0) == 0);
    CHECK(eval_csv.find("suicidality") != std::string::npos);

    // And the attention report, JSON plus CSV.
    const std::string attn_json = dir.file("attention.json");
    const std::string attn_csv = dir.file("attention.csv");
    const RunResult at = run("attention --checkpoint " +
                             (fs::path(out_dir) / "model.ckpt").string() + " --corpus " +
                             corpus + " --out " + attn_json + " --csv " + attn_csv);
    REQUIRE_MESSAGE(at.exit_code == 0, at.output);
    CHECK(slurp(attn_json).find("\"levels\"") != std::string::npos);
    CHECK(slurp(attn_csv).rfind("mood,future_level,mean_attention,count", 0) == 0);
}

TEST_CASE("flag overrides beat config values") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string cfg = dir.file("cfg.json");
    write_text(cfg, kTinyConfig);
    const std::string out_dir = dir.file("run");
    // Config says 2 epochs; the flag forces 1 and scheme 3 merges levels.
    const RunResult r = run("train --corpus " + corpus + " --config " + cfg +
                            " --folds 3 --max-epochs 1 --scheme 3 --out " + out_dir);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const std::string metrics = slurp(fs::path(out_dir) / "metrics.csv");
    CHECK(metrics.find("cv,suicidality,3") != std::string::npos);
    const std::string epochs = slurp(fs::path(out_dir) / "epochs.csv");
    // One epoch per fold, three folds, one header.
    CHECK(count_lines(epochs) == 4);
}

TEST_CASE("embedding cache is created and reused") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string cache_dir = dir.file("cache");
    fs::create_directories(cache_dir);
    const std::string cfg = dir.file("cfg.json");
    write_text(cfg, kTinyConfig);
    const std::string env = "MOODCAST_CACHE_DIR=" + cache_dir + " ";

    const RunResult first = run("train --corpus " + corpus + " --config " + cfg +
                                " --folds 3 --out " + dir.file("run1"),
                                env);
    REQUIRE_MESSAGE(first.exit_code == 0, first.output);
    std::size_t cache_files = 0;
    fs::path cache_file;
    for (const auto& entry : fs::directory_iterator(cache_dir)) {
        ++cache_files;
        cache_file = entry.path();
    }
    REQUIRE(cache_files == 1);
    const auto stamp = fs::last_write_time(cache_file);

    const RunResult second = run("train --corpus " + corpus + " --config " + cfg +
                                 " --folds 3 --out " + dir.file("run2"),
                                 env);
    REQUIRE_MESSAGE(second.exit_code == 0, second.output);
    CHECK(fs::last_write_time(cache_file) == stamp);  // reused, not rebuilt

    // Same seeds, cache on or off: identical metrics.
    const RunResult bare = run("train --corpus " + corpus + " --config " + cfg +
                               " --folds 3 --out " + dir.file("run3"));
    REQUIRE(bare.exit_code == 0);
    CHECK(slurp(dir.path / "run1" / "metrics.csv") == slurp(dir.path / "run3" / "metrics.csv"));
}

TEST_CASE("ablate covers the variant table") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string cfg = dir.file("cfg.json");
    write_text(cfg, kTinyConfig);
    const std::string out = dir.file("ablation.csv");
    const RunResult base = run("ablate --corpus " + corpus + " --config " + cfg +
                               " --folds 3 --jobs 3 --variant mtl_all --out " + out);
    REQUIRE_MESSAGE(base.exit_code == 0, base.output);
    CHECK(slurp(out).find("mtl_all,suicidality") != std::string::npos);

    const std::string out2 = dir.file("ablation2.csv");
    const RunResult wo = run("ablate --corpus " + corpus + " --config " + cfg +
                             " --folds 3 --jobs 3 --variant wo_bilstm --out " + out2);
    REQUIRE_MESSAGE(wo.exit_code == 0, wo.output);
    CHECK(slurp(out2).find("wo_bilstm,suicidality") != std::string::npos);

    const RunResult bad = run("ablate --corpus " + corpus + " --config " + cfg +
                              " --variant wo_nothing --out " + out);
    CHECK(bad.exit_code == 3);
    CHECK(bad.output.rfind("error:", 0) == 0);
}

TEST_CASE("sweep reports one row per period pair") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string cfg = dir.file("cfg.json");
    write_text(cfg, kTinyConfig);
    const std::string out = dir.file("sweep.csv");
    const RunResult r = run("sweep --corpus " + corpus + " --config " + cfg +
                            " --folds 3 --sweep-l 3,6 --sweep-m 1 --out " + out);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const std::string csv = slurp(out);
    CHECK(csv.rfind("l_months,m_months,n_timelines,", 0) == 0);
    CHECK(count_lines(csv) == 3);
}

TEST_CASE("survival and stats write their reports") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string surv = dir.file("survival.csv");
    const std::string surv_json = dir.file("survival.json");
    const std::string surv_svg = dir.file("survival.svg");
    const RunResult s = run("survival --corpus " + corpus + " --out " + surv + " --json " +
                            surv_json + " --svg " + surv_svg);
    REQUIRE_MESSAGE(s.exit_code == 0, s.output);
    CHECK(slurp(surv).rfind("group,time_days,survival,at_risk", 0) == 0);
    CHECK(slurp(surv_json).find("\"curves\"") != std::string::npos);
    CHECK(slurp(surv_svg).find("</svg>") != std::string::npos);

    const std::string ratings = dir.file("ratings.csv");
    write_text(ratings, "coder_a,coder_b,coder_c\nIN,IN,ID\nID,ID,ID\nBR,BR,IN\nIN,IN,IN\n");
    const std::string stats_out = dir.file("stats.csv");
    const std::string agree_out = dir.file("agreement.csv");
    const RunResult g = run("stats --corpus " + corpus + " --ratings " + ratings + " --out " +
                            stats_out + " --agreement-out " + agree_out);
    REQUIRE_MESSAGE(g.exit_code == 0, g.output);
    CHECK(slurp(stats_out).rfind("feature,mean_severe,mean_low,t,p", 0) == 0);
    const std::string agreement = slurp(agree_out);
    CHECK(agreement.rfind("statistic,coder_a,coder_b,value", 0) == 0);
    CHECK(agreement.find("cohens_kappa,coder_a,coder_b,") != std::string::npos);
    CHECK(agreement.find("krippendorff_alpha,,,") != std::string::npos);

    // --agreement-out without --ratings is a usage error.
    const RunResult lonely =
        run("stats --corpus " + corpus + " --out " + stats_out + " --agreement-out " + agree_out);
    CHECK(lonely.exit_code == 2);
}

TEST_CASE("eval scheme must match the stored model") {
    TempDir dir;
    const std::string corpus = synth_small(dir);
    const std::string cfg = dir.file("cfg.json");
    write_text(cfg, kTinyConfig);
    const std::string out_dir = dir.file("run");
    const RunResult tr = run("train --corpus " + corpus + " --config " + cfg +
                             " --folds 3 --out " + out_dir);
    REQUIRE_MESSAGE(tr.exit_code == 0, tr.output);
    const RunResult ev = run("eval --checkpoint " + (fs::path(out_dir) / "model.ckpt").string() +
                             " --corpus " + corpus + " --scheme 2 --out " + dir.file("e.csv"));
    CHECK(ev.exit_code == 3);
    CHECK(ev.output.rfind("error:", 0) == 0);
}
