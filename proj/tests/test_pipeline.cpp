#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>

#include "pnpood/error.hpp"
#include "pnpood/pipeline.hpp"
#include "pnpood/synth.hpp"

using namespace pnpood;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// one tiny corpus shared by every test in this binary
struct Fixture {
  fs::path root;
  SynthPaths paths;

  Fixture() {
    root = fs::temp_directory_path() / "pnpood_pipeline_fixture";
    fs::remove_all(root);
    SynthConfig synth;
    synth.sentences_per_domain = 240;
    synth.dim = 12;
    synth.class_words = 20;
    synth.shared_words = 30;
    synth.attribute_words = 60;
    synth.eval_words = 60;
    synth.seed = 11;
    synth.out_dir = (root / "data").string();
    paths = make_synthetic_corpus(synth);
  }

  RunConfig base_config(const std::string& run_name) const {
    RunConfig config;
    config.ind_train = paths.ind_train;
    config.ind_val = paths.ind_val;
    config.ind_test = paths.ind_test;
    config.ood_eval = paths.ood_eval;
    config.attribute_corpus = paths.attribute;
    config.word_vectors = paths.word_vectors;
    config.k = 3;
    config.train.epochs = 3;
    config.train.batch_size = 16;
    config.train.hidden_dims = {16};
    config.train.dropout_rate = 0.1;
    config.gen.num_seeds = 150;
    config.gen.max_length = 12;
    config.shell = {ShellMode::kRelative, 1.0};
    config.cal.iterations = 120;
    config.seed = 5;
    config.out_dir = (root / run_name).string();
    return config;
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("config file parsing and overrides") {
  fs::path path = fs::temp_directory_path() / "pnpood_test_config.txt";
  {
    std::ofstream out(path);
    out << "# comment line\n"
        << "ind_train = data/train.jsonl\n"
        << "k = 3\n"
        << "alpha = 0.5\n"
        << "hidden_dims = 64,32\n"
        << "filter_mode = relative\n"
        << "filter_t = 1.5\n"
        << "method = msp_er\n"
        << "\n";
  }
  RunConfig config = load_run_config(path.string());
  CHECK(config.ind_train == "data/train.jsonl");
  CHECK(config.k == 3);
  CHECK(config.train.alpha == doctest::Approx(0.5));
  CHECK(config.train.hidden_dims == std::vector<int>{64, 32});
  CHECK(config.shell.mode == ShellMode::kRelative);
  CHECK(config.shell.value == doctest::Approx(1.5));
  CHECK(config.method == Method::kMspEr);

  apply_config_entry(config, "alpha", "1.0");
  CHECK(config.train.alpha == doctest::Approx(1.0));
  CHECK_THROWS_AS(apply_config_entry(config, "no_such_key", "1"), ValidationError);
  CHECK_THROWS_AS(apply_config_entry(config, "k", "three"), ValidationError);

  // digest tracks content
  std::string d1 = config_digest(config);
  apply_config_entry(config, "seed", "99");
  CHECK(config_digest(config) != d1);
}

TEST_CASE("msp baseline run produces a complete report and artifacts") {
  RunConfig config = fixture().base_config("msp_run");
  config.method = Method::kMsp;
  ExperimentReport report = run_baseline_msp(config);

  CHECK(report.method == Method::kMsp);
  CHECK(report.ind_domain == "alpha");
  CHECK(report.ood_domain == "gamma");
  CHECK(report.metrics.auroc > 0.0);
  CHECK(report.metrics.auroc <= 1.0);
  CHECK(report.metrics.aupr > 0.0);
  CHECK(report.metrics.fpr_at_90 >= 0.0);
  CHECK(report.metrics.ece >= 0.0);
  CHECK(report.metrics.ece_after_calibration >= 0.0);
  CHECK(report.ind_accuracy > 0.5);  // separable synthetic classes
  CHECK(report.eval_path == std::string(kEvalPathId));

  for (const char* name :
       {"config.resolved.json", "checkpoint.json", "epochs.jsonl", "scores.csv",
        "metrics.json", "calibration.json", "report.json", "report.csv", "preds.val.csv",
        "labels.val.txt", "preds.test.csv", "labels.test.txt"})
    CHECK(fs::exists(fs::path(config.out_dir) / name));

  SUBCASE("report round-trips through json") {
    ExperimentReport back = report_from_json(report_json(report));
    CHECK(back.method == report.method);
    CHECK(back.metrics.auroc == report.metrics.auroc);
    CHECK(back.metrics.ece_after_calibration == report.metrics.ece_after_calibration);
    CHECK(back.digest == report.digest);
  }
}

TEST_CASE("same seed reruns are byte-identical outside timing fields") {
  RunConfig config = fixture().base_config("det_run");
  config.method = Method::kMsp;
  run_baseline_msp(config);

  const char* names[] = {"config.resolved.json", "checkpoint.json", "epochs.jsonl",
                         "scores.csv",           "metrics.json",    "calibration.json",
                         "preds.test.csv",       "report.csv"};
  std::map<std::string, std::string> snapshot;
  for (const char* name : names) snapshot[name] = slurp(fs::path(config.out_dir) / name);
  auto report_before = nlohmann::json::parse(slurp(fs::path(config.out_dir) / "report.json"));

  run_baseline_msp(config);  // rerun in place with the identical config
  for (const char* name : names)
    CHECK(snapshot.at(name) == slurp(fs::path(config.out_dir) / name));

  auto report_after = nlohmann::json::parse(slurp(fs::path(config.out_dir) / "report.json"));
  report_before.erase("timings");
  report_after.erase("timings");
  CHECK(report_before == report_after);
}

TEST_CASE("msp_er requires ood data and warns about leakage") {
  RunConfig config = fixture().base_config("er_leak");
  config.method = Method::kMspEr;
  CHECK_THROWS_AS(run_msp_er(config), ValidationError);

  SUBCASE("training on the evaluation domain itself warns") {
    config.ood_train = fixture().paths.ood_eval;
    ExperimentReport report = run_msp_er(config);
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("data leakage") != std::string::npos);
    CHECK(report.warnings[0].find("gamma") != std::string::npos);
  }
  SUBCASE("training on a disjoint domain does not warn") {
    config.ood_train = fixture().paths.attribute;
    config.out_dir = (fs::path(fixture().root) / "er_clean").string();
    ExperimentReport report = run_msp_er(config);
    CHECK(report.warnings.empty());
  }
}

TEST_CASE("pnpood run persists candidates and the filter report") {
  RunConfig config = fixture().base_config("pnp_run");
  config.method = Method::kPnpood;
  ExperimentReport report = run_pnpood(config);
  CHECK(report.method == Method::kPnpood);
  CHECK_FALSE(report.filter_bypassed);
  for (const char* name : {"candidates.jsonl", "candidates.kept.jsonl", "filter.json", "bow.txt"})
    CHECK(fs::exists(fs::path(config.out_dir) / name));

  auto filter_json =
      nlohmann::json::parse(slurp(fs::path(config.out_dir) / "filter.json"));
  CHECK(filter_json["bypassed"] == false);
  CHECK(filter_json["kept_indices"].size() > 0);
  CHECK(filter_json["n_candidates"].get<int>() >= filter_json["kept_indices"].size());

  SUBCASE("skip_filter keeps everything and flags the report") {
    config.skip_filter = true;
    config.out_dir = (fs::path(fixture().root) / "pnp_skip").string();
    ExperimentReport skipped = run_pnpood(config);
    CHECK(skipped.filter_bypassed);
    auto fj = nlohmann::json::parse(slurp(fs::path(config.out_dir) / "filter.json"));
    CHECK(fj["bypassed"] == true);
    CHECK(fj["kept_indices"].size() == fj["n_candidates"].get<std::size_t>());
  }
}

TEST_CASE("the three runners share one evaluation path") {
  // reuse runs written by earlier cases where possible; rerun the two cheap ones
  RunConfig msp = fixture().base_config("chk_msp");
  msp.method = Method::kMsp;
  ExperimentReport a = run_baseline_msp(msp);

  RunConfig er = fixture().base_config("chk_er");
  er.method = Method::kMspEr;
  er.ood_train = fixture().paths.attribute;
  ExperimentReport b = run_msp_er(er);

  RunConfig pnp = fixture().base_config("chk_pnp");
  pnp.method = Method::kPnpood;
  ExperimentReport c = run_pnpood(pnp);

  CHECK(a.eval_path_checksum == b.eval_path_checksum);
  CHECK(b.eval_path_checksum == c.eval_path_checksum);
  CHECK(a.eval_path == std::string(kEvalPathId));

  SUBCASE("build_report merges the three runs") {
    Comparison cmp = build_report({msp.out_dir, er.out_dir, pnp.out_dir});
    CHECK(cmp.json.size() == 3);
    CHECK(cmp.csv.find("msp_er") != std::string::npos);
    CHECK(cmp.text.find("pnpood") != std::string::npos);
    // csv and json agree on the auroc column
    for (const auto& row : cmp.json) {
      std::string m = row["method"];
      CHECK(cmp.csv.find(m) != std::string::npos);
    }
  }
  SUBCASE("report rejects empty input") {
    CHECK_THROWS_AS(build_report({}), ValidationError);
  }
  SUBCASE("report rejects missing directories") {
    CHECK_THROWS_AS(build_report({(fixture().root / "no_such_run").string()}),
                    ValidationError);
  }
}

TEST_CASE("published reference rows attach to reports") {
  auto row = paper_reference_row("computer", "sports", Method::kMsp);
  CHECK(row["fpr_at_90"] == doctest::Approx(0.72));
  CHECK(row["auroc"] == doctest::Approx(0.62));
  CHECK(row["aupr"] == doctest::Approx(0.23));
  CHECK(row["ece"] == doctest::Approx(0.56));
  CHECK(row["ind_accuracy"] == doctest::Approx(0.46));
  CHECK(row["domain_pair_matched"] == true);

  auto pnp = paper_reference_row("computer", "sports", Method::kPnpood);
  CHECK(pnp["fpr_at_90"] == doctest::Approx(0.18));
  CHECK(pnp["auroc"] == doctest::Approx(0.92));
  CHECK(pnp["aupr"] == doctest::Approx(0.65));
  CHECK(pnp["ece"] == doctest::Approx(0.32));
  CHECK(pnp["ece_after_calibration"] == doctest::Approx(0.26));

  auto er = paper_reference_row("computer", "sports", Method::kMspEr);
  CHECK(er["auroc"] == doctest::Approx(0.90));

  auto sst = paper_reference_row("sst", "snli", Method::kPnpood);
  CHECK(sst["fpr_at_90"] == doctest::Approx(0.05));
  CHECK(sst["auroc"] == doctest::Approx(0.97));
  CHECK(sst["aupr"] == doctest::Approx(0.77));
  CHECK(sst.contains("ece") == false);

  // unknown pairs fall back to the computer->sports block, flagged as such
  auto fallback = paper_reference_row("alpha", "gamma", Method::kMsp);
  CHECK(fallback["domain_pair_matched"] == false);
  CHECK(fallback["auroc"] == doctest::Approx(0.62));
}

TEST_CASE("synthetic corpus shape") {
  const auto& paths = fixture().paths;
  Dataset train = load_dataset(paths.ind_train, FileFormat::kJsonl, DatasetRole::kInd, 3);
  Dataset val = load_dataset(paths.ind_val, FileFormat::kJsonl, DatasetRole::kInd, 3);
  Dataset test = load_dataset(paths.ind_test, FileFormat::kJsonl, DatasetRole::kInd, 3);
  CHECK(train.size() + val.size() + test.size() == 240);
  CHECK(domain_tags(train) == std::vector<std::string>{"alpha"});

  Dataset eval = load_dataset(paths.ood_eval, FileFormat::kJsonl, DatasetRole::kOodEval, 3);
  CHECK(eval.size() == 240);
  CHECK(domain_tags(eval) == std::vector<std::string>{"gamma"});

  // every corpus token has a vector
  WordVectors wv = load_word_vectors(paths.word_vectors);
  for (const auto& ex : train.examples)
    for (const auto& tok : ex.tokens) CHECK(wv.table.count(tok) == 1);
  for (const auto& ex : eval.examples)
    for (const auto& tok : ex.tokens) CHECK(wv.table.count(tok) == 1);
}
