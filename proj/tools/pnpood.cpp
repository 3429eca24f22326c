// Command-line front end for the OOD detection toolkit. Subcommands mirror
// the pipeline stages so every stage can run (and be audited) on its own:
//
//   synth     write the bundled synthetic two-domain benchmark
//   train     train a classifier and write checkpoint + epoch log
//   generate  produce attribute-steered pseudo-OOD candidates
//   filter    keep candidates on the IND cluster boundary shell
//   detect    score a test set with 1 - max softmax probability
//   evaluate  detection + calibration metrics from score/prediction dumps
//   calibrate fit a Dirichlet calibration map on held-out predictions
//   report    merge completed runs into a comparison table
//   pipeline  run a full method (msp | msp_er | pnpood) end to end
//
// Exit codes: 0 success, 2 validation/configuration error, 1 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pnpood/error.hpp"
#include "pnpood/pipeline.hpp"
#include "pnpood/synth.hpp"

namespace fs = std::filesystem;
using namespace pnpood;

namespace {

struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_file, "key = value configuration file");
  cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
}

RunConfig resolve_config(const ConfigArgs& args) {
  RunConfig config;
  if (!args.config_file.empty()) config = load_run_config(args.config_file);
  for (const auto& kv : args.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ValidationError("--set expects key=value, got '" + kv + "'");
    apply_config_entry(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

WordVectors load_vectors_checked(const RunConfig& config) {
  if (config.word_vectors.empty())
    throw ValidationError("a word_vectors file is required for this subcommand");
  return load_word_vectors(config.word_vectors);
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
}

std::vector<std::vector<std::string>> corpus_tokens(const Dataset& dataset) {
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(dataset.size());
  for (const auto& ex : dataset.examples) tokens.push_back(ex.tokens);
  return tokens;
}

// ---------------------------------------------------------------------------

int cmd_synth(const SynthConfig& config) {
  SynthPaths paths = make_synthetic_corpus(config);
  std::cout << "wrote " << paths.ind_train << "\n      " << paths.ind_val << "\n      "
            << paths.ind_test << "\n      " << paths.ood_eval << "\n      " << paths.attribute
            << "\n      " << paths.word_vectors << '\n';
  return 0;
}

int cmd_train(const RunConfig& config) {
  if (config.out_dir.empty()) throw ValidationError("train: out_dir is required");
  WordVectors wv = load_vectors_checked(config);
  Dataset ind_train = load_dataset(config.ind_train, config.format, DatasetRole::kInd, config.k);
  Dataset ind_val = load_dataset(config.ind_val, config.format, DatasetRole::kInd, config.k);

  TrainData data;
  data.k = config.k;
  data.input_dim = wv.dim;
  for (std::size_t i = 0; i < ind_train.size(); ++i)
    data.ind_train.push_back(
        {embed_sentence(ind_train.examples[i].tokens, wv).vector,
         ind_train.examples[i].class_label});
  for (std::size_t i = 0; i < ind_val.size(); ++i)
    data.ind_val.push_back({embed_sentence(ind_val.examples[i].tokens, wv).vector,
                            ind_val.examples[i].class_label});
  if (!config.ood_train.empty()) {
    Dataset ood =
        load_dataset(config.ood_train, config.format, DatasetRole::kOodEval, config.k);
    for (const auto& ex : ood.examples)
      data.ood_train.push_back(embed_sentence(ex.tokens, wv).vector);
  }

  TrainConfig tc = config.train;
  tc.seed = mix64(config.seed ^ 0x7472616e);
  TrainResult result = train(data, tc);

  fs::create_directories(config.out_dir);
  save_checkpoint(result.params, (fs::path(config.out_dir) / "checkpoint.json").string());
  save_epoch_log(result.log, (fs::path(config.out_dir) / "epochs.jsonl").string());
  std::cout << "best val accuracy " << result.best_val_acc << " at epoch " << result.best_epoch
            << '\n';
  return 0;
}

int cmd_generate(const RunConfig& config) {
  if (config.out_dir.empty()) throw ValidationError("generate: out_dir is required");
  Dataset ind_train = load_dataset(config.ind_train, config.format, DatasetRole::kInd, config.k);

  auto ngram_corpus = corpus_tokens(ind_train);
  std::vector<std::vector<std::string>> attr_tokens;
  if (!config.attribute_corpus.empty()) {
    Dataset attr =
        load_dataset(config.attribute_corpus, config.format, DatasetRole::kOodEval, config.k);
    attr_tokens = corpus_tokens(attr);
    ngram_corpus.insert(ngram_corpus.end(), attr_tokens.begin(), attr_tokens.end());
  }
  if (!config.neutral_corpus.empty()) {
    Dataset neutral =
        load_dataset(config.neutral_corpus, config.format, DatasetRole::kOodEval, config.k);
    auto toks = corpus_tokens(neutral);
    ngram_corpus.insert(ngram_corpus.end(), toks.begin(), toks.end());
  }
  NGramModel model = fit_ngram(ngram_corpus, config.ngram_order, config.ngram_delta);

  std::vector<BagOfWords> bows;
  if (!config.bow_files.empty()) {
    for (const auto& path : config.bow_files) bows.push_back(load_bow(path));
  } else if (!attr_tokens.empty()) {
    bows.push_back(extract_bow(attr_tokens, corpus_tokens(ind_train), config.bow_top_k));
  } else {
    throw ValidationError("generate needs a bag-of-words source: bow_file or attribute_corpus");
  }

  fs::create_directories(config.out_dir);
  GenerationConfig gen = config.gen;
  OodCandidates all;
  all.dataset.k = config.k;
  all.dataset.role = DatasetRole::kOodCandidate;
  for (std::size_t b = 0; b < bows.size(); ++b) {
    gen.rng_seed = mix64(config.seed ^ 0x67656e) + b;
    OodCandidates batch = make_ood_candidates(ind_train, model, bows[b], gen);
    for (std::size_t i = 0; i < batch.dataset.examples.size(); ++i) {
      all.dataset.examples.push_back(std::move(batch.dataset.examples[i]));
      all.provenance.push_back(batch.provenance[i]);
    }
  }
  save_candidates(all, (fs::path(config.out_dir) / "candidates.jsonl").string());
  save_bow(bows.front(), (fs::path(config.out_dir) / "bow.txt").string());
  std::cout << "generated " << all.dataset.size() << " candidates\n";
  return 0;
}

int cmd_filter(const RunConfig& config, const std::string& candidates_path,
               const std::string& sweep_spec) {
  if (config.out_dir.empty()) throw ValidationError("filter: out_dir is required");
  WordVectors wv = load_vectors_checked(config);
  Dataset ind_train = load_dataset(config.ind_train, config.format, DatasetRole::kInd, config.k);
  OodCandidates candidates = load_candidates(candidates_path);

  auto emb_ind = embed_dataset(ind_train, wv);
  auto emb_cand = embed_dataset(candidates.dataset, wv);
  fs::create_directories(config.out_dir);

  FilterResult result = filter_candidates(emb_cand, emb_ind, config.shell, config.percentile_q);
  nlohmann::json report = filter_report(result, static_cast<int>(emb_ind.size()),
                                        static_cast<int>(emb_cand.size()));
  report["bypassed"] = false;
  report["seed"] = config.seed;
  save_filter_report(report, (fs::path(config.out_dir) / "filter.json").string());

  OodCandidates kept;
  kept.dataset.k = candidates.dataset.k;
  kept.dataset.role = DatasetRole::kOodCandidate;
  for (int i : result.kept_indices) {
    kept.dataset.examples.push_back(candidates.dataset.examples[i]);
    kept.provenance.push_back(candidates.provenance[i]);
  }
  save_candidates(kept, (fs::path(config.out_dir) / "candidates.kept.jsonl").string());
  std::cout << "kept " << result.kept_indices.size() << " of " << emb_cand.size()
            << " candidates (d=" << result.summary.boundary_radius
            << ", T=" << result.summary.shell_width << ")\n";

  if (!sweep_spec.empty()) {
    nlohmann::json sweep = nlohmann::json::array();
    std::stringstream ss(sweep_spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      ShellSpec shell = config.shell;
      shell.value = std::stod(item);
      nlohmann::json entry;
      entry["T"] = shell.value;
      if (shell.value <= 0) {
        entry["kept"] = 0;  // an empty shell keeps nothing
      } else {
        FilterResult r = filter_candidates(emb_cand, emb_ind, shell, config.percentile_q);
        entry["kept"] = r.kept_indices.size();
        entry["d"] = r.summary.boundary_radius;
      }
      sweep.push_back(entry);
    }
    write_text(fs::path(config.out_dir) / "filter_sweep.json", sweep.dump(2) + "\n");
    std::cout << "sweep written to filter_sweep.json\n";
  }
  return 0;
}

int cmd_detect(const RunConfig& config, const std::string& checkpoint_path) {
  if (config.out_dir.empty()) throw ValidationError("detect: out_dir is required");
  ClassifierParams params = load_checkpoint(checkpoint_path);
  WordVectors wv = load_vectors_checked(config);
  Dataset ind_test = load_dataset(config.ind_test, config.format, DatasetRole::kInd, config.k);
  Dataset ood_eval =
      load_dataset(config.ood_eval, config.format, DatasetRole::kOodEval, config.k);

  std::vector<ScoredSample> scores;
  std::vector<std::vector<double>> test_probs;
  std::vector<int> test_labels;
  for (const auto& ex : ind_test.examples) {
    Prediction pred = forward(params, embed_sentence(ex.tokens, wv));
    scores.push_back({1.0 - msp(pred), false});
    test_probs.push_back(pred.probs);
    test_labels.push_back(ex.class_label);
  }
  for (const auto& ex : ood_eval.examples) {
    Prediction pred = forward(params, embed_sentence(ex.tokens, wv));
    scores.push_back({1.0 - msp(pred), true});
  }

  fs::create_directories(config.out_dir);
  const fs::path dir(config.out_dir);
  save_scores_csv(scores, (dir / "scores.csv").string());
  {
    std::ofstream out(dir / "preds.test.csv");
    char buf[64];
    for (const auto& row : test_probs) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
        out << (i ? "," : "") << buf;
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.test.txt");
    for (int l : test_labels) out << l << '\n';
  }
  if (!config.ind_val.empty()) {
    Dataset ind_val = load_dataset(config.ind_val, config.format, DatasetRole::kInd, config.k);
    std::ofstream preds(dir / "preds.val.csv");
    std::ofstream labels(dir / "labels.val.txt");
    char buf[64];
    for (const auto& ex : ind_val.examples) {
      Prediction pred = forward(params, embed_sentence(ex.tokens, wv));
      for (std::size_t i = 0; i < pred.probs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", pred.probs[i]);
        preds << (i ? "," : "") << buf;
      }
      preds << '\n';
      labels << ex.class_label << '\n';
    }
  }
  std::cout << "scored " << scores.size() << " samples (" << ind_test.size() << " IND, "
            << ood_eval.size() << " OOD)\n";
  return 0;
}

std::vector<std::vector<double>> load_probs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open predictions: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      try {
        row.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw ValidationError("line " + std::to_string(line_no) + ": unparsable probability '" +
                              field + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("empty predictions file: " + path);
  return rows;
}

std::vector<int> load_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open labels: " + path);
  std::vector<int> labels;
  int v = 0;
  while (in >> v) labels.push_back(v);
  if (labels.empty()) throw ValidationError("empty labels file: " + path);
  return labels;
}

int cmd_evaluate(const RunConfig& config, const std::string& scores_path,
                 const std::string& preds_path, const std::string& labels_path) {
  if (config.out_dir.empty()) throw ValidationError("evaluate: out_dir is required");
  auto scores = load_scores_csv(scores_path);

  std::vector<EceInput> ece_inputs;
  if (!preds_path.empty()) {
    if (labels_path.empty())
      throw ValidationError("evaluate: --labels is required when --preds is given");
    auto probs = load_probs_csv(preds_path);
    auto labels = load_labels_file(labels_path);
    if (probs.size() != labels.size())
      throw ValidationError("evaluate: predictions and labels differ in length");
    for (std::size_t i = 0; i < probs.size(); ++i) {
      auto arg = std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin();
      ece_inputs.push_back({probs[i][arg], static_cast<int>(arg) == labels[i]});
    }
  }

  nlohmann::json metrics = metrics_report(scores, ece_inputs, config.ece_bins, config.target_tpr);
  metrics["ece_split"] = "ind_test";
  metrics["seed"] = config.seed;
  fs::create_directories(config.out_dir);
  write_text(fs::path(config.out_dir) / "metrics.json", metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << '\n';
  return 0;
}

int cmd_calibrate(const RunConfig& config, const std::string& preds_path,
                  const std::string& labels_path) {
  if (config.out_dir.empty()) throw ValidationError("calibrate: out_dir is required");
  auto probs = load_probs_csv(preds_path);
  auto labels = load_labels_file(labels_path);
  if (probs.size() != labels.size())
    throw ValidationError("calibrate: predictions and labels differ in length");

  CalibrationFit fit = config.auto_lambda ? fit_dirichlet_auto(probs, labels, config.cal)
                                          : fit_dirichlet(probs, labels, config.cal);
  fs::create_directories(config.out_dir);
  save_calibration(fit, (fs::path(config.out_dir) / "calibration.json").string());
  std::cout << "val NLL " << fit.identity_nll << " -> " << fit.val_nll << " (lambda "
            << fit.lambda << ")\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  Comparison comparison = build_report(run_dirs);
  std::cout << comparison.text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "comparison.txt", comparison.text);
    write_text(fs::path(out_dir) / "comparison.csv", comparison.csv);
    write_text(fs::path(out_dir) / "comparison.json", comparison.json.dump(2) + "\n");
  }
  return 0;
}

int cmd_pipeline(const RunConfig& config) {
  if (config.out_dir.empty()) throw ValidationError("pipeline: out_dir is required");
  ExperimentReport report = run_method(config);
  std::cout << method_name(report.method) << " " << report.ind_domain << "->"
            << report.ood_domain << ": auroc " << report.metrics.auroc << ", aupr "
            << report.metrics.aupr << ", fpr@90 " << report.metrics.fpr_at_90 << ", ece "
            << report.metrics.ece << " -> " << report.metrics.ece_after_calibration
            << " (ind acc " << report.ind_accuracy << ")\n";
  for (const auto& w : report.warnings) std::cout << "warning: " << w << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute-steered pseudo-OOD generation, entropy-regularized training, and "
               "OOD detection metrics"};
  app.require_subcommand(1);

  SynthConfig synth_config;
  auto* synth = app.add_subcommand("synth", "write the bundled synthetic benchmark corpus");
  synth->add_option("--out-dir", synth_config.out_dir, "output directory")->required();
  synth->add_option("--seed", synth_config.seed, "generator seed");
  synth->add_option("--sentences", synth_config.sentences_per_domain, "sentences per domain");
  synth->add_option("--classes", synth_config.classes, "IND class count");
  synth->add_option("--dim", synth_config.dim, "word-vector dimension");
  synth->add_option("--overlap", synth_config.eval_overlap,
                    "fraction of the eval-OOD vocabulary shared with IND");
  synth->add_option("--eval-ind-token-rate", synth_config.eval_ind_token_rate,
                    "token rate at which eval-OOD sentences use the shared words");

  ConfigArgs train_args, gen_args, filter_args, detect_args, eval_args, cal_args, pipe_args;
  std::string candidates_path, sweep_spec, checkpoint_path;
  std::string scores_path, preds_path, labels_path;
  std::vector<std::string> run_dirs;
  std::string report_out;

  auto* train_cmd = app.add_subcommand("train", "train a classifier");
  add_config_options(train_cmd, train_args);

  auto* gen_cmd = app.add_subcommand("generate", "generate pseudo-OOD candidates");
  add_config_options(gen_cmd, gen_args);
  gen_cmd->add_option("--n", [&gen_args](const std::vector<std::string>& v) {
    gen_args.overrides.push_back("ngram_order=" + v.back());
    return true;
  }, "n-gram order");
  gen_cmd->add_option("--beta", [&gen_args](const std::vector<std::string>& v) {
    gen_args.overrides.push_back("beta=" + v.back());
    return true;
  }, "bag-of-words boost");
  gen_cmd->add_option("--max-len", [&gen_args](const std::vector<std::string>& v) {
    gen_args.overrides.push_back("max_len=" + v.back());
    return true;
  }, "maximum sentence length");
  gen_cmd->add_option("--samples", [&gen_args](const std::vector<std::string>& v) {
    gen_args.overrides.push_back("samples=" + v.back());
    return true;
  }, "number of seed sentences to draw");
  gen_cmd->add_option("--bow-file", [&gen_args](const std::vector<std::string>& v) {
    for (const auto& f : v) gen_args.overrides.push_back("bow_file=" + f);
    return true;
  }, "bag-of-words file (repeatable; one batch per file)");
  gen_cmd->add_option("--neutral-corpus", [&gen_args](const std::vector<std::string>& v) {
    gen_args.overrides.push_back("neutral_corpus=" + v.back());
    return true;
  }, "extra text for the n-gram model");

  auto* filter_cmd = app.add_subcommand("filter", "boundary-filter generated candidates");
  add_config_options(filter_cmd, filter_args);
  filter_cmd->add_option("--candidates", candidates_path, "candidates.jsonl to filter")
      ->required();
  filter_cmd->add_option("--sweep-t", sweep_spec,
                         "comma-separated shell widths; writes kept counts per width");

  auto* detect_cmd = app.add_subcommand("detect", "score datasets with a trained checkpoint");
  add_config_options(detect_cmd, detect_args);
  detect_cmd->add_option("--checkpoint", checkpoint_path, "classifier checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "compute metrics from score dumps");
  add_config_options(eval_cmd, eval_args);
  eval_cmd->add_option("--scores", scores_path, "scores.csv")->required();
  eval_cmd->add_option("--preds", preds_path, "IND test predictions CSV (enables ECE)");
  eval_cmd->add_option("--labels", labels_path, "IND test labels, one per line");

  auto* cal_cmd = app.add_subcommand("calibrate", "fit a Dirichlet calibration map");
  add_config_options(cal_cmd, cal_args);
  cal_cmd->add_option("--preds", preds_path, "validation predictions CSV")->required();
  cal_cmd->add_option("--labels", labels_path, "validation labels, one per line")->required();
  cal_cmd->add_option("--lambda", [&cal_args](const std::vector<std::string>& v) {
    cal_args.overrides.push_back("lambda=" + v.back());
    return true;
  }, "off-diagonal regularizer weight");
  cal_cmd->add_flag_callback("--auto-lambda",
                             [&cal_args] { cal_args.overrides.push_back("auto_lambda=true"); },
                             "select lambda from a grid by validation NLL");

  auto* report_cmd = app.add_subcommand("report", "comparison table across completed runs");
  report_cmd->add_option("dirs", run_dirs, "run directories containing report.json")
      ->required();
  report_cmd->add_option("--out-dir", report_out, "where to write comparison files");

  auto* pipe_cmd = app.add_subcommand("pipeline", "run a method end to end");
  add_config_options(pipe_cmd, pipe_args);
  pipe_cmd->add_option("--method", [&pipe_args](const std::vector<std::string>& v) {
    pipe_args.overrides.push_back("method=" + v.back());
    return true;
  }, "msp | msp_er | pnpood");
  pipe_cmd->add_option("--out-dir", [&pipe_args](const std::vector<std::string>& v) {
    pipe_args.overrides.push_back("out_dir=" + v.back());
    return true;
  }, "artifact directory");
  pipe_cmd->add_option("--seed", [&pipe_args](const std::vector<std::string>& v) {
    pipe_args.overrides.push_back("seed=" + v.back());
    return true;
  }, "global seed");
  pipe_cmd->add_flag_callback("--skip-filter",
                              [&pipe_args] { pipe_args.overrides.push_back("skip_filter=true"); },
                              "use every generated candidate");
  pipe_cmd->add_option("--alpha", [&pipe_args](const std::vector<std::string>& v) {
    pipe_args.overrides.push_back("alpha=" + v.back());
    return true;
  }, "entropy regularizer weight");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_config);
    if (train_cmd->parsed()) return cmd_train(resolve_config(train_args));
    if (gen_cmd->parsed()) return cmd_generate(resolve_config(gen_args));
    if (filter_cmd->parsed())
      return cmd_filter(resolve_config(filter_args), candidates_path, sweep_spec);
    if (detect_cmd->parsed()) return cmd_detect(resolve_config(detect_args), checkpoint_path);
    if (eval_cmd->parsed())
      return cmd_evaluate(resolve_config(eval_args), scores_path, preds_path, labels_path);
    if (cal_cmd->parsed())
      return cmd_calibrate(resolve_config(cal_args), preds_path, labels_path);
    if (report_cmd->parsed()) return cmd_report(run_dirs, report_out);
    if (pipe_cmd->parsed()) return cmd_pipeline(resolve_config(pipe_args));
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
