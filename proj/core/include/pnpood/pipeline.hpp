#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnpood/calibrate.hpp"
#include "pnpood/corpus.hpp"
#include "pnpood/embed.hpp"
#include "pnpood/filter.hpp"
#include "pnpood/generate.hpp"
#include "pnpood/metrics.hpp"
#include "pnpood/train.hpp"

namespace pnpood {

enum class Method { kMsp, kMspEr, kPnpood };

std::string method_name(Method method);
Method parse_method(const std::string& name);

enum class EmbeddingSource { kWordVectors, kPrecomputed };

/// Full configuration for one experiment run. Loaded from a `key = value`
/// file (see the README for the schema); every key can be overridden on
/// the command line.
struct RunConfig {
  // datasets
  std::string ind_train, ind_val, ind_test;
  std::string ood_eval;
  std::string ood_train;         // entropy-regularized baseline's OOD source
  std::string attribute_corpus;  // bag-of-words source; also n-gram text
  std::string neutral_corpus;    // extra n-gram text
  FileFormat format = FileFormat::kJsonl;
  int k = 0;

  // embeddings
  EmbeddingSource embedding_source = EmbeddingSource::kWordVectors;
  std::string word_vectors;
  std::map<std::string, std::string> precomputed;  // dataset key -> embedding file

  TrainConfig train;

  // generation
  GenerationConfig gen;
  int ngram_order = 3;
  double ngram_delta = 0.1;
  int bow_top_k = 50;
  std::vector<std::string> bow_files;  // overrides extraction when non-empty

  // boundary filter
  ShellSpec shell;
  double percentile_q = 0.95;
  bool skip_filter = false;

  // evaluation and calibration
  int ece_bins = kDefaultEceBins;
  double target_tpr = 0.90;
  CalibrationConfig cal;
  bool auto_lambda = false;

  Method method = Method::kPnpood;
  std::uint64_t seed = 0;  // global; stage seeds are derived from it
  std::string out_dir;
};

RunConfig load_run_config(const std::string& path);

/// Applies one `key = value` assignment; shared by the file loader and the
/// CLI override path. Throws ValidationError on unknown keys or bad values.
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

nlohmann::json resolved_config_json(const RunConfig& config);

/// FNV-1a 64 of the resolved config dump, hex.
std::string config_digest(const RunConfig& config);

struct MetricBlock {
  double auroc = 0.0;
  double aupr = 0.0;
  double fpr_at_90 = 0.0;
  double ece = 0.0;
  double ece_after_calibration = 0.0;
};

struct ExperimentReport {
  Method method = Method::kMsp;
  std::string ind_domain;
  std::string ood_domain;
  MetricBlock metrics;
  double ind_accuracy = 0.0;
  std::string digest;
  std::uint64_t seed = 0;
  std::string eval_path;
  std::string eval_path_checksum;
  std::vector<std::string> warnings;
  bool filter_bypassed = false;
  nlohmann::json paper_reference;
  std::map<std::string, double> timings;  // seconds per stage; excluded from determinism
};

/// Trains with alpha = 0 and no OOD data; detection score is 1 - msp.
ExperimentReport run_baseline_msp(const RunConfig& config);

/// Trains the combined objective on real out-domain data (config.ood_train).
/// Emits a data-leakage warning when the OOD training domains overlap the
/// evaluation domains.
ExperimentReport run_msp_er(const RunConfig& config);

/// Generates attribute-steered candidates, filters them to the cluster
/// boundary shell, and trains the combined objective on the kept ones. All
/// intermediate artifacts are persisted under config.out_dir.
ExperimentReport run_pnpood(const RunConfig& config);

/// Dispatches on config.method.
ExperimentReport run_method(const RunConfig& config);

nlohmann::json report_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

/// Comparison across completed runs: one row per (IND domain, OOD domain,
/// method).
struct Comparison {
  std::string text;
  std::string csv;
  nlohmann::json json;
};

/// Reads report.json from each run directory. Errors when no runs are given
/// or when two runs claim the same (domains, method) cell with different
/// results.
Comparison build_report(const std::vector<std::string>& run_dirs);

/// Published reference row for (ind, ood, method) from the original
/// 20 Newsgroups / SST evaluations of these detectors; informational
/// metadata only. Falls back to the computer->sports block when the domain
/// pair has no published row.
nlohmann::json paper_reference_row(const std::string& ind_domain, const std::string& ood_domain,
                                   Method method);

}  // namespace pnpood
