#include "pnpood/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pnpood/error.hpp"
#include "pnpood/model.hpp"
#include "pnpood/rng.hpp"

namespace fs = std::filesystem;

namespace pnpood {

std::string method_name(Method method) {
  switch (method) {
    case Method::kMsp: return "msp";
    case Method::kMspEr: return "msp_er";
    case Method::kPnpood: return "pnpood";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "msp") return Method::kMsp;
  if (name == "msp_er" || name == "msp+er") return Method::kMspEr;
  if (name == "pnpood") return Method::kPnpood;
  throw ValidationError("unknown method '" + name + "' (expected msp, msp_er, or pnpood)");
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected integer, got '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected number, got '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected unsigned integer, got '" + value +
                          "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValidationError("config key '" + key + "': expected boolean, got '" + value + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_int(key, item));
  }
  return out;
}

}  // namespace

void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "ind_train") c.ind_train = value;
  else if (key == "ind_val") c.ind_val = value;
  else if (key == "ind_test") c.ind_test = value;
  else if (key == "ood_eval") c.ood_eval = value;
  else if (key == "ood_train") c.ood_train = value;
  else if (key == "attribute_corpus") c.attribute_corpus = value;
  else if (key == "neutral_corpus") c.neutral_corpus = value;
  else if (key == "format") {
    if (value == "jsonl") c.format = FileFormat::kJsonl;
    else if (value == "csv") c.format = FileFormat::kCsv;
    else throw ValidationError("config key 'format': expected jsonl or csv");
  } else if (key == "k") c.k = to_int(key, value);
  else if (key == "embedding_source") {
    if (value == "word_vectors") c.embedding_source = EmbeddingSource::kWordVectors;
    else if (value == "precomputed") c.embedding_source = EmbeddingSource::kPrecomputed;
    else throw ValidationError("config key 'embedding_source': expected word_vectors or precomputed");
  } else if (key == "word_vectors") c.word_vectors = value;
  else if (key.rfind("precomputed_", 0) == 0) c.precomputed[key.substr(12)] = value;
  else if (key == "alpha") c.train.alpha = to_double(key, value);
  else if (key == "learning_rate") c.train.learning_rate = to_double(key, value);
  else if (key == "batch_size") c.train.batch_size = to_int(key, value);
  else if (key == "dropout") c.train.dropout_rate = to_double(key, value);
  else if (key == "epochs") c.train.epochs = to_int(key, value);
  else if (key == "ood_ratio") c.train.ood_ratio = to_double(key, value);
  else if (key == "hidden_dims") c.train.hidden_dims = to_int_list(key, value);
  else if (key == "seed") c.seed = to_u64(key, value);
  else if (key == "ngram_order" || key == "n") c.ngram_order = to_int(key, value);
  else if (key == "ngram_delta") c.ngram_delta = to_double(key, value);
  else if (key == "bow_top_k") c.bow_top_k = to_int(key, value);
  else if (key == "bow_file") c.bow_files.push_back(value);
  else if (key == "seed_tokens") c.gen.seed_token_count = to_int(key, value);
  else if (key == "max_len") c.gen.max_length = to_int(key, value);
  else if (key == "beta" || key == "boost") c.gen.boost = to_double(key, value);
  else if (key == "samples_per_seed") c.gen.samples_per_seed = to_int(key, value);
  else if (key == "samples") c.gen.num_seeds = to_int(key, value);
  else if (key == "filter_t") c.shell.value = to_double(key, value);
  else if (key == "filter_mode") {
    if (value == "absolute") c.shell.mode = ShellMode::kAbsolute;
    else if (value == "relative") c.shell.mode = ShellMode::kRelative;
    else throw ValidationError("config key 'filter_mode': expected absolute or relative");
  } else if (key == "percentile_q") c.percentile_q = to_double(key, value);
  else if (key == "skip_filter") c.skip_filter = to_bool(key, value);
  else if (key == "ece_bins") c.ece_bins = to_int(key, value);
  else if (key == "target_tpr") c.target_tpr = to_double(key, value);
  else if (key == "lambda") c.cal.lambda = to_double(key, value);
  else if (key == "cal_learning_rate") c.cal.learning_rate = to_double(key, value);
  else if (key == "cal_iterations") c.cal.iterations = to_int(key, value);
  else if (key == "auto_lambda") c.auto_lambda = to_bool(key, value);
  else if (key == "method") c.method = parse_method(value);
  else if (key == "out_dir") c.out_dir = value;
  else throw ValidationError("unknown config key '" + key + "'");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected 'key = value'");
    apply_config_entry(config, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return config;
}

nlohmann::json resolved_config_json(const RunConfig& c) {
  nlohmann::json j;
  j["ind_train"] = c.ind_train;
  j["ind_val"] = c.ind_val;
  j["ind_test"] = c.ind_test;
  j["ood_eval"] = c.ood_eval;
  j["ood_train"] = c.ood_train;
  j["attribute_corpus"] = c.attribute_corpus;
  j["neutral_corpus"] = c.neutral_corpus;
  j["format"] = c.format == FileFormat::kJsonl ? "jsonl" : "csv";
  j["k"] = c.k;
  j["embedding_source"] =
      c.embedding_source == EmbeddingSource::kWordVectors ? "word_vectors" : "precomputed";
  j["word_vectors"] = c.word_vectors;
  j["precomputed"] = c.precomputed;
  j["alpha"] = c.train.alpha;
  j["learning_rate"] = c.train.learning_rate;
  j["batch_size"] = c.train.batch_size;
  j["dropout"] = c.train.dropout_rate;
  j["epochs"] = c.train.epochs;
  j["ood_ratio"] = c.train.ood_ratio;
  j["hidden_dims"] = c.train.hidden_dims;
  j["seed"] = c.seed;
  j["ngram_order"] = c.ngram_order;
  j["ngram_delta"] = c.ngram_delta;
  j["bow_top_k"] = c.bow_top_k;
  j["bow_files"] = c.bow_files;
  j["seed_tokens"] = c.gen.seed_token_count;
  j["max_len"] = c.gen.max_length;
  j["boost"] = c.gen.boost;
  j["samples_per_seed"] = c.gen.samples_per_seed;
  j["samples"] = c.gen.num_seeds;
  j["filter_t"] = c.shell.value;
  j["filter_mode"] = c.shell.mode == ShellMode::kAbsolute ? "absolute" : "relative";
  j["percentile_q"] = c.percentile_q;
  j["skip_filter"] = c.skip_filter;
  j["ece_bins"] = c.ece_bins;
  j["target_tpr"] = c.target_tpr;
  j["lambda"] = c.cal.lambda;
  j["cal_learning_rate"] = c.cal.learning_rate;
  j["cal_iterations"] = c.cal.iterations;
  j["auto_lambda"] = c.auto_lambda;
  j["method"] = method_name(c.method);
  j["out_dir"] = c.out_dir;
  return j;
}

namespace {

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string config_digest(const RunConfig& config) {
  return fnv1a_hex(resolved_config_json(config).dump());
}

// ---------------------------------------------------------------------------
// published reference rows (20 Newsgroups domain pairs and the SST block)

namespace {

struct RefRow {
  const char* dataset;
  const char* ind;
  const char* ood;
  Method method;
  double fpr, auroc, aupr;
  double ece, ece_cal;  // negative when not published
};

constexpr RefRow kReferenceRows[] = {
    {"20newsgroups", "computer", "sports", Method::kMsp, 0.72, 0.62, 0.23, 0.56, 0.41},
    {"20newsgroups", "computer", "sports", Method::kMspEr, 0.26, 0.90, 0.64, 0.33, 0.28},
    {"20newsgroups", "computer", "sports", Method::kPnpood, 0.18, 0.92, 0.65, 0.32, 0.26},
    {"20newsgroups", "computer", "politics", Method::kMsp, 0.72, 0.63, 0.24, 0.56, 0.42},
    {"20newsgroups", "computer", "politics", Method::kMspEr, 0.15, 0.92, 0.67, 0.32, 0.287},
    {"20newsgroups", "computer", "politics", Method::kPnpood, 0.11, 0.93, 0.68, 0.31, 0.27},
    {"20newsgroups", "sports", "computer", Method::kMsp, 0.71, 0.63, 0.23, 0.73, 0.60},
    {"20newsgroups", "sports", "computer", Method::kMspEr, 0.32, 0.82, 0.35, 0.40, 0.33},
    {"20newsgroups", "sports", "computer", Method::kPnpood, 0.22, 0.89, 0.51, 0.39, 0.31},
    {"20newsgroups", "sports", "politics", Method::kMsp, 0.76, 0.61, 0.21, 0.73, 0.60},
    {"20newsgroups", "sports", "politics", Method::kMspEr, 0.30, 0.82, 0.36, 0.38, 0.33},
    {"20newsgroups", "sports", "politics", Method::kPnpood, 0.24, 0.87, 0.51, 0.38, 0.32},
    {"20newsgroups", "politics", "computer", Method::kMsp, 0.61, 0.67, 0.25, 0.72, 0.61},
    {"20newsgroups", "politics", "computer", Method::kMspEr, 0.24, 0.91, 0.64, 0.48, 0.41},
    {"20newsgroups", "politics", "computer", Method::kPnpood, 0.20, 0.92, 0.60, 0.45, 0.39},
    {"20newsgroups", "politics", "sports", Method::kMsp, 0.63, 0.67, 0.25, 0.71, 0.62},
    {"20newsgroups", "politics", "sports", Method::kMspEr, 0.42, 0.85, 0.53, 0.47, 0.41},
    {"20newsgroups", "politics", "sports", Method::kPnpood, 0.34, 0.88, 0.56, 0.46, 0.40},
    {"sst", "sst", "multi30k", Method::kMsp, 0.85, 0.54, 0.19, -1, -1},
    {"sst", "sst", "multi30k", Method::kMspEr, 0.47, 0.81, 0.44, -1, -1},
    {"sst", "sst", "multi30k", Method::kPnpood, 0.40, 0.84, 0.48, -1, -1},
    {"sst", "sst", "snli", Method::kMsp, 0.63, 0.73, 0.32, -1, -1},
    {"sst", "sst", "snli", Method::kMspEr, 0.11, 0.95, 0.71, -1, -1},
    {"sst", "sst", "snli", Method::kPnpood, 0.05, 0.97, 0.77, -1, -1},
};

struct RefAcc {
  const char* ind;
  Method method;
  double acc;
};

constexpr RefAcc kReferenceAccuracy[] = {
    {"computer", Method::kMsp, 0.46},   {"computer", Method::kMspEr, 0.47},
    {"computer", Method::kPnpood, 0.48}, {"sports", Method::kMsp, 0.73},
    {"sports", Method::kMspEr, 0.73},    {"sports", Method::kPnpood, 0.74},
    {"politics", Method::kMsp, 0.65},    {"politics", Method::kMspEr, 0.64},
    {"politics", Method::kPnpood, 0.64},
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

nlohmann::json paper_reference_row(const std::string& ind_domain, const std::string& ood_domain,
                                   Method method) {
  const std::string ind = lower(ind_domain);
  const std::string ood = lower(ood_domain);
  const RefRow* match = nullptr;
  for (const auto& row : kReferenceRows)
    if (row.method == method && ind == row.ind && ood == row.ood) match = &row;
  bool exact = match != nullptr;
  if (!match)
    for (const auto& row : kReferenceRows)
      if (row.method == method && std::string(row.ind) == "computer" &&
          std::string(row.ood) == "sports")
        match = &row;

  nlohmann::json j;
  j["dataset"] = match->dataset;
  j["ind_domain"] = match->ind;
  j["ood_domain"] = match->ood;
  j["method"] = method_name(method);
  j["fpr_at_90"] = match->fpr;
  j["auroc"] = match->auroc;
  j["aupr"] = match->aupr;
  if (match->ece >= 0) {
    j["ece"] = match->ece;
    j["ece_after_calibration"] = match->ece_cal;
  }
  for (const auto& acc : kReferenceAccuracy)
    if (acc.method == method && ind == acc.ind) j["ind_accuracy"] = acc.acc;
  j["domain_pair_matched"] = exact;
  j["note"] =
      "published benchmark results for this detector; informational only, desk-scale "
      "synthetic runs are not comparable";
  return j;
}

// ---------------------------------------------------------------------------
// shared run machinery

namespace {

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

struct LoadedData {
  Dataset ind_train, ind_val, ind_test, ood_eval;
  WordVectors wv;  // populated in word-vector mode
  int input_dim = 0;
};

std::vector<SentenceEmbedding> dataset_embeddings(const RunConfig& config, const LoadedData& data,
                                                  const std::string& key,
                                                  const Dataset& dataset) {
  if (config.embedding_source == EmbeddingSource::kWordVectors)
    return embed_dataset(dataset, data.wv);
  auto it = config.precomputed.find(key);
  if (it == config.precomputed.end())
    throw ValidationError("embedding_source is precomputed but no precomputed_" + key +
                          " file is configured");
  auto embeddings = load_precomputed(it->second);
  if (embeddings.size() != dataset.size())
    throw ValidationError("precomputed_" + key + " has " + std::to_string(embeddings.size()) +
                          " rows for " + std::to_string(dataset.size()) + " examples");
  return embeddings;
}

LoadedData load_common(const RunConfig& config) {
  require(!config.ind_train.empty() && !config.ind_val.empty() && !config.ind_test.empty(),
          "IND train/val/test dataset paths are required");
  require(!config.ood_eval.empty(), "an OOD evaluation dataset path is required");
  require(config.k >= 2, "k must be at least 2");

  LoadedData data;
  data.ind_train = load_dataset(config.ind_train, config.format, DatasetRole::kInd, config.k);
  data.ind_val = load_dataset(config.ind_val, config.format, DatasetRole::kInd, config.k);
  data.ind_test = load_dataset(config.ind_test, config.format, DatasetRole::kInd, config.k);
  data.ood_eval = load_dataset(config.ood_eval, config.format, DatasetRole::kOodEval, config.k);
  require(!data.ind_train.examples.empty(), "IND train dataset is empty");
  require(!data.ind_val.examples.empty(), "IND val dataset is empty");
  require(!data.ind_test.examples.empty(), "IND test dataset is empty");
  require(!data.ood_eval.examples.empty(), "OOD eval dataset is empty");

  if (config.embedding_source == EmbeddingSource::kWordVectors) {
    require(!config.word_vectors.empty(), "a word_vectors file is required");
    data.wv = load_word_vectors(config.word_vectors);
    data.input_dim = data.wv.dim;
  } else {
    auto probe = dataset_embeddings(config, data, "ind_train", data.ind_train);
    data.input_dim = static_cast<int>(probe.front().vector.size());
  }
  return data;
}

std::vector<IndExample> to_ind_examples(const Dataset& dataset,
                                        const std::vector<SentenceEmbedding>& embeddings) {
  std::vector<IndExample> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    out.push_back({embeddings[i].vector, dataset.examples[i].class_label});
  return out;
}

struct EvalBundle {
  std::vector<ScoredSample> scores;
  std::vector<std::vector<double>> val_probs;
  std::vector<int> val_labels;
  std::vector<std::vector<double>> test_probs;
  std::vector<int> test_labels;
};

// The one evaluation path shared by all three runners: detection scores,
// detection metrics, ECE before/after Dirichlet calibration, IND accuracy.
struct EvalResult {
  MetricBlock metrics;
  double ind_accuracy = 0.0;
  CalibrationFit cal;
};

EvalBundle detect(const ClassifierParams& params, const RunConfig& config,
                  const LoadedData& data) {
  EvalBundle bundle;
  auto emb_test = dataset_embeddings(config, data, "ind_test", data.ind_test);
  auto emb_val = dataset_embeddings(config, data, "ind_val", data.ind_val);
  auto emb_ood = dataset_embeddings(config, data, "ood_eval", data.ood_eval);

  for (std::size_t i = 0; i < emb_test.size(); ++i) {
    Prediction pred = forward(params, emb_test[i]);
    bundle.scores.push_back({1.0 - msp(pred), false});
    bundle.test_probs.push_back(pred.probs);
    bundle.test_labels.push_back(data.ind_test.examples[i].class_label);
  }
  for (const auto& e : emb_ood) {
    Prediction pred = forward(params, e);
    bundle.scores.push_back({1.0 - msp(pred), true});
  }
  for (std::size_t i = 0; i < emb_val.size(); ++i) {
    Prediction pred = forward(params, emb_val[i]);
    bundle.val_probs.push_back(pred.probs);
    bundle.val_labels.push_back(data.ind_val.examples[i].class_label);
  }
  return bundle;
}

std::vector<EceInput> ece_inputs_from(const std::vector<std::vector<double>>& probs,
                                      const std::vector<int>& labels) {
  std::vector<EceInput> inputs;
  inputs.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    auto arg = std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin();
    inputs.push_back({probs[i][arg], static_cast<int>(arg) == labels[i]});
  }
  return inputs;
}

EvalResult evaluate_run(const EvalBundle& bundle, const RunConfig& config) {
  EvalResult result;
  result.metrics.auroc = auroc(bundle.scores);
  result.metrics.aupr = aupr(bundle.scores);
  result.metrics.fpr_at_90 = fpr_at_tpr(bundle.scores, config.target_tpr);

  // calibration quality is measured on the IND test split; the classifier
  // has no OOD class, so mixing in OOD rows would have no ground truth
  auto test_inputs = ece_inputs_from(bundle.test_probs, bundle.test_labels);
  result.metrics.ece = ece(test_inputs, config.ece_bins);

  result.cal = config.auto_lambda
                   ? fit_dirichlet_auto(bundle.val_probs, bundle.val_labels, config.cal)
                   : fit_dirichlet(bundle.val_probs, bundle.val_labels, config.cal);
  std::vector<std::vector<double>> calibrated;
  calibrated.reserve(bundle.test_probs.size());
  for (const auto& p : bundle.test_probs) calibrated.push_back(pnpood::apply(result.cal.map, p));
  auto cal_inputs = ece_inputs_from(calibrated, bundle.test_labels);
  result.metrics.ece_after_calibration = ece(cal_inputs, config.ece_bins);

  long correct = 0;
  for (std::size_t i = 0; i < bundle.test_probs.size(); ++i) {
    auto arg = std::max_element(bundle.test_probs[i].begin(), bundle.test_probs[i].end()) -
               bundle.test_probs[i].begin();
    if (static_cast<int>(arg) == bundle.test_labels[i]) ++correct;
  }
  result.ind_accuracy =
      bundle.test_probs.empty() ? 0.0
                                : static_cast<double>(correct) / bundle.test_probs.size();
  return result;
}

void save_probs_csv(const std::vector<std::vector<double>>& probs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write predictions: " + path);
  char buf[64];
  for (const auto& row : probs) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

void save_labels(const std::vector<int>& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write labels: " + path);
  for (int l : labels) out << l << '\n';
}

std::string report_csv_row(const ExperimentReport& r, bool header) {
  std::ostringstream out;
  if (header) out << "ind_domain,ood_domain,method,fpr_at_90,auroc,aupr,ece,ece_cal,ind_acc\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  out << r.ind_domain << ',' << r.ood_domain << ',' << method_name(r.method) << ','
      << num(r.metrics.fpr_at_90) << ',' << num(r.metrics.auroc) << ',' << num(r.metrics.aupr)
      << ',' << num(r.metrics.ece) << ',' << num(r.metrics.ece_after_calibration) << ','
      << num(r.ind_accuracy) << '\n';
  return out.str();
}

std::string joined_tags(const std::vector<std::string>& tags) {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) out += "+";
    out += tags[i];
  }
  return out;
}

// artifacts shared by every runner
void persist_common(const RunConfig& config, const ClassifierParams& params,
                    const std::vector<EpochLog>& epochs, const EvalBundle& bundle,
                    const EvalResult& eval, const ExperimentReport& report) {
  const fs::path dir(config.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.resolved.json");
    if (!out) throw ValidationError("cannot write config.resolved.json");
    out << resolved_config_json(config).dump(2) << '\n';
  }
  save_checkpoint(params, (dir / "checkpoint.json").string());
  save_epoch_log(epochs, (dir / "epochs.jsonl").string());
  save_scores_csv(bundle.scores, (dir / "scores.csv").string());
  save_probs_csv(bundle.val_probs, (dir / "preds.val.csv").string());
  save_labels(bundle.val_labels, (dir / "labels.val.txt").string());
  save_probs_csv(bundle.test_probs, (dir / "preds.test.csv").string());
  save_labels(bundle.test_labels, (dir / "labels.test.txt").string());

  auto test_inputs = ece_inputs_from(bundle.test_probs, bundle.test_labels);
  nlohmann::json metrics =
      metrics_report(bundle.scores, test_inputs, config.ece_bins, config.target_tpr);
  metrics["ece_split"] = "ind_test";
  metrics["ece_after_calibration"] = report.metrics.ece_after_calibration;
  metrics["ind_accuracy"] = report.ind_accuracy;
  metrics["seed"] = config.seed;
  {
    std::ofstream out(dir / "metrics.json");
    if (!out) throw ValidationError("cannot write metrics.json");
    out << metrics.dump(2) << '\n';
  }
  save_calibration(eval.cal, (dir / "calibration.json").string());
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw ValidationError("cannot write report.json");
    out << report_json(report).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "report.csv");
    if (!out) throw ValidationError("cannot write report.csv");
    out << report_csv_row(report, true);
  }
}

ExperimentReport finish_run(const RunConfig& config, Method method, const LoadedData& data,
                            const TrainResult& trained, std::vector<std::string> warnings,
                            bool filter_bypassed, std::map<std::string, double> timings) {
  StageTimer timer;
  EvalBundle bundle = detect(trained.params, config, data);
  EvalResult eval = evaluate_run(bundle, config);
  timings["evaluate_s"] = timer.seconds();

  ExperimentReport report;
  report.method = method;
  report.ind_domain = joined_tags(domain_tags(data.ind_train));
  report.ood_domain = joined_tags(domain_tags(data.ood_eval));
  report.metrics = eval.metrics;
  report.ind_accuracy = eval.ind_accuracy;
  report.digest = config_digest(config);
  report.seed = config.seed;
  report.eval_path = kEvalPathId;
  report.eval_path_checksum = eval_path_checksum();
  report.warnings = std::move(warnings);
  report.filter_bypassed = filter_bypassed;
  report.paper_reference = paper_reference_row(report.ind_domain, report.ood_domain, method);
  report.timings = std::move(timings);

  if (!config.out_dir.empty()) persist_common(config, trained.params, trained.log, bundle, eval, report);
  return report;
}

TrainConfig derived_train_config(const RunConfig& config) {
  TrainConfig tc = config.train;
  tc.seed = mix64(config.seed ^ 0x7472616e);
  return tc;
}

}  // namespace

// ---------------------------------------------------------------------------
// runners

ExperimentReport run_baseline_msp(const RunConfig& config) {
  LoadedData data = load_common(config);
  StageTimer timer;

  TrainData td;
  td.k = config.k;
  td.input_dim = data.input_dim;
  td.ind_train = to_ind_examples(data.ind_train,
                                 dataset_embeddings(config, data, "ind_train", data.ind_train));
  td.ind_val =
      to_ind_examples(data.ind_val, dataset_embeddings(config, data, "ind_val", data.ind_val));

  TrainConfig tc = derived_train_config(config);
  tc.alpha = 0.0;  // pure cross-entropy baseline
  TrainResult trained = train(td, tc);

  std::map<std::string, double> timings;
  timings["train_s"] = timer.seconds();
  return finish_run(config, Method::kMsp, data, trained, {}, false, std::move(timings));
}

ExperimentReport run_msp_er(const RunConfig& config) {
  if (config.ood_train.empty())
    throw ValidationError("run_msp_er requires an OOD training dataset (ood_train)");
  LoadedData data = load_common(config);
  StageTimer timer;

  Dataset ood_train =
      load_dataset(config.ood_train, config.format, DatasetRole::kOodEval, config.k);
  if (ood_train.examples.empty())
    throw ValidationError("OOD training dataset is empty: " + config.ood_train);

  std::vector<std::string> warnings;
  {
    auto train_tags = domain_tags(ood_train);
    auto eval_tags = domain_tags(data.ood_eval);
    std::vector<std::string> overlap;
    std::set_intersection(train_tags.begin(), train_tags.end(), eval_tags.begin(),
                          eval_tags.end(), std::back_inserter(overlap));
    if (!overlap.empty()) {
      std::string w = "data leakage: train OOD overlaps eval OOD domain (" +
                      joined_tags(overlap) + ")";
      warnings.push_back(w);
      std::cerr << "warning: " << w << '\n';
    }
  }

  TrainData td;
  td.k = config.k;
  td.input_dim = data.input_dim;
  td.ind_train = to_ind_examples(data.ind_train,
                                 dataset_embeddings(config, data, "ind_train", data.ind_train));
  td.ind_val =
      to_ind_examples(data.ind_val, dataset_embeddings(config, data, "ind_val", data.ind_val));
  for (auto& e : dataset_embeddings(config, data, "ood_train", ood_train))
    td.ood_train.push_back(std::move(e.vector));

  TrainResult trained = train(td, derived_train_config(config));

  std::map<std::string, double> timings;
  timings["train_s"] = timer.seconds();
  return finish_run(config, Method::kMspEr, data, trained, std::move(warnings), false,
                    std::move(timings));
}

ExperimentReport run_pnpood(const RunConfig& config) {
  LoadedData data = load_common(config);
  if (config.embedding_source == EmbeddingSource::kPrecomputed)
    throw ValidationError(
        "pnpood generation requires word vectors; precomputed embeddings cannot cover "
        "generated candidates");
  if (config.bow_files.empty() && config.attribute_corpus.empty())
    throw ValidationError("pnpood needs a bag-of-words source: bow_file or attribute_corpus");

  std::map<std::string, double> timings;
  const fs::path dir(config.out_dir);
  if (!config.out_dir.empty()) fs::create_directories(dir);

  // --- generation ---------------------------------------------------------
  StageTimer gen_timer;
  std::vector<std::vector<std::string>> ngram_corpus;
  for (const auto& ex : data.ind_train.examples) ngram_corpus.push_back(ex.tokens);

  std::vector<std::vector<std::string>> attr_tokens;
  if (!config.attribute_corpus.empty()) {
    Dataset attr =
        load_dataset(config.attribute_corpus, config.format, DatasetRole::kOodEval, config.k);
    for (const auto& ex : attr.examples) attr_tokens.push_back(ex.tokens);
    // the surrogate generator only produces words it has seen, so the
    // attribute text joins the n-gram corpus the way general-language
    // knowledge backs the full-scale generator
    ngram_corpus.insert(ngram_corpus.end(), attr_tokens.begin(), attr_tokens.end());
  }
  if (!config.neutral_corpus.empty()) {
    Dataset neutral =
        load_dataset(config.neutral_corpus, config.format, DatasetRole::kOodEval, config.k);
    for (const auto& ex : neutral.examples) ngram_corpus.push_back(ex.tokens);
  }

  NGramModel model = fit_ngram(ngram_corpus, config.ngram_order, config.ngram_delta);

  std::vector<BagOfWords> bows;
  if (!config.bow_files.empty()) {
    for (const auto& path : config.bow_files) bows.push_back(load_bow(path));
  } else {
    std::vector<std::vector<std::string>> ind_tokens;
    for (const auto& ex : data.ind_train.examples) ind_tokens.push_back(ex.tokens);
    bows.push_back(extract_bow(attr_tokens, ind_tokens, config.bow_top_k));
  }

  GenerationConfig gen = config.gen;
  OodCandidates candidates;
  candidates.dataset.k = config.k;
  candidates.dataset.role = DatasetRole::kOodCandidate;
  for (std::size_t b = 0; b < bows.size(); ++b) {
    gen.rng_seed = mix64(config.seed ^ 0x67656e) + b;
    OodCandidates batch = make_ood_candidates(data.ind_train, model, bows[b], gen);
    for (std::size_t i = 0; i < batch.dataset.examples.size(); ++i) {
      candidates.dataset.examples.push_back(std::move(batch.dataset.examples[i]));
      candidates.provenance.push_back(batch.provenance[i]);
    }
  }
  if (candidates.dataset.examples.empty())
    throw std::runtime_error("generation produced no candidates");
  if (!config.out_dir.empty()) {
    save_candidates(candidates, (dir / "candidates.jsonl").string());
    save_bow(bows.front(), (dir / "bow.txt").string());
  }
  timings["generate_s"] = gen_timer.seconds();

  // --- boundary filter -----------------------------------------------------
  StageTimer filter_timer;
  auto emb_ind = dataset_embeddings(config, data, "ind_train", data.ind_train);
  auto emb_cand = embed_dataset(candidates.dataset, data.wv);

  std::vector<int> kept_indices;
  nlohmann::json freport;
  if (config.skip_filter) {
    for (std::size_t i = 0; i < emb_cand.size(); ++i)
      kept_indices.push_back(static_cast<int>(i));
    freport["bypassed"] = true;
    freport["n_ind"] = data.ind_train.size();
    freport["n_candidates"] = emb_cand.size();
    freport["kept_indices"] = kept_indices;
  } else {
    FilterResult filtered =
        filter_candidates(emb_cand, emb_ind, config.shell, config.percentile_q);
    kept_indices = filtered.kept_indices;
    freport = filter_report(filtered, static_cast<int>(data.ind_train.size()),
                            static_cast<int>(emb_cand.size()));
    freport["bypassed"] = false;
  }
  freport["seed"] = config.seed;
  if (!config.out_dir.empty()) save_filter_report(freport, (dir / "filter.json").string());

  if (kept_indices.empty())
    throw std::runtime_error(
        "boundary filter kept 0 of " + std::to_string(emb_cand.size()) +
        " candidates; widen the shell (raise filter_t or switch filter_mode to relative)");

  if (!config.out_dir.empty()) {
    OodCandidates kept;
    kept.dataset.k = config.k;
    kept.dataset.role = DatasetRole::kOodCandidate;
    for (int i : kept_indices) {
      kept.dataset.examples.push_back(candidates.dataset.examples[i]);
      kept.provenance.push_back(candidates.provenance[i]);
    }
    save_candidates(kept, (dir / "candidates.kept.jsonl").string());
  }
  timings["filter_s"] = filter_timer.seconds();

  // --- training with the kept candidates as OOD ----------------------------
  StageTimer train_timer;
  TrainData td;
  td.k = config.k;
  td.input_dim = data.input_dim;
  td.ind_train = to_ind_examples(data.ind_train, emb_ind);
  td.ind_val =
      to_ind_examples(data.ind_val, dataset_embeddings(config, data, "ind_val", data.ind_val));
  for (int i : kept_indices) td.ood_train.push_back(emb_cand[i].vector);

  TrainResult trained = train(td, derived_train_config(config));
  timings["train_s"] = train_timer.seconds();

  return finish_run(config, Method::kPnpood, data, trained, {}, config.skip_filter,
                    std::move(timings));
}

ExperimentReport run_method(const RunConfig& config) {
  switch (config.method) {
    case Method::kMsp: return run_baseline_msp(config);
    case Method::kMspEr: return run_msp_er(config);
    case Method::kPnpood: return run_pnpood(config);
  }
  throw ValidationError("unknown method");
}

// ---------------------------------------------------------------------------
// reports

nlohmann::json report_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["method"] = method_name(r.method);
  j["ind_domain"] = r.ind_domain;
  j["ood_domain"] = r.ood_domain;
  j["metrics"] = {{"auroc", r.metrics.auroc},
                  {"aupr", r.metrics.aupr},
                  {"fpr_at_90", r.metrics.fpr_at_90},
                  {"ece", r.metrics.ece},
                  {"ece_after_calibration", r.metrics.ece_after_calibration}};
  j["ind_accuracy"] = r.ind_accuracy;
  j["config_digest"] = r.digest;
  j["seed"] = r.seed;
  j["eval_path"] = r.eval_path;
  j["eval_path_checksum"] = r.eval_path_checksum;
  j["warnings"] = r.warnings;
  j["filter_bypassed"] = r.filter_bypassed;
  j["paper_reference"] = r.paper_reference;
  j["timings"] = r.timings;
  return j;
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.method = parse_method(j.at("method").get<std::string>());
  r.ind_domain = j.at("ind_domain").get<std::string>();
  r.ood_domain = j.at("ood_domain").get<std::string>();
  const auto& m = j.at("metrics");
  r.metrics.auroc = m.at("auroc").get<double>();
  r.metrics.aupr = m.at("aupr").get<double>();
  r.metrics.fpr_at_90 = m.at("fpr_at_90").get<double>();
  r.metrics.ece = m.at("ece").get<double>();
  r.metrics.ece_after_calibration = m.at("ece_after_calibration").get<double>();
  r.ind_accuracy = j.at("ind_accuracy").get<double>();
  r.digest = j.value("config_digest", std::string{});
  r.seed = j.value("seed", std::uint64_t{0});
  r.eval_path = j.value("eval_path", std::string{});
  r.eval_path_checksum = j.value("eval_path_checksum", std::string{});
  r.warnings = j.value("warnings", std::vector<std::string>{});
  r.filter_bypassed = j.value("filter_bypassed", false);
  if (j.contains("paper_reference")) r.paper_reference = j["paper_reference"];
  if (j.contains("timings")) r.timings = j["timings"].get<std::map<std::string, double>>();
  return r;
}

Comparison build_report(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw ValidationError("report: no run directories given");

  std::vector<ExperimentReport> reports;
  for (const auto& run_dir : run_dirs) {
    fs::path path = fs::path(run_dir) / "report.json";
    std::ifstream in(path);
    if (!in) throw ValidationError("no report.json in run directory: " + run_dir);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed report in " + run_dir + ": " + e.what());
    }
    reports.push_back(report_from_json(j));
  }

  for (const auto& r : reports)
    if (r.ind_domain.empty() || r.ood_domain.empty())
      throw ValidationError("report: a run is missing its dataset domain tags");

  auto cell = [](const ExperimentReport& r) {
    return r.ind_domain + "|" + r.ood_domain + "|" + method_name(r.method);
  };
  std::map<std::string, const ExperimentReport*> seen;
  for (const auto& r : reports) {
    auto [it, inserted] = seen.emplace(cell(r), &r);
    if (!inserted && it->second->digest != r.digest)
      throw ValidationError("report: inconsistent dataset tags across runs (two '" + cell(r) +
                            "' rows with different configs)");
  }

  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    if (a.ind_domain != b.ind_domain) return a.ind_domain < b.ind_domain;
    if (a.ood_domain != b.ood_domain) return a.ood_domain < b.ood_domain;
    return static_cast<int>(a.method) < static_cast<int>(b.method);
  });

  Comparison comparison;
  {
    std::ostringstream text;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %-10s %-8s %9s %8s %8s %8s %9s %8s\n", "IND", "OOD",
                  "method", "FPR@90 v", "AUROC ^", "AUPR ^", "ECE v", "ECE+cal v", "INDacc ^");
    text << buf;
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof(buf), "%-10s %-10s %-8s %9.4f %8.4f %8.4f %8.4f %9.4f %8.4f\n",
                    r.ind_domain.c_str(), r.ood_domain.c_str(), method_name(r.method).c_str(),
                    r.metrics.fpr_at_90, r.metrics.auroc, r.metrics.aupr, r.metrics.ece,
                    r.metrics.ece_after_calibration, r.ind_accuracy);
      text << buf;
    }
    comparison.text = text.str();
  }
  {
    std::ostringstream csv;
    bool header = true;
    for (const auto& r : reports) {
      csv << report_csv_row(r, header);
      header = false;
    }
    comparison.csv = csv.str();
  }
  comparison.json = nlohmann::json::array();
  for (const auto& r : reports) comparison.json.push_back(report_json(r));
  return comparison;
}

}  // namespace pnpood
