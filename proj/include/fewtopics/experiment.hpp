#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fewtopics/corpus.hpp"
#include "fewtopics/lda.hpp"
#include "fewtopics/trainer.hpp"

// Batch experiment driver: a flat key-value config names a dataset, a method,
// and the target/validation category split; run_experiment trains once per
// repetition, evaluates every target corpus, and writes the report files.

namespace fewtopics {

struct ExperimentConfig {
  std::string dataset;
  DatasetPaths paths;
  Method method = Method::kOurs;
  std::vector<std::string> target_categories;
  std::vector<std::string> validation_categories;
  int repetitions = 1;
  std::uint64_t base_seed = 0;
  // Each repetition samples episode.support_docs documents from every target
  // corpus and holds out this fraction of their words for scoring.
  Scalar heldout = 0.2;
  std::string out_dir;
  bool save_models = false;
  EpisodeConfig episode;
  LdaConfig lda;

  void validate() const;
};

// Flat "key value" lines; '#' starts a comment, the value runs to the end of
// the line. List values (the category keys) are space-separated. Unknown keys
// and malformed values are parse errors; missing required keys surface later
// through validate().
ExperimentConfig parse_experiment_config(const std::string& path);

struct RepetitionRow {
  std::string target;
  int repetition = 0;
  Scalar perplexity = 0;
  bool ok = false;
  std::string message;  // failure description when not ok
  Scalar train_seconds = 0;
  Scalar eval_seconds = 0;
};

struct RunReport {
  std::vector<RepetitionRow> rows;  // repetition-major, target order within
  int failures = 0;
  std::string results_path;
};

// Executes the configured experiment: loads the dataset, partitions the
// categories, and per repetition r (seed = base_seed + r) trains if the
// method needs it and scores every target. Writes results.tsv (deterministic,
// byte-identical across reruns), timings.tsv (wall-clock sidecar), and
// trainlog_rep<r>.tsv for training methods into out_dir. Failed repetitions
// become report comments and count as failures. FEWSHOT_THREADS > 1 runs
// repetitions concurrently; rows are still emitted in repetition order.
RunReport run_experiment(const ExperimentConfig& config);

struct PrepareSummary {
  int corpora = 0;
  std::vector<std::pair<std::string, int>> docs_per_corpus;
  int vocab = 0;
  FilterReport filter;
};

// load -> filter -> write canonical files under out paths.
PrepareSummary prepare_dataset(const DatasetPaths& in, const DatasetPaths& out,
                               int min_doc_terms, int min_term_docs);

}  // namespace fewtopics
