#include "fewtopics/experiment.hpp"

#include <atomic>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "fewtopics/prior_net.hpp"
#include "fewtopics/topic_model.hpp"

namespace fewtopics {
namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> tokens;
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

class ValueParser {
 public:
  ValueParser(const std::string& path, int line, const std::string& key, const std::string& value)
      : path_(path), line_(line), key_(key), value_(value) {}

  Scalar number() const {
    std::istringstream in(value_);
    Scalar v = 0;
    if (!(in >> v) || !done(in)) fail("expected a number");
    return v;
  }

  int integer() const {
    std::istringstream in(value_);
    long long v = 0;
    if (!(in >> v) || !done(in)) fail("expected an integer");
    return static_cast<int>(v);
  }

  std::uint64_t seed() const {
    std::istringstream in(value_);
    unsigned long long v = 0;
    if (!(in >> v) || !done(in)) fail("expected a non-negative integer");
    return v;
  }

  bool flag() const {
    if (value_ == "true" || value_ == "1") return true;
    if (value_ == "false" || value_ == "0") return false;
    fail("expected true/false");
    return false;
  }

 private:
  static bool done(std::istringstream& in) {
    std::string rest;
    return !(in >> rest);
  }

  [[noreturn]] void fail(const char* what) const {
    throw ParseError(path_, line_, key_ + ": " + what + ", got \"" + value_ + "\"");
  }

  const std::string& path_;
  int line_;
  const std::string& key_;
  const std::string& value_;
};

std::string format_scalar(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

int env_threads() {
  const char* raw = std::getenv("FEWSHOT_THREADS");
  if (raw == nullptr) return 1;
  int v = std::atoi(raw);
  return v < 1 ? 1 : v;
}

struct RepetitionOutcome {
  std::vector<RepetitionRow> rows;
};

struct Partition {
  CorpusSet training;
  CorpusSet validation;
  std::vector<Corpus> targets;
};

Partition partition_categories(const CorpusSet& set, const ExperimentConfig& config) {
  std::set<std::string> targets(config.target_categories.begin(), config.target_categories.end());
  std::set<std::string> validation(config.validation_categories.begin(),
                                   config.validation_categories.end());
  if (targets.size() != config.target_categories.size())
    throw ConfigError("duplicate target category");
  if (validation.size() != config.validation_categories.size())
    throw ConfigError("duplicate validation category");
  for (const auto& name : targets)
    if (validation.count(name)) throw ConfigError("category in both target and validation: " + name);

  std::set<std::string> known;
  for (const Corpus& corpus : set.corpora) known.insert(corpus.name);
  for (const auto& name : config.target_categories)
    if (!known.count(name)) throw ConfigError("unknown target category: " + name);
  for (const auto& name : config.validation_categories)
    if (!known.count(name)) throw ConfigError("unknown validation category: " + name);

  Partition part;
  part.training.vocab = set.vocab;
  part.validation.vocab = set.vocab;
  for (const Corpus& corpus : set.corpora) {
    if (targets.count(corpus.name)) continue;
    if (validation.count(corpus.name))
      part.validation.corpora.push_back(corpus);
    else
      part.training.corpora.push_back(corpus);
  }
  // targets keep the order the config listed them in
  for (const auto& name : config.target_categories)
    for (const Corpus& corpus : set.corpora)
      if (corpus.name == name) part.targets.push_back(corpus);
  return part;
}

RepetitionOutcome run_repetition(int rep, const ExperimentConfig& config, const Partition& part) {
  using clock = std::chrono::steady_clock;
  RepetitionOutcome out;
  out.rows.resize(part.targets.size());
  for (std::size_t t = 0; t < part.targets.size(); ++t) {
    out.rows[t].target = part.targets[t].name;
    out.rows[t].repetition = rep;
  }

  std::uint64_t rep_seed = config.base_seed + static_cast<std::uint64_t>(rep);
  MethodTraits traits = method_traits(config.method);

  PriorNetParams params;
  Scalar train_seconds = 0;
  if (traits.trains) {
    EpisodeConfig episode = config.episode;
    episode.apply(config.method);
    episode.seed = rep_seed;
    try {
      TrainResult trained = train(part.training, part.validation, episode);
      params = trained.params;
      train_seconds = trained.log.wall_seconds;
      write_train_log(config.out_dir + "/trainlog_rep" + std::to_string(rep) + ".tsv",
                      trained.log);
      if (config.save_models)
        save_prior_net(config.out_dir + "/prior_rep" + std::to_string(rep) + ".bin", params);
    } catch (const std::exception& e) {
      for (auto& row : out.rows) row.message = std::string("training failed: ") + e.what();
      return out;
    }
  }

  for (std::size_t t = 0; t < part.targets.size(); ++t) {
    RepetitionRow& row = out.rows[t];
    row.train_seconds = train_seconds;
    try {
      std::mt19937_64 split_rng(
          mix_seed(rep_seed, SeedStream::kTargetSample, static_cast<std::uint64_t>(t)));
      CountMatrix target_docs =
          sample_documents(part.targets[t].counts, config.episode.support_docs, split_rng);
      WordSplit split = make_target_split(target_docs, config.heldout, split_rng);

      auto start = clock::now();
      TopicModel model;
      if (traits.trains) {
        EpisodeConfig episode = config.episode;
        episode.apply(config.method);
        episode.seed = rep_seed;
        TargetEval eval = evaluate_target(split.support, split.query, params, episode);
        row.perplexity = eval.perplexity;
        model = eval.model;
      } else {
        DataSplit data;
        data.training = part.training;
        data.validation = part.validation;
        data.target_name = part.targets[t].name;
        data.target_support = split.support;
        data.target_eval = split.query;
        LdaMode mode = config.method == Method::kLdaAll ? LdaMode::kAll : LdaMode::kIndividual;
        std::mt19937_64 gibbs_rng(
            mix_seed(rep_seed, SeedStream::kGibbs, static_cast<std::uint64_t>(t)));
        LdaResult result =
            lda_baseline(mode, data, config.episode.topics, config.lda, gibbs_rng);
        row.perplexity = result.perplexity;
        model = result.model;
      }
      row.eval_seconds = std::chrono::duration<Scalar>(clock::now() - start).count();
      row.ok = true;
      if (config.save_models)
        save_topic_model(config.out_dir + "/model_rep" + std::to_string(rep) + "_" +
                             part.targets[t].name + ".txt",
                         model, part.training.vocab);
    } catch (const std::exception& e) {
      row.ok = false;
      row.message = e.what();
    }
  }
  return out;
}

void write_results(const std::string& path, const ExperimentConfig& config,
                   const std::vector<RepetitionOutcome>& outcomes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "# method\tdataset\ttarget\trepetition\tperplexity\n";

  Scalar sum = 0, sum_sq = 0;
  int n = 0;
  for (const auto& outcome : outcomes) {
    for (const auto& row : outcome.rows) {
      if (row.ok) {
        out << to_string(config.method) << '\t' << config.dataset << '\t' << row.target << '\t'
            << row.repetition << '\t' << format_scalar(row.perplexity) << '\n';
        sum += row.perplexity;
        sum_sq += row.perplexity * row.perplexity;
        ++n;
      } else {
        out << "# FAILED repetition " << row.repetition << " target " << row.target << ": "
            << row.message << '\n';
      }
    }
  }

  if (n == 0) {
    out << "# no successful rows\n";
    return;
  }
  Scalar mean = sum / n;
  Scalar stderr_mean = 0;
  if (n > 1) {
    Scalar var = (sum_sq - n * mean * mean) / (n - 1);
    stderr_mean = std::sqrt(std::max(var, Scalar(0)) / n);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.6f±%.6f", mean, stderr_mean);
  out << to_string(config.method) << '\t' << config.dataset << "\tall\t-\t" << buf << '\n';
}

void write_timings(const std::string& path, const std::vector<RepetitionOutcome>& outcomes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "# target\trepetition\ttrain_seconds\teval_seconds\n";
  char buf[96];
  for (const auto& outcome : outcomes)
    for (const auto& row : outcome.rows) {
      std::snprintf(buf, sizeof(buf), "%.3f\t%.3f", row.train_seconds, row.eval_seconds);
      out << row.target << '\t' << row.repetition << '\t' << buf << '\n';
    }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw ConfigError("dataset name is required");
  if (paths.docword.empty() || paths.vocab.empty() || paths.labels.empty())
    throw ConfigError("docword, vocab, and labels paths are required");
  if (out_dir.empty()) throw ConfigError("out_dir is required");
  if (target_categories.empty()) throw ConfigError("at least one target category is required");
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (!(heldout > 0) || !(heldout < 1)) throw ConfigError("heldout must lie in (0, 1)");
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);

  ExperimentConfig config;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;

    auto gap = line.find_first_of(" \t");
    std::string key = line.substr(0, gap);
    std::string value = gap == std::string::npos ? "" : trim(line.substr(gap));
    if (value.empty()) throw ParseError(path, line_no, key + ": missing value");
    ValueParser parse(path, line_no, key, value);

    if (key == "dataset") config.dataset = value;
    else if (key == "docword") config.paths.docword = value;
    else if (key == "vocab") config.paths.vocab = value;
    else if (key == "labels") config.paths.labels = value;
    else if (key == "method") {
      try {
        config.method = method_from_string(value);
      } catch (const ConfigError& e) {
        throw ParseError(path, line_no, e.what());
      }
    } else if (key == "target_categories") config.target_categories = split_tokens(value);
    else if (key == "validation_categories") config.validation_categories = split_tokens(value);
    else if (key == "repetitions") config.repetitions = parse.integer();
    else if (key == "base_seed") config.base_seed = parse.seed();
    else if (key == "heldout") config.heldout = parse.number();
    else if (key == "out_dir") config.out_dir = value;
    else if (key == "save_models") config.save_models = parse.flag();
    else if (key == "topics") config.episode.topics = parse.integer();
    else if (key == "em_steps") config.episode.em_steps = parse.integer();
    else if (key == "support_docs") config.episode.support_docs = parse.integer();
    else if (key == "support_rate") config.episode.support_rate = parse.number();
    else if (key == "hidden") config.episode.hidden = parse.integer();
    else if (key == "repr_dim") config.episode.repr_dim = parse.integer();
    else if (key == "learning_rate") config.episode.learning_rate = parse.number();
    else if (key == "dropout_rate") config.episode.dropout_rate = parse.number();
    else if (key == "max_epochs") config.episode.max_epochs = parse.integer();
    else if (key == "patience") config.episode.patience = parse.integer();
    else if (key == "validation_interval") config.episode.validation_interval = parse.integer();
    else if (key == "validation_episodes") config.episode.validation_episodes = parse.integer();
    else if (key == "log1p_features") config.episode.log1p_features = parse.flag();
    else if (key == "em_tolerance") config.episode.em_tolerance = parse.number();
    else if (key == "lda_sweeps") config.lda.sweeps = parse.integer();
    else if (key == "lda_burn_in") config.lda.burn_in = parse.integer();
    else if (key == "lda_refit_every") config.lda.refit_every = parse.integer();
    else if (key == "lda_alpha0") config.lda.alpha0 = parse.number();
    else if (key == "lda_beta0") config.lda.beta0 = parse.number();
    else throw ParseError(path, line_no, "unknown key \"" + key + "\"");
  }
  return config;
}

RunReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  MethodTraits traits = method_traits(config.method);
  if (traits.trains) {
    EpisodeConfig episode = config.episode;
    episode.apply(config.method);
    episode.validate();
  }

  CorpusSet set = load_corpus(config.paths);
  Partition part = partition_categories(set, config);
  if (part.training.corpora.empty() && (traits.trains || config.method == Method::kLdaAll))
    throw ConfigError("no training categories left for a method that needs them");

  std::filesystem::create_directories(config.out_dir);

  std::vector<RepetitionOutcome> outcomes(config.repetitions);
  int threads = std::min(env_threads(), config.repetitions);
  if (threads <= 1) {
    for (int r = 0; r < config.repetitions; ++r) outcomes[r] = run_repetition(r, config, part);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < config.repetitions; r = next.fetch_add(1))
          outcomes[r] = run_repetition(r, config, part);
      });
    for (auto& worker : pool) worker.join();
  }

  RunReport report;
  report.results_path = config.out_dir + "/results.tsv";
  for (const auto& outcome : outcomes)
    for (const auto& row : outcome.rows) {
      report.rows.push_back(row);
      if (!row.ok) ++report.failures;
    }
  write_results(report.results_path, config, outcomes);
  write_timings(config.out_dir + "/timings.tsv", outcomes);
  return report;
}

PrepareSummary prepare_dataset(const DatasetPaths& in, const DatasetPaths& out,
                               int min_doc_terms, int min_term_docs) {
  CorpusSet set = load_corpus(in);
  PrepareSummary summary;
  summary.filter = filter_corpus(set, min_doc_terms, min_term_docs);
  for (const std::string& path : {out.docword, out.vocab, out.labels}) {
    std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
  }
  write_corpus(set, out);
  summary.corpora = static_cast<int>(set.corpora.size());
  for (const Corpus& corpus : set.corpora)
    summary.docs_per_corpus.emplace_back(corpus.name, corpus.counts.docs);
  summary.vocab = set.vocab_size();
  return summary;
}

}  // namespace fewtopics
