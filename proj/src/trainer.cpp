#include "fewtopics/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace fewtopics {

std::string to_string(Method method) {
  switch (method) {
    case Method::kOurs: return "ours";
    case Method::kNn: return "nn";
    case Method::kNnR: return "nn-r";
    case Method::kNnE: return "nn-e";
    case Method::kNnF: return "nn-f";
    case Method::kNnRf: return "nn-rf";
    case Method::kDir: return "dir";
    case Method::kDirE: return "dir-e";
    case Method::kDirF: return "dir-f";
    case Method::kLdaInd: return "lda-ind";
    case Method::kLdaAll: return "lda-all";
  }
  throw ContractError("unknown method");
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::kOurs, Method::kNn, Method::kNnR, Method::kNnE, Method::kNnF,
                   Method::kNnRf, Method::kDir, Method::kDirE, Method::kDirF, Method::kLdaInd,
                   Method::kLdaAll})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown method '" + name + "'");
}

MethodTraits method_traits(Method method) {
  switch (method) {
    case Method::kOurs: return {true, PriorVariant::kFull, true, false};
    case Method::kNn: return {true, PriorVariant::kNoRepr, false, false};
    case Method::kNnR: return {true, PriorVariant::kFull, false, false};
    case Method::kNnE: return {true, PriorVariant::kNoRepr, true, false};
    case Method::kNnF: return {true, PriorVariant::kNoRepr, false, true};
    case Method::kNnRf: return {true, PriorVariant::kFull, false, true};
    case Method::kDir: return {true, PriorVariant::kDirect, false, false};
    case Method::kDirE: return {true, PriorVariant::kDirect, true, false};
    case Method::kDirF: return {true, PriorVariant::kDirect, false, true};
    case Method::kLdaInd: return {false, PriorVariant::kDirect, false, false};
    case Method::kLdaAll: return {false, PriorVariant::kDirect, false, false};
  }
  throw ContractError("unknown method");
}

void EpisodeConfig::validate() const {
  if (topics < 1) throw ConfigError("topics must be at least 1");
  if (em_steps < 0) throw ConfigError("em_steps must be non-negative");
  if (support_docs < 1) throw ConfigError("support_docs must be at least 1");
  if (!(support_rate > 0.0 && support_rate < 1.0))
    throw ConfigError("support_rate must lie strictly between 0 and 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must lie in [0, 1)");
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (validation_interval < 1) throw ConfigError("validation_interval must be at least 1");
  if (validation_episodes < 1) throw ConfigError("validation_episodes must be at least 1");
  if (prior_variant != PriorVariant::kDirect && hidden < 1)
    throw ConfigError("hidden must be at least 1");
  if (repr_dim < 0) throw ConfigError("repr_dim must be non-negative");
  if (em_tolerance < 0.0) throw ConfigError("em_tolerance must be non-negative");
}

void EpisodeConfig::apply(Method method) {
  MethodTraits traits = method_traits(method);
  if (!traits.trains) throw ConfigError(to_string(method) + " does not train prior networks");
  prior_variant = traits.variant;
  use_em_layers = traits.use_em_layers;
  fine_tune_at_test = traits.fine_tune_at_test;
}

PriorNetConfig EpisodeConfig::prior_config(int vocab) const {
  PriorNetConfig cfg;
  cfg.variant = prior_variant;
  cfg.vocab = vocab;
  cfg.topics = topics;
  cfg.repr_dim = repr_dim;
  cfg.hidden = hidden;
  cfg.log1p_features = log1p_features;
  cfg.seed = seed;
  return cfg;
}

namespace {

struct LossBuild {
  ad::Graph graph;
  PriorVars vars;
  ad::Var loss;
};

void build_episode_loss(LossBuild& build, const CountMatrix& support, const CountMatrix& query,
                        const PriorNetParams& params, const EpisodeConfig& config, bool training,
                        std::mt19937_64& rng) {
  if (support.terms != params.config.vocab || query.terms != params.config.vocab)
    throw ConfigError("episode vocabulary does not match these parameters");
  if (support.docs != query.docs)
    throw DimensionError("support and query must cover the same documents");
  Matrix support_dense = support.dense();
  build.vars = insert_params(build.graph, params);
  PriorVarPair priors = generate_priors(build.graph, support_dense, build.vars, params.config,
                                        config.dropout_rate, training, rng);
  EmVars state =
      unroll_em(build.graph, support_dense, priors.alpha, priors.beta, config.train_em_steps());
  ad::Var ll = log_likelihood_var(build.graph, query.dense(), state);
  build.loss = ad::cmul(ll, -1.0);
}

}  // namespace

Episode sample_episode(const CorpusSet& set, const EpisodeConfig& config, std::mt19937_64& rng) {
  if (set.corpora.empty()) throw DataError("cannot sample an episode from an empty corpus set");
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::uniform_int_distribution<size_t> pick(0, set.corpora.size() - 1);
    const CountMatrix& counts = set.corpora[pick(rng)].counts;
    if (counts.docs < 1) throw DataError("corpus with zero documents");
    CountMatrix chosen = sample_documents(counts, config.support_docs, rng);
    WordSplit split = split_words(chosen, config.support_rate, rng);
    if (split.support.total_tokens() > 0 && split.query.total_tokens() > 0)
      return {std::move(split.support), std::move(split.query)};
  }
  throw DataError("could not sample an episode with tokens on both sides in 100 attempts");
}

Scalar episode_loss(const CountMatrix& support, const CountMatrix& query,
                    const PriorNetParams& params, const EpisodeConfig& config, bool training,
                    std::mt19937_64& rng) {
  LossBuild build;
  build_episode_loss(build, support, query, params, config, training, rng);
  return build.graph.scalar_value(build.loss);
}

Scalar episode_loss_grad(const CountMatrix& support, const CountMatrix& query,
                         const PriorNetParams& params, const EpisodeConfig& config, bool training,
                         std::mt19937_64& rng, std::vector<Matrix>& grads) {
  LossBuild build;
  build_episode_loss(build, support, query, params, config, training, rng);
  grads = ad::gradients(build.loss, build.vars.all);
  return build.graph.scalar_value(build.loss);
}

TrainResult train(const CorpusSet& training, const CorpusSet& validation,
                  const EpisodeConfig& config) {
  config.validate();
  if (training.corpora.empty()) throw DataError("training set has no corpora");
  for (const Corpus& corpus : training.corpora)
    if (corpus.counts.docs < 1) throw DataError("training corpus '" + corpus.name + "' is empty");
  for (const Corpus& corpus : validation.corpora)
    if (corpus.counts.docs < 1)
      throw DataError("validation corpus '" + corpus.name + "' is empty");

  auto started = std::chrono::steady_clock::now();
  TrainResult result;
  result.params = PriorNetParams::init(config.prior_config(training.vocab_size()));
  if (config.max_epochs == 0) {
    result.log.wall_seconds =
        std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - started).count();
    return result;
  }

  std::vector<Episode> val_episodes;
  if (!validation.corpora.empty()) {
    std::mt19937_64 val_rng(mix_seed(config.seed, SeedStream::kValidation));
    val_episodes.reserve(static_cast<size_t>(config.validation_episodes));
    for (int i = 0; i < config.validation_episodes; ++i)
      val_episodes.push_back(sample_episode(validation, config, val_rng));
  }

  auto tensors = result.params.tensors();
  std::vector<Matrix*> leaves;
  for (auto& [name, tensor] : tensors) leaves.push_back(tensor);
  ad::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  ad::AdamState adam(adam_cfg, std::span<const Matrix* const>(leaves.data(), leaves.size()));

  PriorNetParams best = result.params;
  Scalar best_perplexity = std::numeric_limits<Scalar>::infinity();
  int best_epoch = -1;
  int since_best = 0;

  auto mean_validation_perplexity = [&]() {
    Scalar total = 0;
    for (const Episode& episode : val_episodes)
      total += evaluate_target(episode.support, episode.query, result.params, config).perplexity;
    return total / static_cast<Scalar>(val_episodes.size());
  };

  auto record_validation = [&](int epochs_done) {
    Scalar perp = mean_validation_perplexity();
    result.log.validations.emplace_back(epochs_done, perp);
    if (perp < best_perplexity) {
      best_perplexity = perp;
      best_epoch = epochs_done;
      best = result.params;
      since_best = 0;
    } else {
      ++since_best;
    }
    return since_best >= config.patience;
  };

  if (!val_episodes.empty()) record_validation(0);

  std::vector<Matrix> grads;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, SeedStream::kEpisode,
                                 static_cast<std::uint64_t>(epoch)));
    Episode episode = sample_episode(training, config, rng);
    Scalar loss =
        episode_loss_grad(episode.support, episode.query, result.params, config, true, rng, grads);
    adam_step(std::span<Matrix* const>(leaves.data(), leaves.size()), grads, adam);
    result.log.losses.push_back(loss);
    if (!val_episodes.empty() && (epoch + 1) % config.validation_interval == 0)
      if (record_validation(epoch + 1)) break;
  }

  if (best_epoch >= 0) {
    result.params = std::move(best);
    result.log.best_epoch = best_epoch;
    result.log.best_perplexity = best_perplexity;
  }
  result.log.wall_seconds =
      std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - started).count();
  return result;
}

TargetEval evaluate_target(const CountMatrix& support, const CountMatrix& eval,
                           const PriorNetParams& params, const EpisodeConfig& config) {
  if (support.terms != params.config.vocab || eval.terms != params.config.vocab)
    throw ConfigError("target vocabulary does not match these parameters");
  if (support.docs != eval.docs)
    throw DimensionError("support and evaluation must cover the same documents");
  std::mt19937_64 unused(0);  // dropout is off outside training
  PriorPair priors = generate_priors_value(support.dense(), params, 0.0, false, unused);
  EmOptions options;
  options.steps = config.test_em_steps();
  options.tolerance = config.em_tolerance;
  TargetEval out;
  out.model = run_em(support, priors, options);
  out.perplexity = perplexity(eval, out.model);
  return out;
}

void write_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write training log: " + path);
  out << "epoch\tloss\tval_perplexity\n";
  size_t next_val = 0;
  char buffer[64];
  auto format = [&](Scalar v) {
    std::snprintf(buffer, sizeof buffer, "%.10g", v);
    return std::string(buffer);
  };
  int last_epoch = static_cast<int>(log.losses.size());
  for (int epochs_done = 0; epochs_done <= last_epoch; ++epochs_done) {
    std::string loss = epochs_done == 0 ? "-" : format(log.losses[static_cast<size_t>(epochs_done - 1)]);
    std::string val = "-";
    if (next_val < log.validations.size() && log.validations[next_val].first == epochs_done) {
      val = format(log.validations[next_val].second);
      ++next_val;
    }
    if (epochs_done == 0 && val == "-") continue;  // no initial validation, skip the empty row
    out << epochs_done << "\t" << loss << "\t" << val << "\n";
  }
  if (!out) throw IoError("failed writing training log: " + path);
}

}  // namespace fewtopics
