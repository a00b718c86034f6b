#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fewtopics/adam.hpp"
#include "fewtopics/corpus.hpp"
#include "fewtopics/prior_net.hpp"
#include "fewtopics/topic_model.hpp"

// Episodic training: each epoch samples one corpus, a handful of its
// documents, and a word-level support/query split, then takes one Adam step
// on the negative query log-likelihood of the model fitted to the support.

namespace fewtopics {

enum class Method {
  kOurs,   // representation + EM layers
  kNn,     // plain networks, no representation, no EM
  kNnR,    // + representation
  kNnE,    // + EM layers
  kNnF,    // + EM at test time only
  kNnRf,   // + representation and test-time EM
  kDir,    // free Dirichlet parameters
  kDirE,   // free parameters + EM layers
  kDirF,   // free parameters + test-time EM
  kLdaInd, // Gibbs LDA on the target support alone
  kLdaAll, // Gibbs LDA on all training data, support folded in
};

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct MethodTraits {
  bool trains = true;  // false for the Gibbs baselines
  PriorVariant variant = PriorVariant::kFull;
  bool use_em_layers = false;
  bool fine_tune_at_test = false;
};

MethodTraits method_traits(Method method);

struct EpisodeConfig {
  int topics = 20;              // K
  int em_steps = 10;            // T
  int support_docs = 3;         // N
  Scalar support_rate = 0.8;    // R, probability a token lands in support
  int hidden = 256;
  int repr_dim = 256;           // M
  Scalar learning_rate = 1e-3;
  Scalar dropout_rate = 0.1;
  int max_epochs = 1000;
  int patience = 20;            // validations without improvement before stopping
  int validation_interval = 10; // epochs between validations
  int validation_episodes = 50;
  PriorVariant prior_variant = PriorVariant::kFull;
  bool use_em_layers = true;
  bool fine_tune_at_test = false;
  bool log1p_features = false;
  Scalar em_tolerance = 0;  // > 0: stop test-time EM early on small change
  std::uint64_t seed = 0;

  void validate() const;
  void apply(Method method);  // sets prior_variant and the two EM flags

  // EM steps unrolled inside the training loss.
  int train_em_steps() const { return use_em_layers ? em_steps : 0; }
  // EM steps run when fitting a model at test time.
  int test_em_steps() const {
    return (use_em_layers || fine_tune_at_test) ? em_steps : 0;
  }
  PriorNetConfig prior_config(int vocab) const;
};

struct Episode {
  CountMatrix support;
  CountMatrix query;
};

// One corpus, `support_docs` of its documents, one word split. Retries until
// both sides hold at least one token (at most 100 attempts, then a data
// error). Documents are drawn without replacement, or with replacement when
// the corpus is smaller than the request.
Episode sample_episode(const CorpusSet& set, const EpisodeConfig& config, std::mt19937_64& rng);

// Negative query log-likelihood of the model fitted to the support by
// `train_em_steps()` unrolled EM steps under the generated priors.
Scalar episode_loss(const CountMatrix& support, const CountMatrix& query,
                    const PriorNetParams& params, const EpisodeConfig& config, bool training,
                    std::mt19937_64& rng);

// Same loss, plus its gradient for every tensor in params.tensors() order.
Scalar episode_loss_grad(const CountMatrix& support, const CountMatrix& query,
                         const PriorNetParams& params, const EpisodeConfig& config, bool training,
                         std::mt19937_64& rng, std::vector<Matrix>& grads);

struct TrainLog {
  std::vector<Scalar> losses;                        // one entry per epoch
  std::vector<std::pair<int, Scalar>> validations;   // (epochs completed, mean perplexity)
  int best_epoch = -1;
  Scalar best_perplexity = 0;
  Scalar wall_seconds = 0;
};

struct TrainResult {
  PriorNetParams params;
  TrainLog log;
};

// Runs up to max_epochs episodes with one Adam step each. Every
// validation_interval epochs the parameters are scored on a fixed set of
// pre-sampled validation episodes (test-time evaluation, dropout off); the
// best-scoring parameters are returned and training stops early after
// `patience` validations without improvement. An empty validation set
// disables validation and returns the final parameters.
TrainResult train(const CorpusSet& training, const CorpusSet& validation,
                  const EpisodeConfig& config);

struct TargetEval {
  Scalar perplexity = 0;
  TopicModel model;
};

// Fits the topic model to the support under the generated priors with
// test_em_steps() EM steps and scores it on the evaluation counts, which must
// cover the same documents.
TargetEval evaluate_target(const CountMatrix& support, const CountMatrix& eval,
                           const PriorNetParams& params, const EpisodeConfig& config);

// TSV: one row per epoch boundary with the episode loss and, where one was
// computed, the validation perplexity ("-" otherwise).
void write_train_log(const std::string& path, const TrainLog& log);

}  // namespace fewtopics
