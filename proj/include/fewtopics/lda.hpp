#pragma once

#include <random>
#include <utility>
#include <vector>

#include "fewtopics/corpus.hpp"
#include "fewtopics/topic_model.hpp"

// Collapsed Gibbs sampling for latent Dirichlet allocation with symmetric
// Dirichlet hyperparameters fitted by fixed-point iteration. Serves as the
// classical baseline: either trained on the target support alone, or trained
// on all training corpora with the support folded in under frozen topics.

namespace fewtopics {

// Digamma via the recurrence below 10 and the asymptotic series above.
Scalar digamma(Scalar x);

struct GibbsState {
  int topics = 0;
  int vocab = 0;
  Scalar alpha = 0;  // symmetric document-topic concentration
  Scalar beta = 0;   // symmetric topic-term concentration

  // one entry per token occurrence
  std::vector<int> token_doc;
  std::vector<int> token_term;
  std::vector<int> token_topic;

  CountTable n_dk;  // docs x topics
  CountTable n_kj;  // topics x vocab
  std::vector<std::int64_t> n_d;
  std::vector<std::int64_t> n_k;
};

// Expands counts into tokens with uniformly random topic assignments.
GibbsState init_gibbs(const CountMatrix& counts, int topics, Scalar alpha0, Scalar beta0,
                      std::mt19937_64& rng);

// One pass over every token: remove it from the tables, draw a topic with
// probability proportional to (n_dk + alpha)(n_kj + beta)/(n_k + J beta),
// put it back.
void gibbs_sweep(GibbsState& state, std::mt19937_64& rng);

// True when the count tables equal the marginals of the token assignments.
bool tables_consistent(const GibbsState& state);

// Symmetric fixed-point updates of alpha from n_dk and beta from n_kj, each
// iterated to convergence (at most 1000 steps, clamped to [1e-5, 1e3], warning
// on stderr when the cap is hit). Updates the state in place and returns the
// new pair.
std::pair<Scalar, Scalar> fit_hyperparameters(GibbsState& state);

// theta_dk = (n_dk + alpha)/(n_d + K alpha), phi_kj = (n_kj + beta)/(n_k + J beta).
TopicModel point_estimate(const GibbsState& state);

// Full chain: init, `sweeps` passes, hyperparameters refitted every
// refit_every sweeps once past burn_in (0 disables refitting), point estimate
// from the final state.
TopicModel gibbs_train(const CountMatrix& counts, int topics, Scalar alpha0, Scalar beta0,
                       int sweeps, int burn_in, std::mt19937_64& rng, int refit_every = 0);

// Document mixtures for new documents under a frozen topic-term matrix:
// Gibbs sweeps with p proportional to (n_dk + alpha) phi_kj.
Matrix fold_in_theta(const CountMatrix& docs, const Matrix& phi, Scalar alpha, int sweeps,
                     std::mt19937_64& rng);

enum class LdaMode {
  kIndividual,  // chain on the target support alone
  kAll,         // chain on all training corpora, support folded in
};

struct LdaConfig {
  int sweeps = 1000;
  int burn_in = 500;
  int refit_every = 20;
  Scalar alpha0 = 0;  // non-positive selects 50 / topics
  Scalar beta0 = 0.01;
};

struct LdaResult {
  Scalar perplexity = 0;
  TopicModel model;
};

LdaResult lda_baseline(LdaMode mode, const DataSplit& split, int topics, const LdaConfig& config,
                       std::mt19937_64& rng);

}  // namespace fewtopics
