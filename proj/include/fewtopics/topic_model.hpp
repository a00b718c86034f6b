#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "fewtopics/autodiff.hpp"
#include "fewtopics/common.hpp"
#include "fewtopics/corpus.hpp"

// Maximum-a-posteriori topic model under Dirichlet priors, fitted by EM.
// Theta rows are per-document topic mixtures, Phi rows are per-topic term
// distributions. The unrolled EM updates are also available as graph nodes so
// gradients flow from a downstream loss back into the priors.

namespace fewtopics {

struct TopicModel {
  Matrix theta;  // docs x topics, rows on the simplex
  Matrix phi;    // topics x vocab, rows on the simplex

  int docs() const { return static_cast<int>(theta.rows()); }
  int topics() const { return static_cast<int>(theta.cols()); }
  int vocab() const { return static_cast<int>(phi.cols()); }
};

struct PriorPair {
  Matrix alpha;  // docs x topics, entries >= 0
  Matrix beta;   // topics x vocab, entries >= 0
};

// Per-topic responsibilities, materialized only at nonzero counts; weights
// row i corresponds to cells[i] and sums to one.
struct Responsibility {
  std::vector<std::array<int, 2>> cells;  // (doc, term), aligned with the count matrix order
  Matrix weights;                         // nnz x topics
};

// sum_nj x_nj log sum_k theta_nk phi_kj, with the guarded log.
Scalar log_likelihood(const CountMatrix& counts, const TopicModel& model);

// log_likelihood plus the prior terms sum alpha log theta + sum beta log phi
// (additive constants dropped).
Scalar log_posterior(const CountMatrix& counts, const TopicModel& model, const PriorPair& priors);

// Jensen lower bound of log_posterior for the given responsibilities; equals
// it exactly when the weights come from e_step at the same parameters.
// Unnormalized weights are a contract error.
Scalar lower_bound_q(const CountMatrix& counts, const TopicModel& model,
                     const Responsibility& weights, const PriorPair& priors);

// Mode of the priors: theta_nk = (alpha_nk + eps) / sum_k' (alpha_nk' + eps),
// phi likewise from beta rows.
TopicModel init_params(const PriorPair& priors);

Responsibility e_step(const CountMatrix& counts, const TopicModel& model);

TopicModel m_step(const CountMatrix& counts, const Responsibility& weights,
                  const PriorPair& priors);

struct EmOptions {
  int steps = 10;
  // > 0 switches to until-converged: stop once the relative change of the
  // log posterior drops below tolerance, with `steps` as the cap.
  Scalar tolerance = 0;
};

TopicModel run_em(const CountMatrix& counts, const PriorPair& priors, const EmOptions& options);

// exp(-log_likelihood / total tokens); counts must be nonempty.
Scalar perplexity(const CountMatrix& counts, const TopicModel& model);

// Term indices of the m largest entries of phi row `topic`; ties break
// toward the lower index. Requires 1 <= m <= vocab.
std::vector<int> top_terms(const TopicModel& model, int topic, int count);

// --- differentiable counterparts -----------------------------------------

struct EmVars {
  ad::Var theta;
  ad::Var phi;
};

// Prior modes as graph nodes.
EmVars init_vars(ad::Graph& graph, ad::Var alpha, ad::Var beta);

// `steps` EM updates unrolled onto the graph, starting from the prior modes.
// Matches run_em with the same fixed step count.
EmVars unroll_em(ad::Graph& graph, const Matrix& counts, ad::Var alpha, ad::Var beta, int steps);

ad::Var log_likelihood_var(ad::Graph& graph, const Matrix& counts, EmVars state);

// --- fitted-model file ----------------------------------------------------

// Versioned container: text manifest (docs/topics/vocab), the vocabulary,
// then Theta and Phi as row-major little-endian float64.
void save_topic_model(const std::string& path, const TopicModel& model,
                      const std::vector<std::string>& vocab);
std::pair<TopicModel, std::vector<std::string>> load_topic_model(const std::string& path);

}  // namespace fewtopics
