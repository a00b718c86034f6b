#include "fewtopics/lda.hpp"

#include <cmath>
#include <iostream>
#include <map>

namespace fewtopics {

Scalar digamma(Scalar x) {
  if (!(x > 0.0)) throw ContractError("digamma requires a positive argument");
  Scalar r = 0.0;
  while (x < 10.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  Scalar f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f / 132))));
}

GibbsState init_gibbs(const CountMatrix& counts, int topics, Scalar alpha0, Scalar beta0,
                      std::mt19937_64& rng) {
  if (topics < 1) throw ConfigError("topics must be at least 1");
  if (alpha0 <= 0.0 || beta0 <= 0.0) throw ConfigError("hyperparameters must be positive");
  if (counts.empty()) throw DataError("cannot run Gibbs sampling on an empty corpus");

  GibbsState state;
  state.topics = topics;
  state.vocab = counts.terms;
  state.alpha = alpha0;
  state.beta = beta0;
  auto tokens = static_cast<size_t>(counts.total_tokens());
  state.token_doc.reserve(tokens);
  state.token_term.reserve(tokens);
  state.token_topic.reserve(tokens);
  state.n_dk = CountTable::Zero(counts.docs, topics);
  state.n_kj = CountTable::Zero(topics, counts.terms);
  state.n_d.assign(static_cast<size_t>(counts.docs), 0);
  state.n_k.assign(static_cast<size_t>(topics), 0);

  std::uniform_int_distribution<int> pick(0, topics - 1);
  for (const auto& cell : counts.cells) {
    for (std::int64_t i = 0; i < cell.count; ++i) {
      int k = pick(rng);
      state.token_doc.push_back(cell.doc);
      state.token_term.push_back(cell.term);
      state.token_topic.push_back(k);
      ++state.n_dk(cell.doc, k);
      ++state.n_kj(k, cell.term);
      ++state.n_d[static_cast<size_t>(cell.doc)];
      ++state.n_k[static_cast<size_t>(k)];
    }
  }
  return state;
}

void gibbs_sweep(GibbsState& state, std::mt19937_64& rng) {
  const int K = state.topics;
  const Scalar J_beta = static_cast<Scalar>(state.vocab) * state.beta;
  std::vector<Scalar> weight(static_cast<size_t>(K));
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);

  for (size_t i = 0; i < state.token_topic.size(); ++i) {
    const int d = state.token_doc[i];
    const int j = state.token_term[i];
    int k = state.token_topic[i];
    --state.n_dk(d, k);
    --state.n_kj(k, j);
    --state.n_d[static_cast<size_t>(d)];
    --state.n_k[static_cast<size_t>(k)];

    Scalar total = 0.0;
    for (int t = 0; t < K; ++t) {
      Scalar w = (static_cast<Scalar>(state.n_dk(d, t)) + state.alpha) *
                 (static_cast<Scalar>(state.n_kj(t, j)) + state.beta) /
                 (static_cast<Scalar>(state.n_k[static_cast<size_t>(t)]) + J_beta);
      weight[static_cast<size_t>(t)] = w;
      total += w;
    }
    Scalar u = unit(rng) * total;
    k = K - 1;
    for (int t = 0; t < K; ++t) {
      u -= weight[static_cast<size_t>(t)];
      if (u <= 0.0) {
        k = t;
        break;
      }
    }

    state.token_topic[i] = k;
    ++state.n_dk(d, k);
    ++state.n_kj(k, j);
    ++state.n_d[static_cast<size_t>(d)];
    ++state.n_k[static_cast<size_t>(k)];
  }
}

bool tables_consistent(const GibbsState& state) {
  CountTable n_dk = CountTable::Zero(state.n_dk.rows(), state.n_dk.cols());
  CountTable n_kj = CountTable::Zero(state.n_kj.rows(), state.n_kj.cols());
  for (size_t i = 0; i < state.token_topic.size(); ++i) {
    int d = state.token_doc[i], j = state.token_term[i], k = state.token_topic[i];
    if (d < 0 || d >= n_dk.rows() || j < 0 || j >= n_kj.cols() || k < 0 || k >= state.topics)
      return false;
    ++n_dk(d, k);
    ++n_kj(k, j);
  }
  if (n_dk != state.n_dk || n_kj != state.n_kj) return false;
  for (long d = 0; d < n_dk.rows(); ++d)
    if (n_dk.row(d).sum() != state.n_d[static_cast<size_t>(d)]) return false;
  for (long k = 0; k < n_kj.rows(); ++k)
    if (n_kj.row(k).sum() != state.n_k[static_cast<size_t>(k)]) return false;
  return true;
}

namespace {

constexpr Scalar kClampLow = 1e-5;
constexpr Scalar kClampHigh = 1e3;

// Minka's symmetric fixed point for one Dirichlet-multinomial family:
// cell_hist holds the nonzero per-cell counts, length_hist the per-row
// totals, `dim` the number of cells per row.
Scalar fit_symmetric(const std::map<std::int64_t, std::int64_t>& cell_hist,
                     const std::map<std::int64_t, std::int64_t>& length_hist, int dim,
                     Scalar start) {
  Scalar x = std::clamp(start, kClampLow, kClampHigh);
  if (length_hist.empty()) return x;  // no tokens anywhere, nothing to fit
  // the fixed point converges linearly, so give it room
  for (int iter = 0; iter < 1000; ++iter) {
    Scalar psi_x = digamma(x);
    Scalar psi_dx = digamma(static_cast<Scalar>(dim) * x);
    Scalar numer = 0.0;
    for (auto [count, times] : cell_hist)
      numer += static_cast<Scalar>(times) * (digamma(static_cast<Scalar>(count) + x) - psi_x);
    Scalar denom = 0.0;
    for (auto [length, times] : length_hist)
      denom += static_cast<Scalar>(times) *
               (digamma(static_cast<Scalar>(length) + static_cast<Scalar>(dim) * x) - psi_dx);
    denom *= static_cast<Scalar>(dim);
    Scalar next;
    if (numer <= 0.0) {
      next = kClampLow;  // every cell empty: the likelihood pushes x to zero
    } else if (denom <= 0.0) {
      return x;
    } else {
      next = std::clamp(x * numer / denom, kClampLow, kClampHigh);
    }
    if (std::abs(next - x) <= 1e-10 * (1.0 + x)) return next;
    x = next;
  }
  std::cerr << "warning: hyperparameter fixed point did not converge within 1000 iterations\n";
  return x;
}

void histogram_table(const CountTable& table, const std::vector<std::int64_t>& row_totals,
                     std::map<std::int64_t, std::int64_t>& cells,
                     std::map<std::int64_t, std::int64_t>& lengths) {
  for (long r = 0; r < table.rows(); ++r)
    for (long c = 0; c < table.cols(); ++c)
      if (std::int64_t v = table(r, c); v > 0) ++cells[v];
  for (std::int64_t total : row_totals)
    if (total > 0) ++lengths[total];
}

CountMatrix concatenate(const CorpusSet& set) {
  CountMatrix all;
  all.terms = set.vocab_size();
  for (const Corpus& corpus : set.corpora) {
    for (const auto& cell : corpus.counts.cells)
      all.cells.push_back({cell.doc + all.docs, cell.term, cell.count});
    all.docs += corpus.counts.docs;
  }
  return all;
}

}  // namespace

std::pair<Scalar, Scalar> fit_hyperparameters(GibbsState& state) {
  std::map<std::int64_t, std::int64_t> cells, lengths;
  histogram_table(state.n_dk, state.n_d, cells, lengths);
  state.alpha = fit_symmetric(cells, lengths, state.topics, state.alpha);

  cells.clear();
  lengths.clear();
  histogram_table(state.n_kj, state.n_k, cells, lengths);
  state.beta = fit_symmetric(cells, lengths, state.vocab, state.beta);
  return {state.alpha, state.beta};
}

TopicModel point_estimate(const GibbsState& state) {
  TopicModel model;
  const Scalar K_alpha = static_cast<Scalar>(state.topics) * state.alpha;
  const Scalar J_beta = static_cast<Scalar>(state.vocab) * state.beta;
  model.theta.resize(state.n_dk.rows(), state.topics);
  for (long d = 0; d < state.n_dk.rows(); ++d)
    for (int k = 0; k < state.topics; ++k)
      model.theta(d, k) = (static_cast<Scalar>(state.n_dk(d, k)) + state.alpha) /
                          (static_cast<Scalar>(state.n_d[static_cast<size_t>(d)]) + K_alpha);
  model.phi.resize(state.topics, state.vocab);
  for (int k = 0; k < state.topics; ++k)
    for (int j = 0; j < state.vocab; ++j)
      model.phi(k, j) = (static_cast<Scalar>(state.n_kj(k, j)) + state.beta) /
                        (static_cast<Scalar>(state.n_k[static_cast<size_t>(k)]) + J_beta);
  return model;
}

namespace {

GibbsState run_chain(const CountMatrix& counts, int topics, Scalar alpha0, Scalar beta0,
                     int sweeps, int burn_in, std::mt19937_64& rng, int refit_every) {
  if (burn_in < 0 || sweeps <= burn_in) throw ConfigError("need sweeps > burn_in >= 0");
  if (refit_every < 0) throw ConfigError("refit_every must be non-negative");
  GibbsState state = init_gibbs(counts, topics, alpha0, beta0, rng);
  for (int sweep = 1; sweep <= sweeps; ++sweep) {
    gibbs_sweep(state, rng);
    if (refit_every > 0 && sweep > burn_in && (sweep - burn_in) % refit_every == 0)
      fit_hyperparameters(state);
  }
  return state;
}

}  // namespace

TopicModel gibbs_train(const CountMatrix& counts, int topics, Scalar alpha0, Scalar beta0,
                       int sweeps, int burn_in, std::mt19937_64& rng, int refit_every) {
  return point_estimate(run_chain(counts, topics, alpha0, beta0, sweeps, burn_in, rng, refit_every));
}

Matrix fold_in_theta(const CountMatrix& docs, const Matrix& phi, Scalar alpha, int sweeps,
                     std::mt19937_64& rng) {
  if (alpha <= 0.0) throw ConfigError("hyperparameters must be positive");
  if (sweeps < 1) throw ConfigError("fold-in needs at least one sweep");
  if (docs.terms != phi.cols()) throw DimensionError("fold-in vocabulary does not match phi");
  if (docs.empty()) throw DataError("cannot fold in documents without tokens");
  const int K = static_cast<int>(phi.rows());

  std::vector<int> token_doc, token_term, token_topic;
  CountTable n_dk = CountTable::Zero(docs.docs, K);
  std::vector<std::int64_t> n_d(static_cast<size_t>(docs.docs), 0);
  std::uniform_int_distribution<int> pick(0, K - 1);
  for (const auto& cell : docs.cells) {
    for (std::int64_t i = 0; i < cell.count; ++i) {
      int k = pick(rng);
      token_doc.push_back(cell.doc);
      token_term.push_back(cell.term);
      token_topic.push_back(k);
      ++n_dk(cell.doc, k);
      ++n_d[static_cast<size_t>(cell.doc)];
    }
  }

  std::vector<Scalar> weight(static_cast<size_t>(K));
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (size_t i = 0; i < token_topic.size(); ++i) {
      const int d = token_doc[i];
      const int j = token_term[i];
      int k = token_topic[i];
      --n_dk(d, k);
      Scalar total = 0.0;
      for (int t = 0; t < K; ++t) {
        Scalar w = (static_cast<Scalar>(n_dk(d, t)) + alpha) * phi(t, j);
        weight[static_cast<size_t>(t)] = w;
        total += w;
      }
      Scalar u = unit(rng) * total;
      k = K - 1;
      for (int t = 0; t < K; ++t) {
        u -= weight[static_cast<size_t>(t)];
        if (u <= 0.0) {
          k = t;
          break;
        }
      }
      token_topic[i] = k;
      ++n_dk(d, k);
    }
  }

  Matrix theta(docs.docs, K);
  const Scalar K_alpha = static_cast<Scalar>(K) * alpha;
  for (int d = 0; d < docs.docs; ++d)
    for (int k = 0; k < K; ++k)
      theta(d, k) = (static_cast<Scalar>(n_dk(d, k)) + alpha) /
                    (static_cast<Scalar>(n_d[static_cast<size_t>(d)]) + K_alpha);
  return theta;
}

LdaResult lda_baseline(LdaMode mode, const DataSplit& split, int topics, const LdaConfig& config,
                       std::mt19937_64& rng) {
  if (topics < 1) throw ConfigError("topics must be at least 1");
  Scalar alpha0 =
      config.alpha0 > 0.0 ? config.alpha0 : 50.0 / static_cast<Scalar>(topics);

  LdaResult result;
  if (mode == LdaMode::kIndividual) {
    result.model = gibbs_train(split.target_support, topics, alpha0, config.beta0, config.sweeps,
                               config.burn_in, rng, config.refit_every);
  } else {
    CountMatrix pool = concatenate(split.training);
    GibbsState chain = run_chain(pool, topics, alpha0, config.beta0, config.sweeps,
                                 config.burn_in, rng, config.refit_every);
    result.model.phi = point_estimate(chain).phi;
    // fold in with the alpha the chain settled on, topics frozen
    result.model.theta =
        fold_in_theta(split.target_support, result.model.phi, chain.alpha, config.sweeps, rng);
  }
  result.perplexity = perplexity(split.target_eval, result.model);
  return result;
}

}  // namespace fewtopics
