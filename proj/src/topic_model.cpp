#include "fewtopics/topic_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"

namespace fewtopics {

namespace {

Scalar guarded_log(Scalar x) { return std::log(std::max(x, kEpsLog)); }

void require_model_matches(const CountMatrix& counts, const TopicModel& model) {
  if (model.docs() != counts.docs || model.vocab() != counts.terms)
    throw DimensionError("model is " + std::to_string(model.docs()) + "x" +
                         std::to_string(model.vocab()) + ", counts are " +
                         std::to_string(counts.docs) + "x" + std::to_string(counts.terms));
  if (model.phi.rows() != model.topics())
    throw DimensionError("theta/phi topic dimensions disagree");
}

void require_prior_shapes(const PriorPair& priors) {
  if (priors.alpha.cols() != priors.beta.rows())
    throw DimensionError("alpha topics " + std::to_string(priors.alpha.cols()) +
                         " vs beta topics " + std::to_string(priors.beta.rows()));
  if (priors.alpha.rows() < 1 || priors.alpha.cols() < 1 || priors.beta.cols() < 1)
    throw DimensionError("priors must be non-degenerate");
  if ((priors.alpha.array() < 0).any() || (priors.beta.array() < 0).any())
    throw ContractError("prior parameters must be non-negative");
}

Matrix mode_rows(const Matrix& raw) {
  Matrix shifted = raw.array() + kEpsInit;
  Vector sums = shifted.rowwise().sum();
  return shifted.array().colwise() / sums.array();
}

Scalar prior_terms(const TopicModel& model, const PriorPair& priors) {
  Scalar total = 0;
  for (long n = 0; n < priors.alpha.rows(); ++n)
    for (long k = 0; k < priors.alpha.cols(); ++k)
      total += priors.alpha(n, k) * guarded_log(model.theta(n, k));
  for (long k = 0; k < priors.beta.rows(); ++k)
    for (long j = 0; j < priors.beta.cols(); ++j)
      total += priors.beta(k, j) * guarded_log(model.phi(k, j));
  return total;
}

}  // namespace

Scalar log_likelihood(const CountMatrix& counts, const TopicModel& model) {
  require_model_matches(counts, model);
  Scalar total = 0;
  for (const CountMatrix::Cell& c : counts.cells) {
    Scalar mix = model.theta.row(c.doc).dot(model.phi.col(c.term));
    total += static_cast<Scalar>(c.count) * guarded_log(mix);
  }
  return total;
}

Scalar log_posterior(const CountMatrix& counts, const TopicModel& model, const PriorPair& priors) {
  require_model_matches(counts, model);
  require_prior_shapes(priors);
  if (priors.alpha.rows() != model.docs() || priors.beta.cols() != model.vocab() ||
      priors.alpha.cols() != model.topics())
    throw DimensionError("prior shapes do not match the model");
  return log_likelihood(counts, model) + prior_terms(model, priors);
}

Scalar lower_bound_q(const CountMatrix& counts, const TopicModel& model,
                     const Responsibility& weights, const PriorPair& priors) {
  require_model_matches(counts, model);
  if (weights.cells.size() != counts.cells.size() ||
      weights.weights.rows() != static_cast<long>(counts.cells.size()) ||
      weights.weights.cols() != model.topics())
    throw DimensionError("responsibilities do not match the count matrix");
  for (long i = 0; i < weights.weights.rows(); ++i) {
    Scalar row_sum = weights.weights.row(i).sum();
    if (std::abs(row_sum - 1.0) > 1e-6 || (weights.weights.row(i).array() < -1e-12).any())
      throw ContractError("responsibility row " + std::to_string(i) +
                          " is not a distribution (sum " + std::to_string(row_sum) + ")");
  }
  Scalar total = 0;
  for (size_t i = 0; i < counts.cells.size(); ++i) {
    const CountMatrix::Cell& c = counts.cells[i];
    if (c.doc != weights.cells[i][0] || c.term != weights.cells[i][1])
      throw ContractError("responsibility cells are not aligned with the count matrix");
    Scalar inner = 0;
    for (long k = 0; k < model.topics(); ++k) {
      Scalar g = weights.weights(static_cast<long>(i), k);
      if (g <= 0) continue;  // 0 log 0 term vanishes
      inner += g * (guarded_log(model.theta(c.doc, k) * model.phi(k, c.term)) - std::log(g));
    }
    total += static_cast<Scalar>(c.count) * inner;
  }
  return total + prior_terms(model, priors);
}

TopicModel init_params(const PriorPair& priors) {
  require_prior_shapes(priors);
  return TopicModel{mode_rows(priors.alpha), mode_rows(priors.beta)};
}

Responsibility e_step(const CountMatrix& counts, const TopicModel& model) {
  require_model_matches(counts, model);
  Responsibility out;
  out.cells.reserve(counts.cells.size());
  out.weights.resize(static_cast<long>(counts.cells.size()), model.topics());
  long i = 0;
  for (const CountMatrix::Cell& c : counts.cells) {
    out.cells.push_back({c.doc, c.term});
    RowVector p = model.theta.row(c.doc).cwiseProduct(model.phi.col(c.term).transpose());
    Scalar s = p.sum();
    if (s < kEpsLog)
      out.weights.row(i).setConstant(1.0 / static_cast<Scalar>(model.topics()));
    else
      out.weights.row(i) = p / s;
    ++i;
  }
  return out;
}

TopicModel m_step(const CountMatrix& counts, const Responsibility& weights,
                  const PriorPair& priors) {
  require_prior_shapes(priors);
  if (weights.cells.size() != counts.cells.size())
    throw DimensionError("responsibilities do not match the count matrix");
  int topics = static_cast<int>(priors.alpha.cols());
  Matrix theta_acc = priors.alpha;
  Matrix phi_acc = priors.beta;
  for (size_t i = 0; i < counts.cells.size(); ++i) {
    const CountMatrix::Cell& c = counts.cells[i];
    Scalar x = static_cast<Scalar>(c.count);
    for (int k = 0; k < topics; ++k) {
      Scalar w = x * weights.weights(static_cast<long>(i), k);
      theta_acc(c.doc, k) += w;
      phi_acc(k, c.term) += w;
    }
  }
  return TopicModel{mode_rows(theta_acc), mode_rows(phi_acc)};
}

TopicModel run_em(const CountMatrix& counts, const PriorPair& priors, const EmOptions& options) {
  if (options.steps < 0) throw ConfigError("EM step count must be non-negative");
  TopicModel model = init_params(priors);
  if (counts.docs != priors.alpha.rows() || counts.terms != priors.beta.cols())
    throw DimensionError("priors do not match the count matrix");
  Scalar previous = options.tolerance > 0 ? log_posterior(counts, model, priors) : 0;
  for (int t = 0; t < options.steps; ++t) {
    Responsibility gamma = e_step(counts, model);
    model = m_step(counts, gamma, priors);
    if (options.tolerance > 0) {
      Scalar current = log_posterior(counts, model, priors);
      if (std::abs(current - previous) < options.tolerance * (std::abs(previous) + kEpsLog))
        break;
      previous = current;
    }
  }
  return model;
}

Scalar perplexity(const CountMatrix& counts, const TopicModel& model) {
  std::int64_t tokens = counts.total_tokens();
  if (tokens <= 0) throw ContractError("perplexity needs at least one token");
  return std::exp(-log_likelihood(counts, model) / static_cast<Scalar>(tokens));
}

std::vector<int> top_terms(const TopicModel& model, int topic, int count) {
  if (topic < 0 || topic >= model.topics())
    throw ContractError("topic index " + std::to_string(topic) + " out of range");
  if (count < 1 || count > model.vocab())
    throw ContractError("requested " + std::to_string(count) + " terms of " +
                        std::to_string(model.vocab()));
  std::vector<int> order(static_cast<size_t>(model.vocab()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    Scalar pa = model.phi(topic, a), pb = model.phi(topic, b);
    return pa != pb ? pa > pb : a < b;
  });
  order.resize(static_cast<size_t>(count));
  return order;
}

EmVars init_vars(ad::Graph& graph, ad::Var alpha, ad::Var beta) {
  if (graph.value(alpha).cols() != graph.value(beta).rows())
    throw DimensionError("init_vars: alpha/beta topic dimensions disagree");
  return EmVars{ad::normalize_rows(ad::cadd(alpha, kEpsInit)),
                ad::normalize_rows(ad::cadd(beta, kEpsInit))};
}

EmVars unroll_em(ad::Graph& graph, const Matrix& counts, ad::Var alpha, ad::Var beta, int steps) {
  if (steps < 0) throw ConfigError("EM step count must be non-negative");
  const Matrix& av = graph.value(alpha);
  const Matrix& bv = graph.value(beta);
  if (counts.rows() != av.rows() || counts.cols() != bv.cols() || av.cols() != bv.rows())
    throw DimensionError("unroll_em: counts/alpha/beta shapes disagree");
  EmVars state = init_vars(graph, alpha, beta);
  if (steps == 0) return state;
  ad::Var x = graph.constant(counts);
  for (int t = 0; t < steps; ++t) {
    // responsibilities never materialize: with S = Theta Phi and
    // W = X / S, the weighted counts are Theta .* (W Phi^T) and
    // Phi .* (Theta^T W)
    ad::Var mix = ad::matmul(state.theta, state.phi);
    ad::Var w = ad::div_elem(x, ad::cwise_max(mix, kEpsLog));
    ad::Var theta_counts = state.theta * ad::matmul(w, ad::transpose(state.phi));
    ad::Var phi_counts = state.phi * ad::matmul(ad::transpose(state.theta), w);
    state.theta = ad::normalize_rows(ad::cadd(theta_counts + alpha, kEpsInit));
    state.phi = ad::normalize_rows(ad::cadd(phi_counts + beta, kEpsInit));
  }
  return state;
}

ad::Var log_likelihood_var(ad::Graph& graph, const Matrix& counts, EmVars state) {
  const Matrix& tv = graph.value(state.theta);
  const Matrix& pv = graph.value(state.phi);
  if (counts.rows() != tv.rows() || counts.cols() != pv.cols())
    throw DimensionError("log_likelihood_var: counts do not match the model");
  ad::Var mix = ad::matmul(state.theta, state.phi);
  return ad::sum(graph.constant(counts) * ad::log_guarded(mix));
}

void save_topic_model(const std::string& path, const TopicModel& model,
                      const std::vector<std::string>& vocab) {
  if (static_cast<int>(vocab.size()) != model.vocab())
    throw DimensionError("vocabulary size does not match the model");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  out << "fewtopics-topics v1\n"
      << "docs " << model.docs() << "\n"
      << "topics " << model.topics() << "\n"
      << "vocab " << model.vocab() << "\n";
  for (const std::string& term : vocab) out << term << "\n";
  out << "binary\n";
  detail::write_matrix(out, model.theta);
  detail::write_matrix(out, model.phi);
  if (!out) throw IoError("failed writing model file: " + path);
}

std::pair<TopicModel, std::vector<std::string>> load_topic_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "fewtopics-topics v1")
    throw ParseError(path, 1, "not a fitted-model file");
  auto read_field = [&](const char* key, long lineno) {
    if (!std::getline(in, line)) throw ParseError(path, lineno, "truncated manifest");
    std::istringstream ss(line);
    std::string k;
    long v;
    if (!(ss >> k >> v) || k != key)
      throw ParseError(path, lineno, std::string("expected '") + key + " <n>', got '" + line + "'");
    if (v < 1) throw ParseError(path, lineno, std::string(key) + " must be positive");
    return v;
  };
  long docs = read_field("docs", 2);
  long topics = read_field("topics", 3);
  long vocab_size = read_field("vocab", 4);
  std::vector<std::string> vocab;
  vocab.reserve(static_cast<size_t>(vocab_size));
  for (long j = 0; j < vocab_size; ++j) {
    if (!std::getline(in, line)) throw ParseError(path, 5 + j, "truncated vocabulary");
    vocab.push_back(line);
  }
  if (!std::getline(in, line) || line != "binary")
    throw ParseError(path, 5 + vocab_size, "expected the binary marker");
  TopicModel model;
  model.theta.resize(docs, topics);
  model.phi.resize(topics, vocab_size);
  if (!detail::read_matrix(in, model.theta) || !detail::read_matrix(in, model.phi))
    throw ParseError(path, 0, "truncated parameter payload");
  char extra;
  if (in.read(&extra, 1))
    throw ParseError(path, 0, "trailing bytes after the parameter payload");
  return {std::move(model), std::move(vocab)};
}

}  // namespace fewtopics
