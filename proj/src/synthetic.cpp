#include "fewtopics/synthetic.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace fewtopics {
namespace {

std::string zero_padded(int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, width - digits.size(), '0');
  return digits;
}

std::string corpus_name(const char* prefix, int index, int count) {
  int width = 2;
  for (int top = count - 1; top >= 100; top /= 10) ++width;
  return prefix + zero_padded(index, width);
}

Vector draw_dirichlet(const Vector& shape, std::mt19937_64& rng) {
  Vector v(shape.size());
  Scalar total = 0;
  do {
    total = 0;
    for (int i = 0; i < shape.size(); ++i) {
      // tiny shapes underflow to zero inside gamma_distribution, so floor them
      std::gamma_distribution<Scalar> gamma(std::max(shape[i], Scalar(1e-8)), 1.0);
      v[i] = gamma(rng);
      total += v[i];
    }
  } while (total <= 0);
  v /= total;
  return v;
}

Vector draw_dirichlet(int dim, Scalar concentration, std::mt19937_64& rng) {
  return draw_dirichlet(Vector::Constant(dim, concentration), rng);
}

int draw_categorical(const Vector& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  Scalar u = unit(rng);
  Scalar acc = 0;
  for (int i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

Corpus draw_corpus(const std::string& name, const SyntheticSpec& spec,
                   const std::vector<Vector>& global_topics, std::mt19937_64& rng) {
  std::vector<Vector> phi(spec.topics);
  for (int k = 0; k < spec.topics; ++k)
    phi[k] = draw_dirichlet(spec.topic_fidelity * global_topics[k], rng);

  std::poisson_distribution<int> length(spec.mean_doc_tokens);

  Corpus corpus;
  corpus.name = name;
  corpus.counts.docs = spec.docs_per_corpus;
  corpus.counts.terms = spec.vocab;
  std::vector<std::int64_t> doc_counts(spec.vocab);
  for (int d = 0; d < spec.docs_per_corpus; ++d) {
    Vector theta = draw_dirichlet(spec.topics, spec.mix_concentration, rng);
    int tokens = std::max(1, length(rng));
    std::fill(doc_counts.begin(), doc_counts.end(), std::int64_t{0});
    for (int t = 0; t < tokens; ++t) {
      int k = draw_categorical(theta, rng);
      int j = draw_categorical(phi[k], rng);
      ++doc_counts[j];
    }
    for (int j = 0; j < spec.vocab; ++j)
      if (doc_counts[j] > 0) corpus.counts.cells.push_back({d, j, doc_counts[j]});
  }
  return corpus;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (train_corpora < 0 || validation_corpora < 0 || target_corpora < 0)
    throw ConfigError("corpus counts must be non-negative");
  if (train_corpora + validation_corpora + target_corpora < 1)
    throw ConfigError("at least one corpus must be generated");
  if (topics < 1) throw ConfigError("topics must be at least 1");
  if (vocab < 1) throw ConfigError("vocab must be at least 1");
  if (docs_per_corpus < 1) throw ConfigError("docs_per_corpus must be at least 1");
  if (!(mean_doc_tokens > 0)) throw ConfigError("mean_doc_tokens must be positive");
  if (!(topic_sharpness > 0)) throw ConfigError("topic_sharpness must be positive");
  if (!(topic_fidelity > 0)) throw ConfigError("topic_fidelity must be positive");
  if (!(mix_concentration > 0)) throw ConfigError("mix_concentration must be positive");
}

SyntheticSample draw_synthetic(const SyntheticSpec& spec) {
  spec.validate();

  SyntheticSample sample;
  CorpusSet& set = sample.corpora;
  set.vocab.reserve(spec.vocab);
  int width = 3;
  for (int top = spec.vocab - 1; top >= 1000; top /= 10) ++width;
  for (int j = 0; j < spec.vocab; ++j) set.vocab.push_back("w" + zero_padded(j, width));

  std::mt19937_64 rng(mix_seed(spec.seed, SeedStream::kSynthetic));
  std::vector<Vector> global_topics(spec.topics);
  for (auto& topic : global_topics) topic = draw_dirichlet(spec.vocab, spec.topic_sharpness, rng);
  sample.global_topics.resize(spec.topics, spec.vocab);
  for (int k = 0; k < spec.topics; ++k) sample.global_topics.row(k) = global_topics[k].transpose();

  for (int c = 0; c < spec.train_corpora; ++c)
    set.corpora.push_back(
        draw_corpus(corpus_name("train", c, spec.train_corpora), spec, global_topics, rng));
  for (int c = 0; c < spec.validation_corpora; ++c)
    set.corpora.push_back(
        draw_corpus(corpus_name("val", c, spec.validation_corpora), spec, global_topics, rng));
  for (int c = 0; c < spec.target_corpora; ++c)
    set.corpora.push_back(
        draw_corpus(corpus_name("target", c, spec.target_corpora), spec, global_topics, rng));
  return sample;
}

CorpusSet generate_synthetic(const SyntheticSpec& spec) { return draw_synthetic(spec).corpora; }

}  // namespace fewtopics
