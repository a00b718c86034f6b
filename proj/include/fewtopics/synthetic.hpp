#pragma once

#include <cstdint>

#include "fewtopics/common.hpp"
#include "fewtopics/corpus.hpp"

// Synthetic benchmark generator: a family of small corpora sharing one set
// of global topics, so that a meta-learner has something transferable to
// pick up. Each corpus redraws its topics around the global ones, then each
// document mixes them.

namespace fewtopics {

struct SyntheticSpec {
  int train_corpora = 30;
  int validation_corpora = 3;
  int target_corpora = 10;
  int topics = 3;
  int vocab = 50;
  int docs_per_corpus = 40;
  Scalar mean_doc_tokens = 80;
  // Dirichlet concentration of the global topic-word distributions; small
  // values give sharp, well-separated topics.
  Scalar topic_sharpness = 0.1;
  // Per-corpus topics are Dirichlet(topic_fidelity * global topic): large
  // values keep corpora close to the shared structure, small ones let them
  // drift apart.
  Scalar topic_fidelity = 10000;
  // Dirichlet concentration of the per-document topic mixtures.
  Scalar mix_concentration = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSample {
  CorpusSet corpora;
  Matrix global_topics;  // topics x vocab, rows on the simplex
};

// Draws the full benchmark: corpora are named train00.., val00.., target00..
// in that order, the vocabulary is w000-style, and the shared ground-truth
// topics ride along for oracle checks. Deterministic in the SyntheticSpec
// fields (including the seed).
SyntheticSample draw_synthetic(const SyntheticSpec& spec);

// Just the corpora.
CorpusSet generate_synthetic(const SyntheticSpec& spec);

}  // namespace fewtopics
