#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fewtopics/common.hpp"

// Bag-of-words corpora: sparse count matrices grouped into named corpora,
// plus the word-level support/query splitting used everywhere downstream.

namespace fewtopics {

// Sparse document-term counts; cells are sorted by (doc, term), counts >= 1.
struct CountMatrix {
  struct Cell {
    int doc = 0;
    int term = 0;
    std::int64_t count = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
  };

  int docs = 0;
  int terms = 0;
  std::vector<Cell> cells;

  Matrix dense() const;
  std::int64_t total_tokens() const;
  int distinct_terms(int doc) const;
  bool empty() const { return cells.empty(); }

  // Sorts, merges duplicates, drops zero counts; negative counts are a
  // contract error.
  void canonicalize();
};

struct Corpus {
  std::string name;
  CountMatrix counts;
};

struct CorpusSet {
  std::vector<Corpus> corpora;
  std::vector<std::string> vocab;

  int vocab_size() const { return static_cast<int>(vocab.size()); }
};

struct DatasetPaths {
  std::string docword;
  std::string vocab;
  std::string labels;
};

// docword: three header lines (docs, vocab size, nonzeros), then 1-based
// "docID termID count" triples. vocab: one term per line. labels: one
// "docID<TAB>category" line per document. Malformed content raises a parse
// error carrying path and line number.
CorpusSet load_corpus(const DatasetPaths& paths);

// Inverse of load_corpus; documents are renumbered 1.. across corpora in
// order. A loaded set round-trips bit-exactly.
void write_corpus(const CorpusSet& set, const DatasetPaths& paths);

struct FilterReport {
  int docs_removed = 0;
  int terms_removed = 0;
  std::vector<std::string> corpora_dropped;
  int iterations = 0;
};

// Iteratively removes documents with fewer than min_doc_terms distinct terms
// and terms occurring in fewer than min_term_docs documents (document
// frequency counted across all corpora), until a fixed point. The vocabulary
// is re-indexed compactly. Corpora left empty are dropped with a report entry;
// all corpora vanishing is a data error.
FilterReport filter_corpus(CorpusSet& set, int min_doc_terms = 30, int min_term_docs = 30);

struct WordSplit {
  CountMatrix support;
  CountMatrix query;
};

// Splits each count binomially: every token lands in support with
// probability rate, independently. support + query == counts exactly.
WordSplit split_words(const CountMatrix& counts, Scalar rate, std::mt19937_64& rng);

// Support/evaluation split of a target corpus with a heldout fraction
// (support rate = 1 - heldout). Interior rates resample until both sides are
// nonempty (up to 100 attempts, then a data error); rates of exactly 0 or 1
// take the single degenerate draw.
WordSplit make_target_split(const CountMatrix& target, Scalar heldout, std::mt19937_64& rng);

// `wanted` documents drawn uniformly without replacement (with replacement
// when the corpus holds fewer), renumbered 0..wanted-1 in draw order.
CountMatrix sample_documents(const CountMatrix& counts, int wanted, std::mt19937_64& rng);

// Everything one experiment repetition consumes.
struct DataSplit {
  CorpusSet training;
  CorpusSet validation;
  std::string target_name;
  CountMatrix target_support;
  CountMatrix target_eval;
};

}  // namespace fewtopics
