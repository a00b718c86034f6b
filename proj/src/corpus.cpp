#include "fewtopics/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fewtopics {

Matrix CountMatrix::dense() const {
  Matrix m = Matrix::Zero(docs, terms);
  for (const Cell& c : cells) m(c.doc, c.term) = static_cast<Scalar>(c.count);
  return m;
}

std::int64_t CountMatrix::total_tokens() const {
  std::int64_t t = 0;
  for (const Cell& c : cells) t += c.count;
  return t;
}

int CountMatrix::distinct_terms(int doc) const {
  int n = 0;
  for (const Cell& c : cells)
    if (c.doc == doc) ++n;
  return n;
}

void CountMatrix::canonicalize() {
  for (const Cell& c : cells) {
    if (c.count < 0) throw ContractError("negative count in count matrix");
    if (c.doc < 0 || c.doc >= docs || c.term < 0 || c.term >= terms)
      throw ContractError("count matrix cell out of range");
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    return a.doc != b.doc ? a.doc < b.doc : a.term < b.term;
  });
  std::vector<Cell> merged;
  merged.reserve(cells.size());
  for (const Cell& c : cells) {
    if (!merged.empty() && merged.back().doc == c.doc && merged.back().term == c.term)
      merged.back().count += c.count;
    else
      merged.push_back(c);
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const Cell& c) { return c.count == 0; }),
               merged.end());
  cells = std::move(merged);
}

namespace {

// Reads one line, stripping a trailing '\r' so CRLF inputs still parse.
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::int64_t parse_int(const std::string& text, const std::string& path, long line,
                       const char* what) {
  std::int64_t value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ParseError(path, line, std::string("expected ") + what + ", got '" + text + "'");
  return value;
}

std::int64_t parse_header_line(std::istream& in, const std::string& path, long& line,
                               const char* what) {
  std::string text;
  if (!next_line(in, text)) throw ParseError(path, line, std::string("missing ") + what);
  ++line;
  std::int64_t v = parse_int(text, path, line, what);
  if (v < 0) throw ParseError(path, line, std::string(what) + " must be non-negative");
  return v;
}

}  // namespace

CorpusSet load_corpus(const DatasetPaths& paths) {
  std::ifstream dw(paths.docword);
  if (!dw) throw IoError("cannot open docword file: " + paths.docword);
  long line = 0;
  std::int64_t n_docs = parse_header_line(dw, paths.docword, line, "document count");
  std::int64_t n_terms = parse_header_line(dw, paths.docword, line, "vocabulary size");
  std::int64_t n_nonzero = parse_header_line(dw, paths.docword, line, "nonzero count");

  std::vector<CountMatrix::Cell> cells;
  cells.reserve(static_cast<size_t>(n_nonzero));
  std::string text;
  for (std::int64_t i = 0; i < n_nonzero; ++i) {
    if (!next_line(dw, text))
      throw ParseError(paths.docword, line + 1,
                       "unexpected end of file: expected " + std::to_string(n_nonzero) +
                           " triples, got " + std::to_string(i));
    ++line;
    std::istringstream fields(text);
    std::string a, b, c, extra;
    if (!(fields >> a >> b >> c) || (fields >> extra))
      throw ParseError(paths.docword, line, "expected 'docID termID count', got '" + text + "'");
    std::int64_t doc = parse_int(a, paths.docword, line, "docID");
    std::int64_t term = parse_int(b, paths.docword, line, "termID");
    std::int64_t count = parse_int(c, paths.docword, line, "count");
    if (doc < 1 || doc > n_docs)
      throw ParseError(paths.docword, line, "docID " + std::to_string(doc) + " out of range 1.." +
                                                std::to_string(n_docs));
    if (term < 1 || term > n_terms)
      throw ParseError(paths.docword, line, "termID " + std::to_string(term) +
                                                " out of range 1.." + std::to_string(n_terms));
    if (count < 1)
      throw ParseError(paths.docword, line, "count must be at least 1, got " + std::to_string(count));
    cells.push_back({static_cast<int>(doc - 1), static_cast<int>(term - 1), count});
  }
  while (next_line(dw, text)) {
    ++line;
    if (!text.empty())
      throw ParseError(paths.docword, line, "unexpected content after the declared triples");
  }
  {
    std::vector<CountMatrix::Cell> sorted = cells;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return a.doc != b.doc ? a.doc < b.doc : a.term < b.term;
    });
    for (size_t i = 1; i < sorted.size(); ++i)
      if (sorted[i].doc == sorted[i - 1].doc && sorted[i].term == sorted[i - 1].term)
        throw ParseError(paths.docword, 0,
                         "duplicate entry for document " + std::to_string(sorted[i].doc + 1) +
                             ", term " + std::to_string(sorted[i].term + 1));
  }

  std::ifstream vf(paths.vocab);
  if (!vf) throw IoError("cannot open vocab file: " + paths.vocab);
  std::vector<std::string> vocab;
  vocab.reserve(static_cast<size_t>(n_terms));
  long vline = 0;
  while (next_line(vf, text)) {
    ++vline;
    if (text.empty()) {
      // allow trailing blank lines only
      std::string rest;
      while (next_line(vf, rest)) {
        ++vline;
        if (!rest.empty()) throw ParseError(paths.vocab, vline, "blank line inside vocabulary");
      }
      break;
    }
    vocab.push_back(text);
  }
  if (static_cast<std::int64_t>(vocab.size()) != n_terms)
    throw ParseError(paths.vocab, vline,
                     "vocabulary has " + std::to_string(vocab.size()) + " terms, docword declares " +
                         std::to_string(n_terms));

  std::ifstream lf(paths.labels);
  if (!lf) throw IoError("cannot open labels file: " + paths.labels);
  std::vector<std::string> label_of(static_cast<size_t>(n_docs));
  std::vector<char> labeled(static_cast<size_t>(n_docs), 0);
  long lline = 0;
  while (next_line(lf, text)) {
    ++lline;
    if (text.empty()) continue;
    size_t tab = text.find('\t');
    if (tab == std::string::npos)
      throw ParseError(paths.labels, lline, "expected 'docID<TAB>category', got '" + text + "'");
    std::int64_t doc = parse_int(text.substr(0, tab), paths.labels, lline, "docID");
    std::string category = text.substr(tab + 1);
    if (doc < 1 || doc > n_docs)
      throw ParseError(paths.labels, lline, "docID " + std::to_string(doc) + " out of range 1.." +
                                                std::to_string(n_docs));
    if (category.empty()) throw ParseError(paths.labels, lline, "empty category name");
    if (labeled[static_cast<size_t>(doc - 1)])
      throw ParseError(paths.labels, lline, "document " + std::to_string(doc) + " labeled twice");
    labeled[static_cast<size_t>(doc - 1)] = 1;
    label_of[static_cast<size_t>(doc - 1)] = category;
  }
  for (std::int64_t d = 0; d < n_docs; ++d)
    if (!labeled[static_cast<size_t>(d)])
      throw ParseError(paths.labels, lline, "document " + std::to_string(d + 1) + " has no label");

  // group documents by category in order of first appearance
  std::vector<std::string> order;
  std::map<std::string, int> corpus_of;
  for (std::int64_t d = 0; d < n_docs; ++d) {
    const std::string& cat = label_of[static_cast<size_t>(d)];
    if (corpus_of.find(cat) == corpus_of.end()) {
      corpus_of[cat] = static_cast<int>(order.size());
      order.push_back(cat);
    }
  }
  CorpusSet set;
  set.vocab = std::move(vocab);
  set.corpora.resize(order.size());
  std::vector<int> local_doc(static_cast<size_t>(n_docs));
  for (size_t i = 0; i < order.size(); ++i) set.corpora[i].name = order[i];
  for (std::int64_t d = 0; d < n_docs; ++d) {
    Corpus& corpus = set.corpora[static_cast<size_t>(corpus_of[label_of[static_cast<size_t>(d)]])];
    local_doc[static_cast<size_t>(d)] = corpus.counts.docs++;
  }
  for (Corpus& corpus : set.corpora) corpus.counts.terms = static_cast<int>(n_terms);
  for (const CountMatrix::Cell& c : cells) {
    Corpus& corpus = set.corpora[static_cast<size_t>(corpus_of[label_of[static_cast<size_t>(c.doc)]])];
    corpus.counts.cells.push_back({local_doc[static_cast<size_t>(c.doc)], c.term, c.count});
  }
  for (Corpus& corpus : set.corpora) corpus.counts.canonicalize();
  return set;
}

void write_corpus(const CorpusSet& set, const DatasetPaths& paths) {
  std::int64_t n_docs = 0, n_nonzero = 0;
  for (const Corpus& c : set.corpora) {
    n_docs += c.counts.docs;
    n_nonzero += static_cast<std::int64_t>(c.counts.cells.size());
  }
  std::ofstream dw(paths.docword, std::ios::binary);
  if (!dw) throw IoError("cannot write docword file: " + paths.docword);
  dw << n_docs << "\n" << set.vocab.size() << "\n" << n_nonzero << "\n";
  std::int64_t doc_base = 0;
  for (const Corpus& c : set.corpora) {
    for (const CountMatrix::Cell& cell : c.counts.cells)
      dw << doc_base + cell.doc + 1 << " " << cell.term + 1 << " " << cell.count << "\n";
    doc_base += c.counts.docs;
  }
  if (!dw) throw IoError("failed writing docword file: " + paths.docword);

  std::ofstream vf(paths.vocab, std::ios::binary);
  if (!vf) throw IoError("cannot write vocab file: " + paths.vocab);
  for (const std::string& term : set.vocab) vf << term << "\n";
  if (!vf) throw IoError("failed writing vocab file: " + paths.vocab);

  std::ofstream lf(paths.labels, std::ios::binary);
  if (!lf) throw IoError("cannot write labels file: " + paths.labels);
  doc_base = 0;
  for (const Corpus& c : set.corpora) {
    for (int d = 0; d < c.counts.docs; ++d) lf << doc_base + d + 1 << "\t" << c.name << "\n";
    doc_base += c.counts.docs;
  }
  if (!lf) throw IoError("failed writing labels file: " + paths.labels);
}

FilterReport filter_corpus(CorpusSet& set, int min_doc_terms, int min_term_docs) {
  if (min_doc_terms < 1 || min_term_docs < 1)
    throw ConfigError("filter thresholds must be at least 1");
  FilterReport report;
  bool changed = true;
  while (changed) {
    changed = false;
    ++report.iterations;

    // documents below the distinct-term threshold
    for (Corpus& corpus : set.corpora) {
      std::vector<int> keep_docs;
      std::vector<int> distinct(static_cast<size_t>(corpus.counts.docs), 0);
      for (const CountMatrix::Cell& c : corpus.counts.cells) ++distinct[static_cast<size_t>(c.doc)];
      for (int d = 0; d < corpus.counts.docs; ++d)
        if (distinct[static_cast<size_t>(d)] >= min_doc_terms) keep_docs.push_back(d);
      if (static_cast<int>(keep_docs.size()) == corpus.counts.docs) continue;
      changed = true;
      report.docs_removed += corpus.counts.docs - static_cast<int>(keep_docs.size());
      std::vector<int> new_index(static_cast<size_t>(corpus.counts.docs), -1);
      for (size_t i = 0; i < keep_docs.size(); ++i) new_index[static_cast<size_t>(keep_docs[i])] = static_cast<int>(i);
      std::vector<CountMatrix::Cell> kept;
      kept.reserve(corpus.counts.cells.size());
      for (const CountMatrix::Cell& c : corpus.counts.cells)
        if (new_index[static_cast<size_t>(c.doc)] >= 0)
          kept.push_back({new_index[static_cast<size_t>(c.doc)], c.term, c.count});
      corpus.counts.cells = std::move(kept);
      corpus.counts.docs = static_cast<int>(keep_docs.size());
    }

    // drop corpora that lost all documents
    for (auto it = set.corpora.begin(); it != set.corpora.end();) {
      if (it->counts.docs == 0) {
        report.corpora_dropped.push_back(it->name);
        it = set.corpora.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }

    // terms below the document-frequency threshold, counted across all corpora
    int n_terms = set.vocab_size();
    std::vector<int> df(static_cast<size_t>(n_terms), 0);
    for (const Corpus& corpus : set.corpora)
      for (const CountMatrix::Cell& c : corpus.counts.cells) ++df[static_cast<size_t>(c.term)];
    std::vector<int> new_term(static_cast<size_t>(n_terms), -1);
    int kept_terms = 0;
    for (int j = 0; j < n_terms; ++j)
      if (df[static_cast<size_t>(j)] >= min_term_docs) new_term[static_cast<size_t>(j)] = kept_terms++;
    if (kept_terms != n_terms) {
      changed = true;
      report.terms_removed += n_terms - kept_terms;
      std::vector<std::string> vocab;
      vocab.reserve(static_cast<size_t>(kept_terms));
      for (int j = 0; j < n_terms; ++j)
        if (new_term[static_cast<size_t>(j)] >= 0) vocab.push_back(set.vocab[static_cast<size_t>(j)]);
      set.vocab = std::move(vocab);
      for (Corpus& corpus : set.corpora) {
        std::vector<CountMatrix::Cell> kept;
        kept.reserve(corpus.counts.cells.size());
        for (const CountMatrix::Cell& c : corpus.counts.cells)
          if (new_term[static_cast<size_t>(c.term)] >= 0)
            kept.push_back({c.doc, new_term[static_cast<size_t>(c.term)], c.count});
        corpus.counts.cells = std::move(kept);
        corpus.counts.terms = kept_terms;
      }
    } else {
      for (Corpus& corpus : set.corpora) corpus.counts.terms = n_terms;
    }
  }
  if (set.corpora.empty()) throw DataError("filtering removed every corpus");
  return report;
}

WordSplit split_words(const CountMatrix& counts, Scalar rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate > 1.0)
    throw ConfigError("split rate must be in [0, 1], got " + std::to_string(rate));
  WordSplit out;
  out.support.docs = out.query.docs = counts.docs;
  out.support.terms = out.query.terms = counts.terms;
  for (const CountMatrix::Cell& c : counts.cells) {
    std::int64_t to_support;
    if (rate == 0.0)
      to_support = 0;
    else if (rate == 1.0)
      to_support = c.count;
    else {
      std::binomial_distribution<std::int64_t> bin(c.count, rate);
      to_support = bin(rng);
    }
    if (to_support > 0) out.support.cells.push_back({c.doc, c.term, to_support});
    if (c.count - to_support > 0) out.query.cells.push_back({c.doc, c.term, c.count - to_support});
  }
  return out;
}

CountMatrix sample_documents(const CountMatrix& counts, int wanted, std::mt19937_64& rng) {
  if (wanted < 1) throw ConfigError("must sample at least one document");
  if (counts.docs < 1) throw DataError("cannot sample documents from an empty corpus");
  std::vector<int> picked;
  picked.reserve(static_cast<size_t>(wanted));
  if (counts.docs >= wanted) {
    std::vector<int> pool(static_cast<size_t>(counts.docs));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < wanted; ++i) {
      std::uniform_int_distribution<int> pick(i, counts.docs - 1);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(pick(rng))]);
      picked.push_back(pool[static_cast<size_t>(i)]);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, counts.docs - 1);
    for (int i = 0; i < wanted; ++i) picked.push_back(pick(rng));
  }
  std::vector<std::vector<int>> rows_of(static_cast<size_t>(counts.docs));
  for (size_t i = 0; i < picked.size(); ++i)
    rows_of[static_cast<size_t>(picked[i])].push_back(static_cast<int>(i));
  CountMatrix out;
  out.docs = wanted;
  out.terms = counts.terms;
  for (const CountMatrix::Cell& cell : counts.cells)
    for (int row : rows_of[static_cast<size_t>(cell.doc)])
      out.cells.push_back({row, cell.term, cell.count});
  out.canonicalize();
  return out;
}

WordSplit make_target_split(const CountMatrix& target, Scalar heldout, std::mt19937_64& rng) {
  if (heldout < 0.0 || heldout > 1.0)
    throw ConfigError("heldout fraction must be in [0, 1], got " + std::to_string(heldout));
  Scalar rate = 1.0 - heldout;
  if (heldout == 0.0 || heldout == 1.0) return split_words(target, rate, rng);
  for (int attempt = 0; attempt < 100; ++attempt) {
    WordSplit split = split_words(target, rate, rng);
    if (!split.support.empty() && !split.query.empty()) return split;
  }
  throw DataError("could not split the target corpus into nonempty support and evaluation"
                  " after 100 attempts");
}

}  // namespace fewtopics
