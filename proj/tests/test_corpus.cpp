#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fewtopics/corpus.hpp"

using namespace fewtopics;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  fs::path dir = fs::temp_directory_path() / "fewtopics_corpus_tests";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

DatasetPaths write_dataset(const std::string& tag, const std::string& docword,
                           const std::string& vocab, const std::string& labels) {
  fs::path dir = test_dir();
  DatasetPaths paths{(dir / (tag + "_docword.txt")).string(),
                     (dir / (tag + "_vocab.txt")).string(),
                     (dir / (tag + "_labels.txt")).string()};
  write_file(paths.docword, docword);
  write_file(paths.vocab, vocab);
  write_file(paths.labels, labels);
  return paths;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Exhaustive reference for the iterative filter: the maximal pair of
// (document set, term set) in which every kept document has enough distinct
// kept terms and every kept term appears in enough kept documents. Unions of
// feasible pairs are feasible, so the maximum is the union of them all.
std::pair<std::vector<bool>, std::vector<bool>> brute_force_filter(const CountMatrix& X,
                                                                   int min_doc_terms,
                                                                   int min_term_docs) {
  int D = X.docs, J = X.terms;
  std::vector<bool> best_docs(D, false), best_terms(J, false);
  for (unsigned dm = 0; dm < (1u << D); ++dm) {
    for (unsigned tm = 0; tm < (1u << J); ++tm) {
      bool ok = true;
      for (int d = 0; d < D && ok; ++d) {
        if (!(dm >> d & 1)) continue;
        int distinct = 0;
        for (const auto& c : X.cells)
          if (c.doc == d && (tm >> c.term & 1)) ++distinct;
        ok = distinct >= min_doc_terms;
      }
      for (int j = 0; j < J && ok; ++j) {
        if (!(tm >> j & 1)) continue;
        int df = 0;
        for (const auto& c : X.cells)
          if (c.term == j && (dm >> c.doc & 1)) ++df;
        ok = df >= min_term_docs;
      }
      if (!ok) continue;
      for (int d = 0; d < D; ++d)
        if (dm >> d & 1) best_docs[d] = true;
      for (int j = 0; j < J; ++j)
        if (tm >> j & 1) best_terms[j] = true;
    }
  }
  return {best_docs, best_terms};
}

CountMatrix subset(const CountMatrix& X, const std::vector<bool>& docs,
                   const std::vector<bool>& terms) {
  CountMatrix out;
  std::vector<int> dmap(X.docs, -1), tmap(X.terms, -1);
  for (int d = 0; d < X.docs; ++d)
    if (docs[d]) dmap[d] = out.docs++;
  for (int j = 0; j < X.terms; ++j)
    if (terms[j]) tmap[j] = out.terms++;
  for (const auto& c : X.cells)
    if (dmap[c.doc] >= 0 && tmap[c.term] >= 0) out.cells.push_back({dmap[c.doc], tmap[c.term], c.count});
  return out;
}

CountMatrix random_counts(int docs, int terms, std::mt19937_64& rng, double density = 0.4,
                          int max_count = 6) {
  CountMatrix X;
  X.docs = docs;
  X.terms = terms;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cnt(1, max_count);
  for (int d = 0; d < docs; ++d)
    for (int j = 0; j < terms; ++j)
      if (u(rng) < density) X.cells.push_back({d, j, cnt(rng)});
  return X;
}

}  // namespace

TEST_CASE("loads a tiny dataset and groups documents by category") {
  auto paths = write_dataset("tiny",
                             "3\n2\n4\n1 1 2\n1 2 1\n2 1 5\n3 2 3\n",
                             "apple\nbanana\n",
                             "1\tfruit\n2\tfruit\n3\tveg\n");
  CorpusSet set = load_corpus(paths);
  REQUIRE(set.corpora.size() == 2);
  CHECK(set.vocab == std::vector<std::string>{"apple", "banana"});
  CHECK(set.corpora[0].name == "fruit");
  CHECK(set.corpora[0].counts.docs == 2);
  CHECK(set.corpora[0].counts.total_tokens() == 8);
  CHECK(set.corpora[1].name == "veg");
  CHECK(set.corpora[1].counts.docs == 1);
  CHECK(set.corpora[1].counts.cells.size() == 1);
  CHECK(set.corpora[1].counts.cells[0].count == 3);
}

TEST_CASE("write then reload round-trips bit-exactly") {
  auto paths = write_dataset("round",
                             "3\n2\n4\n1 1 2\n1 2 1\n2 1 5\n3 2 3\n",
                             "apple\nbanana\n",
                             "1\tfruit\n2\tfruit\n3\tveg\n");
  CorpusSet set = load_corpus(paths);
  fs::path dir = test_dir();
  DatasetPaths out{(dir / "round_out_docword.txt").string(), (dir / "round_out_vocab.txt").string(),
                   (dir / "round_out_labels.txt").string()};
  write_corpus(set, out);
  CHECK(read_file(out.docword) == read_file(paths.docword));
  CHECK(read_file(out.vocab) == read_file(paths.vocab));
  CHECK(read_file(out.labels) == read_file(paths.labels));
  CorpusSet again = load_corpus(out);
  REQUIRE(again.corpora.size() == set.corpora.size());
  for (size_t i = 0; i < set.corpora.size(); ++i) {
    CHECK(again.corpora[i].name == set.corpora[i].name);
    CHECK(again.corpora[i].counts.docs == set.corpora[i].counts.docs);
    REQUIRE(again.corpora[i].counts.cells.size() == set.corpora[i].counts.cells.size());
    for (size_t k = 0; k < set.corpora[i].counts.cells.size(); ++k) {
      CHECK(again.corpora[i].counts.cells[k].doc == set.corpora[i].counts.cells[k].doc);
      CHECK(again.corpora[i].counts.cells[k].term == set.corpora[i].counts.cells[k].term);
      CHECK(again.corpora[i].counts.cells[k].count == set.corpora[i].counts.cells[k].count);
    }
  }
}

TEST_CASE("parse errors carry the offending location") {
  SUBCASE("malformed triple") {
    auto paths = write_dataset("bad1", "1\n1\n1\n1 oops 2\n", "a\n", "1\tx\n");
    CHECK_THROWS_WITH_AS(load_corpus(paths),
                         doctest::Contains("bad1_docword.txt:4"), ParseError);
  }
  SUBCASE("document id out of range") {
    auto paths = write_dataset("bad2", "1\n1\n1\n2 1 2\n", "a\n", "1\tx\n");
    CHECK_THROWS_WITH_AS(load_corpus(paths), doctest::Contains("out of range"), ParseError);
  }
  SUBCASE("term id out of range") {
    auto paths = write_dataset("bad3", "1\n2\n1\n1 3 2\n", "a\nb\n", "1\tx\n");
    CHECK_THROWS_WITH_AS(load_corpus(paths), doctest::Contains("out of range"), ParseError);
  }
  SUBCASE("duplicate cell") {
    auto paths = write_dataset("bad4", "1\n2\n2\n1 1 2\n1 1 3\n", "a\nb\n", "1\tx\n");
    CHECK_THROWS_WITH_AS(load_corpus(paths), doctest::Contains("duplicate"), ParseError);
  }
  SUBCASE("fewer triples than the header declares") {
    auto paths = write_dataset("bad5", "1\n1\n2\n1 1 2\n", "a\n", "1\tx\n");
    CHECK_THROWS_WITH_AS(load_corpus(paths), doctest::Contains("unexpected end"), ParseError);
  }
  SUBCASE("zero count") {
    auto paths = write_dataset("bad6", "1\n1\n1\n1 1 0\n", "a\n", "1\tx\n");
    CHECK_THROWS_AS(load_corpus(paths), ParseError);
  }
  SUBCASE("vocabulary size mismatch") {
    auto paths = write_dataset("bad7", "1\n2\n1\n1 1 1\n", "a\n", "1\tx\n");
    CHECK_THROWS_WITH_AS(load_corpus(paths), doctest::Contains("vocabulary"), ParseError);
  }
  SUBCASE("unlabeled document") {
    auto paths = write_dataset("bad8", "2\n1\n2\n1 1 1\n2 1 1\n", "a\n", "1\tx\n");
    CHECK_THROWS_WITH_AS(load_corpus(paths), doctest::Contains("no label"), ParseError);
  }
  SUBCASE("missing vocab file") {
    auto paths = write_dataset("bad9", "1\n1\n1\n1 1 1\n", "a\n", "1\tx\n");
    paths.vocab = (test_dir() / "does_not_exist.txt").string();
    CHECK_THROWS_WITH_AS(load_corpus(paths), doctest::Contains("does_not_exist"), IoError);
  }
}

TEST_CASE("filter is the identity when thresholds are trivially satisfied") {
  auto paths = write_dataset("ident", "2\n2\n4\n1 1 1\n1 2 1\n2 1 1\n2 2 1\n", "a\nb\n",
                             "1\tx\n2\tx\n");
  CorpusSet set = load_corpus(paths);
  FilterReport rep = filter_corpus(set, 1, 1);
  CHECK(rep.docs_removed == 0);
  CHECK(rep.terms_removed == 0);
  CHECK(set.corpora[0].counts.docs == 2);
  CHECK(set.vocab_size() == 2);
}

TEST_CASE("filter cascade matches the exhaustive fixed-point oracle") {
  // doc0: {t0,t1,t2}, doc1: {t0,t1}, doc2: {t1,t3}; thresholds (2,2):
  // t2,t3 fall below document frequency, which starves doc2, which is removed
  CountMatrix X;
  X.docs = 3;
  X.terms = 4;
  X.cells = {{0, 0, 1}, {0, 1, 2}, {0, 2, 1}, {1, 0, 3}, {1, 1, 1}, {2, 1, 1}, {2, 3, 5}};
  auto [oracle_docs, oracle_terms] = brute_force_filter(X, 2, 2);
  CountMatrix expected = subset(X, oracle_docs, oracle_terms);

  CorpusSet set;
  set.vocab = {"t0", "t1", "t2", "t3"};
  set.corpora.push_back({"only", X});
  filter_corpus(set, 2, 2);

  REQUIRE(set.corpora.size() == 1);
  CHECK(set.corpora[0].counts.docs == expected.docs);
  CHECK(set.corpora[0].counts.terms == expected.terms);
  REQUIRE(set.corpora[0].counts.cells.size() == expected.cells.size());
  for (size_t i = 0; i < expected.cells.size(); ++i) {
    CHECK(set.corpora[0].counts.cells[i].doc == expected.cells[i].doc);
    CHECK(set.corpora[0].counts.cells[i].term == expected.cells[i].term);
    CHECK(set.corpora[0].counts.cells[i].count == expected.cells[i].count);
  }
  CHECK(set.vocab == std::vector<std::string>{"t0", "t1"});
}

TEST_CASE("randomized filter runs agree with the exhaustive oracle") {
  std::mt19937_64 rng(2024);
  int agreements = 0;
  for (int trial = 0; trial < 50; ++trial) {
    CountMatrix X = random_counts(5, 6, rng, 0.35);
    auto [od, ot] = brute_force_filter(X, 2, 2);
    CountMatrix expected = subset(X, od, ot);
    CorpusSet set;
    for (int j = 0; j < 6; ++j) set.vocab.push_back("t" + std::to_string(j));
    set.corpora.push_back({"c", X});
    if (expected.docs == 0) {
      CHECK_THROWS_AS(filter_corpus(set, 2, 2), DataError);
      continue;
    }
    filter_corpus(set, 2, 2);
    REQUIRE(set.corpora.size() == 1);
    const CountMatrix& got = set.corpora[0].counts;
    REQUIRE(got.docs == expected.docs);
    REQUIRE(got.terms == expected.terms);
    REQUIRE(got.cells.size() == expected.cells.size());
    bool same = true;
    for (size_t i = 0; i < expected.cells.size(); ++i)
      same = same && got.cells[i].doc == expected.cells[i].doc &&
             got.cells[i].term == expected.cells[i].term &&
             got.cells[i].count == expected.cells[i].count;
    CHECK(same);
    ++agreements;
  }
  CHECK(agreements > 10);  // the random regime must actually exercise survivors
}

TEST_CASE("document frequency for filtering is pooled across corpora") {
  // the shared term appears once per corpus; pooled df = 2 passes the
  // threshold that each corpus alone would fail
  CorpusSet set;
  set.vocab = {"shared", "a", "b"};
  CountMatrix c1;
  c1.docs = 1;
  c1.terms = 3;
  c1.cells = {{0, 0, 1}, {0, 1, 4}};
  CountMatrix c2;
  c2.docs = 1;
  c2.terms = 3;
  c2.cells = {{0, 0, 2}, {0, 2, 4}};
  set.corpora = {{"one", c1}, {"two", c2}};
  // term "a" and "b" each have pooled df 1 -> removed; each doc keeps 1 term,
  // passing min_doc_terms = 1
  filter_corpus(set, 1, 2);
  CHECK(set.vocab == std::vector<std::string>{"shared"});
  REQUIRE(set.corpora.size() == 2);
  CHECK(set.corpora[0].counts.cells.size() == 1);
  CHECK(set.corpora[1].counts.cells.size() == 1);
}

TEST_CASE("filter rejects silly thresholds") {
  CorpusSet set;
  set.vocab = {"a"};
  CountMatrix X;
  X.docs = 1;
  X.terms = 1;
  X.cells = {{0, 0, 1}};
  set.corpora = {{"c", X}};
  CHECK_THROWS_AS(filter_corpus(set, 0, 1), ConfigError);
}

TEST_CASE("word split conserves every cell exactly") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    CountMatrix X = random_counts(4, 7, rng, 0.5, 12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double rate = u(rng);
    WordSplit s = split_words(X, rate, rng);
    Matrix sum = s.support.dense() + s.query.dense();
    CHECK((sum - X.dense()).cwiseAbs().maxCoeff() == 0.0);
    for (const auto& c : s.support.cells) CHECK(c.count >= 1);
    for (const auto& c : s.query.cells) CHECK(c.count >= 1);
  }
}

TEST_CASE("word split edge rates") {
  std::mt19937_64 rng(3);
  CountMatrix X = random_counts(2, 4, rng, 0.8, 5);
  WordSplit all = split_words(X, 1.0, rng);
  CHECK(all.support.total_tokens() == X.total_tokens());
  CHECK(all.query.empty());
  WordSplit none = split_words(X, 0.0, rng);
  CHECK(none.support.empty());
  CHECK(none.query.total_tokens() == X.total_tokens());
  CHECK_THROWS_AS(split_words(X, 1.5, rng), ConfigError);
}

TEST_CASE("support counts concentrate at the binomial mean") {
  CountMatrix X;
  X.docs = 1;
  X.terms = 1;
  X.cells = {{0, 0, 10000}};
  double total = 0;
  int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + s);
    WordSplit split = split_words(X, 0.8, rng);
    total += static_cast<double>(split.support.total_tokens());
  }
  double mean = total / seeds;  // per-draw sd is 40; the mean of 100 draws sits within +-40 easily
  CHECK(mean > 7960.0);
  CHECK(mean < 8040.0);
}

TEST_CASE("target split holds out about the requested fraction") {
  std::mt19937_64 gen(42);
  CountMatrix target = random_counts(3, 10, gen, 0.9, 40);
  double tokens = static_cast<double>(target.total_tokens());
  double held = 0;
  int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(777 + s);
    WordSplit split = make_target_split(target, 0.2, rng);
    CHECK((split.support.dense() + split.query.dense() - target.dense()).cwiseAbs().maxCoeff() ==
          0.0);
    held += static_cast<double>(split.query.total_tokens());
  }
  double frac = held / (seeds * tokens);
  CHECK(frac > 0.18);
  CHECK(frac < 0.22);
}

TEST_CASE("degenerate heldout fractions skip resampling") {
  std::mt19937_64 rng(5);
  CountMatrix target = random_counts(2, 5, rng, 0.8, 4);
  WordSplit keep_all = make_target_split(target, 0.0, rng);
  CHECK(keep_all.query.empty());
  CHECK(keep_all.support.total_tokens() == target.total_tokens());
  WordSplit hold_all = make_target_split(target, 1.0, rng);
  CHECK(hold_all.support.empty());
}

TEST_CASE("an empty target cannot be split") {
  CountMatrix empty;
  empty.docs = 3;
  empty.terms = 5;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(make_target_split(empty, 0.2, rng), DataError);
}

TEST_CASE("canonicalize merges duplicates and rejects negatives") {
  CountMatrix X;
  X.docs = 2;
  X.terms = 2;
  X.cells = {{1, 1, 2}, {0, 0, 1}, {1, 1, 3}, {0, 1, 0}};
  X.canonicalize();
  REQUIRE(X.cells.size() == 2);
  CHECK(X.cells[0].doc == 0);
  CHECK(X.cells[1].count == 5);

  CountMatrix bad;
  bad.docs = 1;
  bad.terms = 1;
  bad.cells = {{0, 0, -1}};
  CHECK_THROWS_AS(bad.canonicalize(), ContractError);
}

TEST_CASE("document sampling draws without replacement when possible") {
  CountMatrix X;
  X.docs = 5;
  X.terms = 2;
  X.cells = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}, {4, 0, 5}, {4, 1, 7}};

  std::mt19937_64 rng(3);
  CountMatrix three = sample_documents(X, 3, rng);
  REQUIRE(three.docs == 3);
  CHECK(three.terms == 2);
  // each sampled row carries one of the original rows' term-0 counts, all distinct
  std::set<std::int64_t> seen;
  for (int d = 0; d < 3; ++d) {
    Matrix dense = three.dense();
    seen.insert(static_cast<std::int64_t>(dense(d, 0)));
  }
  CHECK(seen.size() == 3);

  std::mt19937_64 rng2(3);
  CountMatrix again = sample_documents(X, 3, rng2);
  CHECK(again.cells == three.cells);
}

TEST_CASE("document sampling repeats rows for small corpora") {
  CountMatrix X;
  X.docs = 1;
  X.terms = 2;
  X.cells = {{0, 0, 4}, {0, 1, 1}};
  std::mt19937_64 rng(9);
  CountMatrix out = sample_documents(X, 3, rng);
  REQUIRE(out.docs == 3);
  Matrix dense = out.dense();
  for (int d = 0; d < 3; ++d) {
    CHECK(dense(d, 0) == 4);
    CHECK(dense(d, 1) == 1);
  }

  CHECK_THROWS_AS(sample_documents(X, 0, rng), ConfigError);
  CountMatrix empty;
  empty.docs = 0;
  empty.terms = 2;
  CHECK_THROWS_AS(sample_documents(empty, 1, rng), DataError);
}
