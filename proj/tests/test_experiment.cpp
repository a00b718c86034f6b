#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fewtopics/experiment.hpp"
#include "fewtopics/synthetic.hpp"
#include "fewtopics/topic_model.hpp"

using namespace fewtopics;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// a small benchmark-shaped dataset on disk plus a config pointing at it
struct Fixture {
  fs::path dir;
  DatasetPaths paths;

  explicit Fixture(const std::string& name, int train = 3, int val = 1, int targets = 2) {
    dir = fresh_dir(name);
    SyntheticSpec spec;
    spec.train_corpora = train;
    spec.validation_corpora = val;
    spec.target_corpora = targets;
    spec.topics = 2;
    spec.vocab = 15;
    spec.docs_per_corpus = 6;
    spec.mean_doc_tokens = 40;
    spec.seed = 11;
    paths = {(dir / "docword.txt").string(), (dir / "vocab.txt").string(),
             (dir / "labels.txt").string()};
    write_corpus(generate_synthetic(spec), paths);
  }

  ExperimentConfig config(Method method) const {
    ExperimentConfig cfg;
    cfg.dataset = "tiny";
    cfg.paths = paths;
    cfg.method = method;
    cfg.target_categories = {"target00", "target01"};
    cfg.validation_categories = {"val00"};
    cfg.repetitions = 2;
    cfg.base_seed = 9;
    cfg.out_dir = (dir / "out").string();
    cfg.episode.topics = 2;
    cfg.episode.em_steps = 2;
    cfg.episode.support_docs = 3;
    cfg.episode.hidden = 4;
    cfg.episode.repr_dim = 3;
    cfg.episode.max_epochs = 6;
    cfg.episode.validation_interval = 3;
    cfg.episode.validation_episodes = 2;
    cfg.lda.sweeps = 30;
    cfg.lda.burn_in = 10;
    cfg.lda.refit_every = 0;
    return cfg;
  }
};

}  // namespace

TEST_CASE("the config parser reads every key and rejects bad input") {
  fs::path dir = fresh_dir("fewtopics_cfg");
  fs::path cfg_path = dir / "config.txt";
  write_file(cfg_path,
             "# a comment line\n"
             "dataset demo\n"
             "docword d.txt\n"
             "vocab v.txt\n"
             "labels l.txt\n"
             "method nn-rf   # trailing comment\n"
             "target_categories target00 target01\n"
             "validation_categories val00\n"
             "repetitions 4\n"
             "base_seed 12345\n"
             "heldout 0.25\n"
             "out_dir out\n"
             "save_models true\n"
             "\n"
             "topics 7\n"
             "em_steps 5\n"
             "support_docs 4\n"
             "support_rate 0.7\n"
             "hidden 16\n"
             "repr_dim 8\n"
             "learning_rate 0.002\n"
             "dropout_rate 0.2\n"
             "max_epochs 200\n"
             "patience 5\n"
             "validation_interval 20\n"
             "validation_episodes 10\n"
             "log1p_features 1\n"
             "em_tolerance 1e-6\n"
             "lda_sweeps 500\n"
             "lda_burn_in 250\n"
             "lda_refit_every 10\n"
             "lda_alpha0 2\n"
             "lda_beta0 0.02\n");

  ExperimentConfig cfg = parse_experiment_config(cfg_path.string());
  CHECK(cfg.dataset == "demo");
  CHECK(cfg.paths.docword == "d.txt");
  CHECK(cfg.paths.vocab == "v.txt");
  CHECK(cfg.paths.labels == "l.txt");
  CHECK(cfg.method == Method::kNnRf);
  CHECK(cfg.target_categories == std::vector<std::string>{"target00", "target01"});
  CHECK(cfg.validation_categories == std::vector<std::string>{"val00"});
  CHECK(cfg.repetitions == 4);
  CHECK(cfg.base_seed == 12345);
  CHECK(cfg.heldout == doctest::Approx(0.25));
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.save_models);
  CHECK(cfg.episode.topics == 7);
  CHECK(cfg.episode.em_steps == 5);
  CHECK(cfg.episode.support_docs == 4);
  CHECK(cfg.episode.support_rate == doctest::Approx(0.7));
  CHECK(cfg.episode.hidden == 16);
  CHECK(cfg.episode.repr_dim == 8);
  CHECK(cfg.episode.learning_rate == doctest::Approx(0.002));
  CHECK(cfg.episode.dropout_rate == doctest::Approx(0.2));
  CHECK(cfg.episode.max_epochs == 200);
  CHECK(cfg.episode.patience == 5);
  CHECK(cfg.episode.validation_interval == 20);
  CHECK(cfg.episode.validation_episodes == 10);
  CHECK(cfg.episode.log1p_features);
  CHECK(cfg.episode.em_tolerance == doctest::Approx(1e-6));
  CHECK(cfg.lda.sweeps == 500);
  CHECK(cfg.lda.burn_in == 250);
  CHECK(cfg.lda.refit_every == 10);
  CHECK(cfg.lda.alpha0 == doctest::Approx(2));
  CHECK(cfg.lda.beta0 == doctest::Approx(0.02));

  SUBCASE("unknown keys carry the line number") {
    write_file(cfg_path, "dataset demo\nbogus_key 3\n");
    try {
      parse_experiment_config(cfg_path.string());
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
      CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    }
  }
  SUBCASE("bad numbers are parse errors") {
    write_file(cfg_path, "repetitions many\n");
    CHECK_THROWS_AS(parse_experiment_config(cfg_path.string()), ParseError);
  }
  SUBCASE("bad method names are parse errors") {
    write_file(cfg_path, "method gradient-boosting\n");
    CHECK_THROWS_AS(parse_experiment_config(cfg_path.string()), ParseError);
  }
  SUBCASE("missing values are parse errors") {
    write_file(cfg_path, "dataset\n");
    CHECK_THROWS_AS(parse_experiment_config(cfg_path.string()), ParseError);
  }
  SUBCASE("a missing file is an io error") {
    CHECK_THROWS_AS(parse_experiment_config((dir / "absent.txt").string()), IoError);
  }
}

TEST_CASE("config validation rejects incomplete or inconsistent setups") {
  Fixture fix("fewtopics_validate");
  ExperimentConfig cfg = fix.config(Method::kDir);

  SUBCASE("valid") { CHECK_NOTHROW(cfg.validate()); }
  SUBCASE("dataset required") {
    cfg.dataset.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("paths required") {
    cfg.paths.vocab.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("out_dir required") {
    cfg.out_dir.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("targets required") {
    cfg.target_categories.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("repetitions at least 1") {
    cfg.repetitions = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("heldout interior") {
    cfg.heldout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("unknown target category") {
    cfg.target_categories = {"nowhere"};
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  }
  SUBCASE("category in both roles") {
    cfg.validation_categories = {"target00"};
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  }
  SUBCASE("duplicate target category") {
    cfg.target_categories = {"target00", "target00"};
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  }
}

TEST_CASE("a dir run emits one row per repetition and target plus a summary") {
  Fixture fix("fewtopics_run_dir");
  ExperimentConfig cfg = fix.config(Method::kDir);
  RunReport report = run_experiment(cfg);

  CHECK(report.failures == 0);
  REQUIRE(report.rows.size() == 4);  // 2 reps x 2 targets
  CHECK(report.rows[0].target == "target00");
  CHECK(report.rows[1].target == "target01");
  CHECK(report.rows[0].repetition == 0);
  CHECK(report.rows[2].repetition == 1);
  for (const auto& row : report.rows) {
    CHECK(row.ok);
    CHECK(row.perplexity > 0);
  }

  std::string results = slurp(fs::path(cfg.out_dir) / "results.tsv");
  CHECK(results.rfind("# method\tdataset\ttarget\trepetition\tperplexity\n", 0) == 0);
  CHECK(results.find("\tall\t-\t") != std::string::npos);
  int data_lines = 0;
  std::istringstream lines(results);
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty() && line[0] != '#') ++data_lines;
  CHECK(data_lines == 5);  // 4 rows + summary

  CHECK(fs::exists(fs::path(cfg.out_dir) / "timings.tsv"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "trainlog_rep0.tsv"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "trainlog_rep1.tsv"));

  SUBCASE("a rerun is byte-identical") {
    fs::path first = fs::path(cfg.out_dir) / "results.tsv";
    std::string before = slurp(first);
    run_experiment(cfg);
    CHECK(slurp(first) == before);
  }
  SUBCASE("threaded repetitions produce the same bytes") {
    std::string sequential = slurp(fs::path(cfg.out_dir) / "results.tsv");
    setenv("FEWSHOT_THREADS", "2", 1);
    run_experiment(cfg);
    unsetenv("FEWSHOT_THREADS");
    CHECK(slurp(fs::path(cfg.out_dir) / "results.tsv") == sequential);
  }
}

TEST_CASE("lda methods run without training artifacts") {
  Fixture fix("fewtopics_run_lda");
  ExperimentConfig cfg = fix.config(Method::kLdaInd);
  cfg.repetitions = 1;
  RunReport report = run_experiment(cfg);
  CHECK(report.failures == 0);
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) CHECK(row.perplexity > 0);
  CHECK(!fs::exists(fs::path(cfg.out_dir) / "trainlog_rep0.tsv"));

  SUBCASE("the pooled variant works too") {
    cfg.method = Method::kLdaAll;
    cfg.out_dir = (fix.dir / "out_all").string();
    RunReport pooled = run_experiment(cfg);
    CHECK(pooled.failures == 0);
    CHECK(pooled.rows.size() == 2);
  }
}

TEST_CASE("saved models can be reloaded and inspected") {
  Fixture fix("fewtopics_run_save");
  ExperimentConfig cfg = fix.config(Method::kNn);
  cfg.repetitions = 1;
  cfg.save_models = true;
  RunReport report = run_experiment(cfg);
  CHECK(report.failures == 0);

  fs::path model_path = fs::path(cfg.out_dir) / "model_rep0_target00.txt";
  REQUIRE(fs::exists(model_path));
  auto [model, vocab] = load_topic_model(model_path.string());
  CHECK(model.topics() == 2);
  CHECK(model.vocab() == 15);
  CHECK(vocab.size() == 15);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "prior_rep0.bin"));
}

TEST_CASE("a target that cannot be split is recorded as a failure") {
  Fixture fix("fewtopics_run_fail");
  // overwrite the dataset with one whose target corpus has a single token
  CorpusSet set;
  set.vocab = {"a", "b", "c"};
  Corpus train;
  train.name = "train00";
  train.counts.docs = 2;
  train.counts.terms = 3;
  train.counts.cells = {{0, 0, 5}, {0, 1, 4}, {1, 1, 6}, {1, 2, 5}};
  Corpus target;
  target.name = "target00";
  target.counts.docs = 1;
  target.counts.terms = 3;
  target.counts.cells = {{0, 2, 1}};
  set.corpora = {train, target};
  write_corpus(set, fix.paths);

  ExperimentConfig cfg = fix.config(Method::kLdaInd);
  cfg.target_categories = {"target00"};
  cfg.validation_categories.clear();
  cfg.repetitions = 1;
  cfg.episode.support_docs = 1;  // the lone document's single token cannot split
  cfg.out_dir = (fix.dir / "out_fail").string();
  RunReport report = run_experiment(cfg);

  CHECK(report.failures == 1);
  REQUIRE(report.rows.size() == 1);
  CHECK(!report.rows[0].ok);
  CHECK(!report.rows[0].message.empty());
  std::string results = slurp(fs::path(cfg.out_dir) / "results.tsv");
  CHECK(results.find("# FAILED repetition 0 target target00:") != std::string::npos);
  CHECK(results.find("# no successful rows") != std::string::npos);
}

TEST_CASE("prepare filters and rewrites a dataset") {
  // hand-built so every term occurs: term 3 lives in one document only
  fs::path dir = fresh_dir("fewtopics_prepare");
  CorpusSet set;
  set.vocab = {"alpha", "beta", "gamma", "delta"};
  Corpus a, b;
  a.name = "news";
  a.counts.docs = 2;
  a.counts.terms = 4;
  a.counts.cells = {{0, 0, 3}, {0, 1, 2}, {0, 3, 1}, {1, 0, 1}, {1, 1, 4}, {1, 2, 2}};
  b.name = "mail";
  b.counts.docs = 2;
  b.counts.terms = 4;
  b.counts.cells = {{0, 0, 2}, {0, 2, 5}, {1, 1, 1}, {1, 2, 2}};
  set.corpora = {a, b};
  DatasetPaths in{(dir / "docword.txt").string(), (dir / "vocab.txt").string(),
                  (dir / "labels.txt").string()};
  write_corpus(set, in);

  fs::path out_dir = dir / "prepared";
  DatasetPaths out{(out_dir / "docword.txt").string(), (out_dir / "vocab.txt").string(),
                   (out_dir / "labels.txt").string()};

  SUBCASE("thresholds (1,1) keep everything byte-identical") {
    PrepareSummary summary = prepare_dataset(in, out, 1, 1);
    CHECK(summary.corpora == 2);
    CHECK(summary.vocab == 4);
    CHECK(summary.filter.docs_removed == 0);
    CHECK(summary.filter.terms_removed == 0);
    CHECK(slurp(out.docword) == slurp(in.docword));
    CHECK(slurp(out.vocab) == slurp(in.vocab));
    CHECK(slurp(out.labels) == slurp(in.labels));
  }
  SUBCASE("a term occurring in one document falls to min_term_docs 2") {
    PrepareSummary summary = prepare_dataset(in, out, 1, 2);
    CHECK(summary.vocab == 3);
    CHECK(summary.filter.terms_removed == 1);
    CorpusSet reloaded = load_corpus(out);
    REQUIRE(reloaded.vocab_size() == 3);
    CHECK(reloaded.vocab == std::vector<std::string>{"alpha", "beta", "gamma"});
  }
  SUBCASE("a missing input propagates as an io error") {
    DatasetPaths missing = in;
    missing.vocab = (dir / "absent.txt").string();
    CHECK_THROWS_AS(prepare_dataset(missing, out, 1, 1), IoError);
  }
}
