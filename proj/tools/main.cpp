#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "fewtopics/experiment.hpp"
#include "fewtopics/synthetic.hpp"
#include "fewtopics/topic_model.hpp"

namespace {

using namespace fewtopics;

int cmd_prepare(const DatasetPaths& in, const std::string& out_dir, int min_doc_terms,
                int min_term_docs) {
  DatasetPaths out{out_dir + "/docword.txt", out_dir + "/vocab.txt", out_dir + "/labels.txt"};
  PrepareSummary summary = prepare_dataset(in, out, min_doc_terms, min_term_docs);
  std::cout << "corpora " << summary.corpora << "\n";
  for (const auto& [name, docs] : summary.docs_per_corpus)
    std::cout << name << " " << docs << "\n";
  std::cout << "vocab " << summary.vocab << "\n";
  std::cout << "docs_removed " << summary.filter.docs_removed << "\n";
  std::cout << "terms_removed " << summary.filter.terms_removed << "\n";
  for (const auto& name : summary.filter.corpora_dropped)
    std::cout << "dropped " << name << "\n";
  std::cout << "written " << out.docword << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const CLI::App* run,
            const std::string& method_override, std::uint64_t seed_override,
            const std::string& out_override) {
  ExperimentConfig config = parse_experiment_config(config_path);
  if (run->count("--method")) config.method = method_from_string(method_override);
  if (run->count("--seed")) config.base_seed = seed_override;
  if (run->count("--out")) config.out_dir = out_override;

  RunReport report = run_experiment(config);
  std::cout << "results " << report.results_path << "\n";
  std::cout << "rows " << report.rows.size() << "\n";
  std::cout << "failures " << report.failures << "\n";
  return report.failures == 0 ? 0 : 1;
}

int cmd_topics(const std::string& model_path, int count) {
  auto [model, vocab] = load_topic_model(model_path);
  int terms = std::min(count, model.vocab());
  for (int k = 0; k < model.topics(); ++k) {
    std::cout << "Topic" << (k + 1) << ":";
    for (int j : top_terms(model, k, terms)) {
      if (j >= 0 && j < static_cast<int>(vocab.size()))
        std::cout << " " << vocab[j];
      else
        std::cout << " t" << j;
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  CorpusSet set = generate_synthetic(spec);
  DatasetPaths out{out_dir + "/docword.txt", out_dir + "/vocab.txt", out_dir + "/labels.txt"};
  std::filesystem::create_directories(out_dir);
  write_corpus(set, out);
  std::int64_t tokens = 0;
  for (const Corpus& corpus : set.corpora) tokens += corpus.counts.total_tokens();
  std::cout << "corpora " << set.corpora.size() << "\n";
  std::cout << "vocab " << set.vocab_size() << "\n";
  std::cout << "tokens " << tokens << "\n";
  std::cout << "written " << out.docword << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot topic modeling toolkit"};
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand("prepare", "filter a raw dataset and write canonical files");
  DatasetPaths prep_in;
  std::string prep_out;
  int min_doc_terms = 30, min_term_docs = 30;
  prepare->add_option("--docword", prep_in.docword, "raw docword file")->required();
  prepare->add_option("--vocab", prep_in.vocab, "raw vocabulary file")->required();
  prepare->add_option("--labels", prep_in.labels, "raw document-category file")->required();
  prepare->add_option("--out", prep_out, "output directory")->required();
  prepare->add_option("--min-doc-terms", min_doc_terms, "minimum distinct terms per document");
  prepare->add_option("--min-term-docs", min_term_docs, "minimum documents per term");

  auto* run = app.add_subcommand("run", "run a configured experiment");
  std::string config_path, method_override, out_override;
  std::uint64_t seed_override = 0;
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--method", method_override, "override the configured method");
  run->add_option("--seed", seed_override, "override the configured base seed");
  run->add_option("--out", out_override, "override the configured output directory");

  auto* topics = app.add_subcommand("topics", "print the top terms of a saved model");
  std::string model_path;
  int top_count = 10;
  topics->add_option("model", model_path, "saved topic model file")->required();
  topics->add_option("-m,--terms", top_count, "terms per topic");

  auto* gen = app.add_subcommand("gen-synthetic", "emit a synthetic benchmark dataset");
  SyntheticSpec spec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--train", spec.train_corpora, "training corpora");
  gen->add_option("--val", spec.validation_corpora, "validation corpora");
  gen->add_option("--targets", spec.target_corpora, "target corpora");
  gen->add_option("--topics", spec.topics, "ground-truth topics per corpus");
  gen->add_option("--vocab", spec.vocab, "vocabulary size");
  gen->add_option("--docs", spec.docs_per_corpus, "documents per corpus");
  gen->add_option("--tokens", spec.mean_doc_tokens, "mean tokens per document");
  gen->add_option("--sharpness", spec.topic_sharpness, "global topic concentration");
  gen->add_option("--fidelity", spec.topic_fidelity, "per-corpus topic fidelity");
  gen->add_option("--mix", spec.mix_concentration, "document mixture concentration");

  try {
    app.parse(argc, argv);
    if (prepare->parsed()) return cmd_prepare(prep_in, prep_out, min_doc_terms, min_term_docs);
    if (run->parsed())
      return cmd_run(config_path, run, method_override, seed_override, out_override);
    if (topics->parsed()) return cmd_topics(model_path, top_count);
    if (gen->parsed()) return cmd_gen_synthetic(spec, gen_out);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
