#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fewtopics/autodiff.hpp"
#include "fewtopics/common.hpp"
#include "fewtopics/topic_model.hpp"

// Networks that map a handful of support documents to Dirichlet parameters.
// A permutation-invariant encoder summarizes the documents; one head emits a
// per-document alpha row, another emits per-topic beta rows from pooled
// counts. The "direct" variant skips the networks and learns free parameters.

namespace fewtopics {

enum class PriorVariant {
  kFull,    // encoder representation feeds both heads
  kNoRepr,  // heads see counts only
  kDirect,  // free softplus-parameterized alpha vector and beta matrix
};

std::string to_string(PriorVariant variant);
PriorVariant prior_variant_from_string(const std::string& name);

struct DenseParams {
  Matrix W;
  Matrix b;  // 1 x out
};

// Three weight layers: two hidden ReLU layers and a linear output.
struct MlpParams {
  std::vector<DenseParams> layers;
};

struct PriorNetConfig {
  PriorVariant variant = PriorVariant::kFull;
  int vocab = 0;       // J
  int topics = 0;      // K
  int repr_dim = 256;  // M
  int hidden = 256;
  bool log1p_features = false;
  std::uint64_t seed = 0;
};

struct PriorNetParams {
  PriorNetConfig config;
  MlpParams f_r;  // J -> hidden -> hidden -> hidden (document features)
  MlpParams g_r;  // hidden -> hidden -> hidden -> repr_dim (set representation)
  MlpParams f_a;  // (J [+ M]) -> hidden -> hidden -> K, softplus output
  MlpParams f_b;  // (J [+ M]) -> hidden -> hidden -> J, softplus output
  Matrix dir_a;   // 1 x K pre-softplus (direct variant)
  Matrix dir_b;   // K x J pre-softplus (direct variant)

  // He-style init: weights ~ N(0, sqrt(2/fan_in)), biases zero; the direct
  // variant starts at softplus-inverse(0.1).
  static PriorNetParams init(const PriorNetConfig& config);

  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
};

// Parameter leaves mirrored into a graph, in tensors() order.
struct PriorVars {
  std::vector<ad::Var> all;
  std::vector<ad::Var> f_r, g_r, f_a, f_b;  // W0,b0,W1,b1,W2,b2 each
  ad::Var dir_a, dir_b;
};

PriorVars insert_params(ad::Graph& graph, const PriorNetParams& params);

// Set representation r (1 x M): feature net per document, mean across
// documents, then the set-level net. Requires at least one document.
ad::Var encode_corpus(ad::Graph& graph, ad::Var support, const PriorVars& vars,
                      const PriorNetConfig& config, Scalar dropout_rate, bool training,
                      std::mt19937_64& rng);

// Per-document alpha rows (N x K, non-negative). `repr` is appended to every
// document's features when the variant uses it.
ad::Var generate_alpha(ad::Graph& graph, ad::Var support, ad::Var repr, const PriorVars& vars,
                       const PriorNetConfig& config, Scalar dropout_rate, bool training,
                       std::mt19937_64& rng);

// Per-topic beta rows (K x J, non-negative) from the alpha-weighted pooled
// counts X^T alpha.
ad::Var generate_beta(ad::Graph& graph, ad::Var support, ad::Var alpha, ad::Var repr,
                      const PriorVars& vars, const PriorNetConfig& config, Scalar dropout_rate,
                      bool training, std::mt19937_64& rng);

struct PriorVarPair {
  ad::Var alpha;
  ad::Var beta;
};

// Full forward pass for whichever variant the params carry.
PriorVarPair generate_priors(ad::Graph& graph, const Matrix& support, const PriorVars& vars,
                             const PriorNetConfig& config, Scalar dropout_rate, bool training,
                             std::mt19937_64& rng);

// Plain-value wrapper for callers that do not need gradients.
PriorPair generate_priors_value(const Matrix& support, const PriorNetParams& params,
                                Scalar dropout_rate, bool training, std::mt19937_64& rng);

// Versioned file: text manifest (variant, vocab, topics, repr dim, hidden,
// seed, named tensor table), then the tensors as row-major little-endian
// float64 in table order. The loader validates every shape.
void save_prior_net(const std::string& path, const PriorNetParams& params);
PriorNetParams load_prior_net(const std::string& path);

}  // namespace fewtopics
