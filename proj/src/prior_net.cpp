#include "fewtopics/prior_net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"

namespace fewtopics {

std::string to_string(PriorVariant variant) {
  switch (variant) {
    case PriorVariant::kFull: return "full";
    case PriorVariant::kNoRepr: return "nn";
    case PriorVariant::kDirect: return "dir";
  }
  throw ContractError("unknown prior variant");
}

PriorVariant prior_variant_from_string(const std::string& name) {
  if (name == "full") return PriorVariant::kFull;
  if (name == "nn") return PriorVariant::kNoRepr;
  if (name == "dir") return PriorVariant::kDirect;
  throw ConfigError("unknown prior variant '" + name + "'");
}

namespace {

void validate(const PriorNetConfig& c) {
  if (c.vocab < 1 || c.topics < 1) throw ConfigError("prior nets need vocab >= 1 and topics >= 1");
  if (c.variant != PriorVariant::kDirect && c.hidden < 1)
    throw ConfigError("prior nets need a positive hidden width");
  if (c.variant == PriorVariant::kFull && c.repr_dim < 0)
    throw ConfigError("representation dimension must be non-negative");
}

MlpParams init_mlp(int in, int hidden, int out, std::mt19937_64& rng) {
  MlpParams mlp;
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  auto layer = [&](int fan_in, int fan_out) {
    DenseParams d;
    Scalar scale = std::sqrt(2.0 / static_cast<Scalar>(fan_in));
    d.W.resize(fan_in, fan_out);
    for (long r = 0; r < d.W.rows(); ++r)
      for (long c = 0; c < d.W.cols(); ++c) d.W(r, c) = scale * normal(rng);
    d.b = Matrix::Zero(1, fan_out);
    return d;
  };
  mlp.layers.push_back(layer(in, hidden));
  mlp.layers.push_back(layer(hidden, hidden));
  mlp.layers.push_back(layer(hidden, out));
  return mlp;
}

void push_mlp(std::vector<std::pair<std::string, Matrix*>>& out, const std::string& name,
              MlpParams& mlp) {
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    out.emplace_back(name + ".W" + std::to_string(i), &mlp.layers[i].W);
    out.emplace_back(name + ".b" + std::to_string(i), &mlp.layers[i].b);
  }
}

// Two hidden ReLU layers with optional dropout, then a linear output under
// the requested activation.
ad::Var mlp_forward(ad::Var input, const std::vector<ad::Var>& vars, ad::Activation out_act,
                    Scalar dropout_rate, bool training, std::mt19937_64& rng) {
  ad::Var h = input;
  for (int layer = 0; layer < 2; ++layer) {
    h = ad::dense_layer(h, vars[static_cast<size_t>(2 * layer)],
                        vars[static_cast<size_t>(2 * layer + 1)], ad::Activation::kRelu);
    h = ad::dropout(h, dropout_rate, training, rng);
  }
  return ad::dense_layer(h, vars[4], vars[5], out_act);
}

ad::Var maybe_log1p(ad::Graph& graph, const Matrix& counts, bool log1p_features) {
  if (!log1p_features) return graph.constant(counts);
  return graph.constant(counts.unaryExpr([](Scalar x) { return std::log1p(x); }));
}

}  // namespace

PriorNetParams PriorNetParams::init(const PriorNetConfig& config) {
  validate(config);
  PriorNetParams p;
  p.config = config;
  std::mt19937_64 rng(mix_seed(config.seed, SeedStream::kInit));
  if (config.variant == PriorVariant::kDirect) {
    Scalar start = std::log(std::expm1(0.1));  // softplus-inverse of 0.1
    p.dir_a = Matrix::Constant(1, config.topics, start);
    p.dir_b = Matrix::Constant(config.topics, config.vocab, start);
    return p;
  }
  bool with_repr = config.variant == PriorVariant::kFull;
  int head_in = config.vocab + (with_repr ? config.repr_dim : 0);
  if (with_repr) {
    p.f_r = init_mlp(config.vocab, config.hidden, config.hidden, rng);
    p.g_r = init_mlp(config.hidden, config.hidden, config.repr_dim, rng);
  }
  p.f_a = init_mlp(head_in, config.hidden, config.topics, rng);
  p.f_b = init_mlp(head_in, config.hidden, config.vocab, rng);
  return p;
}

std::vector<std::pair<std::string, Matrix*>> PriorNetParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  if (config.variant == PriorVariant::kDirect) {
    out.emplace_back("dir.a", &dir_a);
    out.emplace_back("dir.b", &dir_b);
    return out;
  }
  if (config.variant == PriorVariant::kFull) {
    push_mlp(out, "f_r", f_r);
    push_mlp(out, "g_r", g_r);
  }
  push_mlp(out, "f_a", f_a);
  push_mlp(out, "f_b", f_b);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> PriorNetParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, tensor] : const_cast<PriorNetParams*>(this)->tensors())
    out.emplace_back(name, tensor);
  return out;
}

PriorVars insert_params(ad::Graph& graph, const PriorNetParams& params) {
  PriorVars vars;
  auto insert_mlp = [&](const MlpParams& mlp, std::vector<ad::Var>& dst) {
    for (const DenseParams& layer : mlp.layers) {
      dst.push_back(graph.param(layer.W));
      dst.push_back(graph.param(layer.b));
      vars.all.push_back(dst[dst.size() - 2]);
      vars.all.push_back(dst.back());
    }
  };
  if (params.config.variant == PriorVariant::kDirect) {
    vars.dir_a = graph.param(params.dir_a);
    vars.dir_b = graph.param(params.dir_b);
    vars.all = {vars.dir_a, vars.dir_b};
    return vars;
  }
  if (params.config.variant == PriorVariant::kFull) {
    insert_mlp(params.f_r, vars.f_r);
    insert_mlp(params.g_r, vars.g_r);
  }
  insert_mlp(params.f_a, vars.f_a);
  insert_mlp(params.f_b, vars.f_b);
  return vars;
}

ad::Var encode_corpus(ad::Graph& graph, ad::Var support, const PriorVars& vars,
                      const PriorNetConfig& config, Scalar dropout_rate, bool training,
                      std::mt19937_64& rng) {
  if (graph.value(support).rows() < 1)
    throw ContractError("encode_corpus needs at least one document");
  if (graph.value(support).cols() != config.vocab)
    throw DimensionError("encode_corpus: feature width " +
                         std::to_string(graph.value(support).cols()) + " does not match vocab " +
                         std::to_string(config.vocab));
  ad::Var features = mlp_forward(support, vars.f_r, ad::Activation::kIdentity, dropout_rate,
                                 training, rng);
  ad::Var pooled = ad::col_mean(features);  // order-independent set summary
  return mlp_forward(pooled, vars.g_r, ad::Activation::kIdentity, dropout_rate, training, rng);
}

ad::Var generate_alpha(ad::Graph& graph, ad::Var support, ad::Var repr, const PriorVars& vars,
                       const PriorNetConfig& config, Scalar dropout_rate, bool training,
                       std::mt19937_64& rng) {
  ad::Var input = support;
  if (config.variant == PriorVariant::kFull) {
    int docs = static_cast<int>(graph.value(support).rows());
    input = ad::concat_cols(support, ad::broadcast_rows(repr, docs));
  }
  return mlp_forward(input, vars.f_a, ad::Activation::kSoftplus, dropout_rate, training, rng);
}

ad::Var generate_beta(ad::Graph& graph, ad::Var support, ad::Var alpha, ad::Var repr,
                      const PriorVars& vars, const PriorNetConfig& config, Scalar dropout_rate,
                      bool training, std::mt19937_64& rng) {
  if (graph.value(alpha).cols() != config.topics)
    throw DimensionError("generate_beta: alpha has " +
                         std::to_string(graph.value(alpha).cols()) + " columns, expected " +
                         std::to_string(config.topics));
  // row k of alpha^T X is the corpus count vector weighted by topic k's alpha
  ad::Var pooled = ad::matmul(ad::transpose(alpha), support);
  ad::Var input = pooled;
  if (config.variant == PriorVariant::kFull)
    input = ad::concat_cols(pooled, ad::broadcast_rows(repr, config.topics));
  return mlp_forward(input, vars.f_b, ad::Activation::kSoftplus, dropout_rate, training, rng);
}

PriorVarPair generate_priors(ad::Graph& graph, const Matrix& support, const PriorVars& vars,
                             const PriorNetConfig& config, Scalar dropout_rate, bool training,
                             std::mt19937_64& rng) {
  validate(config);
  if (support.cols() != config.vocab)
    throw DimensionError("support has " + std::to_string(support.cols()) +
                         " terms, the networks expect " + std::to_string(config.vocab));
  int docs = static_cast<int>(support.rows());
  if (docs < 1) throw ContractError("generate_priors needs at least one document");

  if (config.variant == PriorVariant::kDirect) {
    ad::Var alpha = ad::broadcast_rows(ad::softplus(vars.dir_a), docs);
    ad::Var beta = ad::softplus(vars.dir_b);
    return {alpha, beta};
  }

  ad::Var features = maybe_log1p(graph, support, config.log1p_features);
  ad::Var raw = config.log1p_features ? graph.constant(support) : features;
  ad::Var repr{};
  if (config.variant == PriorVariant::kFull)
    repr = encode_corpus(graph, features, vars, config, dropout_rate, training, rng);
  ad::Var alpha = generate_alpha(graph, features, repr, vars, config, dropout_rate, training, rng);
  ad::Var beta =
      generate_beta(graph, raw, alpha, repr, vars, config, dropout_rate, training, rng);
  return {alpha, beta};
}

PriorPair generate_priors_value(const Matrix& support, const PriorNetParams& params,
                                Scalar dropout_rate, bool training, std::mt19937_64& rng) {
  ad::Graph graph;
  PriorVars vars = insert_params(graph, params);
  PriorVarPair pair =
      generate_priors(graph, support, vars, params.config, dropout_rate, training, rng);
  return {graph.value(pair.alpha), graph.value(pair.beta)};
}

void save_prior_net(const std::string& path, const PriorNetParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write prior-net file: " + path);
  auto tensors = params.tensors();
  out << "fewtopics-priors v1\n"
      << "variant " << to_string(params.config.variant) << "\n"
      << "vocab " << params.config.vocab << "\n"
      << "topics " << params.config.topics << "\n"
      << "repr " << params.config.repr_dim << "\n"
      << "hidden " << params.config.hidden << "\n"
      << "log1p " << (params.config.log1p_features ? 1 : 0) << "\n"
      << "seed " << params.config.seed << "\n"
      << "tensors " << tensors.size() << "\n";
  for (auto& [name, tensor] : tensors)
    out << name << " " << tensor->rows() << " " << tensor->cols() << "\n";
  out << "binary\n";
  for (auto& [name, tensor] : tensors) detail::write_matrix(out, *tensor);
  if (!out) throw IoError("failed writing prior-net file: " + path);
}

PriorNetParams load_prior_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open prior-net file: " + path);
  std::string line;
  long lineno = 1;
  if (!std::getline(in, line) || line != "fewtopics-priors v1")
    throw ParseError(path, lineno, "not a prior-net file");
  auto read_line = [&](const char* key) -> std::istringstream {
    if (!std::getline(in, line)) throw ParseError(path, lineno + 1, "truncated manifest");
    ++lineno;
    std::istringstream ss(line);
    std::string k;
    if (!(ss >> k) || k != key)
      throw ParseError(path, lineno, std::string("expected '") + key + "', got '" + line + "'");
    return ss;
  };
  auto read_int = [&](const char* key) {
    auto ss = read_line(key);
    long v;
    if (!(ss >> v)) throw ParseError(path, lineno, std::string(key) + " is not a number");
    return v;
  };
  PriorNetConfig config;
  std::string variant_name;
  if (!(read_line("variant") >> variant_name))
    throw ParseError(path, lineno, "missing variant name");
  try {
    config.variant = prior_variant_from_string(variant_name);
  } catch (const ConfigError& e) {
    throw ParseError(path, lineno, e.what());
  }
  config.vocab = static_cast<int>(read_int("vocab"));
  config.topics = static_cast<int>(read_int("topics"));
  config.repr_dim = static_cast<int>(read_int("repr"));
  config.hidden = static_cast<int>(read_int("hidden"));
  config.log1p_features = read_int("log1p") != 0;
  {
    auto ss = read_line("seed");
    unsigned long long seed;
    if (!(ss >> seed)) throw ParseError(path, lineno, "seed is not a number");
    config.seed = seed;
  }
  long declared = read_int("tensors");
  if (declared < 0) throw ParseError(path, lineno, "negative tensor count");

  PriorNetParams params;
  try {
    params = PriorNetParams::init(config);
  } catch (const ConfigError& e) {
    throw ParseError(path, lineno, e.what());
  }
  auto tensors = params.tensors();
  if (tensors.size() != static_cast<size_t>(declared))
    throw ParseError(path, lineno,
                     "manifest declares " + std::to_string(declared) + " tensors, the " +
                         to_string(config.variant) + " variant has " +
                         std::to_string(tensors.size()));
  for (auto& [name, tensor] : tensors) {
    if (!std::getline(in, line)) throw ParseError(path, ++lineno, "truncated tensor table");
    ++lineno;
    std::istringstream ss(line);
    std::string got;
    long rows, cols;
    if (!(ss >> got >> rows >> cols))
      throw ParseError(path, lineno, "malformed tensor line '" + line + "'");
    if (got != name)
      throw ParseError(path, lineno, "expected tensor '" + name + "', got '" + got + "'");
    if (rows != tensor->rows() || cols != tensor->cols())
      throw ParseError(path, lineno, "tensor '" + name + "' is " + std::to_string(rows) + "x" +
                                         std::to_string(cols) + ", expected " +
                                         std::to_string(tensor->rows()) + "x" +
                                         std::to_string(tensor->cols()));
  }
  if (!std::getline(in, line) || line != "binary")
    throw ParseError(path, ++lineno, "expected the binary marker");
  for (auto& [name, tensor] : tensors)
    if (!detail::read_matrix(in, *tensor))
      throw ParseError(path, 0, "truncated payload at tensor '" + name + "'");
  char extra;
  if (in.read(&extra, 1)) throw ParseError(path, 0, "trailing bytes after the payload");
  return params;
}

}  // namespace fewtopics
