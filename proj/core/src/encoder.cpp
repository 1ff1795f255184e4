#include "varconet/encoder.hpp"

#include <cmath>

#include "varconet/error.hpp"

namespace varconet {

namespace {

std::string layer_prefix(int i) { return "layer" + std::to_string(i); }

}  // namespace

// --- hyperparameters -----------------------------------------------------------

void HyperParams::validate() const {
  auto fail = [](const std::string& what) { throw InvariantError("hyperparameters: " + what); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (ff_dim < 1) fail("ff_dim must be >= 1");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
  if (conv.kernels < 1 || conv.width < 1 || conv.stride < 1) fail("conv geometry must be positive");
  if (l_min < conv.width) {
    fail("l_min (" + std::to_string(l_min) + ") must be >= kernel width " +
         std::to_string(conv.width));
  }
  if (l_min > l_max) fail("l_min must be <= l_max");
}

void HyperParams::validate(Eigen::Index regions) const {
  validate();
  if (regions % n_heads != 0) {
    throw InvariantError("hyperparameters: n_heads (" + std::to_string(n_heads) +
                         ") must divide the region count " + std::to_string(regions));
  }
}

void to_json(nlohmann::json& j, const HyperParams& hp) {
  j = nlohmann::json{{"n_layers", hp.n_layers},       {"n_heads", hp.n_heads},
                     {"ff_dim", hp.ff_dim},           {"batch_size", hp.batch_size},
                     {"lr", hp.lr},                   {"tau", hp.tau},
                     {"l_min", hp.l_min},             {"l_max", hp.l_max},
                     {"kernels", hp.conv.kernels},    {"kernel_width", hp.conv.width},
                     {"stride", hp.conv.stride}};
}

void from_json(const nlohmann::json& j, HyperParams& hp) {
  hp.n_layers = j.value("n_layers", hp.n_layers);
  hp.n_heads = j.value("n_heads", hp.n_heads);
  hp.ff_dim = j.value("ff_dim", hp.ff_dim);
  hp.batch_size = j.value("batch_size", hp.batch_size);
  hp.lr = j.value("lr", hp.lr);
  hp.tau = j.value("tau", hp.tau);
  hp.l_min = j.value("l_min", hp.l_min);
  hp.l_max = j.value("l_max", hp.l_max);
  hp.conv.kernels = j.value("kernels", hp.conv.kernels);
  hp.conv.width = j.value("kernel_width", hp.conv.width);
  hp.conv.stride = j.value("stride", hp.conv.stride);
}

// --- geometry helpers ---------------------------------------------------------

Eigen::Index valid_token_count(Eigen::Index t_valid, const ConvGeometry& conv) {
  return conv.output_length(t_valid);
}

Eigen::Index minimal_padded_length(Eigen::Index t_valid, const ConvGeometry& conv) {
  const Eigen::Index tokens = valid_token_count(t_valid, conv);
  const Eigen::Index covered = conv.width + (tokens - 1) * conv.stride;
  return covered == t_valid ? t_valid : conv.width + tokens * conv.stride;
}

// --- FC -----------------------------------------------------------------------

Matrix cosine_fc(const Matrix& embedding, CosineCache* cache) {
  const Eigen::Index r = embedding.rows();
  Vector norms = embedding.rowwise().norm();
  for (Eigen::Index i = 0; i < r; ++i) {
    if (!(norms[i] > 1e-12)) {
      throw DegenerateError("embedding row for region " + std::to_string(i) + " has zero norm");
    }
  }
  Matrix unit = embedding.array().colwise() / norms.array();
  Matrix fc = unit * unit.transpose();
  for (Eigen::Index i = 0; i < r; ++i) {
    fc(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < r; ++j) {
      const double c = std::clamp(fc(i, j), -1.0, 1.0);
      fc(i, j) = c;
      fc(j, i) = c;
    }
  }
  if (cache) {
    cache->unit = std::move(unit);
    cache->norms = std::move(norms);
  }
  return fc;
}

Matrix cosine_fc_backward(const CosineCache& cache, const Vector& dvec) {
  const Matrix& u = cache.unit;
  const Eigen::Index r = u.rows();
  // dL/du_i = sum_j G_ij u_j with G symmetric, zero diagonal.
  Matrix g = Matrix::Zero(r, r);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j, ++k) {
      g(i, j) = dvec[k];
      g(j, i) = dvec[k];
    }
  }
  Matrix du = g * u;
  Matrix de(r, u.cols());
  for (Eigen::Index i = 0; i < r; ++i) {
    const double radial = du.row(i).dot(u.row(i));
    de.row(i) = (du.row(i) - radial * u.row(i)) / cache.norms[i];
  }
  return de;
}

Vector vectorize_upper(const Matrix& fc) {
  const Eigen::Index r = fc.rows();
  Vector out(static_cast<Eigen::Index>(n_pairs(static_cast<std::size_t>(r))));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = i + 1; j < r; ++j) out[k++] = fc(i, j);
  return out;
}

Matrix devectorize_upper(const Vector& vec, Eigen::Index regions, double diagonal) {
  if (static_cast<std::size_t>(vec.size()) != n_pairs(static_cast<std::size_t>(regions))) {
    throw InvariantError("vector of length " + std::to_string(vec.size()) +
                         " is not an upper triangle for R=" + std::to_string(regions));
  }
  Matrix fc = Matrix::Constant(regions, regions, 0.0);
  fc.diagonal().setConstant(diagonal);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < regions; ++i) {
    for (Eigen::Index j = i + 1; j < regions; ++j, ++k) {
      fc(i, j) = vec[k];
      fc(j, i) = vec[k];
    }
  }
  return fc;
}

Eigen::Index regions_for_pairs(Eigen::Index length) {
  const auto r = static_cast<Eigen::Index>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * length)) / 2.0));
  if (r < 2 || static_cast<Eigen::Index>(n_pairs(static_cast<std::size_t>(r))) != length) {
    throw InvariantError(std::to_string(length) + " is not a triangular number R(R-1)/2");
  }
  return r;
}

std::pair<Eigen::Index, Eigen::Index> pair_of_index(Eigen::Index k, Eigen::Index regions) {
  Eigen::Index i = 0;
  Eigen::Index row_len = regions - 1;
  while (k >= row_len) {
    k -= row_len;
    ++i;
    --row_len;
    if (row_len <= 0) throw BoundsError("pair index out of range");
  }
  return {i, i + 1 + k};
}

void validate_fc(const Matrix& fc, double tolerance) {
  if (fc.rows() != fc.cols()) throw InvariantError("FC matrix is not square");
  for (Eigen::Index i = 0; i < fc.rows(); ++i) {
    if (fc(i, i) != 1.0) throw InvariantError("FC diagonal is not exactly 1");
    for (Eigen::Index j = 0; j < fc.cols(); ++j) {
      if (fc(i, j) != fc(j, i)) throw InvariantError("FC matrix is not symmetric");
      if (!(std::abs(fc(i, j)) <= 1.0 + tolerance)) throw InvariantError("FC entry outside [-1, 1]");
    }
  }
}

// --- encoder ------------------------------------------------------------------

std::vector<LayerSpec> Encoder::layer_specs(Eigen::Index regions, const HyperParams& hp) {
  std::vector<LayerSpec> specs;
  specs.push_back({.kind = LayerKind::InstanceNorm});
  specs.push_back({.kind = LayerKind::Conv1d, .prefix = "conv", .conv = hp.conv});
  specs.push_back({.kind = LayerKind::Gap});
  specs.push_back({.kind = LayerKind::PosEncoding,
                   .prefix = "pos.encoding",
                   .dim = regions,
                   .max_tokens = valid_token_count(hp.l_max, hp.conv)});
  for (int i = 0; i < hp.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    specs.push_back({.kind = LayerKind::Attention,
                     .prefix = p + ".attn",
                     .dim = regions,
                     .heads = hp.n_heads,
                     .norm_prefix = p + ".norm1"});
    specs.push_back({.kind = LayerKind::FeedForward,
                     .prefix = p + ".ffn",
                     .dim = regions,
                     .hidden = hp.ff_dim,
                     .norm_prefix = p + ".norm2"});
  }
  return specs;
}

Encoder::Encoder(Eigen::Index regions, const HyperParams& hp, Rng& rng)
    : regions_(regions), hp_(hp) {
  if (regions < 2) throw InvariantError("encoder needs at least 2 regions");
  hp_.validate(regions);
  params_ = init_params(layer_specs(regions, hp_), rng);
  bind();
}

Encoder::Encoder(ParamStore params, const HyperParams& hp) : hp_(hp), params_(std::move(params)) {
  regions_ = params_.at("pos.encoding").shape.at(1);
  hp_.validate(regions_);
  bind();
}

Encoder::Encoder(const Encoder& other) : regions_(other.regions_), hp_(other.hp_), params_(other.params_) {
  bind();
}

Encoder& Encoder::operator=(const Encoder& other) {
  if (this != &other) {
    regions_ = other.regions_;
    hp_ = other.hp_;
    params_ = other.params_;
    bind();
  }
  return *this;
}

void Encoder::bind() {
  conv_ = Conv1d(params_, "conv", hp_.conv, bind_existing);
  pos_ = PositionalEncoding(params_, "pos.encoding", bind_existing);
  attention_.clear();
  feedforward_.clear();
  for (int i = 0; i < hp_.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    attention_.emplace_back(params_, p + ".attn", p + ".norm1", hp_.n_heads, bind_existing);
    feedforward_.emplace_back(params_, p + ".ffn", p + ".norm2", bind_existing);
  }
}

Eigen::Index Encoder::max_tokens() const { return pos_.max_tokens(params_); }

Matrix Encoder::encode(const Matrix& x, Eigen::Index padded_to, Cache* cache) const {
  if (x.rows() != regions_) {
    throw InvariantError("encoder built for " + std::to_string(regions_) + " regions, input has " +
                         std::to_string(x.rows()));
  }
  const Eigen::Index t_valid = x.cols();
  const Eigen::Index valid = valid_token_count(t_valid, hp_.conv);
  if (padded_to < t_valid) {
    throw BoundsError("padded length " + std::to_string(padded_to) + " shorter than signal " +
                      std::to_string(t_valid));
  }
  if (valid > max_tokens()) {
    throw BoundsError("signal of " + std::to_string(t_valid) + " samples yields " +
                      std::to_string(valid) + " tokens; at most " + std::to_string(max_tokens()) +
                      " are supported");
  }

  Cache local;
  Cache& c = cache ? *cache : local;
  c.valid_samples = t_valid;
  c.valid_tokens = valid;

  Matrix normalized = instance_norm_forward(x, &c.norm);
  c.padded = Matrix::Zero(regions_, padded_to);
  c.padded.leftCols(t_valid) = normalized;

  Matrix pooled = gap_over_kernels(conv_.forward(params_, c.padded));  // R x L_pad
  c.padded_tokens = pooled.cols();
  Matrix tokens = pos_.forward(params_, pooled.transpose(), valid);

  TokenMask mask(static_cast<std::size_t>(c.padded_tokens), false);
  for (Eigen::Index l = 0; l < valid; ++l) mask[static_cast<std::size_t>(l)] = true;

  c.attention.resize(attention_.size());
  c.feedforward.resize(feedforward_.size());
  for (std::size_t i = 0; i < attention_.size(); ++i) {
    tokens = attention_[i].forward(params_, tokens, mask, &c.attention[i]);
    tokens = feedforward_[i].forward(params_, tokens, mask, &c.feedforward[i]);
  }
  return tokens.topRows(valid).transpose();
}

Matrix Encoder::encode(const Matrix& x) const {
  return encode(x, minimal_padded_length(x.cols(), hp_.conv));
}

Vector Encoder::fc_vector(const Matrix& x, Eigen::Index padded_to, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  Matrix emb = encode(x, padded_to, &c);
  return vectorize_upper(cosine_fc(emb, &c.cosine));
}

Vector Encoder::fc_vector(const Matrix& x) const {
  return fc_vector(x, minimal_padded_length(x.cols(), hp_.conv));
}

Matrix Encoder::backward(const Cache& c, const Vector& dvec, GradBuffer& grads,
                         bool want_input) const {
  Matrix demb = cosine_fc_backward(c.cosine, dvec);  // R x L_valid
  Matrix dtokens = Matrix::Zero(c.padded_tokens, regions_);
  dtokens.topRows(c.valid_tokens) = demb.transpose();
  for (std::size_t i = attention_.size(); i-- > 0;) {
    dtokens = feedforward_[i].backward(params_, c.feedforward[i], dtokens, grads);
    dtokens = attention_[i].backward(params_, c.attention[i], dtokens, grads);
  }
  pos_.backward(dtokens, c.valid_tokens, grads);
  Tensor3 dconv = gap_over_kernels_backward(dtokens.transpose(), hp_.conv.kernels);
  Matrix dpadded = conv_.backward(params_, c.padded, dconv, grads, want_input);
  if (!want_input) return {};
  return instance_norm_backward(c.norm, dpadded.leftCols(c.valid_samples));
}

}  // namespace varconet
