#pragma once

#include <nlohmann/json.hpp>

#include "varconet/nn.hpp"
#include "varconet/types.hpp"

namespace varconet {

struct HyperParams {
  int n_layers = 1;
  int n_heads = 1;
  int ff_dim = 2048;
  int batch_size = 64;
  double lr = 2.375e-4;
  double tau = 0.054;
  int l_min = 80;
  int l_max = 320;
  ConvGeometry conv{16, 8, 4};

  // n_heads must divide regions; l_min >= kernel width; l_min <= l_max.
  void validate(Eigen::Index regions) const;
  void validate() const;

  bool operator==(const HyperParams&) const = default;
};

void to_json(nlohmann::json& j, const HyperParams& hp);
void from_json(const nlohmann::json& j, HyperParams& hp);

inline bool operator==(const ConvGeometry& a, const ConvGeometry& b) {
  return a.kernels == b.kernels && a.width == b.width && a.stride == b.stride;
}

// Tokens whose receptive field lies inside the first t_valid samples:
// floor((t_valid - 8) / 4) + 1 for the default geometry.
Eigen::Index valid_token_count(Eigen::Index t_valid, const ConvGeometry& conv = {});

// Smallest length >= t_valid that ends exactly on a token boundary.
Eigen::Index minimal_padded_length(Eigen::Index t_valid, const ConvGeometry& conv = {});

// Cosine-similarity connectome of embedding rows with the diagonal pinned
// to exactly 1. Throws DegenerateError naming the first zero-norm row.
struct CosineCache {
  Matrix unit;   // row-normalized embedding
  Vector norms;
};
Matrix cosine_fc(const Matrix& embedding, CosineCache* cache = nullptr);
// dL/dembedding from dL/d(upper-triangle vector).
Matrix cosine_fc_backward(const CosineCache& cache, const Vector& dvec);

// Row-major upper triangle (i < j).
Vector vectorize_upper(const Matrix& fc);
Matrix devectorize_upper(const Vector& vec, Eigen::Index regions, double diagonal = 1.0);
// Regions R such that R(R-1)/2 == length; throws if none.
Eigen::Index regions_for_pairs(Eigen::Index length);
// (i, j) of the k-th upper-triangle entry.
std::pair<Eigen::Index, Eigen::Index> pair_of_index(Eigen::Index k, Eigen::Index regions);

// Throws InvariantError unless symmetric, unit diagonal and |entries| <= 1.
void validate_fc(const Matrix& fc, double tolerance = 1e-12);

// The 1D-CNN + Transformer encoder mapping R x T time series to an R x L
// embedding and from there to a vectorized cosine FC.
class Encoder {
public:
  struct Cache {
    Eigen::Index valid_samples = 0;
    Eigen::Index valid_tokens = 0;
    InstanceNormCache norm;
    Matrix padded;
    Eigen::Index padded_tokens = 0;
    std::vector<MultiHeadAttention::Cache> attention;
    std::vector<FeedForward::Cache> feedforward;
    CosineCache cosine;
  };

  // Fresh weights drawn from rng.
  Encoder(Eigen::Index regions, const HyperParams& hp, Rng& rng);
  // Wraps existing weights (for example from a checkpoint).
  Encoder(ParamStore params, const HyperParams& hp);

  Encoder(const Encoder& other);
  Encoder& operator=(const Encoder& other);
  Encoder(Encoder&&) noexcept = default;
  Encoder& operator=(Encoder&&) noexcept = default;

  static std::vector<LayerSpec> layer_specs(Eigen::Index regions, const HyperParams& hp);

  // x is R x T_valid. The signal is normalized over its valid extent, then
  // zero-padded to padded_to samples; tokens overlapping the padding are
  // masked out of attention and dropped from the output.
  Matrix encode(const Matrix& x, Eigen::Index padded_to, Cache* cache = nullptr) const;
  Matrix encode(const Matrix& x) const;

  // encode -> cosine_fc -> vectorize_upper.
  Vector fc_vector(const Matrix& x, Eigen::Index padded_to, Cache* cache = nullptr) const;
  Vector fc_vector(const Matrix& x) const;

  // Backpropagates dL/d(fc vector); returns dL/dx when want_input is set.
  Matrix backward(const Cache& cache, const Vector& dvec, GradBuffer& grads,
                  bool want_input = false) const;

  Eigen::Index regions() const { return regions_; }
  Eigen::Index max_tokens() const;
  const HyperParams& hyperparams() const { return hp_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

private:
  void bind();

  Eigen::Index regions_ = 0;
  HyperParams hp_;
  ParamStore params_;
  Conv1d conv_;
  PositionalEncoding pos_;
  std::vector<MultiHeadAttention> attention_;
  std::vector<FeedForward> feedforward_;
};

}  // namespace varconet
