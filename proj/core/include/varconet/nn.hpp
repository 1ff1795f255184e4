#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "varconet/types.hpp"

namespace varconet {

// How init_params fills a tensor.
enum class ParamRole { Weight, Bias, Positional, Gain };

struct ParamTensor {
  std::string name;
  std::vector<Eigen::Index> shape;
  ParamRole role = ParamRole::Weight;
  Eigen::Index fan_in = 1;
  Vector values;
  Vector grad;

  Eigen::Index size() const { return values.size(); }
};

// Row-major views of a 2-D tensor of shape [rows, cols].
using ParamMap = Eigen::Map<RowMatrix>;
using ConstParamMap = Eigen::Map<const RowMatrix>;

// Per-sample gradient storage, index-aligned with a ParamStore. Summing
// buffers in a fixed order keeps results independent of the worker count.
struct GradBuffer {
  std::vector<Vector> grads;

  void zero();
  void add(const GradBuffer& other);
  ParamMap matrix(std::size_t index, const std::vector<Eigen::Index>& shape);
};

// Ordered collection of named tensors. Indices returned by add() stay valid
// for the lifetime of the store.
class ParamStore {
public:
  std::size_t add(const std::string& name, std::vector<Eigen::Index> shape, ParamRole role,
                  Eigen::Index fan_in = 1);

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  ParamTensor& operator[](std::size_t i) { return tensors_[i]; }
  const ParamTensor& operator[](std::size_t i) const { return tensors_[i]; }
  ParamTensor& at(const std::string& name) { return tensors_[index_of(name)]; }
  const ParamTensor& at(const std::string& name) const { return tensors_[index_of(name)]; }

  std::size_t size() const { return tensors_.size(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  ConstParamMap matrix(std::size_t i) const;
  ParamMap matrix(std::size_t i);

  GradBuffer make_grad_buffer() const;
  void zero_grad();
  // grad += buffer
  void accumulate(const GradBuffer& buffer);
  Eigen::Index total_size() const;

  bool operator==(const ParamStore& other) const;

private:
  std::vector<ParamTensor> tensors_;
  std::map<std::string, std::size_t> by_name_;
};

// Boolean validity of each token row.
using TokenMask = std::vector<bool>;

// R x L x K activation volume, stored [r][l][k].
struct Tensor3 {
  Eigen::Index d0 = 0, d1 = 0, d2 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(Eigen::Index a, Eigen::Index b, Eigen::Index c)
      : d0(a), d1(b), d2(c), data(static_cast<std::size_t>(a * b * c), 0.0) {}

  double& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    return data[static_cast<std::size_t>((i * d1 + j) * d2 + k)];
  }
  double operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return data[static_cast<std::size_t>((i * d1 + j) * d2 + k)];
  }
};

inline constexpr double kNormEpsilon = 1e-5;

// ---------------------------------------------------------------------------
// Instance normalization: each row standardized over its own time extent.

struct InstanceNormCache {
  Matrix normalized;
  Vector inv_std;
};

Matrix instance_norm_forward(const Matrix& x, InstanceNormCache* cache = nullptr);
Matrix instance_norm_backward(const InstanceNormCache& cache, const Matrix& dy);

// ---------------------------------------------------------------------------
// 1-D convolution with kernels shared across regions (valid, no padding).

struct ConvGeometry {
  Eigen::Index kernels = 16;
  Eigen::Index width = 8;
  Eigen::Index stride = 4;

  // floor((T - width) / stride) + 1; throws BoundsError if T < width.
  Eigen::Index output_length(Eigen::Index t) const;
};

// Tag selecting the constructors that bind to tensors already in a store.
struct BindExisting {};
inline constexpr BindExisting bind_existing{};

class Conv1d {
public:
  Conv1d() = default;
  // Registers "<prefix>.kernels" [K, W] and "<prefix>.bias" [K].
  Conv1d(ParamStore& store, const std::string& prefix, ConvGeometry geometry);
  // Binds to tensors already present in the store.
  Conv1d(const ParamStore& store, const std::string& prefix, ConvGeometry geometry, BindExisting);

  Tensor3 forward(const ParamStore& params, const Matrix& x) const;
  // Accumulates kernel and bias gradients; returns dL/dx when want_input.
  Matrix backward(const ParamStore& params, const Matrix& x, const Tensor3& dy, GradBuffer& grads,
                  bool want_input = true) const;

  const ConvGeometry& geometry() const { return geometry_; }

private:
  ConvGeometry geometry_;
  std::size_t kernels_ = 0;
  std::size_t bias_ = 0;
};

// Mean over the third axis.
Matrix gap_over_kernels(const Tensor3& a);
Tensor3 gap_over_kernels_backward(const Matrix& dy, Eigen::Index kernels);

// ---------------------------------------------------------------------------
// Trainable positional encoding of shape [max_tokens, dim].

class PositionalEncoding {
public:
  PositionalEncoding() = default;
  PositionalEncoding(ParamStore& store, const std::string& name, Eigen::Index max_tokens,
                     Eigen::Index dim);
  PositionalEncoding(const ParamStore& store, const std::string& name, BindExisting);

  // Adds pos rows to the first `valid` token rows; later rows pass through.
  Matrix forward(const ParamStore& params, const Matrix& tokens, Eigen::Index valid) const;
  // dL/dtokens is dy itself; pos gradient only collects the first `valid` rows.
  void backward(const Matrix& dy, Eigen::Index valid, GradBuffer& grads) const;

  Eigen::Index max_tokens(const ParamStore& params) const;

private:
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Layer normalization over the feature axis of each token row.

class LayerNorm {
public:
  struct Cache {
    Matrix normalized;
    Vector inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& prefix, Eigen::Index dim);
  LayerNorm(const ParamStore& store, const std::string& prefix, BindExisting);

  Matrix forward(const ParamStore& params, const Matrix& z, Cache* cache) const;
  Matrix backward(const ParamStore& params, const Cache& cache, const Matrix& dy,
                  GradBuffer& grads) const;

private:
  std::size_t gain_ = 0;
  std::size_t bias_ = 0;
};

// ---------------------------------------------------------------------------
// Post-norm multi-head self-attention block:
//   y = LayerNorm(x + Attn(x) W_o + b_o)
// Invalid rows never enter the computation and come out as zero rows.

class MultiHeadAttention {
public:
  struct Cache {
    std::vector<Eigen::Index> rows;
    Matrix x, q, k, v, concat;
    std::vector<Matrix> probs;  // per head, valid x valid
    LayerNorm::Cache norm;
    Eigen::Index total_rows = 0;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& attn_prefix,
                     const std::string& norm_prefix, Eigen::Index dim, Eigen::Index heads);
  MultiHeadAttention(const ParamStore& store, const std::string& attn_prefix,
                     const std::string& norm_prefix, Eigen::Index heads, BindExisting);

  Matrix forward(const ParamStore& params, const Matrix& x, const TokenMask& mask,
                 Cache* cache) const;
  Matrix backward(const ParamStore& params, const Cache& cache, const Matrix& dy,
                  GradBuffer& grads) const;

  Eigen::Index heads() const { return heads_; }

private:
  Eigen::Index heads_ = 1;
  std::size_t wq_ = 0, bq_ = 0, wk_ = 0, bk_ = 0, wv_ = 0, bv_ = 0, wo_ = 0, bo_ = 0;
  LayerNorm norm_;
};

// ---------------------------------------------------------------------------
// Post-norm position-wise feed-forward block:
//   y = LayerNorm(x + relu(x W1 + b1) W2 + b2)

class FeedForward {
public:
  struct Cache {
    std::vector<Eigen::Index> rows;
    Matrix x, hidden, activated;
    LayerNorm::Cache norm;
    Eigen::Index total_rows = 0;
  };

  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& ffn_prefix, const std::string& norm_prefix,
              Eigen::Index dim, Eigen::Index hidden);
  FeedForward(const ParamStore& store, const std::string& ffn_prefix,
              const std::string& norm_prefix, BindExisting);

  Matrix forward(const ParamStore& params, const Matrix& x, const TokenMask& mask,
                 Cache* cache) const;
  Matrix backward(const ParamStore& params, const Cache& cache, const Matrix& dy,
                  GradBuffer& grads) const;

private:
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
  LayerNorm norm_;
};

// ---------------------------------------------------------------------------
// Linear classification head: logits = v^T W + b with W of shape [D, 2].

class LinearHead {
public:
  LinearHead() = default;
  LinearHead(ParamStore& store, Eigen::Index input_dim, Eigen::Index classes = 2);
  explicit LinearHead(const ParamStore& store);

  Vector forward(const ParamStore& params, const Vector& v) const;
  // Returns dL/dv.
  Vector backward(const ParamStore& params, const Vector& v, const Vector& dlogits,
                  GradBuffer& grads) const;

  Eigen::Index input_dim(const ParamStore& params) const;

private:
  std::size_t weight_ = 0;
  std::size_t bias_ = 0;
};

Vector softmax(const Vector& logits);

// ---------------------------------------------------------------------------
// Initialization: weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero,
// gains one, positional encodings N(0, 0.02). Tensors are filled in store
// order so the result depends only on the rng state.

enum class LayerKind { InstanceNorm, Conv1d, Gap, PosEncoding, Attention, FeedForward, LayerNorm, Linear };

struct LayerSpec {
  LayerKind kind = LayerKind::Linear;
  std::string prefix;
  Eigen::Index dim = 0;         // model dim R (attention, ffn, norm, pos)
  Eigen::Index heads = 1;       // attention
  Eigen::Index hidden = 0;      // ffn
  Eigen::Index max_tokens = 0;  // pos
  Eigen::Index input_dim = 0;   // linear
  Eigen::Index outputs = 2;     // linear
  ConvGeometry conv;            // conv1d
  std::string norm_prefix;      // attention / ffn
};

// Declares every tensor named by the specs and draws initial values.
ParamStore init_params(const std::vector<LayerSpec>& specs, Rng& rng);
void init_values(ParamStore& store, Rng& rng);

// ---------------------------------------------------------------------------
// Central-difference gradient check. f is evaluated at x +/- h e_i for each
// coordinate; returns the max over i of relative_error(a_i, n_i).

template <typename F>
double finite_diff_check(F&& f, Vector point, const Vector& analytic, double h = 1e-5);

}  // namespace varconet

#include "varconet/detail/finite_diff.ipp"
