#include "varconet/nn.hpp"

#include <cmath>
#include <numeric>

#include "varconet/error.hpp"

namespace varconet {

namespace {

Eigen::Index shape_product(const std::vector<Eigen::Index>& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
}

std::pair<Eigen::Index, Eigen::Index> as_2d(const std::vector<Eigen::Index>& shape) {
  if (shape.size() == 1) return {1, shape[0]};
  if (shape.size() == 2) return {shape[0], shape[1]};
  throw InvariantError("tensor of rank " + std::to_string(shape.size()) + " has no matrix view");
}

}  // namespace

// --- storage ----------------------------------------------------------------

void GradBuffer::zero() {
  for (auto& g : grads) g.setZero();
}

void GradBuffer::add(const GradBuffer& other) {
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i];
}

ParamMap GradBuffer::matrix(std::size_t index, const std::vector<Eigen::Index>& shape) {
  auto [r, c] = as_2d(shape);
  return ParamMap(grads[index].data(), r, c);
}

std::size_t ParamStore::add(const std::string& name, std::vector<Eigen::Index> shape,
                            ParamRole role, Eigen::Index fan_in) {
  if (contains(name)) throw InvariantError("duplicate tensor name '" + name + "'");
  ParamTensor t;
  t.name = name;
  t.role = role;
  t.fan_in = fan_in;
  const Eigen::Index n = shape_product(shape);
  t.shape = std::move(shape);
  t.values = Vector::Zero(n);
  t.grad = Vector::Zero(n);
  tensors_.push_back(std::move(t));
  by_name_[name] = tensors_.size() - 1;
  return tensors_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw InvariantError("no tensor named '" + name + "'");
  return it->second;
}

ConstParamMap ParamStore::matrix(std::size_t i) const {
  auto [r, c] = as_2d(tensors_[i].shape);
  return ConstParamMap(tensors_[i].values.data(), r, c);
}

ParamMap ParamStore::matrix(std::size_t i) {
  auto [r, c] = as_2d(tensors_[i].shape);
  return ParamMap(tensors_[i].values.data(), r, c);
}

GradBuffer ParamStore::make_grad_buffer() const {
  GradBuffer b;
  b.grads.reserve(tensors_.size());
  for (const auto& t : tensors_) b.grads.push_back(Vector::Zero(t.size()));
  return b;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.grad.setZero();
}

void ParamStore::accumulate(const GradBuffer& buffer) {
  for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].grad += buffer.grads[i];
}

Eigen::Index ParamStore::total_size() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.shape != b.shape || a.values != b.values) return false;
  }
  return true;
}

// --- instance norm ------------------------------------------------------------

Matrix instance_norm_forward(const Matrix& x, InstanceNormCache* cache) {
  if (x.cols() < 2) {
    throw BoundsError("instance_norm needs at least 2 time points, got " +
                      std::to_string(x.cols()));
  }
  const double n = static_cast<double>(x.cols());
  Matrix y(x.rows(), x.cols());
  Vector inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mean).square().sum() / n;
    inv_std[r] = 1.0 / std::sqrt(var + kNormEpsilon);
    y.row(r) = (x.row(r).array() - mean) * inv_std[r];
  }
  if (cache) {
    cache->normalized = y;
    cache->inv_std = inv_std;
  }
  return y;
}

Matrix instance_norm_backward(const InstanceNormCache& cache, const Matrix& dy) {
  const auto& y = cache.normalized;
  const double n = static_cast<double>(y.cols());
  Matrix dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double mean_dy = dy.row(r).sum() / n;
    const double mean_dyy = dy.row(r).dot(y.row(r)) / n;
    dx.row(r) = cache.inv_std[r] * (dy.row(r).array() - mean_dy - y.row(r).array() * mean_dyy);
  }
  return dx;
}

// --- conv1d -------------------------------------------------------------------

Eigen::Index ConvGeometry::output_length(Eigen::Index t) const {
  if (t < width) {
    throw BoundsError("convolution needs at least " + std::to_string(width) +
                      " time points, got " + std::to_string(t));
  }
  return (t - width) / stride + 1;
}

Conv1d::Conv1d(ParamStore& store, const std::string& prefix, ConvGeometry geometry)
    : geometry_(geometry) {
  kernels_ = store.add(prefix + ".kernels", {geometry.kernels, geometry.width}, ParamRole::Weight,
                       geometry.width);
  bias_ = store.add(prefix + ".bias", {geometry.kernels}, ParamRole::Bias);
}

Conv1d::Conv1d(const ParamStore& store, const std::string& prefix, ConvGeometry geometry, BindExisting)
    : geometry_(geometry),
      kernels_(store.index_of(prefix + ".kernels")),
      bias_(store.index_of(prefix + ".bias")) {
  const auto& shape = store[kernels_].shape;
  if (shape.size() != 2 || shape[0] != geometry.kernels || shape[1] != geometry.width) {
    throw InvariantError("conv kernels tensor has unexpected shape");
  }
}

Tensor3 Conv1d::forward(const ParamStore& params, const Matrix& x) const {
  const Eigen::Index len = geometry_.output_length(x.cols());
  const auto w = params.matrix(kernels_);
  const auto& b = params[bias_].values;
  Tensor3 out(x.rows(), len, geometry_.kernels);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index l = 0; l < len; ++l) {
      const auto window = x.row(r).segment(l * geometry_.stride, geometry_.width);
      for (Eigen::Index k = 0; k < geometry_.kernels; ++k) {
        out(r, l, k) = b[k] + w.row(k).dot(window);
      }
    }
  }
  return out;
}

Matrix Conv1d::backward(const ParamStore& params, const Matrix& x, const Tensor3& dy,
                        GradBuffer& grads, bool want_input) const {
  const auto w = params.matrix(kernels_);
  auto dw = grads.matrix(kernels_, params[kernels_].shape);
  auto& db = grads.grads[bias_];
  Matrix dx;
  if (want_input) dx = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < dy.d0; ++r) {
    for (Eigen::Index l = 0; l < dy.d1; ++l) {
      const Eigen::Index start = l * geometry_.stride;
      const auto window = x.row(r).segment(start, geometry_.width);
      for (Eigen::Index k = 0; k < dy.d2; ++k) {
        const double g = dy(r, l, k);
        db[k] += g;
        dw.row(k) += g * window;
        if (want_input) dx.row(r).segment(start, geometry_.width) += g * w.row(k);
      }
    }
  }
  return dx;
}

Matrix gap_over_kernels(const Tensor3& a) {
  if (a.d2 < 1) throw InvariantError("gap_over_kernels needs at least one kernel");
  Matrix out(a.d0, a.d1);
  for (Eigen::Index r = 0; r < a.d0; ++r) {
    for (Eigen::Index l = 0; l < a.d1; ++l) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.d2; ++k) s += a(r, l, k);
      out(r, l) = s / static_cast<double>(a.d2);
    }
  }
  return out;
}

Tensor3 gap_over_kernels_backward(const Matrix& dy, Eigen::Index kernels) {
  Tensor3 da(dy.rows(), dy.cols(), kernels);
  const double scale = 1.0 / static_cast<double>(kernels);
  for (Eigen::Index r = 0; r < dy.rows(); ++r)
    for (Eigen::Index l = 0; l < dy.cols(); ++l)
      for (Eigen::Index k = 0; k < kernels; ++k) da(r, l, k) = dy(r, l) * scale;
  return da;
}

// --- positional encoding ------------------------------------------------------

PositionalEncoding::PositionalEncoding(ParamStore& store, const std::string& name,
                                       Eigen::Index max_tokens, Eigen::Index dim)
    : pos_(store.add(name, {max_tokens, dim}, ParamRole::Positional)) {}

PositionalEncoding::PositionalEncoding(const ParamStore& store, const std::string& name, BindExisting)
    : pos_(store.index_of(name)) {}

Eigen::Index PositionalEncoding::max_tokens(const ParamStore& params) const {
  return params[pos_].shape[0];
}

Matrix PositionalEncoding::forward(const ParamStore& params, const Matrix& tokens,
                                   Eigen::Index valid) const {
  const auto pos = params.matrix(pos_);
  if (valid > pos.rows()) {
    throw BoundsError("sequence has " + std::to_string(valid) +
                      " tokens but positional encoding holds " + std::to_string(pos.rows()));
  }
  if (valid > tokens.rows() || tokens.cols() != pos.cols()) {
    throw InvariantError("positional encoding shape mismatch");
  }
  Matrix out = tokens;
  out.topRows(valid) += pos.topRows(valid);
  return out;
}

void PositionalEncoding::backward(const Matrix& dy, Eigen::Index valid, GradBuffer& grads) const {
  auto& g = grads.grads[pos_];
  const Eigen::Index dim = dy.cols();
  ParamMap dpos(g.data(), g.size() / dim, dim);
  dpos.topRows(valid) += dy.topRows(valid);
}

// --- layer norm ---------------------------------------------------------------

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, Eigen::Index dim)
    : gain_(store.add(prefix + ".gain", {dim}, ParamRole::Gain)),
      bias_(store.add(prefix + ".bias", {dim}, ParamRole::Bias)) {}

LayerNorm::LayerNorm(const ParamStore& store, const std::string& prefix, BindExisting)
    : gain_(store.index_of(prefix + ".gain")), bias_(store.index_of(prefix + ".bias")) {}

Matrix LayerNorm::forward(const ParamStore& params, const Matrix& z, Cache* cache) const {
  const auto& gain = params[gain_].values;
  const auto& bias = params[bias_].values;
  const double n = static_cast<double>(z.cols());
  Matrix xhat(z.rows(), z.cols());
  Vector inv_std(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mean = z.row(i).sum() / n;
    const double var = (z.row(i).array() - mean).square().sum() / n;
    inv_std[i] = 1.0 / std::sqrt(var + kNormEpsilon);
    xhat.row(i) = (z.row(i).array() - mean) * inv_std[i];
  }
  Matrix y = (xhat.array().rowwise() * gain.transpose().array()).rowwise() +
             bias.transpose().array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const ParamStore& params, const Cache& cache, const Matrix& dy,
                           GradBuffer& grads) const {
  const auto& gain = params[gain_].values;
  const auto& xhat = cache.normalized;
  grads.grads[gain_] += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
  grads.grads[bias_] += dy.colwise().sum().transpose();
  const double n = static_cast<double>(dy.cols());
  Matrix dxhat = dy.array().rowwise() * gain.transpose().array();
  Matrix dz(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / n;
    const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / n;
    dz.row(i) = cache.inv_std[i] * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
  }
  return dz;
}

// --- linear head --------------------------------------------------------------

LinearHead::LinearHead(ParamStore& store, Eigen::Index input_dim, Eigen::Index classes)
    : weight_(store.add("head.weight", {input_dim, classes}, ParamRole::Weight, input_dim)),
      bias_(store.add("head.bias", {classes}, ParamRole::Bias)) {}

LinearHead::LinearHead(const ParamStore& store)
    : weight_(store.index_of("head.weight")), bias_(store.index_of("head.bias")) {}

Eigen::Index LinearHead::input_dim(const ParamStore& params) const {
  return params[weight_].shape[0];
}

Vector LinearHead::forward(const ParamStore& params, const Vector& v) const {
  const auto w = params.matrix(weight_);
  if (v.size() != w.rows()) {
    throw InvariantError("linear head expects " + std::to_string(w.rows()) +
                         " inputs, got " + std::to_string(v.size()));
  }
  return (v.transpose() * w).transpose() + params[bias_].values;
}

Vector LinearHead::backward(const ParamStore& params, const Vector& v, const Vector& dlogits,
                            GradBuffer& grads) const {
  const auto w = params.matrix(weight_);
  auto dw = grads.matrix(weight_, params[weight_].shape);
  dw += v * dlogits.transpose();
  grads.grads[bias_] += dlogits;
  return w * dlogits;
}

Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

// --- initialization -----------------------------------------------------------

void init_values(ParamStore& store, Rng& rng) {
  std::normal_distribution<double> pos_dist(0.0, 0.02);
  for (auto& t : store) {
    switch (t.role) {
      case ParamRole::Weight: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index i = 0; i < t.size(); ++i) t.values[i] = dist(rng);
        break;
      }
      case ParamRole::Bias: t.values.setZero(); break;
      case ParamRole::Gain: t.values.setOnes(); break;
      case ParamRole::Positional:
        for (Eigen::Index i = 0; i < t.size(); ++i) t.values[i] = pos_dist(rng);
        break;
    }
    t.grad.setZero();
  }
}

ParamStore init_params(const std::vector<LayerSpec>& specs, Rng& rng) {
  ParamStore store;
  for (const auto& s : specs) {
    switch (s.kind) {
      case LayerKind::InstanceNorm:
      case LayerKind::Gap:
        break;
      case LayerKind::Conv1d: Conv1d(store, s.prefix, s.conv); break;
      case LayerKind::PosEncoding: PositionalEncoding(store, s.prefix, s.max_tokens, s.dim); break;
      case LayerKind::Attention:
        if (s.heads < 1 || s.dim % s.heads != 0) {
          throw InvariantError("attention heads (" + std::to_string(s.heads) +
                               ") must divide model dim " + std::to_string(s.dim));
        }
        MultiHeadAttention(store, s.prefix, s.norm_prefix, s.dim, s.heads);
        break;
      case LayerKind::FeedForward:
        if (s.hidden < 1) throw InvariantError("feed-forward hidden size must be >= 1");
        FeedForward(store, s.prefix, s.norm_prefix, s.dim, s.hidden);
        break;
      case LayerKind::LayerNorm: LayerNorm(store, s.prefix, s.dim); break;
      case LayerKind::Linear: LinearHead(store, s.input_dim, s.outputs); break;
    }
  }
  init_values(store, rng);
  return store;
}

}  // namespace varconet
