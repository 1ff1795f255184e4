#include <cmath>
#include <limits>

#include "varconet/error.hpp"
#include "varconet/nn.hpp"

namespace varconet {

namespace {

std::vector<Eigen::Index> valid_rows(const TokenMask& mask, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(mask.size()) != rows) {
    throw InvariantError("mask length " + std::to_string(mask.size()) + " does not match " +
                         std::to_string(rows) + " tokens");
  }
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < rows; ++i)
    if (mask[static_cast<std::size_t>(i)]) out.push_back(i);
  if (out.empty()) throw InvariantError("every token is masked");
  return out;
}

Matrix gather(const Matrix& x, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

Matrix scatter(const Matrix& x, const std::vector<Eigen::Index>& rows, Eigen::Index total) {
  Matrix out = Matrix::Zero(total, x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) = x.row(static_cast<Eigen::Index>(i));
  return out;
}

Matrix affine(const Matrix& x, const ConstParamMap& w, const Vector& b) {
  Matrix y = x * w;
  y.rowwise() += b.transpose();
  return y;
}

void affine_backward(const Matrix& x, const Matrix& dy, std::size_t w, std::size_t b,
                     const ParamStore& params, GradBuffer& grads) {
  grads.matrix(w, params[w].shape) += x.transpose() * dy;
  grads.grads[b] += dy.colwise().sum().transpose();
}

}  // namespace

// --- attention ----------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& p,
                                       const std::string& norm_prefix, Eigen::Index dim,
                                       Eigen::Index heads)
    : heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw InvariantError("attention heads (" + std::to_string(heads) + ") must divide model dim " +
                         std::to_string(dim));
  }
  wq_ = store.add(p + ".q.weight", {dim, dim}, ParamRole::Weight, dim);
  bq_ = store.add(p + ".q.bias", {dim}, ParamRole::Bias);
  wk_ = store.add(p + ".k.weight", {dim, dim}, ParamRole::Weight, dim);
  bk_ = store.add(p + ".k.bias", {dim}, ParamRole::Bias);
  wv_ = store.add(p + ".v.weight", {dim, dim}, ParamRole::Weight, dim);
  bv_ = store.add(p + ".v.bias", {dim}, ParamRole::Bias);
  wo_ = store.add(p + ".o.weight", {dim, dim}, ParamRole::Weight, dim);
  bo_ = store.add(p + ".o.bias", {dim}, ParamRole::Bias);
  norm_ = LayerNorm(store, norm_prefix, dim);
}

MultiHeadAttention::MultiHeadAttention(const ParamStore& store, const std::string& p,
                                       const std::string& norm_prefix, Eigen::Index heads, BindExisting)
    : heads_(heads),
      wq_(store.index_of(p + ".q.weight")),
      bq_(store.index_of(p + ".q.bias")),
      wk_(store.index_of(p + ".k.weight")),
      bk_(store.index_of(p + ".k.bias")),
      wv_(store.index_of(p + ".v.weight")),
      bv_(store.index_of(p + ".v.bias")),
      wo_(store.index_of(p + ".o.weight")),
      bo_(store.index_of(p + ".o.bias")),
      norm_(store, norm_prefix, bind_existing) {
  const Eigen::Index dim = store[wq_].shape[0];
  if (heads < 1 || dim % heads != 0) {
    throw InvariantError("attention heads (" + std::to_string(heads) + ") must divide model dim " +
                         std::to_string(dim));
  }
}

Matrix MultiHeadAttention::forward(const ParamStore& params, const Matrix& x,
                                   const TokenMask& mask, Cache* cache) const {
  const auto rows = valid_rows(mask, x.rows());
  const Eigen::Index dim = x.cols();
  const Eigen::Index head_dim = dim / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix xv = gather(x, rows);
  Matrix q = affine(xv, params.matrix(wq_), params[bq_].values);
  Matrix k = affine(xv, params.matrix(wk_), params[bk_].values);
  Matrix v = affine(xv, params.matrix(wv_), params[bv_].values);

  const Eigen::Index n = xv.rows();
  Matrix concat(n, dim);
  std::vector<Matrix> probs;
  probs.reserve(static_cast<std::size_t>(heads_));
  for (Eigen::Index h = 0; h < heads_; ++h) {
    const auto qh = q.middleCols(h * head_dim, head_dim);
    const auto kh = k.middleCols(h * head_dim, head_dim);
    const auto vh = v.middleCols(h * head_dim, head_dim);
    Matrix p = (qh * kh.transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - m).exp();
      p.row(i) /= p.row(i).sum();
    }
    concat.middleCols(h * head_dim, head_dim) = p * vh;
    probs.push_back(std::move(p));
  }
  Matrix z = xv + affine(concat, params.matrix(wo_), params[bo_].values);
  LayerNorm::Cache norm_cache;
  Matrix y = norm_.forward(params, z, cache ? &norm_cache : nullptr);
  if (cache) {
    cache->rows = rows;
    cache->x = std::move(xv);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
    cache->probs = std::move(probs);
    cache->norm = std::move(norm_cache);
    cache->total_rows = x.rows();
  }
  return scatter(y, rows, x.rows());
}

Matrix MultiHeadAttention::backward(const ParamStore& params, const Cache& c, const Matrix& dy,
                                    GradBuffer& grads) const {
  const Eigen::Index dim = c.x.cols();
  const Eigen::Index head_dim = dim / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix dz = norm_.backward(params, c.norm, gather(dy, c.rows), grads);
  Matrix dx = dz;

  affine_backward(c.concat, dz, wo_, bo_, params, grads);
  Matrix dconcat = dz * params.matrix(wo_).transpose();

  const Eigen::Index n = c.x.rows();
  Matrix dq(n, dim), dk(n, dim), dv(n, dim);
  for (Eigen::Index h = 0; h < heads_; ++h) {
    const Matrix& p = c.probs[static_cast<std::size_t>(h)];
    const auto qh = c.q.middleCols(h * head_dim, head_dim);
    const auto kh = c.k.middleCols(h * head_dim, head_dim);
    const auto vh = c.v.middleCols(h * head_dim, head_dim);
    const auto dah = dconcat.middleCols(h * head_dim, head_dim);

    Matrix dp = dah * vh.transpose();
    dv.middleCols(h * head_dim, head_dim) = p.transpose() * dah;
    Matrix ds(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double inner = dp.row(i).dot(p.row(i));
      ds.row(i) = p.row(i).array() * (dp.row(i).array() - inner);
    }
    ds *= scale;
    dq.middleCols(h * head_dim, head_dim) = ds * kh;
    dk.middleCols(h * head_dim, head_dim) = ds.transpose() * qh;
  }
  affine_backward(c.x, dq, wq_, bq_, params, grads);
  affine_backward(c.x, dk, wk_, bk_, params, grads);
  affine_backward(c.x, dv, wv_, bv_, params, grads);
  dx += dq * params.matrix(wq_).transpose();
  dx += dk * params.matrix(wk_).transpose();
  dx += dv * params.matrix(wv_).transpose();
  return scatter(dx, c.rows, c.total_rows);
}

// --- feed-forward -------------------------------------------------------------

FeedForward::FeedForward(ParamStore& store, const std::string& p, const std::string& norm_prefix,
                         Eigen::Index dim, Eigen::Index hidden) {
  w1_ = store.add(p + ".w1", {dim, hidden}, ParamRole::Weight, dim);
  b1_ = store.add(p + ".b1", {hidden}, ParamRole::Bias);
  w2_ = store.add(p + ".w2", {hidden, dim}, ParamRole::Weight, hidden);
  b2_ = store.add(p + ".b2", {dim}, ParamRole::Bias);
  norm_ = LayerNorm(store, norm_prefix, dim);
}

FeedForward::FeedForward(const ParamStore& store, const std::string& p,
                         const std::string& norm_prefix, BindExisting)
    : w1_(store.index_of(p + ".w1")),
      b1_(store.index_of(p + ".b1")),
      w2_(store.index_of(p + ".w2")),
      b2_(store.index_of(p + ".b2")),
      norm_(store, norm_prefix, bind_existing) {}

Matrix FeedForward::forward(const ParamStore& params, const Matrix& x, const TokenMask& mask,
                            Cache* cache) const {
  const auto rows = valid_rows(mask, x.rows());
  Matrix xv = gather(x, rows);
  Matrix hidden = affine(xv, params.matrix(w1_), params[b1_].values);
  Matrix activated = hidden.cwiseMax(0.0);
  Matrix z = xv + affine(activated, params.matrix(w2_), params[b2_].values);
  LayerNorm::Cache norm_cache;
  Matrix y = norm_.forward(params, z, cache ? &norm_cache : nullptr);
  if (cache) {
    cache->rows = rows;
    cache->x = std::move(xv);
    cache->hidden = std::move(hidden);
    cache->activated = std::move(activated);
    cache->norm = std::move(norm_cache);
    cache->total_rows = x.rows();
  }
  return scatter(y, rows, x.rows());
}

Matrix FeedForward::backward(const ParamStore& params, const Cache& c, const Matrix& dy,
                             GradBuffer& grads) const {
  Matrix dz = norm_.backward(params, c.norm, gather(dy, c.rows), grads);
  affine_backward(c.activated, dz, w2_, b2_, params, grads);
  Matrix dact = dz * params.matrix(w2_).transpose();
  Matrix dhidden = (c.hidden.array() > 0.0).select(dact, 0.0);
  affine_backward(c.x, dhidden, w1_, b1_, params, grads);
  Matrix dx = dz + dhidden * params.matrix(w1_).transpose();
  return scatter(dx, c.rows, c.total_rows);
}

}  // namespace varconet
