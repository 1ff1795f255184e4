#include "varconet/gradcheck.hpp"

#include <algorithm>

#include "varconet/contrastive.hpp"
#include "varconet/encoder.hpp"
#include "varconet/nn.hpp"
#include "varconet/train.hpp"

namespace varconet {

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Flattens every tensor of a store into one vector, and back.
Vector flatten(const ParamStore& s) {
  Vector v(s.total_size());
  Eigen::Index k = 0;
  for (const auto& t : s) {
    v.segment(k, t.size()) = t.values;
    k += t.size();
  }
  return v;
}

void unflatten(ParamStore& s, const Vector& v) {
  Eigen::Index k = 0;
  for (auto& t : s) {
    t.values = v.segment(k, t.size());
    k += t.size();
  }
}

Vector flatten_grads(const GradBuffer& g) {
  Eigen::Index n = 0;
  for (const auto& x : g.grads) n += x.size();
  Vector v(n);
  Eigen::Index k = 0;
  for (const auto& x : g.grads) {
    v.segment(k, x.size()) = x;
    k += x.size();
  }
  return v;
}

Vector concat(const Vector& a, const Vector& b) {
  Vector v(a.size() + b.size());
  v << a, b;
  return v;
}

Vector as_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
Matrix as_matrix(const Vector& v, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<const Matrix>(v.data(), r, c);
}

struct Tracker {
  GradcheckRow row;
  void add(double err, Eigen::Index coords) {
    row.points += 1;
    row.coordinates += static_cast<long>(coords);
    row.max_rel_error = std::max(row.max_rel_error, err);
  }
};

// Scalar probe loss sum(c .* y) for a module with (params, input) -> output.
template <typename Forward, typename Backward>
double check_module(ParamStore& params, const Matrix& x, const Matrix& probe, Forward&& fwd,
                    Backward&& bwd, double h) {
  const Eigen::Index r = x.rows(), c = x.cols();
  GradBuffer g = params.make_grad_buffer();
  Matrix dx = bwd(params, x, probe, g);
  const Vector analytic = concat(flatten_grads(g), as_vector(dx));
  const Vector point = concat(flatten(params), as_vector(x));
  const Eigen::Index np = params.total_size();
  ParamStore work = params;
  auto f = [&](const Vector& v) {
    unflatten(work, v.head(np));
    return (fwd(work, as_matrix(v.tail(r * c), r, c)).array() * probe.array()).sum();
  };
  return finite_diff_check(f, point, analytic, h);
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opt) {
  Rng rng = make_stream(opt.seed, 0);
  std::vector<Tracker> rows;
  auto track = [&](const std::string& name) -> Tracker& {
    rows.push_back({});
    rows.back().row.name = name;
    return rows.back();
  };

  {
    Tracker& t = track("instance_norm");
    for (int p = 0; p < opt.points; ++p) {
      const Matrix x = random_matrix(4, 20, rng);
      const Matrix probe = random_matrix(4, 20, rng);
      ParamStore none;
      const double err = check_module(
          none, x, probe, [](const ParamStore&, const Matrix& in) { return instance_norm_forward(in); },
          [](const ParamStore&, const Matrix& in, const Matrix& dy, GradBuffer&) {
            InstanceNormCache c;
            instance_norm_forward(in, &c);
            return instance_norm_backward(c, dy);
          },
          opt.h);
      t.add(err, x.size());
    }
  }
  {
    Tracker& t = track("conv1d_per_region");
    for (int p = 0; p < opt.points; ++p) {
      ParamStore params;
      Conv1d conv(params, "conv", ConvGeometry{16, 8, 4});
      init_values(params, rng);
      for (auto& tensor : params) tensor.values += random_matrix(tensor.size(), 1, rng, 0.1);
      const Matrix x = random_matrix(3, 24, rng);
      const Eigen::Index len = conv.geometry().output_length(24);
      const Matrix probe = random_matrix(3 * len, 16, rng);
      auto flat = [](const Tensor3& a) {
        return Matrix(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            a.data.data(), a.d0 * a.d1, a.d2));
      };
      const double err = check_module(
          params, x, probe,
          [&](const ParamStore& ps, const Matrix& in) { return flat(conv.forward(ps, in)); },
          [&](const ParamStore& ps, const Matrix& in, const Matrix& dy, GradBuffer& g) {
            Tensor3 d(3, len, 16);
            for (Eigen::Index r = 0; r < 3; ++r)
              for (Eigen::Index l = 0; l < len; ++l)
                for (Eigen::Index k = 0; k < 16; ++k) d(r, l, k) = dy(r * len + l, k);
            return conv.backward(ps, in, d, g);
          },
          opt.h);
      t.add(err, params.total_size() + x.size());
    }
  }
  {
    Tracker& t = track("gap_over_kernels");
    for (int p = 0; p < opt.points; ++p) {
      const Matrix x = random_matrix(3 * 5, 4, rng);  // rows (r, l), cols k
      const Matrix probe = random_matrix(3, 5, rng);
      auto to_tensor = [](const Matrix& m) {
        Tensor3 a(3, 5, 4);
        for (Eigen::Index r = 0; r < 3; ++r)
          for (Eigen::Index l = 0; l < 5; ++l)
            for (Eigen::Index k = 0; k < 4; ++k) a(r, l, k) = m(r * 5 + l, k);
        return a;
      };
      ParamStore none;
      Matrix probe_full = Matrix::Zero(3, 5);
      probe_full = probe;
      const double err = check_module(
          none, x, probe_full,
          [&](const ParamStore&, const Matrix& in) { return gap_over_kernels(to_tensor(in)); },
          [&](const ParamStore&, const Matrix&, const Matrix& dy, GradBuffer&) {
            const Tensor3 d = gap_over_kernels_backward(dy, 4);
            Matrix out(15, 4);
            for (Eigen::Index r = 0; r < 3; ++r)
              for (Eigen::Index l = 0; l < 5; ++l)
                for (Eigen::Index k = 0; k < 4; ++k) out(r * 5 + l, k) = d(r, l, k);
            return out;
          },
          opt.h);
      t.add(err, x.size());
    }
  }
  {
    Tracker& t = track("add_positional");
    for (int p = 0; p < opt.points; ++p) {
      ParamStore params;
      PositionalEncoding pos(params, "pos.encoding", 7, 4);
      init_values(params, rng);
      const Matrix x = random_matrix(6, 4, rng);
      const Matrix probe = random_matrix(6, 4, rng);
      const Eigen::Index valid = 4;
      const double err = check_module(
          params, x, probe,
          [&](const ParamStore& ps, const Matrix& in) { return pos.forward(ps, in, valid); },
          [&](const ParamStore&, const Matrix&, const Matrix& dy, GradBuffer& g) {
            pos.backward(dy, valid, g);
            return dy;
          },
          opt.h);
      t.add(err, params.total_size() + x.size());
    }
  }
  {
    Tracker& t = track("layer_norm");
    for (int p = 0; p < opt.points; ++p) {
      ParamStore params;
      LayerNorm norm(params, "norm", 6);
      init_values(params, rng);
      for (auto& tensor : params) tensor.values += random_matrix(tensor.size(), 1, rng, 0.3);
      const Matrix x = random_matrix(5, 6, rng);
      const Matrix probe = random_matrix(5, 6, rng);
      const double err = check_module(
          params, x, probe,
          [&](const ParamStore& ps, const Matrix& in) { return norm.forward(ps, in, nullptr); },
          [&](const ParamStore& ps, const Matrix& in, const Matrix& dy, GradBuffer& g) {
            LayerNorm::Cache c;
            norm.forward(ps, in, &c);
            return norm.backward(ps, c, dy, g);
          },
          opt.h);
      t.add(err, params.total_size() + x.size());
    }
  }
  {
    Tracker& t = track("multihead_attention");
    for (int p = 0; p < opt.points; ++p) {
      ParamStore params;
      MultiHeadAttention attn(params, "attn", "norm1", 8, 2);
      init_values(params, rng);
      for (auto& tensor : params) tensor.values += random_matrix(tensor.size(), 1, rng, 0.2);
      const Matrix x = random_matrix(5, 8, rng);
      const Matrix probe = random_matrix(5, 8, rng);
      TokenMask mask(5, true);
      if (p % 2 == 1) mask[4] = false;
      const double err = check_module(
          params, x, probe,
          [&](const ParamStore& ps, const Matrix& in) { return attn.forward(ps, in, mask, nullptr); },
          [&](const ParamStore& ps, const Matrix& in, const Matrix& dy, GradBuffer& g) {
            MultiHeadAttention::Cache c;
            attn.forward(ps, in, mask, &c);
            return attn.backward(ps, c, dy, g);
          },
          opt.h);
      t.add(err, params.total_size() + x.size());
    }
  }
  {
    Tracker& t = track("feedforward_block");
    for (int p = 0; p < opt.points; ++p) {
      ParamStore params;
      FeedForward ffn(params, "ffn", "norm2", 8, 12);
      init_values(params, rng);
      for (auto& tensor : params) tensor.values += random_matrix(tensor.size(), 1, rng, 0.2);
      const Matrix x = random_matrix(5, 8, rng);
      const Matrix probe = random_matrix(5, 8, rng);
      TokenMask mask(5, true);
      if (p % 2 == 1) mask[0] = false;
      const double err = check_module(
          params, x, probe,
          [&](const ParamStore& ps, const Matrix& in) { return ffn.forward(ps, in, mask, nullptr); },
          [&](const ParamStore& ps, const Matrix& in, const Matrix& dy, GradBuffer& g) {
            FeedForward::Cache c;
            ffn.forward(ps, in, mask, &c);
            return ffn.backward(ps, c, dy, g);
          },
          opt.h);
      t.add(err, params.total_size() + x.size());
    }
  }
  {
    Tracker& t = track("linear_head");
    for (int p = 0; p < opt.points; ++p) {
      ParamStore params;
      LinearHead head(params, 6, 2);
      init_values(params, rng);
      for (auto& tensor : params) tensor.values += random_matrix(tensor.size(), 1, rng, 0.2);
      const Matrix x = random_matrix(6, 1, rng);
      const Matrix probe = random_matrix(2, 1, rng);
      const double err = check_module(
          params, x, probe,
          [&](const ParamStore& ps, const Matrix& in) { return Matrix(head.forward(ps, in.col(0))); },
          [&](const ParamStore& ps, const Matrix& in, const Matrix& dy, GradBuffer& g) {
            return Matrix(head.backward(ps, in.col(0), dy.col(0), g));
          },
          opt.h);
      t.add(err, params.total_size() + x.size());
    }
  }
  {
    Tracker& t = track("cosine_fc");
    for (int p = 0; p < opt.points; ++p) {
      const Matrix x = random_matrix(5, 7, rng);
      const Matrix probe = random_matrix(10, 1, rng);
      ParamStore none;
      const double err = check_module(
          none, x, probe,
          [](const ParamStore&, const Matrix& in) { return Matrix(vectorize_upper(cosine_fc(in))); },
          [](const ParamStore&, const Matrix& in, const Matrix& dy, GradBuffer&) {
            CosineCache c;
            cosine_fc(in, &c);
            return cosine_fc_backward(c, dy.col(0));
          },
          opt.h);
      t.add(err, x.size());
    }
  }
  {
    Tracker& t = track("ntxent_loss");
    for (int p = 0; p < opt.points; ++p) {
      const Matrix z = random_matrix(10, 6, rng);  // columns are the 2N = 6 embeddings
      auto split = [](const Vector& v) {
        std::vector<Vector> out;
        for (Eigen::Index i = 0; i < 6; ++i) out.push_back(v.segment(i * 10, 10));
        return out;
      };
      const Vector point = as_vector(z);
      const NtXentResult r = ntxent_loss(split(point), 0.054);
      Vector analytic(60);
      for (Eigen::Index i = 0; i < 6; ++i) analytic.segment(i * 10, 10) = r.grad[static_cast<std::size_t>(i)];
      const double err = finite_diff_check(
          [&](const Vector& v) { return ntxent_loss(split(v), 0.054).loss; }, point, analytic, opt.h);
      t.add(err, point.size());
    }
  }
  {
    Tracker& t = track("encoder+ntxent");
    HyperParams hp;
    hp.n_layers = 2;
    hp.n_heads = 2;
    hp.ff_dim = 8;
    hp.l_min = 16;
    hp.l_max = 40;
    for (int p = 0; p < opt.points; ++p) {
      Encoder enc(4, hp, rng);
      for (auto& tensor : enc.params()) tensor.values += random_matrix(tensor.size(), 1, rng, 0.1);
      std::uniform_int_distribution<Eigen::Index> len(hp.l_min, hp.l_max);
      std::vector<Matrix> views;
      for (int i = 0; i < 4; ++i) views.push_back(random_matrix(4, len(rng), rng));

      ParamStore grads = enc.params();
      contrastive_batch_gradient(enc, views, hp.l_max, hp.tau, grads);
      Vector analytic(grads.total_size());
      Eigen::Index k = 0;
      for (const auto& tensor : grads) {
        analytic.segment(k, tensor.size()) = tensor.grad;
        k += tensor.size();
      }
      Encoder work = enc;
      const double err = finite_diff_check(
          [&](const Vector& v) {
            unflatten(work.params(), v);
            std::vector<Vector> z;
            for (const auto& view : views) z.push_back(work.fc_vector(view, hp.l_max));
            return ntxent_loss(z, hp.tau).loss;
          },
          flatten(enc.params()), analytic, opt.h);
      t.add(err, analytic.size());
    }
  }

  std::vector<GradcheckRow> out;
  for (auto& t : rows) {
    t.row.passed = t.row.max_rel_error < opt.tolerance;
    out.push_back(t.row);
  }
  return out;
}

}  // namespace varconet
