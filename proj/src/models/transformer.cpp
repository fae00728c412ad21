// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "oocd/error.hpp"
#include "oocd/models.hpp"

namespace oocd {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

constexpr double kLnEps = 1e-5;

// Column-wise layer norm with cached statistics for the backward pass.
struct LayerNormCache {
  MatrixXd xhat;
  Eigen::RowVectorXd inv_sigma;
};

MatrixXd layer_norm(const MatrixXd& x, const VectorXd& g, const VectorXd& b,
                    LayerNormCache* cache) {
  const Eigen::RowVectorXd mu = x.colwise().mean();
  MatrixXd centered = x.rowwise() - mu;
  const Eigen::RowVectorXd var = centered.colwise().squaredNorm() / static_cast<double>(x.rows());
  const Eigen::RowVectorXd inv = (var.array() + kLnEps).rsqrt();
  MatrixXd xhat = centered.array().rowwise() * inv.array();
  MatrixXd y = (xhat.array().colwise() * g.array()).colwise() + b.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_sigma = inv;
  }
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const VectorXd& g,
                             const LayerNormCache& c, Map dg, Map db) {
  dg.col(0) += (dy.cwiseProduct(c.xhat)).rowwise().sum();
  db.col(0) += dy.rowwise().sum();
  const MatrixXd dxhat = dy.array().colwise() * g.array();
  const auto d = static_cast<double>(dy.rows());
  const Eigen::RowVectorXd mean_dxhat = dxhat.colwise().sum() / d;
  const Eigen::RowVectorXd mean_dxhat_xhat = dxhat.cwiseProduct(c.xhat).colwise().sum() / d;
  MatrixXd dx = (dxhat.rowwise() - mean_dxhat) -
                MatrixXd(c.xhat.array().rowwise() * mean_dxhat_xhat.array());
  return dx.array().rowwise() * c.inv_sigma.array();
}

double stable_sigmoid(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

}  // namespace

void TransformerLearner::build_layout(Index input_dim) {
  const Index d = params_.d_token;
  const Index w = params_.slice_width;
  const Index f = params_.ffn_hidden;
  if (d < 1 || w < 1 || f < 1 || params_.n_layers < 1 || params_.n_heads < 1 ||
      d % params_.n_heads != 0) {
    throw ConfigError("transformer needs positive sizes and d_token divisible by n_heads");
  }
  n_tokens_ = (input_dim + w - 1) / w;
  Index offset = 0;
  auto block = [&](Index rows, Index cols) {
    Block b{offset, rows, cols};
    offset += rows * cols;
    return b;
  };
  tok_w_ = block(d, n_tokens_ * w);
  tok_b_ = block(d, n_tokens_);
  cls_ = block(d, 1);
  layers_.clear();
  for (int l = 0; l < params_.n_layers; ++l) {
    EncoderLayer L;
    L.ln1_g = block(d, 1);
    L.ln1_b = block(d, 1);
    L.wq = block(d, d);
    L.bq = block(d, 1);
    L.wk = block(d, d);
    L.bk = block(d, 1);
    L.wv = block(d, d);
    L.bv = block(d, 1);
    L.wo = block(d, d);
    L.bo = block(d, 1);
    L.ln2_g = block(d, 1);
    L.ln2_b = block(d, 1);
    L.w1 = block(f, d);
    L.b1 = block(f, 1);
    L.w2 = block(d, f);
    L.b2 = block(d, 1);
    layers_.push_back(L);
  }
  out_ln_g_ = block(d, 1);
  out_ln_b_ = block(d, 1);
  head_w_ = block(1, d);
  head_b_ = block(1, 1);
  theta_.setZero(offset);
}

void TransformerLearner::initialize(Index input_dim, Rng& rng) {
  build_layout(input_dim);
  auto fill = [&](const Block& b, double sd) {
    for (Index k = 0; k < b.rows * b.cols; ++k) theta_(b.offset + k) = sd * rng.normal();
  };
  auto ones = [&](const Block& b) { theta_.segment(b.offset, b.rows).setOnes(); };
  const double d = params_.d_token;
  fill(tok_w_, 1.0 / std::sqrt(static_cast<double>(params_.slice_width)));
  fill(tok_b_, 1.0 / std::sqrt(d));
  fill(cls_, 1.0 / std::sqrt(d));
  const double xavier_dd = std::sqrt(1.0 / d);
  const double xavier_df = std::sqrt(2.0 / (d + params_.ffn_hidden));
  for (const EncoderLayer& L : layers_) {
    ones(L.ln1_g);
    ones(L.ln2_g);
    fill(L.wq, xavier_dd);
    fill(L.wk, xavier_dd);
    fill(L.wv, xavier_dd);
    fill(L.wo, xavier_dd);
    fill(L.w1, xavier_df);
    fill(L.w2, xavier_df);
  }
  ones(out_ln_g_);
  fill(head_w_, 1.0 / std::sqrt(d));
}

double TransformerLearner::sample_forward_backward(const VectorXd& x, double y,
                                                   double weight, VectorXd* grad,
                                                   double* logit) const {
  const Index d = params_.d_token;
  const Index w = params_.slice_width;
  const Index t_count = n_tokens_ + 1;
  const Index heads = params_.n_heads;
  const Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto P = [&](const Block& b) { return ConstMap(theta_.data() + b.offset, b.rows, b.cols); };
  auto G = [&](const Block& b) { return Map(grad->data() + b.offset, b.rows, b.cols); };

  VectorXd padded = VectorXd::Zero(n_tokens_ * w);
  padded.head(x.size()) = x;

  MatrixXd h(d, t_count);
  h.col(0) = P(cls_).col(0);
  {
    const auto tw = P(tok_w_);
    const auto tb = P(tok_b_);
    for (Index j = 0; j < n_tokens_; ++j) {
      h.col(j + 1) = tw.middleCols(j * w, w) * padded.segment(j * w, w) + tb.col(j);
    }
  }

  struct LayerCache {
    MatrixXd h_in, a, q, k, v, o, h_mid, f, z1, r;
    LayerNormCache ln1, ln2;
    std::vector<MatrixXd> probs;
  };
  std::vector<LayerCache> caches(layers_.size());

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const EncoderLayer& L = layers_[l];
    LayerCache& c = caches[l];
    c.h_in = h;
    c.a = layer_norm(h, P(L.ln1_g).col(0), P(L.ln1_b).col(0), &c.ln1);
    c.q = (P(L.wq) * c.a).colwise() + P(L.bq).col(0);
    c.k = (P(L.wk) * c.a).colwise() + P(L.bk).col(0);
    c.v = (P(L.wv) * c.a).colwise() + P(L.bv).col(0);
    c.o.resize(d, t_count);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (Index hd = 0; hd < heads; ++hd) {
      MatrixXd s = scale * c.q.middleRows(hd * dh, dh).transpose() * c.k.middleRows(hd * dh, dh);
      for (Index i = 0; i < t_count; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      c.o.middleRows(hd * dh, dh) = c.v.middleRows(hd * dh, dh) * s.transpose();
      c.probs[static_cast<std::size_t>(hd)] = std::move(s);
    }
    c.h_mid = c.h_in + ((P(L.wo) * c.o).colwise() + P(L.bo).col(0));
    c.f = layer_norm(c.h_mid, P(L.ln2_g).col(0), P(L.ln2_b).col(0), &c.ln2);
    c.z1 = (P(L.w1) * c.f).colwise() + P(L.b1).col(0);
    c.r = c.z1.cwiseMax(0.0);
    h = c.h_mid + ((P(L.w2) * c.r).colwise() + P(L.b2).col(0));
  }

  LayerNormCache out_cache;
  const MatrixXd u = layer_norm(h.col(0), P(out_ln_g_).col(0), P(out_ln_b_).col(0), &out_cache);
  const MatrixXd ru = u.cwiseMax(0.0);
  const double z = (P(head_w_) * ru)(0, 0) + P(head_b_)(0, 0);
  if (logit) *logit = z;
  const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  if (grad == nullptr) return loss * weight;

  const double dz = (stable_sigmoid(z) - y) * weight;
  G(head_w_) += dz * ru.transpose();
  G(head_b_)(0, 0) += dz;
  const MatrixXd du = (P(head_w_).transpose() * dz).cwiseProduct((u.array() > 0.0).cast<double>().matrix());
  MatrixXd dh_cur = MatrixXd::Zero(d, t_count);
  dh_cur.col(0) = layer_norm_backward(du, P(out_ln_g_).col(0), out_cache, G(out_ln_g_), G(out_ln_b_));

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const EncoderLayer& L = layers_[l];
    const LayerCache& c = caches[l];
    // feed-forward branch
    G(L.w2) += dh_cur * c.r.transpose();
    G(L.b2).col(0) += dh_cur.rowwise().sum();
    const MatrixXd dz1 = (P(L.w2).transpose() * dh_cur).cwiseProduct((c.z1.array() > 0.0).cast<double>().matrix());
    G(L.w1) += dz1 * c.f.transpose();
    G(L.b1).col(0) += dz1.rowwise().sum();
    const MatrixXd df = P(L.w1).transpose() * dz1;
    MatrixXd dh_mid = dh_cur + layer_norm_backward(df, P(L.ln2_g).col(0), c.ln2, G(L.ln2_g), G(L.ln2_b));
    // attention branch
    G(L.wo) += dh_mid * c.o.transpose();
    G(L.bo).col(0) += dh_mid.rowwise().sum();
    const MatrixXd d_o = P(L.wo).transpose() * dh_mid;
    MatrixXd dq(d, t_count), dk(d, t_count), dv(d, t_count);
    for (Index hd = 0; hd < heads; ++hd) {
      const MatrixXd& pr = c.probs[static_cast<std::size_t>(hd)];
      const auto d_oh = d_o.middleRows(hd * dh, dh);
      dv.middleRows(hd * dh, dh) = d_oh * pr;
      const MatrixXd dp = d_oh.transpose() * c.v.middleRows(hd * dh, dh);
      MatrixXd ds = pr.cwiseProduct(dp);
      const VectorXd row_dot = ds.rowwise().sum();
      ds -= pr.cwiseProduct(row_dot.replicate(1, t_count));
      dq.middleRows(hd * dh, dh) = scale * c.k.middleRows(hd * dh, dh) * ds.transpose();
      dk.middleRows(hd * dh, dh) = scale * c.q.middleRows(hd * dh, dh) * ds;
    }
    G(L.wq) += dq * c.a.transpose();
    G(L.wk) += dk * c.a.transpose();
    G(L.wv) += dv * c.a.transpose();
    G(L.bq).col(0) += dq.rowwise().sum();
    G(L.bk).col(0) += dk.rowwise().sum();
    G(L.bv).col(0) += dv.rowwise().sum();
    const MatrixXd da = P(L.wq).transpose() * dq + P(L.wk).transpose() * dk +
                        P(L.wv).transpose() * dv;
    dh_cur = dh_mid + layer_norm_backward(da, P(L.ln1_g).col(0), c.ln1, G(L.ln1_g), G(L.ln1_b));
  }

  G(cls_).col(0) += dh_cur.col(0);
  auto gtw = G(tok_w_);
  auto gtb = G(tok_b_);
  for (Index j = 0; j < n_tokens_; ++j) {
    gtw.middleCols(j * w, w) += dh_cur.col(j + 1) * padded.segment(j * w, w).transpose();
    gtb.col(j) += dh_cur.col(j + 1);
  }
  return loss * weight;
}

double TransformerLearner::loss_and_gradient(const MatrixXd& x, const VectorXd& y,
                                             VectorXd* grad, Rng*) const {
  if (grad) grad->setZero(theta_.size());
  const double weight = 1.0 / static_cast<double>(x.rows());
  double loss = 0.0;
  for (Index r = 0; r < x.rows(); ++r) {
    loss += sample_forward_backward(x.row(r).transpose(), y(r), weight, grad, nullptr);
  }
  return loss;
}

VectorXd TransformerLearner::logits(const MatrixXd& x) const {
  if (x.cols() != input_dim_) {
    throw ShapeMismatch("transformer expects " + std::to_string(input_dim_) +
                        " inputs, got " + std::to_string(x.cols()));
  }
  VectorXd out(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    sample_forward_backward(x.row(r).transpose(), 0.0, 1.0, nullptr, &out(r));
  }
  return out;
}

void TransformerLearner::save(BinaryWriter& out) const {
  out.i64(params_.d_token);
  out.i64(params_.n_layers);
  out.i64(params_.n_heads);
  out.i64(params_.ffn_hidden);
  out.i64(params_.slice_width);
  save_parameters(out);
}

void TransformerLearner::load(BinaryReader& in) {
  params_.d_token = static_cast<int>(in.i64());
  params_.n_layers = static_cast<int>(in.i64());
  params_.n_heads = static_cast<int>(in.i64());
  params_.ffn_hidden = static_cast<int>(in.i64());
  params_.slice_width = static_cast<int>(in.i64());
  load_parameters(in);
  const VectorXd loaded = theta_;
  build_layout(input_dim_);
  if (theta_.size() != loaded.size()) {
    throw ModelFormatError("transformer parameter count does not match its layout");
  }
  theta_ = loaded;
}

}  // namespace oocd
