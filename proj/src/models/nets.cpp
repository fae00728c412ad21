// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <numeric>

#include "oocd/error.hpp"
#include "oocd/metrics.hpp"
#include "oocd/models.hpp"

namespace oocd {
namespace {

double mean_bce(const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    sum += std::max(z(i), 0.0) - z(i) * y(i) + std::log1p(std::exp(-std::abs(z(i))));
  }
  return sum / static_cast<double>(z.size());
}

bool two_classes(const Eigen::VectorXd& y) {
  return y.size() > 0 && (y.array() > 0.5).any() && (y.array() <= 0.5).any();
}

}  // namespace

void FlatNet::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) {
  if (training_.batch_size < 1 || training_.max_epochs < 1 ||
      !(training_.learning_rate > 0)) {
    throw ConfigError("batch_size, max_epochs and learning_rate must be positive");
  }
  Rng rng(training_.seed);
  initialize(x.cols(), rng);
  input_dim_ = x.cols();

  const Eigen::Index n = x.rows();
  const Eigen::Index p = theta_.size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd grad(p);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double beta1_t = 1.0, beta2_t = 1.0;

  const bool use_val = two_classes(y_val);
  Eigen::VectorXd best_theta = theta_;
  double best_auc = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0, epochs_run = 0, stale = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<Eigen::Index>(training_.batch_size);

  for (int epoch = 1; epoch <= training_.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index rows = std::min(batch, n - start);
      Eigen::MatrixXd xb(rows, x.cols());
      Eigen::VectorXd yb(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = x.row(src);
        yb(r) = y(src);
      }
      loss_and_gradient(xb, yb, &grad, &rng);
      beta1_t *= kBeta1;
      beta2_t *= kBeta2;
      m = kBeta1 * m + (1.0 - kBeta1) * grad;
      v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseAbs2();
      const double step = training_.learning_rate / (1.0 - beta1_t);
      const double v_scale = 1.0 / (1.0 - beta2_t);
      theta_.array() -= step * m.array() / ((v.array() * v_scale).sqrt() + kEps);
    }
    epochs_run = epoch;

    double auc_now = 0.0, loss_now;
    if (use_val) {
      const Eigen::VectorXd z = logits(x_val);
      const Eigen::VectorXd prob = z.unaryExpr([](double t) {
        return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
      });
      auc_now = auc_from_targets({prob.data(), static_cast<std::size_t>(prob.size())},
                                 {y_val.data(), static_cast<std::size_t>(y_val.size())});
      loss_now = mean_bce(z, y_val);
    } else {
      loss_now = mean_bce(logits(x), y);
    }
    if (!std::isfinite(loss_now)) break;
    const bool improved =
        auc_now > best_auc || (auc_now == best_auc && loss_now < best_loss);
    if (improved) {
      best_theta = theta_;
      best_auc = auc_now;
      best_loss = loss_now;
      best_epoch = epoch;
      stale = 0;
    } else if (++stale >= training_.patience) {
      break;
    }
  }
  theta_ = best_theta;
  summary_ = {{"epochs_run", epochs_run},
              {"best_epoch", best_epoch},
              {"monitored", use_val ? "validation" : "train_loss"},
              {"best_loss", best_loss},
              {"parameters", static_cast<std::int64_t>(p)}};
  if (use_val) summary_["best_val_auc"] = best_auc;
}

Eigen::VectorXd FlatNet::predict_proba(const Eigen::MatrixXd& x) const {
  return logits(x).unaryExpr([](double t) {
    return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
  });
}

void FlatNet::save_parameters(BinaryWriter& out) const {
  out.i64(input_dim_);
  out.vector(theta_);
}

void FlatNet::load_parameters(BinaryReader& in) {
  input_dim_ = in.i64();
  theta_ = in.vector();
}

// ---------------------------------------------------------------- MLP

void MlpLearner::build_layout(Eigen::Index input_dim) {
  layers_.clear();
  Eigen::Index offset = 0;
  Eigen::Index in = input_dim;
  auto add = [&](Eigen::Index out) {
    layers_.push_back({offset, offset + out * in, in, out});
    offset += out * in + out;
    in = out;
  };
  for (int h : params_.hidden) {
    if (h < 1) throw ConfigError("mlp hidden sizes must be positive");
    add(h);
  }
  add(1);
  theta_.setZero(offset);
}

void MlpLearner::initialize(Eigen::Index input_dim, Rng& rng) {
  build_layout(input_dim);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    const bool hidden = l + 1 < layers_.size();
    const double sd = std::sqrt((hidden ? 2.0 : 1.0) / static_cast<double>(L.in));
    for (Eigen::Index k = 0; k < L.out * L.in; ++k) theta_(L.w_offset + k) = sd * rng.normal();
  }
}

double MlpLearner::loss_and_gradient(const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& y,
                                     Eigen::VectorXd* grad,
                                     Rng* dropout_rng) const {
  const Eigen::Index b = x.rows();
  const std::size_t hidden = layers_.size() - 1;
  std::vector<Eigen::MatrixXd> acts{x.transpose()};
  std::vector<Eigen::MatrixXd> gates;
  const double p = params_.dropout;
  const bool drop = dropout_rng != nullptr && p > 0.0;
  for (std::size_t l = 0; l < hidden; ++l) {
    const Layer& L = layers_[l];
    Eigen::Map<const Eigen::MatrixXd> w(theta_.data() + L.w_offset, L.out, L.in);
    Eigen::Map<const Eigen::VectorXd> bias(theta_.data() + L.b_offset, L.out);
    Eigen::MatrixXd z = (w * acts.back()).colwise() + bias;
    Eigen::MatrixXd gate = (z.array() > 0.0).cast<double>();
    if (drop) {
      const double keep_scale = 1.0 / (1.0 - p);
      for (Eigen::Index k = 0; k < gate.size(); ++k) {
        gate.data()[k] *= dropout_rng->uniform() < p ? 0.0 : keep_scale;
      }
    }
    acts.push_back(z.cwiseProduct(gate));
    gates.push_back(std::move(gate));
  }
  const Layer& O = layers_.back();
  Eigen::Map<const Eigen::RowVectorXd> wo(theta_.data() + O.w_offset, O.in);
  const double bo = theta_(O.b_offset);
  const Eigen::RowVectorXd z = (wo * acts.back()).array() + bo;

  double loss = 0.0;
  Eigen::RowVectorXd dz(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double t = z(i);
    loss += std::max(t, 0.0) - t * y(i) + std::log1p(std::exp(-std::abs(t)));
    const double s = t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    dz(i) = (s - y(i)) / static_cast<double>(b);
  }
  loss /= static_cast<double>(b);
  if (grad == nullptr) return loss;

  grad->setZero(theta_.size());
  Eigen::Map<Eigen::RowVectorXd>(grad->data() + O.w_offset, O.in) =
      dz * acts.back().transpose();
  (*grad)(O.b_offset) = dz.sum();
  Eigen::MatrixXd da = wo.transpose() * dz;
  for (std::size_t l = hidden; l-- > 0;) {
    const Layer& L = layers_[l];
    const Eigen::MatrixXd dzl = da.cwiseProduct(gates[l]);
    Eigen::Map<Eigen::MatrixXd>(grad->data() + L.w_offset, L.out, L.in) =
        dzl * acts[l].transpose();
    Eigen::Map<Eigen::VectorXd>(grad->data() + L.b_offset, L.out) = dzl.rowwise().sum();
    if (l > 0) {
      Eigen::Map<const Eigen::MatrixXd> w(theta_.data() + L.w_offset, L.out, L.in);
      da = w.transpose() * dzl;
    }
  }
  return loss;
}

Eigen::VectorXd MlpLearner::logits(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim_) {
    throw ShapeMismatch("mlp expects " + std::to_string(input_dim_) +
                        " inputs, got " + std::to_string(x.cols()));
  }
  Eigen::MatrixXd a = x.transpose();
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    Eigen::Map<const Eigen::MatrixXd> w(theta_.data() + L.w_offset, L.out, L.in);
    Eigen::Map<const Eigen::VectorXd> bias(theta_.data() + L.b_offset, L.out);
    a = ((w * a).colwise() + bias).cwiseMax(0.0);
  }
  const Layer& O = layers_.back();
  Eigen::Map<const Eigen::RowVectorXd> wo(theta_.data() + O.w_offset, O.in);
  return ((wo * a).array() + theta_(O.b_offset)).transpose();
}

void MlpLearner::save(BinaryWriter& out) const {
  out.u64(params_.hidden.size());
  for (int h : params_.hidden) out.i64(h);
  save_parameters(out);
}

void MlpLearner::load(BinaryReader& in) {
  params_.hidden.resize(in.u64());
  for (int& h : params_.hidden) h = static_cast<int>(in.i64());
  load_parameters(in);
  const Eigen::VectorXd loaded = theta_;
  build_layout(input_dim_);
  if (theta_.size() != loaded.size()) {
    throw ModelFormatError("mlp parameter count does not match its layout");
  }
  theta_ = loaded;
}

}  // namespace oocd
