// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <unordered_map>

#include "oocd/error.hpp"
#include "oocd/models.hpp"

namespace oocd {
namespace {

constexpr double kTau = 1e-12;

// Kernel rows y_i y_j K(x_i, x_j), least-recently-used eviction under a
// byte budget.
class KernelCache {
 public:
  KernelCache(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double gamma,
              double budget_mb)
      : x_(x), y_(y), gamma_(gamma) {
    const Eigen::Index n = x.rows();
    sq_norms_ = x.rowwise().squaredNorm();
    const double row_bytes = static_cast<double>(n) * sizeof(double);
    capacity_ = std::max<std::size_t>(
        2, static_cast<std::size_t>(budget_mb * 1024.0 * 1024.0 / row_bytes));
  }

  const Eigen::VectorXd& row(Eigen::Index i) {
    auto it = index_.find(i);
    if (it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    if (lru_.size() >= capacity_) {
      index_.erase(lru_.back().first);
      lru_.pop_back();
    }
    Eigen::VectorXd r = x_ * x_.row(i).transpose();
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      const double d2 = std::max(0.0, sq_norms_(i) + sq_norms_(j) - 2.0 * r(j));
      r(j) = y_(i) * y_(j) * std::exp(-gamma_ * d2);
    }
    lru_.emplace_front(i, std::move(r));
    index_[i] = lru_.begin();
    return lru_.front().second;
  }

 private:
  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  double gamma_;
  Eigen::VectorXd sq_norms_;
  std::size_t capacity_;
  std::list<std::pair<Eigen::Index, Eigen::VectorXd>> lru_;
  std::unordered_map<Eigen::Index,
                     std::list<std::pair<Eigen::Index, Eigen::VectorXd>>::iterator>
      index_;
};

double sigmoid_neg(double a, double b, double f) {
  // 1 / (1 + exp(a f + b)) without overflow
  const double t = a * f + b;
  if (t >= 0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

}  // namespace

std::pair<double, double> fit_platt(const Eigen::VectorXd& dec,
                                    const Eigen::VectorXd& targets) {
  const Eigen::Index n = dec.size();
  double prior1 = 0;
  for (Eigen::Index i = 0; i < n; ++i) prior1 += targets(i) > 0.5 ? 1 : 0;
  const double prior0 = static_cast<double>(n) - prior1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = targets(i) > 0.5 ? hi : lo;

  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = dec(i) * a + b;
      if (z >= 0) {
        f += t(i) * z + std::log1p(std::exp(-z));
      } else {
        f += (t(i) - 1.0) * z + std::log1p(std::exp(z));
      }
    }
    return f;
  };

  double a = 0.0;
  double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(a, b);
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = dec(i) * a + b;
      double p, q;
      if (z >= 0) {
        const double e = std::exp(-z);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(z);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      h11 += dec(i) * dec(i) * d2;
      h22 += d2;
      h21 += dec(i) * d2;
      const double d1 = t(i) - p;
      g1 += dec(i) * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= 1e-10) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < 1e-10) break;
  }
  return {a, b};
}

void SvmLearner::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets,
                     const Eigen::MatrixXd& x_val, const Eigen::VectorXd& y_val) {
  const Eigen::Index n = x.rows();
  const double c = params_.c;
  if (!(c > 0)) throw ConfigError("svm C must be positive");

  gamma_ = params_.gamma;
  if (gamma_ <= 0) {
    const double var =
        (x.array() - x.mean()).square().sum() / static_cast<double>(x.size());
    gamma_ = 1.0 / (static_cast<double>(x.cols()) * (var > 0 ? var : 1.0));
  }

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = targets(i) > 0.5 ? 1.0 : -1.0;

  KernelCache cache(x, y, gamma_, params_.cache_mb);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  const double qd = 1.0;  // RBF diagonal

  auto upper = [&](Eigen::Index t) { return alpha(t) >= c; };
  auto lower = [&](Eigen::Index t) { return alpha(t) <= 0; };

  std::int64_t iter = 0;
  bool converged = false;
  while (iter < params_.max_iter) {
    // Working set: i maximizes the violation, j the second-order gain.
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y(t) > 0) {
        if (!upper(t) && -grad(t) >= gmax) { gmax = -grad(t); i = t; }
      } else {
        if (!lower(t) && grad(t) >= gmax) { gmax = grad(t); i = t; }
      }
    }
    if (i < 0) { converged = true; break; }
    const Eigen::VectorXd qi = cache.row(i);

    double gmax2 = -std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y(t) > 0) {
        if (!lower(t)) {
          const double diff = gmax + grad(t);
          gmax2 = std::max(gmax2, grad(t));
          if (diff > 0) {
            double quad = qd + qd - 2.0 * y(i) * qi(t);
            if (quad <= 0) quad = kTau;
            const double obj = -(diff * diff) / quad;
            if (obj <= best_obj) { best_obj = obj; j = t; }
          }
        }
      } else {
        if (!upper(t)) {
          const double diff = gmax - grad(t);
          gmax2 = std::max(gmax2, -grad(t));
          if (diff > 0) {
            double quad = qd + qd + 2.0 * y(i) * qi(t);
            if (quad <= 0) quad = kTau;
            const double obj = -(diff * diff) / quad;
            if (obj <= best_obj) { best_obj = obj; j = t; }
          }
        }
      }
    }
    if (gmax + gmax2 < params_.tol || j < 0) { converged = true; break; }
    ++iter;

    const Eigen::VectorXd& qj = cache.row(j);
    const double old_i = alpha(i), old_j = alpha(j);
    if (y(i) != y(j)) {
      double quad = qd + qd + 2.0 * qi(j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = diff; }
      } else {
        if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = -diff; }
      }
      if (diff > 0) {
        if (alpha(i) > c) { alpha(i) = c; alpha(j) = c - diff; }
      } else {
        if (alpha(j) > c) { alpha(j) = c; alpha(i) = c + diff; }
      }
    } else {
      double quad = qd + qd - 2.0 * qi(j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > c) {
        if (alpha(i) > c) { alpha(i) = c; alpha(j) = sum - c; }
      } else {
        if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = sum; }
      }
      if (sum > c) {
        if (alpha(j) > c) { alpha(j) = c; alpha(i) = sum - c; }
      } else {
        if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = sum; }
      }
    }
    const double dai = alpha(i) - old_i;
    const double daj = alpha(j) - old_j;
    grad += qi * dai + qj * daj;
  }

  // Offset from free vectors, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int free_count = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y(t) * grad(t);
    if (upper(t)) {
      if (y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  rho_ = free_count > 0 ? free_sum / free_count : (ub + lb) / 2.0;

  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (alpha(t) > 0) sv.push_back(t);
  }
  support_.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  coef_.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    support_.row(static_cast<Eigen::Index>(k)) = x.row(sv[k]);
    coef_(static_cast<Eigen::Index>(k)) = y(sv[k]) * alpha(sv[k]);
  }

  const bool val_usable = y_val.size() > 0 && (y_val.array() > 0.5).any() &&
                          (y_val.array() <= 0.5).any();
  std::string calibrated_on = "validation";
  std::pair<double, double> ab;
  if (val_usable) {
    ab = fit_platt(decision_function(x_val), y_val);
  } else {
    calibrated_on = "train";
    ab = fit_platt(decision_function(x), targets);
  }
  platt_a_ = ab.first;
  platt_b_ = ab.second;

  summary_ = {{"gamma", gamma_},
              {"iterations", iter},
              {"converged", converged},
              {"support_vectors", static_cast<std::int64_t>(sv.size())},
              {"calibrated_on", calibrated_on},
              {"platt_a", platt_a_},
              {"platt_b", platt_b_}};
}

Eigen::VectorXd SvmLearner::decision_function(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  const Eigen::VectorXd sv_norms = support_.rowwise().squaredNorm();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double xn = x.row(r).squaredNorm();
    const Eigen::VectorXd dots = support_ * x.row(r).transpose();
    double f = 0.0;
    for (Eigen::Index k = 0; k < dots.size(); ++k) {
      const double d2 = std::max(0.0, xn + sv_norms(k) - 2.0 * dots(k));
      f += coef_(k) * std::exp(-gamma_ * d2);
    }
    out(r) = f - rho_;
  }
  return out;
}

Eigen::VectorXd SvmLearner::predict_proba(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd f = decision_function(x);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    f(i) = sigmoid_neg(platt_a_, platt_b_, f(i));
  }
  return f;
}

void SvmLearner::save(BinaryWriter& out) const {
  out.f64(gamma_);
  out.f64(rho_);
  out.f64(platt_a_);
  out.f64(platt_b_);
  out.matrix(support_);
  out.vector(coef_);
}

void SvmLearner::load(BinaryReader& in) {
  gamma_ = in.f64();
  rho_ = in.f64();
  platt_a_ = in.f64();
  platt_b_ = in.f64();
  support_ = in.matrix();
  coef_ = in.vector();
  if (coef_.size() != support_.rows()) {
    throw ModelFormatError("svm coefficient count does not match support set");
  }
}

}  // namespace oocd
