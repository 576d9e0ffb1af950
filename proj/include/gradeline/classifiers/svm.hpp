#pragma once

// Soft-margin SVM with an RBF kernel, trained by sequential minimal
// optimization. Multi-class problems are decomposed one-vs-one.
//
// The binary solver works on the dual
//     min 1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= C,
// with Q_ij = y_i y_j k(x_i, x_j). Each step picks the maximal violating
// index i and the partner j with the best second-order gain, then solves the
// two-variable subproblem analytically. It stops once the KKT gap
//     max_{I_up} -y_t G_t  -  min_{I_low} -y_t G_t
// drops below tol.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "gradeline/classifiers/dataset.hpp"

namespace gradeline {

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::exp(-gamma * s);
}

struct SvmOptions {
  double gamma = 0.005;
  double C = 1000.0;
  double tol = 1e-3;
  std::size_t max_passes = 1000;  // iteration cap = max_passes * n
};

// Dense binary problem: labels are +1/-1.
struct BinarySvmResult {
  std::vector<double> alpha;
  double rho = 0.0;  // decision value is sum_i alpha_i y_i k(x_i, x) - rho
  std::size_t iterations = 0;
  bool converged = false;
  double final_gap = 0.0;
};

namespace detail {

inline constexpr double kTau = 1e-12;

inline BinarySvmResult smo_solve(const std::vector<double>& kernel, std::span<const int> y, double C, double tol,
                                 std::size_t max_iter) {
  const std::size_t n = y.size();
  auto K = [&](std::size_t i, std::size_t j) { return kernel[i * n + j]; };

  BinarySvmResult res;
  res.alpha.assign(n, 0.0);
  std::vector<double> G(n, -1.0);
  auto& alpha = res.alpha;

  auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
  auto in_low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < C); };

  while (res.iterations < max_iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * G[t] >= gmax) {
        gmax = -y[t] * G[t];
        i = t;
      }
    }
    std::size_t j = n;
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      gmax2 = std::max(gmax2, y[t] * G[t]);
      if (i == n) continue;
      const double grad_diff = gmax + y[t] * G[t];
      if (grad_diff > 0) {
        double quad = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (quad <= 0) quad = kTau;
        const double obj = -(grad_diff * grad_diff) / quad;
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    res.final_gap = gmax + gmax2;
    if (i == n || j == n || res.final_gap < tol) {
      res.converged = true;
      break;
    }
    ++res.iterations;

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }

    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) {
      G[t] += y[t] * (y[i] * K(t, i) * dai + y[j] * K(t, j) * daj);
    }
  }

  // Bias from the free multipliers, or the midpoint of the feasible interval
  // when every multiplier sits at a bound.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      sum_free += yg;
      ++n_free;
    }
  }
  res.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  return res;
}

}  // namespace detail

inline std::vector<double> rbf_gram(const std::vector<std::vector<double>>& rows, double gamma) {
  const std::size_t n = rows.size();
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    k[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = rbf_kernel(rows[i], rows[j], gamma);
      k[i * n + j] = v;
      k[j * n + i] = v;
    }
  }
  return k;
}

// Trains a binary RBF machine on rows labelled +1/-1.
inline BinarySvmResult svm_train_binary(const std::vector<std::vector<double>>& rows, std::span<const int> y,
                                        const SvmOptions& opt) {
  if (rows.size() != y.size() || rows.empty()) throw InvalidArgument("svm: rows and labels differ in length");
  for (int v : y) {
    if (v != 1 && v != -1) throw InvalidArgument("svm: binary labels must be +1 or -1");
  }
  if (opt.C <= 0 || opt.gamma <= 0 || opt.tol <= 0) throw InvalidArgument("svm: C, gamma and tol must be > 0");
  return detail::smo_solve(rbf_gram(rows, opt.gamma), y, opt.C, opt.tol,
                           std::max<std::size_t>(1, opt.max_passes) * rows.size());
}

// One pairwise machine: +1 = `positive`, -1 = `negative`.
struct SvmMachine {
  Label positive = Label::Unripened;
  Label negative = Label::Ripened;
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alpha;  // in [0, C]
  std::vector<int> y;         // +1 / -1 per support vector
  double rho = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct SvmModel {
  std::size_t dim = 0;
  double gamma = 0.005;
  double C = 1000.0;
  double tol = 1e-3;
  std::vector<SvmMachine> machines;
};

inline double svm_decision(const SvmMachine& m, double gamma, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
    s += m.alpha[i] * m.y[i] * rbf_kernel(m.support_vectors[i], x, gamma);
  }
  return s - m.rho;
}

inline SvmModel svm_train(const LabeledDataset& ds, const SvmOptions& opt = {}) {
  require_trainable(ds);
  const auto counts = ds.class_counts();
  std::vector<Label> present;
  for (auto l : kAllLabels) {
    if (counts[label_index(l)] > 0) present.push_back(l);
  }
  if (present.size() < 2) throw InvalidArgument("svm: training data must contain at least two classes");

  SvmModel model;
  model.dim = ds.dim();
  model.gamma = opt.gamma;
  model.C = opt.C;
  model.tol = opt.tol;
  for (std::size_t a = 0; a < present.size(); ++a) {
    for (std::size_t b = a + 1; b < present.size(); ++b) {
      std::vector<std::vector<double>> rows;
      std::vector<int> y;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.label(i) == present[a] || ds.label(i) == present[b]) {
          rows.push_back(ds.rows()[i]);
          y.push_back(ds.label(i) == present[a] ? 1 : -1);
        }
      }
      const auto res = svm_train_binary(rows, y, opt);
      SvmMachine m;
      m.positive = present[a];
      m.negative = present[b];
      m.rho = res.rho;
      m.iterations = res.iterations;
      m.converged = res.converged;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (res.alpha[i] > 0) {
          m.support_vectors.push_back(rows[i]);
          m.alpha.push_back(res.alpha[i]);
          m.y.push_back(y[i]);
        }
      }
      model.machines.push_back(std::move(m));
    }
  }
  return model;
}

// One-vs-one vote. Ties go to the larger summed decision value in favour of
// each class, then to label order.
inline Label svm_predict(const SvmModel& m, std::span<const double> x) {
  require_dim(m.dim, x);
  std::array<int, kNumLabels> votes{};
  std::array<double, kNumLabels> score{};
  std::array<bool, kNumLabels> seen{};
  for (const auto& machine : m.machines) {
    const double f = svm_decision(machine, m.gamma, x);
    const auto p = label_index(machine.positive);
    const auto q = label_index(machine.negative);
    seen[p] = seen[q] = true;
    ++votes[f > 0 ? p : q];
    score[p] += f;
    score[q] -= f;
  }
  std::size_t best = kNumLabels;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (!seen[c]) continue;
    if (best == kNumLabels || votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best])) {
      best = c;
    }
  }
  return label_from_index(best);
}

}  // namespace gradeline
