#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace cogarb {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  double value = 0.0;
  std::vector<double> x;
};

// Dense two-phase tableau simplex for
//
//   maximize c'x  subject to  Ax <= b,  x >= 0.
//
// Pivoting follows Bland's rule (lowest label enters, ties in the ratio test
// go to the lowest basic label), so it terminates on degenerate programs and
// returns the same vertex for the same input. Sized for stage games, which
// have a few dozen variables at most.
class Simplex {
 public:
  Simplex(const std::vector<std::vector<double>>& a, std::span<const double> b, std::span<const double> c,
          double eps = 1e-11)
      : m_(static_cast<int>(b.size())),
        n_(static_cast<int>(c.size())),
        eps_(eps),
        basic_(m_),
        nonbasic_(n_ + 1),
        d_(m_ + 2, std::vector<double>(n_ + 2, 0.0)) {
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < n_; ++j) d_[i][j] = a[i][j];
    for (int i = 0; i < m_; ++i) {
      basic_[i] = n_ + i;
      d_[i][n_] = -1.0;
      d_[i][n_ + 1] = b[i];
    }
    for (int j = 0; j < n_; ++j) {
      nonbasic_[j] = j;
      d_[m_][j] = -c[j];
    }
    nonbasic_[n_] = -1;  // artificial
    d_[m_ + 1][n_] = 1.0;
  }

  LpResult solve() {
    LpResult res;
    int r = 0;
    for (int i = 1; i < m_; ++i)
      if (d_[i][n_ + 1] < d_[r][n_ + 1]) r = i;
    if (m_ > 0 && d_[r][n_ + 1] < -eps_) {
      pivot(r, n_);
      if (!run(2) || d_[m_ + 1][n_ + 1] < -eps_) {
        res.status = LpStatus::Infeasible;
        return res;
      }
      for (int i = 0; i < m_; ++i)
        if (basic_[i] == -1) {
          int s = -1;
          for (int j = 0; j < n_; ++j)
            if (std::abs(d_[i][j]) > eps_ && (s < 0 || nonbasic_[j] < nonbasic_[s])) s = j;
          if (s >= 0) pivot(i, s);
        }
    }
    const bool bounded = run(1);
    res.x.assign(n_, 0.0);
    for (int i = 0; i < m_; ++i)
      if (basic_[i] >= 0 && basic_[i] < n_) res.x[basic_[i]] = d_[i][n_ + 1];
    res.status = bounded ? LpStatus::Optimal : LpStatus::Unbounded;
    res.value = bounded ? d_[m_][n_ + 1] : std::numeric_limits<double>::infinity();
    return res;
  }

 private:
  void pivot(int r, int s) {
    const double inv = 1.0 / d_[r][s];
    const auto& pr = d_[r];
    for (int i = 0; i < m_ + 2; ++i) {
      if (i == r || std::abs(d_[i][s]) <= eps_) continue;
      auto& row = d_[i];
      const double f = row[s] * inv;
      for (int j = 0; j < n_ + 2; ++j) row[j] -= pr[j] * f;
      row[s] = pr[s] * f;
    }
    for (int j = 0; j < n_ + 2; ++j)
      if (j != s) d_[r][j] *= inv;
    for (int i = 0; i < m_ + 2; ++i)
      if (i != r) d_[i][s] *= -inv;
    d_[r][s] = inv;
    std::swap(basic_[r], nonbasic_[s]);
  }

  // phase 1 optimizes the real objective (row m), phase 2 the artificial one (row m+1).
  bool run(int phase) {
    const int obj = m_ + phase - 1;
    for (;;) {
      int s = -1;
      for (int j = 0; j <= n_; ++j) {
        if (nonbasic_[j] == -phase) continue;
        if (d_[obj][j] < -eps_ && (s < 0 || nonbasic_[j] < nonbasic_[s])) s = j;
      }
      if (s < 0) return true;
      int r = -1;
      double best = 0.0;
      for (int i = 0; i < m_; ++i) {
        if (d_[i][s] <= eps_) continue;
        const double ratio = d_[i][n_ + 1] / d_[i][s];
        if (r < 0 || ratio < best - eps_ || (ratio <= best + eps_ && basic_[i] < basic_[r])) {
          r = i;
          best = ratio;
        }
      }
      if (r < 0) return false;
      pivot(r, s);
    }
  }

  int m_, n_;
  double eps_;
  std::vector<int> basic_, nonbasic_;
  std::vector<std::vector<double>> d_;
};

inline LpResult solve_lp(const std::vector<std::vector<double>>& a, std::span<const double> b,
                         std::span<const double> c) {
  return Simplex(a, b, c).solve();
}

}  // namespace cogarb
