#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "mlcl/matrix.hpp"

// Brute-force metric definitions written from the formulas, without sorting.
namespace mlcl::oracle {

struct Counts {
  std::vector<double> correct, predicted, positive;
};

inline Counts confusion_counts(const Matrix& s, const Matrix& y, double threshold) {
  Counts k;
  for (std::size_t c = 0; c < s.cols(); ++c) {
    double nc = 0, np = 0, ng = 0;
    for (std::size_t r = 0; r < s.rows(); ++r) {
      const int pred = s(r, c) >= threshold ? 1 : 0;
      const int gold = y(r, c) > 0.5 ? 1 : 0;
      nc += pred * gold;
      np += pred;
      ng += gold;
    }
    k.correct.push_back(nc);
    k.predicted.push_back(np);
    k.positive.push_back(ng);
  }
  return k;
}

// Precision at each positive via rank counting: rank(p) = 1 + #{examples ahead of p}.
inline double brute_ap(const Matrix& s, const Matrix& y, std::size_t c) {
  double sum = 0, positives = 0;
  for (std::size_t p = 0; p < s.rows(); ++p) {
    if (y(p, c) <= 0.5) continue;
    positives += 1;
    double ahead = 0, ahead_pos = 0;
    for (std::size_t q = 0; q < s.rows(); ++q) {
      const bool before = s(q, c) > s(p, c) || (s(q, c) == s(p, c) && q < p);
      if (!before) continue;
      ahead += 1;
      if (y(q, c) > 0.5) ahead_pos += 1;
    }
    sum += (ahead_pos + 1) / (ahead + 1);
  }
  return sum / positives;
}

struct All {
  double map, cp, cr, cf1, op, orc, of1;
};

inline double ratio(double a, double b) { return b == 0 ? 0 : a / b; }
inline double f1(double p, double r) { return p + r == 0 ? 0 : 2 * p * r / (p + r); }

inline All brute_all(const Matrix& s, const Matrix& y, double threshold) {
  const Counts k = confusion_counts(s, y, threshold);
  double map = 0, cp = 0, cr = 0, used = 0, nc = 0, np = 0, ng = 0;
  for (std::size_t c = 0; c < s.cols(); ++c) {
    nc += k.correct[c];
    np += k.predicted[c];
    ng += k.positive[c];
    if (k.positive[c] == 0) continue;
    used += 1;
    map += brute_ap(s, y, c);
    cp += ratio(k.correct[c], k.predicted[c]);
    cr += ratio(k.correct[c], k.positive[c]);
  }
  All a{};
  a.map = map / used;
  a.cp = cp / used;
  a.cr = cr / used;
  a.cf1 = f1(a.cp, a.cr);
  a.op = ratio(nc, np);
  a.orc = ratio(nc, ng);
  a.of1 = f1(a.op, a.orc);
  return a;
}

}  // namespace mlcl::oracle
