#pragma once

#include <vector>

#include "vlogger/errors.hpp"
#include "vlogger/rng.hpp"

namespace vlogger {

// Mode-selection distribution over the number of preserved context frames.
// k = 0 is pure generation, k > 0 is prediction.
struct ModeSelector {
  double alpha = 0.6;
  int max_preserved = 6;  // m
};

inline void validate(const ModeSelector& sel) {
  if (!(sel.alpha > 0.0 && sel.alpha < 1.0))
    throw DomainError("ModeSelector: alpha must be in (0,1)");
  if (sel.max_preserved < 0)
    throw DomainError("ModeSelector: m must be >= 0");
}

// P(k) = alpha^k - alpha^(k+1) for k < m, P(m) = alpha^m. Telescopes to 1.
inline std::vector<double> pmf(const ModeSelector& sel) {
  validate(sel);
  std::vector<double> p(std::size_t(sel.max_preserved) + 1);
  double ak = 1.0;
  for (int k = 0; k < sel.max_preserved; ++k) {
    double next = ak * sel.alpha;
    p[std::size_t(k)] = ak - next;
    ak = next;
  }
  p[std::size_t(sel.max_preserved)] = ak;
  return p;
}

inline int sample_k(const ModeSelector& sel, Rng& rng) {
  auto p = pmf(sel);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double u = dist(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return int(k);
  }
  return sel.max_preserved;
}

}  // namespace vlogger
