#include "ttamon/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ttamon {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ZeroOne: return "zero_one";
    case LossKind::Brier: return "brier";
  }
  return "unknown";
}

const char* to_string(ProxyKind kind) {
  switch (kind) {
    case ProxyKind::Uncertainty: return "uncertainty";
    case ProxyKind::Energy: return "energy";
    case ProxyKind::PrototypeDistance: return "prototype_distance";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string_view name) {
  if (name == "zero_one") return LossKind::ZeroOne;
  if (name == "brier") return LossKind::Brier;
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "'");
}

ProxyKind proxy_kind_from_string(const std::string_view name) {
  if (name == "uncertainty") return ProxyKind::Uncertainty;
  if (name == "energy") return ProxyKind::Energy;
  if (name == "prototype_distance") return ProxyKind::PrototypeDistance;
  throw std::invalid_argument("unknown proxy kind '" + std::string(name) + "'");
}

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw std::domain_error("ProbVector needs at least two classes");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::domain_error("ProbVector entry outside [0, 1]");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw std::domain_error("ProbVector entries do not sum to 1");
  }
}

std::size_t ProbVector::argmax() const {
  // std::max_element returns the first maximum, which is the tie-break we want.
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) -
                                  probs_.begin());
}

double ProbVector::max_prob() const { return probs_[argmax()]; }

namespace {

void check_label(const ProbVector& p, std::size_t label) {
  if (label >= p.num_classes()) {
    throw std::domain_error("label " + std::to_string(label) + " out of range for " +
                            std::to_string(p.num_classes()) + " classes");
  }
}

}  // namespace

LossValue zero_one_loss(const ProbVector& p, std::size_t label) {
  check_label(p, label);
  return {p.argmax() == label ? 0.0 : 1.0, LossKind::ZeroOne};
}

LossValue brier_loss(const ProbVector& p, std::size_t label) {
  check_label(p, label);
  double sum = 0.0;
  for (std::size_t c = 0; c < p.num_classes(); ++c) {
    const double d = p[c] - (c == label ? 1.0 : 0.0);
    sum += d * d;
  }
  return {std::clamp(0.5 * sum, 0.0, 1.0), LossKind::Brier};
}

LossValue evaluate_loss(LossKind kind, const ProbVector& p, std::size_t label) {
  return kind == LossKind::ZeroOne ? zero_one_loss(p, label) : brier_loss(p, label);
}

ProxyValue uncertainty_proxy(const ProbVector& p) {
  return {1.0 - p.max_prob(), ProxyKind::Uncertainty};
}

ProxyValue energy_proxy(std::span<const double> logits) {
  if (logits.empty()) throw std::domain_error("energy proxy needs at least one logit");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::domain_error("energy proxy needs finite logits");
    top = std::max(top, v);
  }
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - top);
  return {-(top + std::log(sum)), ProxyKind::Energy};
}

ProxyValue prototype_distance_proxy(std::span<const double> feature,
                                    std::span<const double> prototypes) {
  const std::size_t dim = feature.size();
  if (dim == 0 || prototypes.empty() || prototypes.size() % dim != 0) {
    throw std::domain_error("prototype matrix does not match feature dimension");
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t row = 0; row < prototypes.size() / dim; ++row) {
    double d2 = 0.0;
    for (std::size_t h = 0; h < dim; ++h) {
      const double d = feature[h] - prototypes[row * dim + h];
      d2 += d * d;
    }
    best = std::min(best, d2);
  }
  return {best, ProxyKind::PrototypeDistance};
}

}  // namespace ttamon
