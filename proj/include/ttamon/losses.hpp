#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace ttamon {

enum class LossKind { ZeroOne, Brier };
enum class ProxyKind { Uncertainty, Energy, PrototypeDistance };

const char* to_string(LossKind kind);
const char* to_string(ProxyKind kind);
LossKind loss_kind_from_string(const std::string_view name);
ProxyKind proxy_kind_from_string(const std::string_view name);

/// Upper end M of the loss range [0, M]. Both supported losses use M = 1.
constexpr double loss_bound(LossKind) { return 1.0; }

/// A point on the probability simplex with at least two classes.
///
/// Construction validates the entries instead of renormalizing: a vector that
/// is off the simplex by more than 1e-9 is rejected with std::domain_error.
class ProbVector {
 public:
  static constexpr double kSimplexTolerance = 1e-9;

  explicit ProbVector(std::vector<double> probs);

  std::size_t num_classes() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t c) const { return probs_[c]; }

  /// Predicted class; ties go to the lowest index.
  std::size_t argmax() const;
  double max_prob() const;

 private:
  std::vector<double> probs_;
};

struct LossValue {
  double value = 0.0;
  LossKind kind = LossKind::ZeroOne;
};

struct ProxyValue {
  double value = 0.0;
  ProxyKind kind = ProxyKind::Uncertainty;
};

LossValue zero_one_loss(const ProbVector& p, std::size_t label);

/// Halved squared error against the one-hot label, in [0, 1].
LossValue brier_loss(const ProbVector& p, std::size_t label);

LossValue evaluate_loss(LossKind kind, const ProbVector& p, std::size_t label);

/// 1 - max_c p_c, in [0, 1 - 1/C].
ProxyValue uncertainty_proxy(const ProbVector& p);

/// Negative log-sum-exp of the logits.
ProxyValue energy_proxy(std::span<const double> logits);

/// Smallest squared Euclidean distance from `feature` to a prototype row.
/// `prototypes` is row-major with `feature.size()` columns.
ProxyValue prototype_distance_proxy(std::span<const double> feature,
                                    std::span<const double> prototypes);

}  // namespace ttamon
