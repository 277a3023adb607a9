#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deconf/matrix.hpp"

namespace deconf {

/// A mutable view of named trainable tensors, the unit the optimizer and the
/// gradient checker operate on.
using ParamRefs = std::vector<std::pair<std::string, Matrix*>>;

/// Named gradients, one per registered parameter.
using GradientSet = std::map<std::string, Matrix>;

struct AdamConfig {
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers shape-match their parameters
/// and the step count increases by exactly 1 per update.
class AdamState {
 public:
  explicit AdamState(AdamConfig config) : config_(config) {}

  /// Applies one update. An optional L2 coefficient adds 2*lambda*theta to
  /// each gradient before the moment updates. Missing gradients throw.
  void step(const ParamRefs& params, const GradientSet& grads, double l2_lambda = 0.0);

  std::int64_t steps() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::int64_t step_count_ = 0;
  std::map<std::string, Matrix> first_moment_;
  std::map<std::string, Matrix> second_moment_;
};

}  // namespace deconf
