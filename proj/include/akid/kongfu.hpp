#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "akid/blocks.hpp"

namespace akid {

// Gradients keyed by parameter name.
using GradientMap = std::map<std::string, Tensor>;

// Pulls the gradient of every parameter out of a backward pass; parameters
// nothing flowed into get zeros.
GradientMap collect_gradients(const std::vector<Parameter>& params, const Gradients& grads);

struct LrScheme {
  enum class Kind { constant, placeholder, exp_decay };
  Kind kind = Kind::constant;
  double lr = 0.01;
  double decay_rate = 1.0;     // exp_decay: lr * decay_rate^(clock / decay_steps)
  std::uint64_t decay_steps = 1;
  bool staircase = false;      // exp_decay: integer division of the exponent

  Json to_json() const;
  static LrScheme from_json(const Json& config, const std::string& path = "lr_scheme");
};

// `supplied` is the externally fed value for the placeholder scheme.
double learning_rate(const LrScheme& scheme, std::uint64_t clock, std::optional<double> supplied = std::nullopt);

// Classical momentum: v <- mu * v + g; theta <- theta - lr(clock) * v.
// "sgd" is momentum with mu = 0.
class KongFu {
 public:
  enum class Kind { momentum, sgd };

  KongFu(Kind kind = Kind::momentum, LrScheme scheme = {}, double momentum = 0.9);

  void step(const std::vector<Parameter>& params, const GradientMap& grads, std::uint64_t clock);

  double learning_rate(std::uint64_t clock) const;
  // Feeds the placeholder scheme; the value holds until replaced.
  void set_learning_rate(double lr);

  Kind kind() const { return kind_; }
  double momentum() const { return momentum_; }
  const LrScheme& scheme() const { return scheme_; }

  const std::map<std::string, Tensor>& velocities() const { return velocity_; }
  void set_velocity(const std::string& name, Tensor value) { velocity_[name] = std::move(value); }
  void reset() { velocity_.clear(); }

  Json to_json() const;
  static KongFu from_json(const Json& config, const std::string& path = "kongfu");

 private:
  Kind kind_;
  LrScheme scheme_;
  double momentum_;
  std::optional<double> supplied_lr_;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace akid
