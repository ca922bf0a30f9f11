#include "akid/kongfu.hpp"

#include <cmath>

namespace akid {

GradientMap collect_gradients(const std::vector<Parameter>& params, const Gradients& grads) {
  GradientMap out;
  for (const auto& p : params) out.emplace(p.name, grads.of(p.variable));
  return out;
}

Json LrScheme::to_json() const {
  switch (kind) {
    case Kind::constant:
      return Json{{"name", "constant"}, {"lr", lr}};
    case Kind::placeholder:
      return Json{{"name", "placeholder"}};
    case Kind::exp_decay:
      return Json{{"name", "exp_decay"}, {"lr", lr}, {"decay_rate", decay_rate}, {"decay_steps", decay_steps},
                  {"staircase", staircase}};
  }
  return {};
}

LrScheme LrScheme::from_json(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  LrScheme s;
  const std::string name = r.get<std::string>("name", "constant");
  if (name == "constant") {
    s.kind = Kind::constant;
    s.lr = r.get<double>("lr", s.lr);
  } else if (name == "placeholder") {
    s.kind = Kind::placeholder;
  } else if (name == "exp_decay") {
    s.kind = Kind::exp_decay;
    s.lr = r.get<double>("lr", s.lr);
    s.decay_rate = r.get<double>("decay_rate");
    s.decay_steps = r.get<std::uint64_t>("decay_steps");
    s.staircase = r.get<bool>("staircase", false);
    if (s.decay_steps == 0) throw ConfigError(r.path("decay_steps") + ": must be >= 1");
    if (!(s.decay_rate > 0.0)) throw ConfigError(r.path("decay_rate") + ": must be > 0");
  } else {
    throw ConfigError(r.path("name") + ": unknown learning-rate scheme \"" + name + "\"");
  }
  if (s.kind != Kind::placeholder && !(s.lr > 0.0)) throw ConfigError(r.path("lr") + ": must be > 0");
  r.finish();
  return s;
}

double learning_rate(const LrScheme& scheme, std::uint64_t clock, std::optional<double> supplied) {
  switch (scheme.kind) {
    case LrScheme::Kind::constant:
      return scheme.lr;
    case LrScheme::Kind::placeholder:
      if (!supplied) throw StateError("placeholder learning rate was not supplied");
      return *supplied;
    case LrScheme::Kind::exp_decay: {
      const double exponent = scheme.staircase ? static_cast<double>(clock / scheme.decay_steps)
                                               : static_cast<double>(clock) / static_cast<double>(scheme.decay_steps);
      return scheme.lr * std::pow(scheme.decay_rate, exponent);
    }
  }
  return 0.0;
}

KongFu::KongFu(Kind kind, LrScheme scheme, double momentum)
    : kind_(kind), scheme_(scheme), momentum_(kind == Kind::sgd ? 0.0 : momentum) {
  if (!(momentum_ >= 0.0 && momentum_ < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (scheme_.kind != LrScheme::Kind::placeholder && !(scheme_.lr > 0.0)) throw ConfigError("learning rate must be > 0");
}

double KongFu::learning_rate(std::uint64_t clock) const { return akid::learning_rate(scheme_, clock, supplied_lr_); }

void KongFu::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  supplied_lr_ = lr;
}

void KongFu::step(const std::vector<Parameter>& params, const GradientMap& grads, std::uint64_t clock) {
  for (const auto& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) throw StateError("no gradient for parameter " + p.name);
    if (it->second.shape() != p.variable.shape()) {
      throw ShapeError("gradient for " + p.name + " is " + it->second.shape().to_string() + ", parameter is " +
                       p.variable.shape().to_string());
    }
  }
  const double lr = learning_rate(clock);
  for (const auto& p : params) {
    Tensor& theta = p.variable.mutable_leaf_value();
    const Tensor g = grads.at(p.name).cast(theta.dtype());
    auto [pos, inserted] = velocity_.try_emplace(p.name, Tensor::zeros(theta.shape(), theta.dtype()));
    Tensor& v = pos->second;
    if (v.shape() != theta.shape()) throw ShapeError("velocity for " + p.name + " does not match the parameter");
    dispatch(theta.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto th = theta.data<T>();
      auto vel = v.data<T>();
      auto gr = g.data<T>();
      const T mu = static_cast<T>(momentum_);
      const T eta = static_cast<T>(lr);
      for (std::size_t i = 0; i < th.size(); ++i) {
        vel[i] = mu * vel[i] + gr[i];
        th[i] -= eta * vel[i];
      }
    });
  }
}

Json KongFu::to_json() const {
  return Json{{"kind", kind_ == Kind::sgd ? "sgd" : "momentum"}, {"momentum", momentum_}, {"lr_scheme", scheme_.to_json()}};
}

KongFu KongFu::from_json(const Json& config, const std::string& path) {
  ObjectReader r(config, path);
  const std::string kind = r.get<std::string>("kind", "momentum");
  Kind k;
  if (kind == "momentum") {
    k = Kind::momentum;
  } else if (kind == "sgd") {
    k = Kind::sgd;
  } else {
    throw ConfigError(r.path("kind") + ": unknown optimizer \"" + kind + "\" (expected momentum or sgd)");
  }
  const double momentum = r.get<double>("momentum", k == Kind::sgd ? 0.0 : 0.9);
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError(r.path("momentum") + ": must be in [0, 1)");
  if (k == Kind::sgd && momentum != 0.0) throw ConfigError(r.path("momentum") + ": sgd takes no momentum");
  const Json* scheme = r.optional("lr_scheme");
  LrScheme s = scheme ? LrScheme::from_json(*scheme, r.path("lr_scheme")) : LrScheme{};
  r.finish();
  return KongFu(k, s, momentum);
}

}  // namespace akid
