#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dqpinn/errors.hpp"

namespace dqpinn::pinn {

enum class FeatureKind { kLinear, kSquare, kCube, kPow15, kSqrtOverShifted, kZero };

// One scalar time feature of subdomain-local time.
struct Feature {
  FeatureKind kind = FeatureKind::kLinear;
  double c = 0.0;  // shift of t^0.5 / (t + c)

  bool operator==(const Feature&) const = default;

  bool singular_derivative() const { return kind == FeatureKind::kSqrtOverShifted; }

  double operator()(double t) const {
    switch (kind) {
      case FeatureKind::kLinear: return t;
      case FeatureKind::kSquare: return t * t;
      case FeatureKind::kCube: return t * t * t;
      case FeatureKind::kPow15: return t * std::sqrt(t);
      case FeatureKind::kSqrtOverShifted: return std::sqrt(t) / (t + c);
      case FeatureKind::kZero: return 0.0;
    }
    return 0.0;
  }

  std::string describe() const {
    switch (kind) {
      case FeatureKind::kLinear: return "t";
      case FeatureKind::kSquare: return "t^2";
      case FeatureKind::kCube: return "t^3";
      case FeatureKind::kPow15: return "t^1.5";
      case FeatureKind::kSqrtOverShifted: {
        std::ostringstream os;
        os.precision(17);
        os << "t^0.5/(t+" << c << ")";
        return os.str();
      }
      case FeatureKind::kZero: return "0";
    }
    return "?";
  }
};

// Parses "t", "t^2", "t^3", "t^1.5", "t^0.5/(t+c)" and "0".
inline Feature parse_feature(const std::string& text) {
  if (text == "t") return {FeatureKind::kLinear};
  if (text == "t^2") return {FeatureKind::kSquare};
  if (text == "t^3") return {FeatureKind::kCube};
  if (text == "t^1.5") return {FeatureKind::kPow15};
  if (text == "0") return {FeatureKind::kZero};
  const std::string head = "t^0.5/(t+";
  if (text.rfind(head, 0) == 0 && text.size() > head.size() + 1 && text.back() == ')') {
    const std::string num = text.substr(head.size(), text.size() - head.size() - 1);
    std::size_t used = 0;
    double c = 0.0;
    try {
      c = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == num.size() && c > 0.0) return {FeatureKind::kSqrtOverShifted, c};
  }
  throw ConfigError("unknown time feature '" + text + "'");
}

class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(std::vector<Feature> features) : features_(std::move(features)) { validate(); }

  static FeatureMap parse(const std::vector<std::string>& names) {
    std::vector<Feature> f;
    for (const auto& n : names) f.push_back(parse_feature(n));
    return FeatureMap(std::move(f));
  }

  void validate() const {
    if (features_.empty()) throw ConfigError("feature map needs at least one feature");
    int singular = 0;
    for (const auto& f : features_) singular += f.singular_derivative() ? 1 : 0;
    if (singular > 1) throw ConfigError("feature map allows at most one singular-derivative feature");
  }

  std::size_t size() const { return features_.size(); }
  const std::vector<Feature>& features() const { return features_; }
  bool operator==(const FeatureMap&) const = default;

  // Features at local time t >= 0.
  template <class Out>
  void eval(double t, Out& out) const {
    if (t < 0.0) throw DimensionError("feature map evaluated before the subdomain start");
    for (std::size_t i = 0; i < features_.size(); ++i) out[static_cast<long>(i)] = features_[i](t);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : features_) out.push_back(f.describe());
    return out;
  }

  std::string describe() const {
    std::string s = "{";
    for (std::size_t i = 0; i < features_.size(); ++i) s += (i ? ", " : "") + features_[i].describe();
    return s + "}";
  }

 private:
  std::vector<Feature> features_;
};

}  // namespace dqpinn::pinn
