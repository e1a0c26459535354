#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace netrec {

enum class Activation { ShiftedSigmoid, Tanh };

// Pointwise activation with derivatives up to third order. Additional
// activations only need a new table entry in traits().
struct ActivationTraits {
  double (*value)(double);
  double (*d1)(double);
  double (*d2)(double);
  double (*d3)(double);
  bool odd;
  const char* name;
};

namespace detail {

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double ssig(double t) { return logistic(t) - 0.5; }
inline double ssig_d1(double t) {
  double s = logistic(t);
  return s * (1.0 - s);
}
inline double ssig_d2(double t) {
  double s = logistic(t);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}
inline double ssig_d3(double t) {
  double s = logistic(t);
  return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s);
}

inline double tanh_v(double t) { return std::tanh(t); }
inline double tanh_d1(double t) {
  double y = std::tanh(t);
  return 1.0 - y * y;
}
inline double tanh_d2(double t) {
  double y = std::tanh(t);
  return -2.0 * y * (1.0 - y * y);
}
inline double tanh_d3(double t) {
  double y = std::tanh(t);
  return -2.0 * (1.0 - y * y) * (1.0 - 3.0 * y * y);
}

}  // namespace detail

inline const ActivationTraits& traits(Activation a) {
  static const ActivationTraits sigmoid{detail::ssig,    detail::ssig_d1,
                                        detail::ssig_d2, detail::ssig_d3,
                                        true,            "shifted_sigmoid"};
  static const ActivationTraits tanh_t{detail::tanh_v,  detail::tanh_d1,
                                       detail::tanh_d2, detail::tanh_d3,
                                       true,            "tanh"};
  switch (a) {
    case Activation::ShiftedSigmoid:
      return sigmoid;
    case Activation::Tanh:
      return tanh_t;
  }
  throw std::invalid_argument("unknown activation");
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "shifted_sigmoid" || name == "sigmoid")
    return Activation::ShiftedSigmoid;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

}  // namespace netrec
