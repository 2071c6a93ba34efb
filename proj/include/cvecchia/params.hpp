#ifndef CVECCHIA_PARAMS_HPP_
#define CVECCHIA_PARAMS_HPP_

#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "cvecchia/linalg.hpp"

namespace cvecchia {

/// One named model parameter. `value` is on the natural scale; parameters
/// flagged `log_scale` are strictly positive and optimized as log(value).
struct Parameter {
  std::string name;
  double value = 0.0;
  bool log_scale = true;
};

class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::initializer_list<Parameter> params);

  bool has(std::string_view name) const;
  /// Natural-scale value. Throws InvalidParameter when missing.
  double operator[](std::string_view name) const;
  double get(std::string_view name) const { return (*this)[name]; }
  /// Sets (or adds, keeping log-scale flag `log_scale`) a natural-scale value.
  void set(std::string_view name, double value);
  void add(Parameter p);
  bool log_scale(std::string_view name) const;
  void set_log_scale(std::string_view name, bool flag);

  double optimization_value(std::string_view name) const;
  /// Sets from the optimization scale (exp applied when log-scaled).
  void set_optimization_value(std::string_view name, double v);

  /// Optimization-scale vector of `names`, and its inverse.
  Vector pack(const std::vector<std::string>& names) const;
  ParamVector unpack(const std::vector<std::string>& names, const Vector& theta) const;

  const std::vector<Parameter>& entries() const { return entries_; }
  /// "name=value;name=value" with %.10g values.
  std::string to_string() const;

 private:
  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);

  std::vector<Parameter> entries_;
};

}  // namespace cvecchia

#endif  // CVECCHIA_PARAMS_HPP_
