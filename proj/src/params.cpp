#include "cvecchia/params.hpp"

#include <cmath>
#include <cstdio>

namespace cvecchia {

ParamVector::ParamVector(std::initializer_list<Parameter> params) {
  for (const auto& p : params) add(p);
}

const Parameter* ParamVector::find(std::string_view name) const {
  for (const auto& p : entries_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParamVector::find(std::string_view name) {
  for (auto& p : entries_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

bool ParamVector::has(std::string_view name) const { return find(name) != nullptr; }

double ParamVector::operator[](std::string_view name) const {
  const auto* p = find(name);
  if (!p) throw InvalidParameter("missing parameter '" + std::string(name) + "'");
  return p->value;
}

void ParamVector::set(std::string_view name, double value) {
  if (auto* p = find(name)) {
    p->value = value;
    return;
  }
  entries_.push_back({std::string(name), value, true});
}

void ParamVector::add(Parameter p) {
  if (auto* existing = find(p.name)) {
    *existing = std::move(p);
    return;
  }
  entries_.push_back(std::move(p));
}

bool ParamVector::log_scale(std::string_view name) const {
  const auto* p = find(name);
  if (!p) throw InvalidParameter("missing parameter '" + std::string(name) + "'");
  return p->log_scale;
}

void ParamVector::set_log_scale(std::string_view name, bool flag) {
  auto* p = find(name);
  if (!p) throw InvalidParameter("missing parameter '" + std::string(name) + "'");
  p->log_scale = flag;
}

double ParamVector::optimization_value(std::string_view name) const {
  const auto* p = find(name);
  if (!p) throw InvalidParameter("missing parameter '" + std::string(name) + "'");
  if (!p->log_scale) return p->value;
  if (!(p->value > 0.0)) throw InvalidParameter("parameter '" + p->name + "' must be positive");
  return std::log(p->value);
}

void ParamVector::set_optimization_value(std::string_view name, double v) {
  auto* p = find(name);
  if (!p) throw InvalidParameter("missing parameter '" + std::string(name) + "'");
  const double natural = p->log_scale ? std::exp(v) : v;
  if (!std::isfinite(natural) || (p->log_scale && !(natural > 0.0))) {
    throw InvalidParameter("parameter '" + p->name + "' is not finite on the natural scale");
  }
  p->value = natural;
}

Vector ParamVector::pack(const std::vector<std::string>& names) const {
  Vector theta(static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) theta[k] = optimization_value(names[k]);
  return theta;
}

ParamVector ParamVector::unpack(const std::vector<std::string>& names, const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != names.size()) {
    throw DimensionMismatch("ParamVector::unpack: size mismatch");
  }
  ParamVector out = *this;
  for (std::size_t k = 0; k < names.size(); ++k) out.set_optimization_value(names[k], theta[k]);
  return out;
}

std::string ParamVector::to_string() const {
  std::string out;
  char buf[64];
  for (const auto& p : entries_) {
    if (!out.empty()) out += ';';
    std::snprintf(buf, sizeof buf, "%.10g", p.value);
    out += p.name + "=" + buf;
  }
  return out;
}

}  // namespace cvecchia
