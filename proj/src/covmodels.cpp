#include "cvecchia/covmodels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numbers>

#include "cvecchia/matern.hpp"

namespace cvecchia {

namespace {

double checked_positive(double v, const char* name) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    throw InvalidParameter(std::string("parameter '") + name + "' must be finite and positive");
  }
  return v;
}

class NoiseModel final : public CovarianceModel {
 public:
  NoiseModel(ModelPtr base, Vector noise) : base_(std::move(base)), noise_(std::move(noise)) {}
  std::size_t size() const override { return base_->size(); }
  std::string id() const override { return base_->id() + "+noise"; }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override {
    const double k = (*base_)(i, j);
    return i == j ? k + noise_[static_cast<Eigen::Index>(i)] : k;
  }

 private:
  ModelPtr base_;
  Vector noise_;
};

class IndexedModel final : public CovarianceModel {
 public:
  IndexedModel(ModelPtr base, std::vector<std::size_t> idx) : base_(std::move(base)), idx_(std::move(idx)) {}
  std::size_t size() const override { return idx_.size(); }
  std::string id() const override { return base_->id(); }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override { return (*base_)(idx_[i], idx_[j]); }

 private:
  ModelPtr base_;
  std::vector<std::size_t> idx_;
};

class MatrixModel final : public CovarianceModel {
 public:
  explicit MatrixModel(DenseMatrix k) : k_(std::move(k)) {}
  std::size_t size() const override { return static_cast<std::size_t>(k_.rows()); }
  std::string id() const override { return "matrix"; }

 protected:
  double evaluate(std::size_t i, std::size_t j) const override {
    return k_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  DenseMatrix k_;
};

}  // namespace

DenseMatrix eval_matrix(const CovarianceModel& model, std::span<const std::size_t> rows,
                        std::span<const std::size_t> cols) {
  DenseMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t b = 0; b < cols.size(); ++b) {
    for (std::size_t a = 0; a < rows.size(); ++a) {
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = model(rows[a], cols[b]);
    }
  }
  return out;
}

DenseMatrix eval_matrix(const CovarianceModel& model) {
  std::vector<std::size_t> idx(model.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return eval_block(model, idx);
}

DenseMatrix eval_block(const CovarianceModel& model, std::span<const std::size_t> idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  DenseMatrix out(k, k);
  for (Eigen::Index b = 0; b < k; ++b) {
    for (Eigen::Index a = 0; a <= b; ++a) {
      const double v = model(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

ModelPtr with_noise(ModelPtr model, Vector noise_variances) {
  if (static_cast<std::size_t>(noise_variances.size()) != model->size()) {
    throw DimensionMismatch("with_noise: noise vector length differs from model size");
  }
  for (Eigen::Index i = 0; i < noise_variances.size(); ++i) {
    if (!(noise_variances[i] >= 0.0) || !std::isfinite(noise_variances[i])) {
      throw NegativeNoise("with_noise: noise variance must be finite and >= 0");
    }
  }
  return std::make_shared<NoiseModel>(std::move(model), std::move(noise_variances));
}

ModelPtr with_constant_noise(ModelPtr model, double noise_variance) {
  const auto n = static_cast<Eigen::Index>(model->size());
  return with_noise(std::move(model), Vector::Constant(n, noise_variance));
}

ModelPtr indexed_view(ModelPtr model, std::vector<std::size_t> indices) {
  for (auto i : indices) {
    if (i >= model->size()) throw DimensionMismatch("indexed_view: index out of range");
  }
  return std::make_shared<IndexedModel>(std::move(model), std::move(indices));
}

ModelPtr matrix_model(DenseMatrix k) {
  if (k.rows() != k.cols()) throw DimensionMismatch("matrix_model: matrix must be square");
  DenseMatrix sym = 0.5 * (k + k.transpose());
  return std::make_shared<MatrixModel>(std::move(sym));
}

// ---------------------------------------------------------------------------

Eigen::Matrix2d AnisotropyField::anisotropy(const Eigen::Vector2d& x) const {
  Eigen::Matrix2d a_mat = Eigen::Matrix2d::Zero();
  switch (preset) {
    case AnisotropyPreset::Anisotropic:
      a_mat(0, 0) = 1e-2 / (a * a);
      a_mat(1, 1) = 1e-2;
      break;
    case AnisotropyPreset::VaryingSmoothness:
      a_mat(0, 0) = 1e-2;
      a_mat(1, 1) = 1e-2;
      break;
    case AnisotropyPreset::VaryingRotation: {
      const double eta = std::numbers::pi * x[0] / 2.0;
      const double c = std::cos(eta), s = std::sin(eta);
      const double d1 = 1e-4, d2 = 1e-2;
      a_mat(0, 0) = d1 * c * c + d2 * s * s;
      a_mat(0, 1) = (d1 - d2) * c * s;
      a_mat(1, 0) = a_mat(0, 1);
      a_mat(1, 1) = d1 * s * s + d2 * c * c;
      break;
    }
  }
  return a_mat;
}

double AnisotropyField::smoothness(const Eigen::Vector2d& x) const {
  if (preset == AnisotropyPreset::VaryingSmoothness) return 0.2 + 1.3 * x[0];
  return 0.5;
}

namespace {

// Core of the nonstationary kernel on precomputed per-point quantities.
double ns_matern_core(double d1, double d2, double a11, double a12, double a22, double a11p,
                      double a12p, double a22p, double qi, double qj, double nu, double sigma2,
                      bool unit_prefactor) {
  const double b11 = 0.5 * (a11 + a11p);
  const double b12 = 0.5 * (a12 + a12p);
  const double b22 = 0.5 * (a22 + a22p);
  const double det = b11 * b22 - b12 * b12;
  if (!(b11 > 0.0) || !(det > 0.0)) {
    throw NotPositiveDefinite("nonstationary_matern: averaged anisotropy matrix is not positive definite");
  }
  const double q = std::max(0.0, (b22 * d1 * d1 - 2.0 * b12 * d1 * d2 + b11 * d2 * d2) / det);
  const double pref = unit_prefactor ? 1.0 : qi * qj / std::sqrt(det);
  return sigma2 * pref * matern_function(nu, std::sqrt(q));
}

double quarter_root_det(const Eigen::Matrix2d& a) {
  const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  if (!(a(0, 0) > 0.0) || !(det > 0.0)) {
    throw NotPositiveDefinite("anisotropy field is not positive definite");
  }
  return std::pow(det, 0.25);
}

}  // namespace

double nonstationary_matern(const Eigen::Vector2d& x, const Eigen::Vector2d& xp, double sigma2,
                            const AnisotropyField& field) {
  const Eigen::Matrix2d a = field.anisotropy(x);
  const Eigen::Matrix2d ap = field.anisotropy(xp);
  const double nu = 0.5 * (field.smoothness(x) + field.smoothness(xp));
  return ns_matern_core(x[0] - xp[0], x[1] - xp[1], a(0, 0), a(0, 1), a(1, 1), ap(0, 0), ap(0, 1),
                        ap(1, 1), quarter_root_det(a), quarter_root_det(ap), nu, sigma2, false);
}

NonstationaryMaternModel::NonstationaryMaternModel(InputsPtr inputs, double sigma2, AnisotropyField field)
    : n_(inputs->size()), sigma2_(checked_positive(sigma2, "sigma2")), field_(field) {
  if (!inputs->has_coords() || inputs->spatial_dim() != 2) {
    throw InvalidShape("nonstationary Matern needs 2-D spatial inputs");
  }
  if (field_.preset == AnisotropyPreset::Anisotropic) checked_positive(field_.a, "a");
  constant_smoothness_ = field_.preset != AnisotropyPreset::VaryingSmoothness;
  items_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const Eigen::Vector2d x(inputs->coord(i, 0), inputs->coord(i, 1));
    const Eigen::Matrix2d a = field_.anisotropy(x);
    items_[i] = {x[0], x[1], a(0, 0), a(0, 1), a(1, 1), quarter_root_det(a), field_.smoothness(x)};
  }
}

std::string NonstationaryMaternModel::id() const {
  switch (field_.preset) {
    case AnisotropyPreset::Anisotropic: return "anisotropic";
    case AnisotropyPreset::VaryingSmoothness: return "varying-smoothness";
    case AnisotropyPreset::VaryingRotation: return "varying-rotation";
  }
  return "nonstationary-matern";
}

double NonstationaryMaternModel::evaluate(std::size_t i, std::size_t j) const {
  const auto& p = items_[i];
  const auto& q = items_[j];
  const double nu = constant_smoothness_ ? p[6] : 0.5 * (p[6] + q[6]);
  // Constant fields have prefactor exactly 1; skip its rounding noise.
  const bool unit = field_.preset != AnisotropyPreset::VaryingRotation;
  return ns_matern_core(p[0] - q[0], p[1] - q[1], p[2], p[3], p[4], q[2], q[3], q[4], p[5], q[5], nu,
                        sigma2_, unit);
}

LatentMultivariateModel::LatentMultivariateModel(InputsPtr inputs, double sigma2, double range, double delta)
    : n_(inputs->size()),
      dim_(inputs->spatial_dim()),
      sigma2_(checked_positive(sigma2, "sigma2")),
      range_(checked_positive(range, "range")) {
  if (!inputs->has_coords()) throw InvalidShape("latent multivariate model needs coordinates");
  if (!std::isfinite(delta) || delta < 0.0) throw InvalidParameter("parameter 'delta' must be >= 0");
  points_.resize(n_ * (dim_ + 1));
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < dim_; ++k) points_[i * (dim_ + 1) + k] = inputs->coord(i, k);
    points_[i * (dim_ + 1) + dim_] = inputs->component(i) * delta;
  }
}

double LatentMultivariateModel::evaluate(std::size_t i, std::size_t j) const {
  const double* a = &points_[i * (dim_ + 1)];
  const double* b = &points_[j * (dim_ + 1)];
  double ss = 0.0;
  for (std::size_t k = 0; k <= dim_; ++k) ss += (a[k] - b[k]) * (a[k] - b[k]);
  return sigma2_ * std::exp(-std::sqrt(ss) / range_);
}

SpaceTimeExponentialModel::SpaceTimeExponentialModel(InputsPtr inputs, double sigma2, double range_space,
                                                     double range_time)
    : n_(inputs->size()), sigma2_(checked_positive(sigma2, "sigma2")) {
  if (!inputs->has_coords()) throw InvalidShape("space-time model needs coordinates");
  checked_positive(range_space, "range_space");
  checked_positive(range_time, "range_time");
  const std::size_t d = inputs->spatial_dim();
  dim_ = d + (inputs->has_time() ? 1 : 0);
  points_.resize(n_ * dim_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < d; ++k) points_[i * dim_ + k] = inputs->coord(i, k) / range_space;
    if (inputs->has_time()) points_[i * dim_ + d] = inputs->time(i) / range_time;
  }
}

double SpaceTimeExponentialModel::evaluate(std::size_t i, std::size_t j) const {
  const double* a = &points_[i * dim_];
  const double* b = &points_[j * dim_];
  double ss = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) ss += (a[k] - b[k]) * (a[k] - b[k]);
  return sigma2_ * std::exp(-std::sqrt(ss));
}

HierarchicalTreeModel::HierarchicalTreeModel(InputsPtr inputs, std::vector<double> level_variances)
    : depth_(inputs->tree_depth()) {
  if (inputs->kind() != InputKind::Tree) throw InvalidShape("tree model needs tree inputs");
  if (level_variances.size() != depth_ + 1) {
    throw InvalidParameter("tree model needs depth + 1 level variances");
  }
  leaves_.resize(inputs->size());
  for (std::size_t i = 0; i < leaves_.size(); ++i) leaves_[i] = inputs->tree_leaf(i);
  cumulative_.resize(depth_ + 1);
  double acc = 0.0;
  for (std::size_t r = 0; r <= depth_; ++r) {
    acc += checked_positive(level_variances[r], "sigma2_r");
    cumulative_[r] = acc;
  }
}

double HierarchicalTreeModel::evaluate(std::size_t i, std::size_t j) const {
  const std::uint64_t diff = leaves_[i] ^ leaves_[j];
  // Common-prefix length of the two depth-bit paths.
  const std::size_t alpha = depth_ - static_cast<std::size_t>(std::bit_width(diff));
  return cumulative_[alpha];
}

MaternArdModel::MaternArdModel(InputsPtr inputs, double sigma2, double nu, std::vector<double> ranges,
                               double range_latent)
    : n_(inputs->size()), sigma2_(checked_positive(sigma2, "sigma2")), nu_(checked_positive(nu, "nu")) {
  if (!inputs->has_coords()) throw InvalidShape("matern-ard model needs coordinates");
  const std::size_t d = inputs->spatial_dim();
  const std::size_t q = d + (inputs->has_time() ? 1 : 0);
  if (ranges.size() != q) throw InvalidParameter("matern-ard: one range per coordinate (and time) required");
  for (double r : ranges) checked_positive(r, "range");
  const bool latent = inputs->has_components();
  if (latent) checked_positive(range_latent, "range_latent");
  dim_ = q + (latent ? 1 : 0);
  points_.resize(n_ * dim_);
  for (std::size_t i = 0; i < n_; ++i) {
    double* p = &points_[i * dim_];
    for (std::size_t k = 0; k < d; ++k) p[k] = inputs->coord(i, k) / ranges[k];
    if (inputs->has_time()) p[d] = inputs->time(i) / ranges[d];
    if (latent) p[q] = inputs->component(i) / range_latent;
  }
}

double MaternArdModel::evaluate(std::size_t i, std::size_t j) const {
  const double* a = &points_[i * dim_];
  const double* b = &points_[j * dim_];
  double ss = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) ss += (a[k] - b[k]) * (a[k] - b[k]);
  return sigma2_ * matern_function(nu_, std::sqrt(ss));
}

// ---------------------------------------------------------------------------

namespace {

ModelPtr bind_nonstationary(const InputsPtr& in, const ParamVector& p, AnisotropyPreset preset) {
  AnisotropyField field{preset, preset == AnisotropyPreset::Anisotropic ? p["a"] : 1.0};
  return std::make_shared<NonstationaryMaternModel>(in, p["sigma2"], field);
}

std::map<std::string, ModelFamily, std::less<>> build_registry() {
  std::map<std::string, ModelFamily, std::less<>> reg;
  auto add = [&reg](ModelFamily f) { reg.emplace(f.id, std::move(f)); };

  add({"anisotropic", {{"sigma2", 1.0}, {"a", 10.0}}, {},
       [](const InputsPtr& in, const ParamVector& p) {
         return bind_nonstationary(in, p, AnisotropyPreset::Anisotropic);
       }});
  add({"varying-smoothness", {{"sigma2", 1.0}}, {},
       [](const InputsPtr& in, const ParamVector& p) {
         return bind_nonstationary(in, p, AnisotropyPreset::VaryingSmoothness);
       }});
  add({"varying-rotation", {{"sigma2", 1.0}}, {},
       [](const InputsPtr& in, const ParamVector& p) {
         return bind_nonstationary(in, p, AnisotropyPreset::VaryingRotation);
       }});
  add({"multivariate-latent", {{"sigma2", 1.0}, {"range", 0.1}, {"delta", 0.4}}, {},
       [](const InputsPtr& in, const ParamVector& p) -> ModelPtr {
         return std::make_shared<LatentMultivariateModel>(in, p["sigma2"], p["range"], p["delta"]);
       }});
  add({"spacetime-exponential", {{"sigma2", 1.0}, {"range_space", 0.1}, {"range_time", 1.0}}, {},
       [](const InputsPtr& in, const ParamVector& p) -> ModelPtr {
         return std::make_shared<SpaceTimeExponentialModel>(in, p["sigma2"], p["range_space"], p["range_time"]);
       }});
  add({"tree", {{"sigma2", 1.0}}, {},
       [](const InputsPtr& in, const ParamVector& p) -> ModelPtr {
         std::vector<double> v(in->tree_depth() + 1, p["sigma2"]);
         for (std::size_t r = 0; r < v.size(); ++r) {
           const std::string key = "sigma2_" + std::to_string(r);
           if (p.has(key)) v[r] = p[key];
         }
         return std::make_shared<HierarchicalTreeModel>(in, std::move(v));
       }});
  add({"matern-ard",
       {{"sigma2", 1.0},
        {"nu", 0.75},
        {"range_x1", 0.2},
        {"range_x2", 0.2},
        {"range_time", 0.1},
        {"range_latent", 1.0},
        {"beta0", 0.0, false},
        {"beta1", 0.0, false}},
       {"beta0", "beta1"},
       [](const InputsPtr& in, const ParamVector& p) -> ModelPtr {
         std::vector<double> ranges;
         const std::size_t d = in->spatial_dim();
         for (std::size_t k = 0; k < d; ++k) ranges.push_back(p["range_x" + std::to_string(k + 1)]);
         if (in->has_time()) ranges.push_back(p["range_time"]);
         const double rl = in->has_components() ? p["range_latent"] : 1.0;
         return std::make_shared<MaternArdModel>(in, p["sigma2"], p["nu"], std::move(ranges), rl);
       }});
  return reg;
}

const std::map<std::string, ModelFamily, std::less<>>& registry() {
  static const auto reg = build_registry();
  return reg;
}

}  // namespace

const ModelFamily& model_family(std::string_view id) {
  const auto& reg = registry();
  auto it = reg.find(id);
  if (it == reg.end()) throw UnknownIdentifier("unknown model family '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> model_family_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, f] : registry()) ids.push_back(id);
  return ids;
}

DenseMatrix mean_design(const InputSet& inputs) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const int p = inputs.num_components();
  DenseMatrix x = DenseMatrix::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    const int c = inputs.component(static_cast<std::size_t>(i));
    if (c >= 1) x(i, c) = 1.0;
  }
  return x;
}

}  // namespace cvecchia
