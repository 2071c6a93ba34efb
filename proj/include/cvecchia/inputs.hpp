#ifndef CVECCHIA_INPUTS_HPP_
#define CVECCHIA_INPUTS_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cvecchia/linalg.hpp"

namespace cvecchia {

enum class InputKind {
  Spatial,
  SpatioTemporal,
  MultivariateSpatial,
  MultivariateSpatioTemporal,
  Tree,
};

std::string to_string(InputKind kind);

/// The n inputs a covariance model is evaluated over.
///
/// Spatial coordinates are stored row-wise (n x d). Times, component labels
/// (0-based) and tree leaves are optional per-item records whose presence is
/// fixed by the kind. Tree leaves are stored as bit codes with the first
/// branch choice in the most significant of `tree_depth` bits.
class InputSet {
 public:
  InputSet() = default;

  static InputSet spatial(DenseMatrix coords);
  static InputSet spatiotemporal(DenseMatrix coords, std::vector<double> times);
  static InputSet multivariate(DenseMatrix coords, std::vector<int> components,
                               std::vector<double> times = {});
  /// All 2^depth leaves in lexicographic order.
  static InputSet tree(std::size_t depth);
  static InputSet tree_leaves(std::size_t depth, std::vector<std::uint64_t> leaves);

  InputKind kind() const { return kind_; }
  std::size_t size() const { return size_; }
  std::size_t spatial_dim() const { return static_cast<std::size_t>(coords_.cols()); }

  bool has_coords() const { return kind_ != InputKind::Tree; }
  bool has_time() const { return !times_.empty(); }
  bool has_components() const { return !components_.empty(); }
  int num_components() const;

  double coord(std::size_t i, std::size_t k) const {
    return coords_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  }
  const DenseMatrix& coords() const { return coords_; }
  double time(std::size_t i) const { return times_[i]; }
  const std::vector<double>& times() const { return times_; }
  int component(std::size_t i) const { return components_.empty() ? 0 : components_[i]; }
  const std::vector<int>& components() const { return components_; }

  std::size_t tree_depth() const { return tree_depth_; }
  std::uint64_t tree_leaf(std::size_t i) const { return leaves_[i]; }
  /// Branch choices i_1..i_J, each in {1, 2}.
  std::vector<int> tree_path(std::size_t i) const;

  /// Space (and time, when present) coordinates as an n x q matrix.
  DenseMatrix spacetime_points() const;

  InputSet subset(std::span<const std::size_t> indices) const;
  /// Items of `a` followed by items of `b`; kinds must match.
  static InputSet concat(const InputSet& a, const InputSet& b);

 private:
  void validate() const;

  InputKind kind_ = InputKind::Spatial;
  std::size_t size_ = 0;
  DenseMatrix coords_;
  std::vector<double> times_;
  std::vector<int> components_;
  std::size_t tree_depth_ = 0;
  std::vector<std::uint64_t> leaves_;
};

using InputsPtr = std::shared_ptr<const InputSet>;

}  // namespace cvecchia

#endif  // CVECCHIA_INPUTS_HPP_
