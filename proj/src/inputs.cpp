#include "cvecchia/inputs.hpp"

#include <algorithm>
#include <cmath>

namespace cvecchia {

std::string to_string(InputKind kind) {
  switch (kind) {
    case InputKind::Spatial: return "spatial";
    case InputKind::SpatioTemporal: return "spatiotemporal";
    case InputKind::MultivariateSpatial: return "multivariate-spatial";
    case InputKind::MultivariateSpatioTemporal: return "multivariate-spatiotemporal";
    case InputKind::Tree: return "tree";
  }
  return "unknown";
}

void InputSet::validate() const {
  if (kind_ == InputKind::Tree) {
    if (leaves_.size() != size_) throw InvalidShape("InputSet: leaf count mismatch");
    if (tree_depth_ == 0 || tree_depth_ > 62) throw InvalidShape("InputSet: tree depth must be in 1..62");
    for (auto leaf : leaves_) {
      if (leaf >> tree_depth_) throw InvalidShape("InputSet: tree leaf exceeds depth");
    }
    return;
  }
  if (static_cast<std::size_t>(coords_.rows()) != size_) throw InvalidShape("InputSet: coordinate rows");
  if (!coords_.allFinite()) throw InvalidShape("InputSet: non-finite coordinate");
  if (!times_.empty() && times_.size() != size_) throw InvalidShape("InputSet: time count");
  for (double t : times_) {
    if (!std::isfinite(t)) throw InvalidShape("InputSet: non-finite time");
  }
  if (!components_.empty() && components_.size() != size_) throw InvalidShape("InputSet: label count");
  for (int c : components_) {
    if (c < 0) throw InvalidShape("InputSet: negative component label");
  }
}

InputSet InputSet::spatial(DenseMatrix coords) {
  InputSet s;
  s.kind_ = InputKind::Spatial;
  s.size_ = static_cast<std::size_t>(coords.rows());
  s.coords_ = std::move(coords);
  s.validate();
  return s;
}

InputSet InputSet::spatiotemporal(DenseMatrix coords, std::vector<double> times) {
  InputSet s;
  s.kind_ = InputKind::SpatioTemporal;
  s.size_ = static_cast<std::size_t>(coords.rows());
  s.coords_ = std::move(coords);
  s.times_ = std::move(times);
  if (s.times_.size() != s.size_) throw InvalidShape("InputSet: time count");
  s.validate();
  return s;
}

InputSet InputSet::multivariate(DenseMatrix coords, std::vector<int> components,
                                std::vector<double> times) {
  InputSet s;
  s.kind_ = times.empty() ? InputKind::MultivariateSpatial : InputKind::MultivariateSpatioTemporal;
  s.size_ = static_cast<std::size_t>(coords.rows());
  s.coords_ = std::move(coords);
  s.components_ = std::move(components);
  s.times_ = std::move(times);
  if (s.components_.size() != s.size_) throw InvalidShape("InputSet: label count");
  s.validate();
  return s;
}

InputSet InputSet::tree(std::size_t depth) {
  if (depth == 0 || depth > 30) throw InvalidShape("InputSet::tree: depth must be in 1..30");
  std::vector<std::uint64_t> leaves(std::size_t{1} << depth);
  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i] = i;
  return tree_leaves(depth, std::move(leaves));
}

InputSet InputSet::tree_leaves(std::size_t depth, std::vector<std::uint64_t> leaves) {
  InputSet s;
  s.kind_ = InputKind::Tree;
  s.size_ = leaves.size();
  s.tree_depth_ = depth;
  s.leaves_ = std::move(leaves);
  s.validate();
  return s;
}

int InputSet::num_components() const {
  if (components_.empty()) return 1;
  return *std::max_element(components_.begin(), components_.end()) + 1;
}

std::vector<int> InputSet::tree_path(std::size_t i) const {
  std::vector<int> path(tree_depth_);
  for (std::size_t level = 0; level < tree_depth_; ++level) {
    path[level] = static_cast<int>((leaves_[i] >> (tree_depth_ - 1 - level)) & 1u) + 1;
  }
  return path;
}

DenseMatrix InputSet::spacetime_points() const {
  const auto n = static_cast<Eigen::Index>(size_);
  const Eigen::Index d = coords_.cols();
  DenseMatrix pts(n, d + (has_time() ? 1 : 0));
  pts.leftCols(d) = coords_;
  if (has_time()) {
    for (Eigen::Index i = 0; i < n; ++i) pts(i, d) = times_[static_cast<std::size_t>(i)];
  }
  return pts;
}

InputSet InputSet::subset(std::span<const std::size_t> indices) const {
  InputSet s;
  s.kind_ = kind_;
  s.size_ = indices.size();
  s.tree_depth_ = tree_depth_;
  if (kind_ == InputKind::Tree) {
    s.leaves_.reserve(indices.size());
    for (auto i : indices) s.leaves_.push_back(leaves_.at(i));
    return s;
  }
  s.coords_.resize(static_cast<Eigen::Index>(indices.size()), coords_.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size_) throw DimensionMismatch("InputSet::subset: index out of range");
    s.coords_.row(static_cast<Eigen::Index>(k)) = coords_.row(static_cast<Eigen::Index>(indices[k]));
    if (!times_.empty()) s.times_.push_back(times_[indices[k]]);
    if (!components_.empty()) s.components_.push_back(components_[indices[k]]);
  }
  return s;
}

InputSet InputSet::concat(const InputSet& a, const InputSet& b) {
  if (a.kind_ != b.kind_) throw InvalidShape("InputSet::concat: kinds differ");
  InputSet s;
  s.kind_ = a.kind_;
  s.size_ = a.size_ + b.size_;
  s.tree_depth_ = a.tree_depth_;
  if (a.kind_ == InputKind::Tree) {
    if (a.tree_depth_ != b.tree_depth_) throw InvalidShape("InputSet::concat: tree depths differ");
    s.leaves_ = a.leaves_;
    s.leaves_.insert(s.leaves_.end(), b.leaves_.begin(), b.leaves_.end());
    return s;
  }
  if (a.coords_.cols() != b.coords_.cols()) throw InvalidShape("InputSet::concat: dimensions differ");
  s.coords_.resize(static_cast<Eigen::Index>(s.size_), a.coords_.cols());
  s.coords_.topRows(a.coords_.rows()) = a.coords_;
  s.coords_.bottomRows(b.coords_.rows()) = b.coords_;
  s.times_ = a.times_;
  s.times_.insert(s.times_.end(), b.times_.begin(), b.times_.end());
  s.components_ = a.components_;
  s.components_.insert(s.components_.end(), b.components_.begin(), b.components_.end());
  s.validate();
  return s;
}

}  // namespace cvecchia
