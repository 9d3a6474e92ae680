#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "uwbslam/geometry.hpp"

namespace uwbslam {

class EmptyCloudError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Static 2D k-d tree. Exact queries; distance ties resolve to the lowest input index.
class KdTree2 {
 public:
  KdTree2() = default;
  explicit KdTree2(std::span<const Vec2> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec2& point(std::size_t index) const { return points_[index]; }

  /// Throws EmptyCloudError on an empty tree.
  Neighbor nearest(const Vec2& query) const;
  /// Up to k neighbours sorted by (distance, index). Includes exact duplicates of the query.
  std::vector<Neighbor> knn(const Vec2& query, std::size_t k) const;
  /// Number of points with distance <= radius.
  std::size_t count_within(const Vec2& query, double radius) const;

 private:
  struct Node {
    int left = -1;
    int right = -1;
    std::size_t begin = 0;  // range into order_ for leaves
    std::size_t end = 0;
    int axis = -1;  // -1 for leaf
    double split = 0.0;
  };

  int build(std::size_t begin, std::size_t end, int depth);

  std::vector<Vec2> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace uwbslam
