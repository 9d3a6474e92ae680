#include "uwbslam/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uwbslam {
namespace {

constexpr std::size_t kLeafSize = 8;

double squared_distance(const Vec2& a, const Vec2& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  return dx * dx + dy * dy;
}

bool better(double d2, std::size_t idx, double best_d2, std::size_t best_idx) {
  return d2 < best_d2 || (d2 == best_d2 && idx < best_idx);
}

}  // namespace

KdTree2::KdTree2(std::span<const Vec2> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, points_.size(), 0);
  }
}

int KdTree2::build(std::size_t begin, std::size_t end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  double lo[2] = {INFINITY, INFINITY};
  double hi[2] = {-INFINITY, -INFINITY};
  for (std::size_t k = begin; k < end; ++k) {
    const Vec2& p = points_[order_[k]];
    for (int a = 0; a < 2; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  const int axis = (hi[0] - lo[0]) >= (hi[1] - lo[1]) ? 0 : 1;
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

Neighbor KdTree2::nearest(const Vec2& query) const {
  if (empty()) {
    throw EmptyCloudError("nearest neighbour query on an empty cloud");
  }
  double best_d2 = INFINITY;
  std::size_t best_idx = points_.size();
  // explicit stack of (node, lower bound on squared distance)
  std::vector<std::pair<int, double>> stack;
  stack.reserve(64);
  stack.emplace_back(root_, 0.0);
  while (!stack.empty()) {
    const auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > best_d2) {
      continue;
    }
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t k = node.begin; k < node.end; ++k) {
        const std::size_t idx = order_[k];
        const double d2 = squared_distance(points_[idx], query);
        if (better(d2, idx, best_d2, best_idx)) {
          best_d2 = d2;
          best_idx = idx;
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    stack.emplace_back(far, std::max(bound, diff * diff));
    stack.emplace_back(near, bound);
  }
  return {best_idx, std::sqrt(best_d2)};
}

std::vector<Neighbor> KdTree2::knn(const Vec2& query, std::size_t k) const {
  std::vector<std::pair<double, std::size_t>> best;  // sorted ascending
  if (k == 0 || empty()) {
    return {};
  }
  best.reserve(k + 1);
  auto worst_bound = [&]() { return best.size() < k ? INFINITY : best.back().first; };
  std::vector<std::pair<int, double>> stack;
  stack.emplace_back(root_, 0.0);
  while (!stack.empty()) {
    const auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > worst_bound()) {
      continue;
    }
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t j = node.begin; j < node.end; ++j) {
        const std::size_t idx = order_[j];
        const std::pair<double, std::size_t> cand{squared_distance(points_[idx], query), idx};
        if (best.size() == k && !(cand < best.back())) {
          continue;
        }
        best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
        if (best.size() > k) {
          best.pop_back();
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    stack.emplace_back(far, std::max(bound, diff * diff));
    stack.emplace_back(near, bound);
  }
  std::vector<Neighbor> out;
  out.reserve(best.size());
  for (const auto& [d2, idx] : best) {
    out.push_back({idx, std::sqrt(d2)});
  }
  return out;
}

std::size_t KdTree2::count_within(const Vec2& query, double radius) const {
  if (empty() || radius < 0.0) {
    return 0;
  }
  const double r2 = radius * radius;
  std::size_t count = 0;
  std::vector<std::pair<int, double>> stack;
  stack.emplace_back(root_, 0.0);
  while (!stack.empty()) {
    const auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > r2) {
      continue;
    }
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t j = node.begin; j < node.end; ++j) {
        if (squared_distance(points_[order_[j]], query) <= r2) {
          ++count;
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    stack.emplace_back(node.left, diff < 0.0 ? bound : std::max(bound, diff * diff));
    stack.emplace_back(node.right, diff < 0.0 ? std::max(bound, diff * diff) : bound);
  }
  return count;
}

}  // namespace uwbslam
