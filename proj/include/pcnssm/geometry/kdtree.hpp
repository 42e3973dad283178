#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcnssm/geometry/types.hpp"

namespace pcnssm {

struct Neighbor {
  std::size_t index;
  double distance;
};

// Static balanced kd-tree over a point set. Queries are exact; equal
// distances are ordered by ascending point index, which matches a stable
// linear scan.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  // k nearest points in ascending distance. Throws BoundsError if k > size().
  std::vector<Neighbor> nearest(const Vec3& query, std::size_t k) const;
  Neighbor nearest(const Vec3& query) const;

 private:
  struct Node {
    std::size_t begin;
    std::size_t end;
    std::size_t left = 0;   // 0 means leaf
    std::size_t right = 0;
    int axis = 0;
    double split = 0.0;
  };
  std::size_t build(std::size_t begin, std::size_t end);
  template <typename Heap>
  void search(std::size_t node, const Vec3& q, Heap& heap) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace pcnssm
