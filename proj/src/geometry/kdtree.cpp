#include "pcnssm/geometry/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>

#include "pcnssm/error.hpp"

namespace pcnssm {

namespace {

constexpr std::size_t kLeafSize = 8;

struct Candidate {
  double d2;
  std::size_t index;
  // Max-heap on (distance, index): the top is the current worst candidate.
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};

class BoundedHeap {
 public:
  explicit BoundedHeap(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  bool full() const { return items_.size() == k_; }
  double worst() const { return items_.front().d2; }

  void offer(double d2, std::size_t index) {
    const Candidate c{d2, index};
    if (!full()) {
      items_.push_back(c);
      std::push_heap(items_.begin(), items_.end());
    } else if (c < items_.front()) {
      std::pop_heap(items_.begin(), items_.end());
      items_.back() = c;
      std::push_heap(items_.begin(), items_.end());
    }
  }

  std::vector<Candidate> sorted() && {
    std::sort_heap(items_.begin(), items_.end());
    return std::move(items_);
  }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

struct BestOne {
  Candidate best{std::numeric_limits<double>::infinity(), 0};
  bool found = false;
  bool full() const { return found; }
  double worst() const { return best.d2; }
  void offer(double d2, std::size_t index) {
    const Candidate c{d2, index};
    if (!found || c < best) {
      best = c;
      found = true;
    }
  }
};

}  // namespace

KdTree::KdTree(std::span<const Vec3> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

template <typename Heap>
void KdTree::search(std::size_t id, const Vec3& q, Heap& heap) const {
  const Node& node = nodes_[id];
  if (node.left == 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      heap.offer((points_[idx] - q).squaredNorm(), idx);
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff < 0.0 ? node.left : node.right;
  const std::size_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, heap);
  // Non-strict so that equal-distance points with lower indices are found.
  if (!heap.full() || diff * diff <= heap.worst()) search(far, q, heap);
}

std::vector<Neighbor> KdTree::nearest(const Vec3& query, std::size_t k) const {
  if (k > points_.size()) {
    throw BoundsError("k-NN query for " + std::to_string(k) +
                      " neighbors in a set of " + std::to_string(points_.size()));
  }
  std::vector<Neighbor> result;
  if (k == 0) return result;
  BoundedHeap heap(k);
  search(0, query, heap);
  const auto found = std::move(heap).sorted();
  result.reserve(found.size());
  for (const Candidate& c : found) result.push_back({c.index, std::sqrt(c.d2)});
  return result;
}

Neighbor KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw BoundsError("nearest-neighbor query on an empty set");
  BestOne best;
  search(0, query, best);
  return {best.best.index, std::sqrt(best.best.d2)};
}

}  // namespace pcnssm
