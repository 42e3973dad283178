#include "pcnssm/geometry/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pcnssm/error.hpp"

namespace pcnssm {

namespace {

void require_nonempty(std::span<const Vec3> a, const char* what) {
  if (a.empty()) throw EmptySetError(std::string(what) + ": empty point set");
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Matching match_nearest(std::span<const Vec3> queries, const KdTree& target) {
  Matching m;
  m.index.resize(queries.size());
  m.distance.resize(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Neighbor nn = target.nearest(queries[i]);
    m.index[i] = nn.index;
    m.distance[i] = nn.distance;
  }
  return m;
}

double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b) {
  require_nonempty(a, "chamfer_l1");
  require_nonempty(b, "chamfer_l1");
  const KdTree ta(a);
  const KdTree tb(b);
  const double ab = mean(match_nearest(a, tb).distance);
  const double ba = mean(match_nearest(b, ta).distance);
  // Fixed summation order keeps the value exactly symmetric in (a, b).
  return ab < ba ? 0.5 * (ab + ba) : 0.5 * (ba + ab);
}

double chamfer_l1(const PointCloud& a, const PointCloud& b) {
  return chamfer_l1(a.view(), b.view());
}

ChamferGradient chamfer_l1_grad(std::span<const Vec3> a,
                                std::span<const Vec3> b, const KdTree& b_tree) {
  require_nonempty(a, "chamfer_l1_grad");
  require_nonempty(b, "chamfer_l1_grad");
  const KdTree a_tree(a);
  const Matching ab = match_nearest(a, b_tree);
  const Matching ba = match_nearest(b, a_tree);
  const double wa = 0.5 / static_cast<double>(a.size());
  const double wb = 0.5 / static_cast<double>(b.size());

  ChamferGradient out;
  out.grad.assign(a.size(), Vec3::Zero());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = ab.distance[i];
    if (d > 0.0) out.grad[i] += wa * (a[i] - b[ab.index[i]]) / d;
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double d = ba.distance[j];
    const std::size_t i = ba.index[j];
    if (d > 0.0) out.grad[i] += wb * (a[i] - b[j]) / d;
  }
  const double m_ab = mean(ab.distance);
  const double m_ba = mean(ba.distance);
  out.value = m_ab < m_ba ? 0.5 * (m_ab + m_ba) : 0.5 * (m_ba + m_ab);
  return out;
}

ChamferGradient chamfer_l1_grad(std::span<const Vec3> a, std::span<const Vec3> b) {
  require_nonempty(b, "chamfer_l1_grad");
  return chamfer_l1_grad(a, b, KdTree(b));
}

double chamfer_l2_squared(std::span<const Vec3> a, std::span<const Vec3> b) {
  require_nonempty(a, "chamfer_l2_squared");
  require_nonempty(b, "chamfer_l2_squared");
  const KdTree ta(a);
  const KdTree tb(b);
  auto mean_sq = [](const Matching& m) {
    double s = 0.0;
    for (double d : m.distance) s += d * d;
    return s / static_cast<double>(m.distance.size());
  };
  return 0.5 * (mean_sq(match_nearest(a, tb)) + mean_sq(match_nearest(b, ta)));
}

FScore fscore(std::span<const Vec3> pred, std::span<const Vec3> gt,
              double threshold) {
  require_nonempty(pred, "fscore");
  require_nonempty(gt, "fscore");
  if (!(threshold > 0.0)) throw ContractError("fscore: threshold must be positive");
  const KdTree tp(pred);
  const KdTree tg(gt);
  auto fraction_within = [threshold](const Matching& m) {
    const auto hits = std::count_if(m.distance.begin(), m.distance.end(),
                                    [threshold](double d) { return d < threshold; });
    return static_cast<double>(hits) / static_cast<double>(m.distance.size());
  };
  FScore s;
  s.precision = fraction_within(match_nearest(pred, tg));
  s.recall = fraction_within(match_nearest(gt, tp));
  const double denom = s.precision + s.recall;
  s.f = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  // Voronoi-region walk over vertices, edges, then the face interior.
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return a + (d1 / (d1 - d3)) * ab;
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return a + (d2 / (d2 - d6)) * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return a + v * ab + w * ac;
}

struct MeshDistance::Bvh {
  struct Node {
    Eigen::AlignedBox3d box;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t left = 0;  // 0 means leaf
    std::size_t right = 0;
  };
  std::vector<Vec3> a, b, c;
  std::vector<std::size_t> order;
  std::vector<Node> nodes;

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes.size();
    nodes.push_back({});
    Eigen::AlignedBox3d box;
    Eigen::AlignedBox3d centroids;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t t = order[i];
      box.extend(a[t]).extend(b[t]).extend(c[t]);
      centroids.extend(Vec3((a[t] + b[t] + c[t]) / 3.0));
    }
    nodes[id].box = box;
    nodes[id].begin = begin;
    nodes[id].end = end;
    if (end - begin <= 4) return id;
    int axis = 0;
    centroids.sizes().maxCoeff(&axis);
    if (centroids.sizes()[axis] <= 0.0) return id;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(mid),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t x, std::size_t y) {
                       return (a[x] + b[x] + c[x])[axis] < (a[y] + b[y] + c[y])[axis];
                     });
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes[id].left = left;
    nodes[id].right = right;
    return id;
  }

  void query(std::size_t id, const Vec3& p, double& best) const {
    const Node& node = nodes[id];
    if (node.left == 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t t = order[i];
        const double d2 = (closest_point_on_triangle(p, a[t], b[t], c[t]) - p).squaredNorm();
        best = std::min(best, d2);
      }
      return;
    }
    const double dl = nodes[node.left].box.squaredExteriorDistance(p);
    const double dr = nodes[node.right].box.squaredExteriorDistance(p);
    const std::size_t first = dl <= dr ? node.left : node.right;
    const std::size_t second = dl <= dr ? node.right : node.left;
    if (std::min(dl, dr) < best) query(first, p, best);
    if (std::max(dl, dr) < best) query(second, p, best);
  }
};

MeshDistance::MeshDistance(const TriangleMesh& mesh) : bvh_(std::make_unique<Bvh>()) {
  validate_indices(mesh);
  if (mesh.triangles.empty()) throw EmptySetError("MeshDistance: mesh has no triangles");
  const std::size_t n = mesh.triangles.size();
  bvh_->a.reserve(n);
  bvh_->b.reserve(n);
  bvh_->c.reserve(n);
  for (const auto& tri : mesh.triangles) {
    bvh_->a.push_back(mesh.vertices[tri[0]]);
    bvh_->b.push_back(mesh.vertices[tri[1]]);
    bvh_->c.push_back(mesh.vertices[tri[2]]);
  }
  bvh_->order.resize(n);
  std::iota(bvh_->order.begin(), bvh_->order.end(), std::size_t{0});
  bvh_->build(0, n);
}

MeshDistance::~MeshDistance() = default;
MeshDistance::MeshDistance(MeshDistance&&) noexcept = default;
MeshDistance& MeshDistance::operator=(MeshDistance&&) noexcept = default;

double MeshDistance::distance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  bvh_->query(0, p, best);
  return std::sqrt(best);
}

std::vector<double> MeshDistance::distances(std::span<const Vec3> points) const {
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = distance(points[i]);
  return out;
}

std::vector<double> point_to_face(std::span<const Vec3> pred,
                                  const TriangleMesh& mesh) {
  return MeshDistance(mesh).distances(pred);
}

double uniformity(std::span<const Vec3> cloud, std::size_t k) {
  if (k == 0 || cloud.size() <= k) {
    throw ContractError("uniformity: need more than k=" + std::to_string(k) +
                        " points, got " + std::to_string(cloud.size()));
  }
  const KdTree tree(cloud);
  std::vector<double> per_point(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto nn = tree.nearest(cloud[i], k + 1);
    auto self = std::find_if(nn.begin(), nn.end(),
                             [i](const Neighbor& n) { return n.index == i; });
    // With more than k coincident copies the point itself may be crowded
    // out; dropping the farthest is equivalent then.
    nn.erase(self != nn.end() ? self : std::prev(nn.end()));
    double s = 0.0;
    for (const Neighbor& n : nn) s += n.distance;
    per_point[i] = s / static_cast<double>(k);
  }
  const double mu = mean(per_point);
  double var = 0.0;
  for (double v : per_point) var += (v - mu) * (v - mu);
  return var / static_cast<double>(per_point.size());
}

}  // namespace pcnssm
