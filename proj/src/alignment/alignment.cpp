#include "pcnssm/alignment/alignment.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "pcnssm/error.hpp"
#include "pcnssm/geometry/metrics.hpp"

namespace pcnssm {

namespace {

Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

void require_spread(std::span<const Vec3> pts, const char* which) {
  if (pts.size() < 3) {
    throw DegeneracyError(std::string("icp_rigid: ") + which + " has fewer than 3 points");
  }
  const Vec3 c = centroid(pts);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : pts) cov += (p - c) * (p - c).transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov);
  const auto s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= 1e-12 * s[0]) {
    throw DegeneracyError(std::string("icp_rigid: ") + which +
                          " points are collinear or coincident (rank < 2)");
  }
}

double rms_to(std::span<const Vec3> source, const RigidTransform& t, const KdTree& ref,
              std::vector<Vec3>* matched) {
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Neighbor nn = ref.nearest(t.apply(source[i]));
    sum += nn.distance * nn.distance;
    if (matched) (*matched)[i] = ref.point(nn.index);
  }
  return std::sqrt(sum / static_cast<double>(source.size()));
}

}  // namespace

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

double RigidTransform::angle() const {
  const double c = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

RigidTransform fit_rigid(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.size() != target.size() || source.empty()) {
    throw DimensionError("fit_rigid: need equally sized non-empty point lists");
  }
  const Vec3 cs = centroid(source);
  const Vec3 ct = centroid(target);
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    h += (source[i] - cs) * (target[i] - ct).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = ct - t.rotation * cs;
  return t;
}

IcpResult icp_rigid(std::span<const Vec3> source, std::span<const Vec3> reference,
                    const IcpOptions& options) {
  require_spread(reference, "reference");
  return icp_rigid(source, KdTree(reference), options);
}

IcpResult icp_rigid(std::span<const Vec3> source, const KdTree& reference,
                    const IcpOptions& options) {
  require_spread(source, "source");
  if (reference.size() < 3) throw DegeneracyError("icp_rigid: reference has fewer than 3 points");

  std::vector<Vec3> ref_points(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) ref_points[i] = reference.point(i);

  IcpResult result;
  RigidTransform shift;
  shift.translation = centroid(ref_points) - centroid(source);
  std::vector<Vec3> matched(source.size());
  std::vector<Vec3> shift_matched(source.size());
  double rms = rms_to(source, result.transform, reference, &matched);
  const double shift_rms = rms_to(source, shift, reference, &shift_matched);
  if (shift_rms < rms) {
    result.transform = shift;
    rms = shift_rms;
    matched.swap(shift_matched);
  }
  result.rms = rms;
  result.rms_history.push_back(rms);

  for (int iter = 0; iter < options.max_iter; ++iter) {
    const RigidTransform candidate = fit_rigid(source, matched);
    std::vector<Vec3> next_matched(source.size());
    const double next_rms = rms_to(source, candidate, reference, &next_matched);
    ++result.iterations;
    if (next_rms > result.rms) break;  // numerical noise only; keep the best
    const double improvement = result.rms - next_rms;
    result.transform = candidate;
    result.rms = next_rms;
    result.rms_history.push_back(next_rms);
    matched.swap(next_matched);
    if (improvement < options.tol) break;
  }
  return result;
}

const RigidTransform& CohortFrame::transform_for(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw std::out_of_range("cohort frame has no shape '" + id + "'");
  return transforms[static_cast<std::size_t>(it - ids.begin())];
}

std::size_t chamfer_medoid(std::span<const PointCloud> clouds, std::size_t max_points) {
  if (clouds.empty()) throw EmptySetError("chamfer_medoid: no shapes");
  std::vector<std::vector<Vec3>> subsets;
  subsets.reserve(clouds.size());
  for (const PointCloud& c : clouds) {
    const std::size_t stride = std::max<std::size_t>(1, (c.size() + max_points - 1) / max_points);
    std::vector<Vec3> s;
    for (std::size_t i = 0; i < c.size(); i += stride) s.push_back(c.points[i]);
    subsets.push_back(std::move(s));
  }
  std::vector<double> total(clouds.size(), 0.0);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    for (std::size_t j = i + 1; j < clouds.size(); ++j) {
      const double d = chamfer_l1(subsets[i], subsets[j]);
      total[i] += d;
      total[j] += d;
    }
  }
  return static_cast<std::size_t>(std::min_element(total.begin(), total.end()) - total.begin());
}

AlignedCohort align_cohort(std::span<const PointCloud> clouds, std::span<const std::string> ids,
                           const AlignmentOptions& options) {
  if (clouds.size() < 2) throw ContractError("align_cohort: need at least 2 shapes");
  if (ids.size() != clouds.size()) throw DimensionError("align_cohort: ids/clouds size mismatch");
  const std::size_t ref = options.reference.value_or(chamfer_medoid(clouds, options.medoid_points));
  if (ref >= clouds.size()) throw BoundsError("align_cohort: reference index out of range");

  AlignedCohort out;
  out.frame.reference_id = ids[ref];
  out.frame.ids.assign(ids.begin(), ids.end());
  out.frame.transforms.resize(clouds.size());
  out.clouds.resize(clouds.size());
  const KdTree ref_tree(clouds[ref].points);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (i != ref) {
      try {
        out.frame.transforms[i] = icp_rigid(clouds[i].points, ref_tree, options.icp).transform;
      } catch (const DegeneracyError& e) {
        throw DegeneracyError("shape '" + ids[i] + "': " + e.what());
      }
    }
    out.clouds[i] = apply_frame(clouds[i], out.frame.transforms[i], 1.0);
  }
  return out;
}

double fit_scale(std::span<const PointCloud> aligned) {
  if (aligned.empty()) throw EmptySetError("fit_scale: no shapes");
  double extent = 0.0;
  for (const PointCloud& c : aligned) {
    for (const Vec3& p : c.points) extent = std::max(extent, p.cwiseAbs().maxCoeff());
  }
  if (!(extent > 0.0)) throw DegeneracyError("fit_scale: every coordinate is zero");
  return 1.0 / extent;
}

PointCloud apply_frame(const PointCloud& cloud, const RigidTransform& t, double scale) {
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = scale * t.apply(p);
  return out;
}

PointCloud invert_frame(const PointCloud& cloud, const RigidTransform& t, double scale) {
  const RigidTransform inv = t.inverse();
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = inv.apply(p / scale);
  return out;
}

TriangleMesh apply_frame(const TriangleMesh& mesh, const RigidTransform& t, double scale) {
  TriangleMesh out = mesh;
  for (Vec3& p : out.vertices) p = scale * t.apply(p);
  return out;
}

nlohmann::json to_json(const CohortFrame& frame) {
  nlohmann::json shapes = nlohmann::json::array();
  for (std::size_t i = 0; i < frame.ids.size(); ++i) {
    const RigidTransform& t = frame.transforms[i];
    std::vector<double> r(9);
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) r[static_cast<std::size_t>(row * 3 + col)] = t.rotation(row, col);
    shapes.push_back({{"id", frame.ids[i]},
                      {"rotation", r},
                      {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}});
  }
  return {{"reference_id", frame.reference_id}, {"scale", frame.scale}, {"shapes", shapes}};
}

CohortFrame frame_from_json(const nlohmann::json& j) {
  CohortFrame frame;
  frame.reference_id = j.at("reference_id").get<std::string>();
  frame.scale = j.at("scale").get<double>();
  if (!(frame.scale > 0.0)) throw std::invalid_argument("cohort frame scale must be positive");
  for (const auto& s : j.at("shapes")) {
    frame.ids.push_back(s.at("id").get<std::string>());
    const auto r = s.at("rotation").get<std::vector<double>>();
    const auto t = s.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw std::invalid_argument("malformed transform in frame");
    RigidTransform rt;
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) rt.rotation(row, col) = r[static_cast<std::size_t>(row * 3 + col)];
    rt.translation = Vec3(t[0], t[1], t[2]);
    frame.transforms.push_back(rt);
  }
  return frame;
}

}  // namespace pcnssm
