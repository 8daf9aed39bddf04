#include "freescan/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace freescan::metrics {

namespace {

double mean_corner_distance(const geometry::RigidTransform& a,
                            const geometry::RigidTransform& b,
                            const geometry::PointSet& q) {
  const geometry::PointSet pa = geometry::apply(a, q);
  const geometry::PointSet pb = geometry::apply(b, q);
  double acc = 0.0;
  for (std::size_t n = 0; n < q.size(); ++n) {
    acc += (pa.points[n].head<3>() - pb.points[n].head<3>()).norm();
  }
  return acc / static_cast<double>(q.size());
}

void check_chains(const std::vector<geometry::RigidTransform>& pred,
                  const std::vector<geometry::RigidTransform>& gt) {
  if (pred.size() != gt.size()) {
    throw DataError("prediction and ground-truth chains differ in length");
  }
  if (pred.empty()) throw DataError("empty reconstruction chain");
}

struct Tet {
  std::array<Eigen::Vector3d, 4> v;
};

double signed_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
  return (b - a).cross(c - a).dot(d - a);
}

bool point_in_tet(const Tet& t, const Eigen::Vector3d& p, double eps) {
  const double d0 = signed_volume(t.v[0], t.v[1], t.v[2], t.v[3]);
  if (std::abs(d0) < eps) return false;  // degenerate cell
  const double s = d0 > 0 ? 1.0 : -1.0;
  const double d1 = s * signed_volume(p, t.v[1], t.v[2], t.v[3]);
  const double d2 = s * signed_volume(t.v[0], p, t.v[2], t.v[3]);
  const double d3 = s * signed_volume(t.v[0], t.v[1], p, t.v[3]);
  const double d4 = s * signed_volume(t.v[0], t.v[1], t.v[2], p);
  const double tol = -1e-12 * std::abs(d0);
  return d1 >= tol && d2 >= tol && d3 >= tol && d4 >= tol;
}

struct VoxelGrid {
  Eigen::Vector3d origin;
  double voxel = 1.0;
  std::int64_t nx = 0, ny = 0, nz = 0;

  std::int64_t size() const { return nx * ny * nz; }
  Eigen::Vector3d center(std::int64_t ix, std::int64_t iy,
                         std::int64_t iz) const {
    return origin + voxel * Eigen::Vector3d(ix + 0.5, iy + 0.5, iz + 0.5);
  }
};

// Corner order matches geometry::corner_points: (0,0), (W,0), (0,H), (W,H).
// Bottom quad = frame k, top quad = frame k+1; classic five-tetrahedron
// decomposition of the resulting hexahedron.
constexpr int kTets[5][4] = {
    {0, 1, 2, 4}, {3, 1, 2, 7}, {5, 1, 7, 4}, {6, 2, 7, 4}, {1, 2, 7, 4}};

std::vector<std::array<Eigen::Vector3d, 8>> chain_hexahedra(
    const std::vector<geometry::RigidTransform>& chain,
    const geometry::PointSet& q) {
  std::vector<std::array<Eigen::Vector3d, 8>> hexes;
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    const geometry::PointSet a = geometry::apply(chain[k], q);
    const geometry::PointSet b = geometry::apply(chain[k + 1], q);
    std::array<Eigen::Vector3d, 8> h;
    for (int n = 0; n < 4; ++n) {
      h[static_cast<std::size_t>(n)] = a.points[static_cast<std::size_t>(n)].head<3>();
      h[static_cast<std::size_t>(n + 4)] =
          b.points[static_cast<std::size_t>(n)].head<3>();
    }
    hexes.push_back(h);
  }
  return hexes;
}

std::int64_t rasterize(const std::vector<std::array<Eigen::Vector3d, 8>>& hexes,
                       const VoxelGrid& grid, std::vector<std::uint8_t>& mask) {
  std::int64_t filled = 0;
  const double eps = 1e-12;
  for (const auto& h : hexes) {
    Eigen::Vector3d lo = h[0], hi = h[0];
    for (const auto& v : h) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    Tet tets[5];
    for (int t = 0; t < 5; ++t) {
      for (int k = 0; k < 4; ++k) {
        tets[t].v[static_cast<std::size_t>(k)] =
            h[static_cast<std::size_t>(kTets[t][k])];
      }
    }
    const auto clampi = [](std::int64_t v, std::int64_t n) {
      return std::max<std::int64_t>(0, std::min(v, n - 1));
    };
    const std::int64_t x0 = clampi(static_cast<std::int64_t>(
                                       std::floor((lo.x() - grid.origin.x()) / grid.voxel)),
                                   grid.nx);
    const std::int64_t x1 = clampi(static_cast<std::int64_t>(
                                       std::floor((hi.x() - grid.origin.x()) / grid.voxel)),
                                   grid.nx);
    const std::int64_t y0 = clampi(static_cast<std::int64_t>(
                                       std::floor((lo.y() - grid.origin.y()) / grid.voxel)),
                                   grid.ny);
    const std::int64_t y1 = clampi(static_cast<std::int64_t>(
                                       std::floor((hi.y() - grid.origin.y()) / grid.voxel)),
                                   grid.ny);
    const std::int64_t z0 = clampi(static_cast<std::int64_t>(
                                       std::floor((lo.z() - grid.origin.z()) / grid.voxel)),
                                   grid.nz);
    const std::int64_t z1 = clampi(static_cast<std::int64_t>(
                                       std::floor((hi.z() - grid.origin.z()) / grid.voxel)),
                                   grid.nz);
    for (std::int64_t iz = z0; iz <= z1; ++iz) {
      for (std::int64_t iy = y0; iy <= y1; ++iy) {
        for (std::int64_t ix = x0; ix <= x1; ++ix) {
          const std::int64_t idx = (iz * grid.ny + iy) * grid.nx + ix;
          if (mask[static_cast<std::size_t>(idx)]) continue;
          const Eigen::Vector3d p = grid.center(ix, iy, iz);
          for (const auto& tet : tets) {
            if (point_in_tet(tet, p, eps)) {
              mask[static_cast<std::size_t>(idx)] = 1;
              ++filled;
              break;
            }
          }
        }
      }
    }
  }
  return filled;
}

}  // namespace

double frame_error(const geometry::RigidTransform& pred,
                   const geometry::RigidTransform& gt,
                   const geometry::RigidTransform& calib,
                   const geometry::PointSet& corners) {
  return mean_corner_distance(pred, gt, geometry::apply(calib, corners));
}

double accumulated_error(
    const std::vector<geometry::RigidTransform>& pred_chain,
    const std::vector<geometry::RigidTransform>& gt_chain,
    const geometry::RigidTransform& calib, const PixelGrid& grid) {
  check_chains(pred_chain, gt_chain);
  if (grid.width < 2 || grid.height < 2 || !(grid.spacing_mm > 0.0) ||
      grid.stride < 1) {
    throw ConfigError("accumulated_error: bad pixel grid");
  }
  // Tool-space pixel locations, subsampled by stride (stride 1 is exact).
  std::vector<Eigen::Vector3d> pts;
  const Eigen::Matrix4d cm = calib.matrix();
  for (int v = 0; v < grid.height; v += grid.stride) {
    for (int u = 0; u < grid.width; u += grid.stride) {
      const Eigen::Vector4d p(u * grid.spacing_mm, v * grid.spacing_mm, 0.0,
                              1.0);
      pts.emplace_back((cm * p).head<3>());
    }
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < pred_chain.size(); ++k) {
    const Eigen::Matrix3d ra = pred_chain[k].rotation;
    const Eigen::Vector3d ta = pred_chain[k].translation;
    const Eigen::Matrix3d rb = gt_chain[k].rotation;
    const Eigen::Vector3d tb = gt_chain[k].translation;
    for (const auto& p : pts) {
      acc += ((ra * p + ta) - (rb * p + tb)).norm();
    }
  }
  // Pooled over all (frame, pixel) pairs.
  return acc / (static_cast<double>(pred_chain.size()) *
                static_cast<double>(pts.size()));
}

double volume_dice(const std::vector<geometry::RigidTransform>& pred_chain,
                   const std::vector<geometry::RigidTransform>& gt_chain,
                   const geometry::RigidTransform& calib, int frame_width,
                   int frame_height, double pixel_spacing_mm, double voxel_mm) {
  check_chains(pred_chain, gt_chain);
  if (pred_chain.size() < 2) {
    throw DataError("volume_dice: need at least 2 localized frames");
  }
  if (!(voxel_mm > 0.0)) throw ConfigError("volume_dice: voxel must be > 0");
  const geometry::PointSet q = geometry::apply(
      calib, geometry::corner_points(frame_width, frame_height,
                                     pixel_spacing_mm));

  // Canonicalize both chains into the ground-truth reference frame so the
  // measure is invariant to a common rigid transform of the inputs.
  const geometry::RigidTransform to_ref = geometry::inverse(gt_chain.front());
  std::vector<geometry::RigidTransform> pc, gc;
  pc.reserve(pred_chain.size());
  gc.reserve(gt_chain.size());
  for (std::size_t k = 0; k < pred_chain.size(); ++k) {
    pc.push_back(geometry::compose(to_ref, pred_chain[k]));
    gc.push_back(geometry::compose(to_ref, gt_chain[k]));
  }

  const auto hex_a = chain_hexahedra(pc, q);
  const auto hex_b = chain_hexahedra(gc, q);

  Eigen::Vector3d lo = hex_a.front()[0], hi = lo;
  for (const auto* hexes : {&hex_a, &hex_b}) {
    for (const auto& h : *hexes) {
      for (const auto& v : h) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
    }
  }
  VoxelGrid grid;
  grid.voxel = voxel_mm;
  grid.origin = lo - Eigen::Vector3d::Constant(voxel_mm);
  const Eigen::Vector3d extent = hi - lo + Eigen::Vector3d::Constant(
                                               2.0 * voxel_mm);
  grid.nx = static_cast<std::int64_t>(std::ceil(extent.x() / voxel_mm)) + 1;
  grid.ny = static_cast<std::int64_t>(std::ceil(extent.y() / voxel_mm)) + 1;
  grid.nz = static_cast<std::int64_t>(std::ceil(extent.z() / voxel_mm)) + 1;
  if (grid.size() > (std::int64_t(1) << 31)) {
    throw ConfigError("volume_dice: voxel grid too large; increase voxel_mm");
  }

  std::vector<std::uint8_t> mask_a(static_cast<std::size_t>(grid.size()), 0);
  std::vector<std::uint8_t> mask_b(static_cast<std::size_t>(grid.size()), 0);
  const std::int64_t na = rasterize(hex_a, grid, mask_a);
  const std::int64_t nb = rasterize(hex_b, grid, mask_b);
  if (na == 0 || nb == 0) {
    throw NumericalError(
        "volume_dice: degenerate (zero-volume) scan at this voxel size");
  }
  std::int64_t inter = 0;
  for (std::size_t i = 0; i < mask_a.size(); ++i) {
    inter += (mask_a[i] & mask_b[i]);
  }
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double final_drift(const std::vector<geometry::RigidTransform>& pred_chain,
                   const std::vector<geometry::RigidTransform>& gt_chain,
                   const geometry::RigidTransform& calib,
                   const geometry::PointSet& corners) {
  check_chains(pred_chain, gt_chain);
  return frame_error(pred_chain.back(), gt_chain.back(), calib, corners);
}

namespace {

Aggregate aggregate_of(const std::vector<double>& xs) {
  Aggregate a;
  a.count = static_cast<int>(xs.size());
  if (xs.empty()) return a;
  double sum = 0.0;
  for (double x : xs) sum += x;
  a.mean = sum / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - a.mean) * (x - a.mean);
  a.stddev = std::sqrt(ss / xs.size());
  return a;
}

}  // namespace

Aggregate MetricsReport::aggregate_frame_err() const {
  std::vector<double> xs;
  for (const auto& [id, m] : per_scan) xs.push_back(m.frame_err_mm);
  return aggregate_of(xs);
}

Aggregate MetricsReport::aggregate_acc_err() const {
  std::vector<double> xs;
  for (const auto& [id, m] : per_scan) xs.push_back(m.acc_err_mm);
  return aggregate_of(xs);
}

Aggregate MetricsReport::aggregate_dice() const {
  std::vector<double> xs;
  for (const auto& [id, m] : per_scan) {
    if (m.dice) xs.push_back(*m.dice);
  }
  return aggregate_of(xs);
}

Aggregate MetricsReport::aggregate_drift() const {
  std::vector<double> xs;
  for (const auto& [id, m] : per_scan) xs.push_back(m.drift_mm);
  return aggregate_of(xs);
}

json report_to_json(const MetricsReport& report) {
  json j;
  j["format_version"] = "1.0";
  j["config_ref"] = report.config_ref;
  json per = json::object();
  for (const auto& [id, m] : report.per_scan) {
    json e;
    e["frame_err_mm"] = m.frame_err_mm;
    e["acc_err_mm"] = m.acc_err_mm;
    if (m.dice) {
      e["dice"] = *m.dice;
    } else {
      e["dice"] = nullptr;
    }
    e["drift_mm"] = m.drift_mm;
    per[id] = e;
  }
  j["per_scan"] = per;
  const auto agg = [](const Aggregate& a) {
    return json{{"mean", a.mean}, {"std", a.stddev}, {"count", a.count}};
  };
  j["aggregate"] = {{"frame_err_mm", agg(report.aggregate_frame_err())},
                    {"acc_err_mm", agg(report.aggregate_acc_err())},
                    {"dice", agg(report.aggregate_dice())},
                    {"drift_mm", agg(report.aggregate_drift())}};
  return j;
}

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "scan_id,frame_err_mm,acc_err_mm,dice,drift_mm\n";
  for (const auto& [id, m] : report.per_scan) {
    os << id << "," << m.frame_err_mm << "," << m.acc_err_mm << ",";
    if (m.dice) os << *m.dice;
    os << "," << m.drift_mm << "\n";
  }
  const auto fe = report.aggregate_frame_err();
  const auto ae = report.aggregate_acc_err();
  const auto di = report.aggregate_dice();
  const auto dr = report.aggregate_drift();
  os << "mean," << fe.mean << "," << ae.mean << "," << di.mean << ","
     << dr.mean << "\n";
  os << "std," << fe.stddev << "," << ae.stddev << "," << di.stddev << ","
     << dr.stddev << "\n";
  return os.str();
}

}  // namespace freescan::metrics
