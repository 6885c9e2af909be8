#include "ace/surface.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ace {

namespace {

double project(const Vector& projection, const Vector& x) {
  if (projection.size() != x.size()) throw contract_error("surface: projection dimension mismatch");
  return projection.dot(x);
}

double clamp8(double s) { return std::min(8.0, std::max(-8.0, s)); }

}  // namespace

double evaluate_spline_arm(const SplineArm& arm, double s) {
  const auto& xs = arm.knot_x;
  s = clamp8(s);
  // locate the piece; end pieces extrapolate their own polynomial
  std::size_t i = 0;
  if (s >= xs.back())
    i = xs.size() - 2;
  else if (s > xs.front())
    i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), s) - xs.begin()) - 1;
  const double h = xs[i + 1] - xs[i];
  const double dz = (arm.slope[i + 1] - arm.slope[i]) / (2.0 * h);
  const double u = s - xs[i];
  return arm.knot_y[i] + arm.slope[i] * u + dz * u * u;
}

SplineArm fit_quadratic_spline(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw param_error("spline fit needs >= 2 points");
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });

  SplineArm arm;
  for (std::size_t k : order) {
    // coincident abscissae would make a piece degenerate; nudge apart
    double x = xs[k];
    if (!arm.knot_x.empty() && x - arm.knot_x.back() < 1e-9) x = arm.knot_x.back() + 1e-9;
    arm.knot_x.push_back(x);
    arm.knot_y.push_back(ys[k]);
  }

  // quadratic interpolant with continuous first derivative; the secant
  // start slope keeps the alternating-slope recursion from winding up
  arm.slope.assign(arm.knot_x.size(), 0.0);
  arm.slope[0] = (arm.knot_y[1] - arm.knot_y[0]) / (arm.knot_x[1] - arm.knot_x[0]);
  for (std::size_t i = 0; i + 1 < arm.knot_x.size(); ++i) {
    const double h = arm.knot_x[i + 1] - arm.knot_x[i];
    arm.slope[i + 1] = 2.0 * (arm.knot_y[i + 1] - arm.knot_y[i]) / h - arm.slope[i];
  }
  return arm;
}

double evaluate_tree_arm(const TreeArm& arm, double s) {
  int at = 0;
  while (arm.nodes[static_cast<std::size_t>(at)].left >= 0) {
    const TreeNode& n = arm.nodes[static_cast<std::size_t>(at)];
    at = (s <= n.threshold) ? n.left : n.right;
  }
  return arm.nodes[static_cast<std::size_t>(at)].value;
}

namespace {

// Greedy SSE-minimizing split over midpoints of consecutive sorted abscissae.
void grow_tree(TreeArm& arm, int node_index, std::vector<std::pair<double, double>>& pts,
               std::size_t first, std::size_t last, int depth, int max_depth) {
  auto& node = arm.nodes[static_cast<std::size_t>(node_index)];
  const std::size_t n = last - first;

  double sum = 0.0;
  for (std::size_t i = first; i < last; ++i) sum += pts[i].second;
  node.value = sum / static_cast<double>(n);

  if (depth >= max_depth || n < 2) return;

  double best_sse = std::numeric_limits<double>::infinity();
  std::size_t best_cut = 0;  // split between best_cut-1 and best_cut
  std::vector<double> prefix(n + 1, 0.0), prefix2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + pts[first + i].second;
    prefix2[i + 1] = prefix2[i] + pts[first + i].second * pts[first + i].second;
  }
  for (std::size_t cut = 1; cut < n; ++cut) {
    if (pts[first + cut].first - pts[first + cut - 1].first < 1e-12) continue;  // no usable threshold
    const double nl = static_cast<double>(cut), nr = static_cast<double>(n - cut);
    const double sl = prefix[cut], sr = prefix[n] - prefix[cut];
    const double ql = prefix2[cut], qr = prefix2[n] - prefix2[cut];
    const double sse = (ql - sl * sl / nl) + (qr - sr * sr / nr);
    if (sse < best_sse - 1e-15) {
      best_sse = sse;
      best_cut = cut;
    }
  }
  if (best_cut == 0) return;  // all abscissae equal

  node.threshold = 0.5 * (pts[first + best_cut - 1].first + pts[first + best_cut].first);
  const int left = static_cast<int>(arm.nodes.size());
  arm.nodes.emplace_back();
  const int right = static_cast<int>(arm.nodes.size());
  arm.nodes.emplace_back();
  arm.nodes[static_cast<std::size_t>(node_index)].left = left;
  arm.nodes[static_cast<std::size_t>(node_index)].right = right;
  grow_tree(arm, left, pts, first, first + best_cut, depth + 1, max_depth);
  grow_tree(arm, right, pts, first + best_cut, last, depth + 1, max_depth);
}

}  // namespace

TreeArm fit_regression_tree(const std::vector<double>& xs, const std::vector<double>& ys, int max_depth) {
  if (xs.size() != ys.size() || xs.empty()) throw param_error("tree fit needs matching nonempty points");
  std::vector<std::pair<double, double>> pts(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) pts[i] = {xs[i], ys[i]};
  std::sort(pts.begin(), pts.end());
  TreeArm arm;
  arm.nodes.emplace_back();
  grow_tree(arm, 0, pts, 0, pts.size(), 0, max_depth);
  return arm;
}

namespace {

Vector sample_projection(RngStream& stream, int dim) {
  if (dim == 1) return Vector::Ones(1);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = stream.next_normal(0.0, 1.0);
  const double n = v.norm();
  return n > 0 ? Vector(v / n) : Vector::Unit(dim, 0);
}

}  // namespace

MlpSurface sample_mlp_surface(RngStream& stream, int dim) {
  MlpSurface s;
  s.projection = sample_projection(stream, dim);
  constexpr int hidden = 10;
  s.w1 = draw(stream, Law::uniform(-1.0, 1.0), hidden, 2);
  s.b1 = draw_vector(stream, Law::uniform(-1.0, 1.0), hidden);
  s.w2 = draw_vector(stream, Law::uniform(-1.0, 1.0), hidden);
  s.b2 = stream.next_uniform(-1.0, 1.0);
  s.leak = 0.01;
  return s;
}

SplineSurface sample_spline_surface(RngStream& stream, int dim) {
  SplineSurface s;
  s.projection = sample_projection(stream, dim);
  constexpr int knots = 8;
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<double> xs(knots), ys(knots);
    for (int k = 0; k < knots; ++k) {
      xs[static_cast<std::size_t>(k)] = stream.next_uniform(-8.0, 8.0);
      ys[static_cast<std::size_t>(k)] = stream.next_uniform(-8.0, 8.0);
    }
    (arm == 0 ? s.arm0 : s.arm1) = fit_quadratic_spline(std::move(xs), std::move(ys));
  }
  return s;
}

TreeSurface sample_tree_surface(RngStream& stream, int dim) {
  TreeSurface s;
  s.projection = sample_projection(stream, dim);
  constexpr int points = 64;
  constexpr int depth = 5;
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<double> xs(points), ys(points);
    for (int k = 0; k < points; ++k) {
      xs[static_cast<std::size_t>(k)] = stream.next_uniform(-8.0, 8.0);
      ys[static_cast<std::size_t>(k)] = stream.next_uniform(-8.0, 8.0);
    }
    (arm == 0 ? s.arm0 : s.arm1) = fit_regression_tree(xs, ys, depth);
  }
  return s;
}

double evaluate_surface(const SurfaceFn& surface, const Vector& x, double t) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LinearSurface>) {
          if (s.beta_x.size() != x.size()) throw contract_error("surface: covariate dimension mismatch");
          return s.beta_x.dot(x) + s.beta_t * t;
        } else if constexpr (std::is_same_v<T, InteractionSurface>) {
          if (s.beta_x.size() != x.size()) throw contract_error("surface: covariate dimension mismatch");
          const double inner = s.abs_x ? s.beta_x.dot(x.cwiseAbs()) : s.beta_x.dot(x);
          return inner * t + s.beta_t * t;
        } else if constexpr (std::is_same_v<T, MlpSurface>) {
          const double sx = project(s.projection, x);
          Eigen::Vector2d in(sx, t);
          Vector h = s.w1 * in + s.b1;
          for (Eigen::Index i = 0; i < h.size(); ++i)
            if (h(i) < 0.0) h(i) *= s.leak;
          return s.w2.dot(h) + s.b2;
        } else if constexpr (std::is_same_v<T, SplineSurface>) {
          const double sx = project(s.projection, x);
          return evaluate_spline_arm(t >= 0.5 ? s.arm1 : s.arm0, sx);
        } else {
          const double sx = project(s.projection, x);
          return evaluate_tree_arm(t >= 0.5 ? s.arm1 : s.arm0, sx);
        }
      },
      surface);
}

SurfaceKind surface_kind_of(const SurfaceFn& surface) {
  return std::visit(
      [](const auto& s) -> SurfaceKind {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LinearSurface>) return SurfaceKind::Linear;
        else if constexpr (std::is_same_v<T, InteractionSurface>)
          return s.abs_x ? SurfaceKind::InteractionAbs : SurfaceKind::InteractionLinear;
        else if constexpr (std::is_same_v<T, MlpSurface>) return SurfaceKind::RandomMlp;
        else if constexpr (std::is_same_v<T, SplineSurface>) return SurfaceKind::RandomSpline;
        else return SurfaceKind::RandomTree;
      },
      surface);
}

bool surface_is_per_arm(SurfaceKind kind) {
  return kind == SurfaceKind::RandomSpline || kind == SurfaceKind::RandomTree;
}

bool surface_needs_normalization(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::RandomMlp:
    case SurfaceKind::RandomSpline:
    case SurfaceKind::RandomTree:
    case SurfaceKind::Mixture:
      return true;
    default:
      return false;
  }
}

const char* surface_kind_name(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::Linear: return "linear";
    case SurfaceKind::InteractionLinear: return "interaction_linear";
    case SurfaceKind::InteractionAbs: return "interaction_abs";
    case SurfaceKind::RandomMlp: return "random_mlp";
    case SurfaceKind::RandomSpline: return "random_spline";
    case SurfaceKind::RandomTree: return "random_tree";
    case SurfaceKind::Mixture: return "mixture";
  }
  return "unknown";
}

SurfaceKind surface_kind_from_name(const std::string& name) {
  if (name == "linear") return SurfaceKind::Linear;
  if (name == "interaction_linear") return SurfaceKind::InteractionLinear;
  if (name == "interaction_abs") return SurfaceKind::InteractionAbs;
  if (name == "random_mlp") return SurfaceKind::RandomMlp;
  if (name == "random_spline") return SurfaceKind::RandomSpline;
  if (name == "random_tree") return SurfaceKind::RandomTree;
  if (name == "mixture") return SurfaceKind::Mixture;
  throw contract_error("unknown surface kind: " + name);
}

}  // namespace ace
