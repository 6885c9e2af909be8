#pragma once

#include <array>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ace/errors.hpp"
#include "ace/rng.hpp"

namespace ace {

// Outcome response surfaces y = f(x, t) (+ additive noise handled by the
// caller). Nonlinear kinds act on a scalar: x itself when d = 1, otherwise a
// fixed random unit-vector projection of x sampled with the surface.

enum class SurfaceKind {
  Linear,            // beta_x . x + beta_t t
  InteractionLinear, // (beta_x . x) t + beta_t t
  InteractionAbs,    // (beta_x . |x|) t + beta_t t
  RandomMlp,
  RandomSpline,
  RandomTree,
  Mixture,
};

struct LinearSurface {
  Vector beta_x;
  double beta_t = 0.0;
};

struct InteractionSurface {
  Vector beta_x;
  double beta_t = 0.0;
  bool abs_x = false;
};

// 2-layer MLP on (s, t), hidden width 10, leaky-ReLU.
struct MlpSurface {
  Matrix w1;  // hidden x 2
  Vector b1;  // hidden
  Vector w2;  // hidden
  double b2 = 0.0;
  double leak = 0.01;
  Vector projection;  // d (unit vector; trivially [1] when d = 1)
};

// Quadratic interpolating spline per treatment arm, knots in [-8, 8].
struct SplineArm {
  std::vector<double> knot_x;   // sorted
  std::vector<double> knot_y;
  std::vector<double> slope;    // derivative at each knot (z_i recursion)
};

struct SplineSurface {
  SplineArm arm0;
  SplineArm arm1;
  Vector projection;
};

// Depth-limited regression tree per arm; flat node array, index 0 is root.
struct TreeNode {
  double threshold = 0.0;  // split: s <= threshold goes left
  int left = -1;           // -1 marks a leaf
  int right = -1;
  double value = 0.0;      // leaf payload
};

struct TreeArm {
  std::vector<TreeNode> nodes;
};

struct TreeSurface {
  TreeArm arm0;
  TreeArm arm1;
  Vector projection;
};

using SurfaceFn = std::variant<LinearSurface, InteractionSurface, MlpSurface, SplineSurface, TreeSurface>;

double evaluate_surface(const SurfaceFn& surface, const Vector& x, double t);
SurfaceKind surface_kind_of(const SurfaceFn& surface);

// Per-arm surfaces only make sense for binary treatment.
bool surface_is_per_arm(SurfaceKind kind);
// Kinds whose effect scale leaks the surface family; targets get normalized.
bool surface_needs_normalization(SurfaceKind kind);

const char* surface_kind_name(SurfaceKind kind);
SurfaceKind surface_kind_from_name(const std::string& name);

// Payload samplers (coefficient vectors are sampled by the scm module).
MlpSurface sample_mlp_surface(RngStream& stream, int dim);
SplineSurface sample_spline_surface(RngStream& stream, int dim);
TreeSurface sample_tree_surface(RngStream& stream, int dim);

// Exposed for tests: fit pieces directly from points.
SplineArm fit_quadratic_spline(std::vector<double> xs, std::vector<double> ys);
TreeArm fit_regression_tree(const std::vector<double>& xs, const std::vector<double>& ys, int max_depth);
double evaluate_spline_arm(const SplineArm& arm, double s);
double evaluate_tree_arm(const TreeArm& arm, double s);

}  // namespace ace
