#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "ace/errors.hpp"
#include "ace/param_tree.hpp"
#include "ace/tape.hpp"

namespace ace {

// Scalar loss over a parameter tree; implementations build their own tape.
using LossFn = std::function<double(const ParamTree&)>;
using LossWithGradFn = std::function<std::pair<double, ParamTree>(const ParamTree&)>;

// A loss with both a forward-only evaluation (used for the finite-difference
// probes) and a reverse-mode evaluation.
struct DifferentiableLoss {
  LossFn value;
  LossWithGradFn value_and_grad;
};

// Central finite differences against the analytic gradient.
// Returns max over all parameter entries of |analytic - fd| / max(1, |analytic|);
// an empty tree yields 0 (vacuous max).
double grad_check(const DifferentiableLoss& loss, const ParamTree& params, double epsilon);

// For losses expressed on a tape: the same builder runs in recording mode for
// the analytic gradient and non-recording mode for the probes.
using TapeLossFn = std::function<ad::Var(ad::Tape&, const ad::BoundParams&)>;
DifferentiableLoss make_tape_loss(TapeLossFn loss);
double grad_check_tape(const TapeLossFn& loss, const ParamTree& params, double epsilon);

}  // namespace ace
