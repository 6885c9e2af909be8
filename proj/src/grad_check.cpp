#include "ace/grad_check.hpp"

namespace ace {

double grad_check(const DifferentiableLoss& loss, const ParamTree& params, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw param_error("grad_check: epsilon must be in (0, 1e-2]");
  if (params.empty()) return 0.0;

  auto [value, analytic] = loss.value_and_grad(params);
  if (!std::isfinite(value)) throw numeric_error("grad_check: loss is not finite");

  double worst = 0.0;
  ParamTree probe = params;  // mutated entry-by-entry, restored after each probe
  for (auto& [name, m] : probe) {
    const Eigen::MatrixXd& g = analytic.at(name);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double saved = m(i, j);
        m(i, j) = saved + epsilon;
        const double up = loss.value(probe);
        m(i, j) = saved - epsilon;
        const double down = loss.value(probe);
        m(i, j) = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
          throw numeric_error("grad_check: loss is not finite at probe point");
        const double fd = (up - down) / (2.0 * epsilon);
        const double a = g(i, j);
        const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

DifferentiableLoss make_tape_loss(TapeLossFn loss) {
  DifferentiableLoss out;
  out.value = [loss](const ParamTree& p) {
    ad::Tape tape(false);
    ad::BoundParams bound = ad::bind(tape, p);
    return tape.value(loss(tape, bound))(0, 0);
  };
  out.value_and_grad = [loss](const ParamTree& p) {
    ad::Tape tape(true);
    ad::BoundParams bound = ad::bind(tape, p);
    ad::Var scalar = loss(tape, bound);
    const double value = tape.value(scalar)(0, 0);
    tape.backward(scalar);
    return std::make_pair(value, ad::grads_of(tape, bound, p));
  };
  return out;
}

double grad_check_tape(const TapeLossFn& loss, const ParamTree& params, double epsilon) {
  return grad_check(make_tape_loss(loss), params, epsilon);
}

}  // namespace ace
