#include "ace/tape.hpp"

#include <cmath>

namespace ace::ad {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw graph_error(std::string(op) + ": shape mismatch");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  t.check_owns(a, "add");
  t.check_owns(b, "add");
  check_same_shape(t.value(a), t.value(b), "add");
  return t.emit(t.value(a) + t.value(b), [a, b](Tape& tp, const Matrix& up) {
    tp.accumulate(a, up);
    tp.accumulate(b, up);
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  t.check_owns(a, "sub");
  t.check_owns(b, "sub");
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.emit(t.value(a) - t.value(b), [a, b](Tape& tp, const Matrix& up) {
    tp.accumulate(a, up);
    tp.accumulate(b, -up);
  });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  t.check_owns(a, "mul");
  t.check_owns(b, "mul");
  check_same_shape(t.value(a), t.value(b), "mul");
  return t.emit(t.value(a).cwiseProduct(t.value(b)), [a, b](Tape& tp, const Matrix& up) {
    tp.accumulate(a, up.cwiseProduct(tp.value(b)));
    tp.accumulate(b, up.cwiseProduct(tp.value(a)));
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  t.check_owns(a, "scale");
  return t.emit(c * t.value(a), [a, c](Tape& tp, const Matrix& up) {
    tp.accumulate(a, c * up);
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  t.check_owns(a, "add_scalar");
  return t.emit(t.value(a).array() + c, [a](Tape& tp, const Matrix& up) {
    tp.accumulate(a, up);
  });
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  t.check_owns(a, "matmul");
  t.check_owns(b, "matmul");
  if (t.value(a).cols() != t.value(b).rows()) throw graph_error("matmul: inner dim mismatch");
  return t.emit(t.value(a) * t.value(b), [a, b](Tape& tp, const Matrix& up) {
    tp.accumulate(a, up * tp.value(b).transpose());
    tp.accumulate(b, tp.value(a).transpose() * up);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "transpose");
  return t.emit(t.value(a).transpose(), [a](Tape& tp, const Matrix& up) {
    tp.accumulate(a, up.transpose());
  });
}

Var add_rowvec(Var m, Var row) {
  Tape& t = *m.tape;
  t.check_owns(m, "add_rowvec");
  t.check_owns(row, "add_rowvec");
  const Matrix& mv = t.value(m);
  const Matrix& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != mv.cols()) throw graph_error("add_rowvec: bad row shape");
  return t.emit(mv.rowwise() + rv.row(0), [m, row](Tape& tp, const Matrix& up) {
    tp.accumulate(m, up);
    tp.accumulate(row, up.colwise().sum());
  });
}

Var leaky_relu(Var a, double slope) {
  Tape& t = *a.tape;
  t.check_owns(a, "leaky_relu");
  const Matrix& x = t.value(a);
  Matrix y = x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return t.emit(std::move(y), [a, slope](Tape& tp, const Matrix& up) {
    const Matrix& x = tp.value(a);
    Matrix g = up;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        if (x(i, j) <= 0.0) g(i, j) *= slope;
    tp.accumulate(a, g);
  });
}

Var gelu(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "gelu");
  const Matrix& x = t.value(a);
  Matrix y = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  return t.emit(std::move(y), [a](Tape& tp, const Matrix& up) {
    const Matrix& x = tp.value(a);
    Matrix g = x.unaryExpr([](double v) {
      return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
    });
    tp.accumulate(a, up.cwiseProduct(g));
  });
}

Var tanh_op(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "tanh");
  Matrix y = t.value(a).array().tanh();
  return t.emit_self(std::move(y), [a](Tape& tp, Var self, const Matrix& up) {
    const Matrix& y = tp.value(self);
    tp.accumulate(a, up.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "softmax_rows");
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    Eigen::ArrayXd e = (x.row(i).array() - m).exp().transpose();
    y.row(i) = (e / e.sum()).matrix().transpose();
  }
  return t.emit_self(std::move(y), [a](Tape& tp, Var self, const Matrix& up) {
    const Matrix& y = tp.value(self);
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = up.row(i).dot(y.row(i));
      g.row(i) = y.row(i).cwiseProduct(up.row(i) - Matrix::Constant(1, y.cols(), dot));
    }
    tp.accumulate(a, g);
  });
}

Var softmax_flat(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "softmax_flat");
  const Matrix& x = t.value(a);
  const double m = x.maxCoeff();
  Eigen::ArrayXXd e = (x.array() - m).exp();
  Matrix y = (e / e.sum()).matrix();
  return t.emit_self(std::move(y), [a](Tape& tp, Var self, const Matrix& up) {
    const Matrix& y = tp.value(self);
    const double dot = (up.array() * y.array()).sum();
    tp.accumulate(a, y.cwiseProduct((up.array() - dot).matrix()));
  });
}

Var layer_norm_rows(Var a, Var gain, Var offset, double eps) {
  Tape& t = *a.tape;
  t.check_owns(a, "layer_norm_rows");
  t.check_owns(gain, "layer_norm_rows");
  t.check_owns(offset, "layer_norm_rows");
  const Matrix& x = t.value(a);
  const Matrix& g = t.value(gain);
  const Matrix& b = t.value(offset);
  if (g.rows() != 1 || g.cols() != x.cols() || b.rows() != 1 || b.cols() != x.cols())
    throw graph_error("layer_norm_rows: gain/offset must be 1 x cols");

  const Eigen::Index n = x.cols();
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_sd(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sd(i) = is;
    xhat.row(i) = ((x.row(i).array() - mean) * is).matrix();
  }
  Matrix y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();

  // stash xhat and inv_sd on the tape as plain leaves so backward can reuse them
  Var xhat_node = t.emit(std::move(xhat), nullptr);
  Var invsd_node = t.emit(Matrix(inv_sd), nullptr);
  return t.emit(std::move(y), [a, gain, offset, xhat_node, invsd_node](Tape& tp, const Matrix& up) {
    const Matrix& xhat = tp.value(xhat_node);
    const Matrix& inv_sd = tp.value(invsd_node);
    const Matrix& g = tp.value(gain);
    const Eigen::Index n = xhat.cols();

    tp.accumulate(gain, (up.array() * xhat.array()).colwise().sum().matrix());
    tp.accumulate(offset, up.colwise().sum());

    Matrix dx(xhat.rows(), n);
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
      Eigen::Array<double, 1, Eigen::Dynamic> h = up.row(i).array() * g.row(0).array();  // dL/dxhat
      const double mean_h = h.mean();
      const double mean_hx = (h * xhat.row(i).array()).mean();
      dx.row(i) = ((h - mean_h - xhat.row(i).array() * mean_hx) * inv_sd(i, 0)).matrix();
    }
    tp.accumulate(a, dx);
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "mean_rows");
  const Matrix& x = t.value(a);
  if (x.rows() == 0) throw graph_error("mean_rows: empty input");
  Matrix y = x.colwise().mean();
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  const Eigen::Index rows = x.rows();
  return t.emit(std::move(y), [a, inv_n, rows](Tape& tp, const Matrix& up) {
    tp.accumulate(a, Matrix(up.replicate(rows, 1) * inv_n));
  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "sum_all");
  const Matrix& x = t.value(a);
  return t.emit(Matrix::Constant(1, 1, x.sum()), [a](Tape& tp, const Matrix& up) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, Matrix::Constant(x.rows(), x.cols(), up(0, 0)));
  });
}

Var slice_cols(Var a, Eigen::Index first, Eigen::Index count) {
  Tape& t = *a.tape;
  t.check_owns(a, "slice_cols");
  const Matrix& x = t.value(a);
  if (first < 0 || count < 0 || first + count > x.cols())
    throw graph_error("slice_cols: range out of bounds");
  return t.emit(x.middleCols(first, count), [a, first, count](Tape& tp, const Matrix& up) {
    const Matrix& x = tp.value(a);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleCols(first, count) = up;
    tp.accumulate(a, g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw graph_error("concat_cols: no parts");
  Tape& t = *parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = t.value(parts.front()).rows();
  for (Var p : parts) {
    t.check_owns(p, "concat_cols");
    if (t.value(p).rows() != rows) throw graph_error("concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  std::vector<Var> captured = parts;
  return t.emit(std::move(y), [captured](Tape& tp, const Matrix& up) {
    Eigen::Index at = 0;
    for (Var p : captured) {
      const Eigen::Index w = tp.value(p).cols();
      tp.accumulate(p, up.middleCols(at, w));
      at += w;
    }
  });
}

Var square(Var a) {
  Tape& t = *a.tape;
  t.check_owns(a, "square");
  return t.emit(t.value(a).array().square(), [a](Tape& tp, const Matrix& up) {
    tp.accumulate(a, Matrix(2.0 * up.cwiseProduct(tp.value(a))));
  });
}

BoundParams bind(Tape& tape, const ParamTree& params) {
  BoundParams out;
  for (const auto& [name, value] : params) out.vars.emplace(name, tape.leaf(value));
  return out;
}

ParamTree grads_of(const Tape& tape, const BoundParams& bound, const ParamTree& params) {
  ParamTree out;
  for (const auto& [name, value] : params) {
    auto it = bound.vars.find(name);
    if (it == bound.vars.end())
      throw graph_error("grads_of: parameter " + name + " was never bound to the tape");
    out.insert(name, tape.grad(it->second));
  }
  return out;
}

}  // namespace ace::ad
