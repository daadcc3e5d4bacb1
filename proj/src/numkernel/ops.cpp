#include "shillforge/numkernel/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace shillforge::nk {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ContractViolation(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                          to_string(b));
}

[[noreturn]] void shape_error(const char* op, const Shape& a) {
  throw ContractViolation(std::string(op) + ": unsupported shape " + to_string(a));
}

Tape& tape_of(const char* op, Var a) {
  if (!a.valid()) throw ContractViolation(std::string(op) + ": detached Var");
  return *a.tape();
}

void require_rank2(const char* op, Var x) {
  if (x.value().rank() != 2) shape_error(op, x.shape());
}

// Shared shape for elementwise unary rules.
template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tape& tape = *x.tape();
  return tape.record(std::move(out), {x}, [x, deriv](const Tensor& g, std::vector<Tensor*>& gin) {
    const Tensor& xv = x.value();
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * deriv(xv[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = tape_of("add", a);
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor*>& gin) {
    for (Tensor* t : gin) {
      if (!t) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of("sub", a);
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor*>& gin) {
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    if (gin[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of("mul", a);
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, std::vector<Tensor*>& gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * bv[i];
    if (gin[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * av[i];
  });
}

Var add_row(Var x, Var b) {
  Tape& tape = tape_of("add_row", x);
  require_rank2("add_row", x);
  const std::size_t n = x.value().rows();
  const std::size_t c = x.value().cols();
  if (b.value().size() != c || b.value().rank() > 2 ||
      (b.value().rank() == 2 && b.value().rows() != 1)) {
    shape_error("add_row", x.shape(), b.shape());
  }
  Tensor out = x.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return tape.record(std::move(out), {x, b}, [n, c](const Tensor& g, std::vector<Tensor*>& gin) {
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    if (gin[1])
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gin[1])[j] += g[i * c + j];
  });
}

Var add_scalar(Var x, double c) {
  tape_of("add_scalar", x);
  return unary(x, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

Var scale(Var x, double c) {
  tape_of("scale", x);
  return unary(x, [c](double v) { return v * c; }, [c](double) { return c; });
}

namespace {

Tensor transposed(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = x[i * c + j];
  return t;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of("matmul", a);
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k) shape_error("matmul", av.shape(), bv.shape());
  Tensor out({n, m});
  // Narrow outputs run as dot products over contiguous rows of A and B^T.
  const bool narrow = m < k;
  if (narrow) {
    const Tensor bt = transposed(bv);
    for (std::size_t i = 0; i < n; ++i) {
      const double* arow = &av[i * k];
      for (std::size_t j = 0; j < m; ++j) {
        const double* bcol = &bt[j * k];
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * bcol[p];
        out[i * m + j] = acc;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double* orow = &out[i * m];
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = &bv[p * m];
        for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
      }
    }
  }
  return tape.record(std::move(out), {a, b},
                     [a, b, n, k, m, narrow](const Tensor& g, std::vector<Tensor*>& gin) {
                       const Tensor& av = a.value();
                       const Tensor& bv = b.value();
                       if (gin[0]) {  // dA = G B^T
                         Tensor& ga = *gin[0];
                         if (narrow) {
                           const Tensor bt = transposed(bv);
                           for (std::size_t i = 0; i < n; ++i) {
                             double* garow = &ga[i * k];
                             for (std::size_t j = 0; j < m; ++j) {
                               const double gij = g[i * m + j];
                               if (gij == 0.0) continue;
                               const double* bcol = &bt[j * k];
                               for (std::size_t p = 0; p < k; ++p) garow[p] += gij * bcol[p];
                             }
                           }
                         } else {
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t p = 0; p < k; ++p) {
                               double acc = 0.0;
                               const double* grow = &g[i * m];
                               const double* brow = &bv[p * m];
                               for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                               ga[i * k + p] += acc;
                             }
                         }
                       }
                       if (gin[1]) {  // dB = A^T G
                         Tensor& gb = *gin[1];
                         if (narrow) {
                           Tensor gbt({m, k});
                           for (std::size_t i = 0; i < n; ++i) {
                             const double* arow = &av[i * k];
                             for (std::size_t j = 0; j < m; ++j) {
                               const double gij = g[i * m + j];
                               if (gij == 0.0) continue;
                               double* row = &gbt[j * k];
                               for (std::size_t p = 0; p < k; ++p) row[p] += gij * arow[p];
                             }
                           }
                           for (std::size_t p = 0; p < k; ++p)
                             for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += gbt[j * k + p];
                         } else {
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t p = 0; p < k; ++p) {
                               const double aip = av[i * k + p];
                               if (aip == 0.0) continue;
                               const double* grow = &g[i * m];
                               double* gbrow = &gb[p * m];
                               for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                             }
                         }
                       }
                     });
}

Var sigmoid(Var x) {
  tape_of("sigmoid", x);
  auto sig = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary(x, sig, [sig](double v) {
    const double s = sig(v);
    return s * (1.0 - s);
  });
}

Var relu(Var x) {
  tape_of("relu", x);
  return unary(x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
  tape_of("exp", x);
  return unary(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Var log(Var x) {
  tape_of("log", x);
  for (double v : x.value().values()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v) + " in tensor " +
                        to_string(x.shape()));
    }
  }
  return unary(x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Var abs(Var x) {
  tape_of("abs", x);
  return unary(x, [](double v) { return std::abs(v); },
               [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  tape_of("square", x);
  return unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var clamp_min(Var x, double lo) {
  tape_of("clamp_min", x);
  return unary(x, [lo](double v) { return v > lo ? v : lo; },
               [lo](double v) { return v > lo ? 1.0 : 0.0; });
}

Var sum(Var x, std::size_t axis) {
  Tape& tape = tape_of("sum", x);
  require_rank2("sum", x);
  if (axis > 1) shape_error("sum", x.shape());
  const std::size_t n = x.value().rows(), c = x.value().cols();
  const Tensor& xv = x.value();
  Tensor out(axis == 0 ? Shape{1, c} : Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += xv[i * c + j];
  return tape.record(std::move(out), {x}, [n, c, axis](const Tensor& g, std::vector<Tensor*>& gin) {
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[axis == 0 ? j : i];
  });
}

Var sum_all(Var x) {
  Tape& tape = tape_of("sum_all", x);
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return tape.record(Tensor::scalar(acc), {x}, [](const Tensor& g, std::vector<Tensor*>& gin) {
    const double gv = g[0];
    for (double& v : gin[0]->values()) v += gv;
  });
}

Var mean_all(Var x) {
  tape_of("mean_all", x);
  const std::size_t n = x.value().size();
  if (n == 0) shape_error("mean_all", x.shape());
  return scale(sum_all(x), 1.0 / static_cast<double>(n));
}

Var softmax(Var x, double temperature) {
  Tape& tape = tape_of("softmax", x);
  require_rank2("softmax", x);
  if (!(temperature > 0.0)) throw ContractViolation("softmax: temperature must be positive");
  const std::size_t n = x.value().rows(), c = x.value().cols();
  const Tensor& xv = x.value();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, xv[i * c + j] / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(xv[i * c + j] / temperature - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  Tensor probs = out;
  return tape.record(std::move(out), {x},
                     [probs = std::move(probs), n, c, temperature](const Tensor& g,
                                                                  std::vector<Tensor*>& gin) {
                       Tensor& gx = *gin[0];
                       for (std::size_t i = 0; i < n; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * probs[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           gx[i * c + j] += probs[i * c + j] * (g[i * c + j] - dot) / temperature;
                       }
                     });
}

Var log_softmax(Var x, double temperature) {
  Tape& tape = tape_of("log_softmax", x);
  require_rank2("log_softmax", x);
  if (!(temperature > 0.0)) throw ContractViolation("log_softmax: temperature must be positive");
  const std::size_t n = x.value().rows(), c = x.value().cols();
  const Tensor& xv = x.value();
  Tensor out({n, c});
  Tensor probs({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, xv[i * c + j] / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(xv[i * c + j] / temperature - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = xv[i * c + j] / temperature - lz;
      probs[i * c + j] = std::exp(out[i * c + j]);
    }
  }
  return tape.record(std::move(out), {x},
                     [probs = std::move(probs), n, c, temperature](const Tensor& g,
                                                                  std::vector<Tensor*>& gin) {
                       Tensor& gx = *gin[0];
                       for (std::size_t i = 0; i < n; ++i) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           gx[i * c + j] += (g[i * c + j] - probs[i * c + j] * gs) / temperature;
                       }
                     });
}

Var gather_rows(Var x, std::span<const std::size_t> index) {
  Tape& tape = tape_of("gather_rows", x);
  require_rank2("gather_rows", x);
  const std::size_t n = x.value().rows(), c = x.value().cols();
  const Tensor& xv = x.value();
  Tensor out({index.size(), c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) {
      throw ContractViolation("gather_rows: index " + std::to_string(index[i]) +
                              " out of range for " + to_string(x.shape()));
    }
    std::copy_n(&xv[index[i] * c], c, &out[i * c]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return tape.record(std::move(out), {x},
                     [idx = std::move(idx), c](const Tensor& g, std::vector<Tensor*>& gin) {
                       Tensor& gx = *gin[0];
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += g[i * c + j];
                     });
}

Var scatter_add_rows(Var x, std::span<const std::size_t> index, std::size_t n_out,
                     std::span<const double> weights) {
  Tape& tape = tape_of("scatter_add_rows", x);
  require_rank2("scatter_add_rows", x);
  const std::size_t e = x.value().rows(), c = x.value().cols();
  if (index.size() != e || (!weights.empty() && weights.size() != e)) {
    throw ContractViolation("scatter_add_rows: " + std::to_string(index.size()) + " indices / " +
                            std::to_string(weights.size()) + " weights for " +
                            to_string(x.shape()));
  }
  const Tensor& xv = x.value();
  Tensor out({n_out, c});
  for (std::size_t i = 0; i < e; ++i) {
    if (index[i] >= n_out) {
      throw ContractViolation("scatter_add_rows: index " + std::to_string(index[i]) +
                              " out of range for " + std::to_string(n_out) + " rows");
    }
    const double w = weights.empty() ? 1.0 : weights[i];
    for (std::size_t j = 0; j < c; ++j) out[index[i] * c + j] += w * xv[i * c + j];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> wts(weights.begin(), weights.end());
  return tape.record(std::move(out), {x},
                     [idx = std::move(idx), wts = std::move(wts), c](const Tensor& g,
                                                                     std::vector<Tensor*>& gin) {
                       Tensor& gx = *gin[0];
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         const double w = wts.empty() ? 1.0 : wts[i];
                         for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += w * g[idx[i] * c + j];
                       }
                     });
}

Var segment_max(Var x, std::span<const std::size_t> index, std::size_t n_out) {
  Tape& tape = tape_of("segment_max", x);
  require_rank2("segment_max", x);
  const std::size_t e = x.value().rows(), c = x.value().cols();
  if (index.size() != e) shape_error("segment_max", x.shape());
  const Tensor& xv = x.value();
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> arg(n_out * c, none);
  Tensor out({n_out, c});
  for (std::size_t i = 0; i < e; ++i) {
    if (index[i] >= n_out) throw ContractViolation("segment_max: index out of range");
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t& a = arg[index[i] * c + j];
      if (a == none || xv[i * c + j] > xv[a * c + j]) a = i;
    }
  }
  for (std::size_t k = 0; k < arg.size(); ++k)
    if (arg[k] != none) out[k] = xv[arg[k] * c + k % c];
  return tape.record(std::move(out), {x},
                     [arg = std::move(arg), c](const Tensor& g, std::vector<Tensor*>& gin) {
                       Tensor& gx = *gin[0];
                       for (std::size_t k = 0; k < arg.size(); ++k)
                         if (arg[k] != none) gx[arg[k] * c + k % c] += g[k];
                     });
}

Var take(Var x, std::span<const std::size_t> index, Shape shape) {
  Tape& tape = tape_of("take", x);
  if (shape_size(shape) != index.size()) {
    throw ContractViolation("take: " + std::to_string(index.size()) + " indices for shape " +
                            to_string(shape));
  }
  const Tensor& xv = x.value();
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw ContractViolation("take: index out of range");
    out[i] = xv[index[i]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return tape.record(std::move(out), {x},
                     [idx = std::move(idx)](const Tensor& g, std::vector<Tensor*>& gin) {
                       Tensor& gx = *gin[0];
                       for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
                     });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of("reshape", x);
  if (shape_size(shape) != x.value().size()) shape_error("reshape", x.shape(), shape);
  return tape.record(x.value().reshaped(std::move(shape)), {x},
                     [](const Tensor& g, std::vector<Tensor*>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                     });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no inputs");
  Tape& tape = tape_of("concat_cols", parts[0]);
  const std::size_t n = parts[0].value().rank() == 2 ? parts[0].value().rows() : 0;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank2("concat_cols", p);
    if (p.value().rows() != n) shape_error("concat_cols", parts[0].shape(), p.shape());
    offsets.push_back(total);
    total += p.value().cols();
  }
  Tensor out({n, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    const std::size_t c = pv.cols();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(&pv[i * c], c, &out[i * total + offsets[k]]);
  }
  std::vector<std::size_t> widths;
  for (const Var& p : parts) widths.push_back(p.value().cols());
  return tape.record(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [offsets, widths, n, total](const Tensor& g, std::vector<Tensor*>& gin) {
                       for (std::size_t k = 0; k < gin.size(); ++k) {
                         if (!gin[k]) continue;
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < widths[k]; ++j)
                             (*gin[k])[i * widths[k] + j] += g[i * total + offsets[k] + j];
                       }
                     });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
  Tape& tape = tape_of("concat_rows", parts[0]);
  require_rank2("concat_rows", parts[0]);
  const std::size_t c = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_rank2("concat_rows", p);
    if (p.value().cols() != c) shape_error("concat_rows", parts[0].shape(), p.shape());
    rows += p.value().rows();
  }
  Tensor out({rows, c});
  std::size_t at = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    std::copy(pv.values().begin(), pv.values().end(), out.values().begin() + at);
    at += pv.size();
  }
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) sizes.push_back(p.value().size());
  return tape.record(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [sizes = std::move(sizes)](const Tensor& g, std::vector<Tensor*>& gin) {
                       std::size_t at = 0;
                       for (std::size_t k = 0; k < gin.size(); ++k) {
                         if (gin[k])
                           for (std::size_t i = 0; i < sizes[k]; ++i) (*gin[k])[i] += g[at + i];
                         at += sizes[k];
                       }
                     });
}

Var outer_add_rows(Var a, Var b) {
  Tape& tape = tape_of("outer_add_rows", a);
  require_rank2("outer_add_rows", a);
  require_rank2("outer_add_rows", b);
  const std::size_t n = a.value().rows(), m = b.value().rows(), c = a.value().cols();
  if (b.value().cols() != c) shape_error("outer_add_rows", a.shape(), b.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({n * m, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double* o = &out[(i * m + j) * c];
      const double* ar = &av[i * c];
      const double* br = &bv[j * c];
      for (std::size_t k = 0; k < c; ++k) o[k] = ar[k] + br[k];
    }
  return tape.record(std::move(out), {a, b}, [n, m, c](const Tensor& g, std::vector<Tensor*>& gin) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double* gr = &g[(i * m + j) * c];
        if (gin[0])
          for (std::size_t k = 0; k < c; ++k) (*gin[0])[i * c + k] += gr[k];
        if (gin[1])
          for (std::size_t k = 0; k < c; ++k) (*gin[1])[j * c + k] += gr[k];
      }
  });
}

}  // namespace shillforge::nk
