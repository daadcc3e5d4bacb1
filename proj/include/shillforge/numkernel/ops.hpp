#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "shillforge/numkernel/tape.hpp"

// Differentiable primitives. Every function checks operand shapes and throws
// ContractViolation naming the primitive on mismatch. Matrix primitives take
// rank-2 operands; elementwise primitives accept any rank.
namespace shillforge::nk {

// Elementwise binary, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

/// x[n,c] + b[1,c] (or b[c]) broadcast across rows.
Var add_row(Var x, Var b);
Var add_scalar(Var x, double c);
Var scale(Var x, double c);

Var matmul(Var a, Var b);

Var sigmoid(Var x);
Var relu(Var x);
Var exp(Var x);
/// Natural log; throws DomainError on any non-positive entry.
Var log(Var x);
Var abs(Var x);
Var square(Var x);
/// max(x, lo); gradient passes where x > lo.
Var clamp_min(Var x, double lo);

/// Rank-2 reduction keeping dims: axis 0 -> [1,c], axis 1 -> [n,1].
Var sum(Var x, std::size_t axis);
/// Sum of all entries, rank-0 result.
Var sum_all(Var x);
Var mean_all(Var x);

/// Temperature soft-max over the last axis of a rank-2 tensor.
Var softmax(Var x, double temperature = 1.0);
/// log(softmax(x / T)) computed stably.
Var log_softmax(Var x, double temperature = 1.0);

/// out[i,:] = x[index[i],:].
Var gather_rows(Var x, std::span<const std::size_t> index);
/// out[index[i],:] += weight[i] * x[i,:]; out has `n_out` rows. Empty weights mean 1.
Var scatter_add_rows(Var x, std::span<const std::size_t> index, std::size_t n_out,
                     std::span<const double> weights = {});
/// Per-segment column-wise max of x[E,c] into [n_out,c]; empty segments are 0.
Var segment_max(Var x, std::span<const std::size_t> index, std::size_t n_out);

/// Flat gather: out.values[i] = x.values[index[i]], shaped as `shape`.
Var take(Var x, std::span<const std::size_t> index, Shape shape);
Var reshape(Var x, Shape shape);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// out[i*m + j,:] = a[i,:] + b[j,:] for a[n,c], b[m,c].
Var outer_add_rows(Var a, Var b);

}  // namespace shillforge::nk
