#pragma once

#include <cstddef>
#include <vector>

#include "rxl/grad/tape.hpp"

// Differentiable primitives. Every function records its result on the tape of its inputs
// and registers the adjoint. Shape violations throw ShapeError naming the primitive.
namespace rxl::grad {

// [m,n]x[n,p] -> [m,p]; [m,n]x[n] -> [m].
Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_constant(Var a, double c);
// a * s where s is a one-element tensor.
Var mul_scalar(Var a, Var s);
// Sum of same-shaped tensors.
Var add_n(const std::vector<Var>& terms);

// M[m,n] + v[m] added to every column.
Var add_colwise(Var m, Var v);
// M[m,n] + v[n] added to every row.
Var add_rowwise(Var m, Var v);

Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);

// Over the last axis, with max subtraction.
Var softmax(Var a);
Var log_softmax(Var a);

// 1-D inputs are concatenated end to end.
Var concat(const std::vector<Var>& parts);
// Column concatenation of [m,*] matrices; a 1-D [m] input counts as one column.
Var concat_cols(const std::vector<Var>& parts);

// Elements [begin,end) of a 1-D tensor.
Var slice(Var a, std::size_t begin, std::size_t end);
// Columns [begin,end) of a matrix.
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// Element i of a 1-D tensor as a scalar.
Var pick(Var a, std::size_t i);
// Row `index` of an embedding table [V,e] as a 1-D [e] tensor.
Var lookup(Var table, std::size_t index);

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);

Var reshape(Var a, Shape shape);

}  // namespace rxl::grad
