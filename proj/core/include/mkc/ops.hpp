#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mkc/graph.hpp"

namespace mkc {

// Elementwise binary ops broadcast the smaller operand when its shape is a
// trailing suffix of the other's (or it holds a single element).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var add(Var a, double s);
Var mul(Var a, double s);

Var neg(Var a);
Var square(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var pow(Var a, double exponent);

// max(a, lo) with zero gradient below the bound.
Var clamp_min(Var a, double lo);
// max(a, lo), but lets the gradient through whenever it would push the
// value back above the bound.
Var lower_bound(Var a, double lo);

// Forward: round half away from zero, clamped to [-255, 255].
// Backward: identity (straight-through).
Var ste_round(Var a);

Var sum(Var a);
Var mean(Var a);
// [h, w, c] -> [c] spatial mean per channel.
Var channel_mean(Var a);

// input [h, w, c_in], kernel [k, k, c_in, c_out].
Var conv2d(Var input, Var kernel, int stride, int pad);
// Adjoint of conv2d; output extent (dim - 1) * stride - 2 * pad + k + output_pad.
Var conv_transpose2d(Var input, Var kernel, int stride, int pad, int output_pad);

// Channel selection / slicing on [h, w, c] tensors.
Var gather_channels(Var a, std::span<const std::size_t> channels);
Var slice_channels(Var a, std::size_t begin, std::size_t count);

// Separable filter applied per channel without padding ("valid").
Var separable_filter_valid(Var a, std::span<const double> taps);
// 2x2 mean pooling; odd trailing rows/columns are dropped.
Var avg_pool2(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double s) { return add(a, s); }
inline Var operator-(Var a, double s) { return add(a, -s); }
inline Var operator*(Var a, double s) { return mul(a, s); }
inline Var operator*(double s, Var a) { return mul(a, s); }
inline Var operator-(Var a) { return neg(a); }

// Plain-tensor helpers shared by the ops and inference paths.
Shape conv_output_shape(const Shape& input, const Shape& kernel, int stride,
                        int pad);
double round_half_away(double v);

}  // namespace mkc
