#include "mkc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mkc/errors.hpp"

namespace mkc {
namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return a;
  const auto suffix_of = [](const Shape& small, const Shape& big) {
    if (shape_numel(small) == 1) return true;
    if (small.size() > big.size()) return false;
    return std::equal(small.begin(), small.end(), big.end() - small.size());
  };
  if (suffix_of(b, a) && shape_numel(a) >= shape_numel(b)) return a;
  if (suffix_of(a, b)) return b;
  throw ConfigError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                    shape_str(b) + " are not broadcast-compatible");
}

template <typename Fwd, typename Da, typename Db>
Var binary_op(std::string_view name, Var a, Var b, Fwd fwd, Da da, Db db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(broadcast_shape(av.shape(), bv.shape(), name));
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fwd(av[i % na], bv[i % nb]);
  }
  return a.graph().record(
      name, std::move(out), {a, b}, [a, b, da, db](Graph& g, const Tensor& go) {
        const Tensor& av = g.value(a);
        const Tensor& bv = g.value(b);
        const std::size_t na = av.size(), nb = bv.size();
        if (g.requires_grad(a)) {
          Tensor& ga = g.grad_buffer(a);
          for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i % na] += go[i] * da(av[i % na], bv[i % nb]);
          }
        }
        if (g.requires_grad(b)) {
          Tensor& gb = g.grad_buffer(b);
          for (std::size_t i = 0; i < go.size(); ++i) {
            gb[i % nb] += go[i] * db(av[i % na], bv[i % nb]);
          }
        }
      });
}

template <typename Fwd, typename D>
Var unary_op(std::string_view name, Var a, Fwd fwd, D dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return a.graph().record(name, std::move(out), {a},
                          [a, dfdx](Graph& g, const Tensor& go) {
                            const Tensor& av = g.value(a);
                            Tensor& ga = g.grad_buffer(a);
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              ga[i] += go[i] * dfdx(av[i]);
                            }
                          });
}

void require_rank3(const Tensor& t, std::string_view op) {
  if (t.rank() != 3) {
    throw ConfigError(std::string(op) + ": expected [h,w,c] tensor, got " +
                      shape_str(t.shape()));
  }
}

void check_conv_args(const Shape& kernel, int stride, int pad,
                     std::string_view op) {
  if (kernel.size() != 4 || kernel[0] != kernel[1]) {
    throw ConfigError(std::string(op) + ": kernel must be [k,k,c_in,c_out], got " +
                      shape_str(kernel));
  }
  if (kernel[0] % 2 == 0) {
    throw ConfigError(std::string(op) + ": kernel size must be odd, got " +
                      std::to_string(kernel[0]));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError(std::string(op) + ": stride must be 1 or 2, got " +
                      std::to_string(stride));
  }
  if (pad < 0) throw ConfigError(std::string(op) + ": negative padding");
}

}  // namespace

double round_half_away(double v) { return std::round(v); }

Var add(Var a, Var b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var add(Var a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; },
      [](double) { return 1.0; });
}

Var mul(Var a, double s) {
  return unary_op(
      "mul_scalar", a, [s](double x) { return x * s; },
      [s](double) { return s; });
}

Var neg(Var a) { return mul(a, -1.0); }

Var square(Var a) {
  return unary_op(
      "square", a, [](double x) { return x * x; },
      [](double x) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double x) { return 0.5 / std::sqrt(x); });
}

Var abs(Var a) {
  return unary_op(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var exp(Var a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); });
}

Var log(Var a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Var sigmoid(Var a) {
  return unary_op(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Var relu(Var a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var pow(Var a, double e) {
  return unary_op(
      "pow", a, [e](double x) { return std::pow(x, e); },
      [e](double x) { return e * std::pow(x, e - 1.0); });
}

Var clamp_min(Var a, double lo) {
  return unary_op(
      "clamp_min", a, [lo](double x) { return std::max(x, lo); },
      [lo](double x) { return x >= lo ? 1.0 : 0.0; });
}

Var lower_bound(Var a, double lo) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(av[i], lo);
  return a.graph().record("lower_bound", std::move(out), {a},
                          [a, lo](Graph& g, const Tensor& go) {
                            const Tensor& av = g.value(a);
                            Tensor& ga = g.grad_buffer(a);
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              if (av[i] >= lo || go[i] < 0.0) ga[i] += go[i];
                            }
                          });
}

Var ste_round(Var a) {
  return unary_op(
      "ste_round", a,
      [](double x) { return std::clamp(round_half_away(x), -255.0, 255.0); },
      [](double) { return 1.0; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record("sum", Tensor::scalar(s), {a},
                          [a](Graph& g, const Tensor& go) {
                            Tensor& ga = g.grad_buffer(a);
                            for (std::size_t i = 0; i < ga.size(); ++i) {
                              ga[i] += go[0];
                            }
                          });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ConfigError("mean of empty tensor");
  return mul(sum(a), 1.0 / static_cast<double>(n));
}

Var channel_mean(Var a) {
  const Tensor& av = a.value();
  require_rank3(av, "channel_mean");
  const std::size_t hw = av.dim(0) * av.dim(1), c = av.dim(2);
  Tensor out({c});
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t k = 0; k < c; ++k) out[k] += av[p * c + k];
  }
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t k = 0; k < c; ++k) out[k] *= inv;
  return a.graph().record("channel_mean", std::move(out), {a},
                          [a, hw, c, inv](Graph& g, const Tensor& go) {
                            Tensor& ga = g.grad_buffer(a);
                            for (std::size_t p = 0; p < hw; ++p) {
                              for (std::size_t k = 0; k < c; ++k) {
                                ga[p * c + k] += go[k] * inv;
                              }
                            }
                          });
}

Shape conv_output_shape(const Shape& input, const Shape& kernel, int stride,
                        int pad) {
  check_conv_args(kernel, stride, pad, "conv2d");
  if (input.size() != 3 || input[2] != kernel[2]) {
    throw ConfigError("conv2d: input " + shape_str(input) +
                      " does not match kernel " + shape_str(kernel));
  }
  const std::size_t k = kernel[0];
  const std::size_t ph = input[0] + 2 * static_cast<std::size_t>(pad);
  const std::size_t pw = input[1] + 2 * static_cast<std::size_t>(pad);
  if (k > ph || k > pw) {
    throw ConfigError("conv2d: kernel " + std::to_string(k) +
                      " larger than padded input " + std::to_string(ph) + "x" +
                      std::to_string(pw));
  }
  return {(ph - k) / stride + 1, (pw - k) / stride + 1, kernel[3]};
}

Var conv2d(Var input, Var kernel, int stride, int pad) {
  const Tensor& x = input.value();
  const Tensor& w = kernel.value();
  const Shape out_shape = conv_output_shape(x.shape(), w.shape(), stride, pad);
  const long h = static_cast<long>(x.dim(0)), wd = static_cast<long>(x.dim(1));
  const std::size_t ci = x.dim(2), co = w.dim(3), k = w.dim(0);
  const std::size_t oh = out_shape[0], ow = out_shape[1];

  Tensor out(out_shape);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* o = &out[(oy * ow + ox) * co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
        if (iy < 0 || iy >= h) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
          if (ix < 0 || ix >= wd) continue;
          const double* in = &x[(static_cast<std::size_t>(iy) * wd + ix) * ci];
          const double* kw = &w[(ky * k + kx) * ci * co];
          for (std::size_t c = 0; c < ci; ++c) {
            const double v = in[c];
            const double* kr = kw + c * co;
            for (std::size_t q = 0; q < co; ++q) o[q] += v * kr[q];
          }
        }
      }
    }
  }

  return input.graph().record(
      "conv2d", std::move(out), {input, kernel},
      [input, kernel, stride, pad](Graph& g, const Tensor& go) {
        const Tensor& x = g.value(input);
        const Tensor& w = g.value(kernel);
        const long h = static_cast<long>(x.dim(0)), wd = static_cast<long>(x.dim(1));
        const std::size_t ci = x.dim(2), co = w.dim(3), k = w.dim(0);
        const std::size_t oh = go.dim(0), ow = go.dim(1);
        const bool want_x = g.requires_grad(input);
        const bool want_w = g.requires_grad(kernel);
        Tensor* gx = want_x ? &g.grad_buffer(input) : nullptr;
        Tensor* gw = want_w ? &g.grad_buffer(kernel) : nullptr;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* o = &go[(oy * ow + ox) * co];
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
              if (iy < 0 || iy >= h) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                if (ix < 0 || ix >= wd) continue;
                const std::size_t in_off = (static_cast<std::size_t>(iy) * wd + ix) * ci;
                const std::size_t k_off = (ky * k + kx) * ci * co;
                for (std::size_t c = 0; c < ci; ++c) {
                  const double* kr = &w[k_off + c * co];
                  if (gx) {
                    double acc = 0.0;
                    for (std::size_t q = 0; q < co; ++q) acc += o[q] * kr[q];
                    (*gx)[in_off + c] += acc;
                  }
                  if (gw) {
                    const double v = x[in_off + c];
                    double* gr = &(*gw)[k_off + c * co];
                    for (std::size_t q = 0; q < co; ++q) gr[q] += v * o[q];
                  }
                }
              }
            }
          }
        }
      });
}

Var conv_transpose2d(Var input, Var kernel, int stride, int pad, int output_pad) {
  const Tensor& x = input.value();
  const Tensor& w = kernel.value();
  check_conv_args(w.shape(), stride, pad, "conv_transpose2d");
  require_rank3(x, "conv_transpose2d");
  if (x.dim(2) != w.dim(2)) {
    throw ConfigError("conv_transpose2d: input " + shape_str(x.shape()) +
                      " does not match kernel " + shape_str(w.shape()));
  }
  if (output_pad < 0 || output_pad >= stride) {
    throw ConfigError("conv_transpose2d: output padding must be in [0, stride)");
  }
  const std::size_t k = w.dim(0), ci = x.dim(2), co = w.dim(3);
  const long full_h = (static_cast<long>(x.dim(0)) - 1) * stride + static_cast<long>(k) + output_pad;
  const long full_w = (static_cast<long>(x.dim(1)) - 1) * stride + static_cast<long>(k) + output_pad;
  const long oh = full_h - 2 * pad, ow = full_w - 2 * pad;
  if (oh <= 0 || ow <= 0) {
    throw ConfigError("conv_transpose2d: padding larger than output for input " +
                      shape_str(x.shape()));
  }
  const std::size_t h = x.dim(0), wd = x.dim(1);

  Tensor out({static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), co});
  for (std::size_t iy = 0; iy < h; ++iy) {
    for (std::size_t ix = 0; ix < wd; ++ix) {
      const double* in = &x[(iy * wd + ix) * ci];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long oy = static_cast<long>(iy) * stride - pad + static_cast<long>(ky);
        if (oy < 0 || oy >= oh) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ox = static_cast<long>(ix) * stride - pad + static_cast<long>(kx);
          if (ox < 0 || ox >= ow) continue;
          double* o = &out[(static_cast<std::size_t>(oy) * ow + ox) * co];
          const double* kw = &w[(ky * k + kx) * ci * co];
          for (std::size_t c = 0; c < ci; ++c) {
            const double v = in[c];
            const double* kr = kw + c * co;
            for (std::size_t q = 0; q < co; ++q) o[q] += v * kr[q];
          }
        }
      }
    }
  }

  return input.graph().record(
      "conv_transpose2d", std::move(out), {input, kernel},
      [input, kernel, stride, pad](Graph& g, const Tensor& go) {
        const Tensor& x = g.value(input);
        const Tensor& w = g.value(kernel);
        const std::size_t k = w.dim(0), ci = x.dim(2), co = w.dim(3);
        const std::size_t h = x.dim(0), wd = x.dim(1);
        const long oh = static_cast<long>(go.dim(0)), ow = static_cast<long>(go.dim(1));
        const bool want_x = g.requires_grad(input);
        const bool want_w = g.requires_grad(kernel);
        Tensor* gx = want_x ? &g.grad_buffer(input) : nullptr;
        Tensor* gw = want_w ? &g.grad_buffer(kernel) : nullptr;
        for (std::size_t iy = 0; iy < h; ++iy) {
          for (std::size_t ix = 0; ix < wd; ++ix) {
            const std::size_t in_off = (iy * wd + ix) * ci;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long oy = static_cast<long>(iy) * stride - pad + static_cast<long>(ky);
              if (oy < 0 || oy >= oh) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ox = static_cast<long>(ix) * stride - pad + static_cast<long>(kx);
                if (ox < 0 || ox >= ow) continue;
                const double* o = &go[(static_cast<std::size_t>(oy) * ow + ox) * co];
                const std::size_t k_off = (ky * k + kx) * ci * co;
                for (std::size_t c = 0; c < ci; ++c) {
                  const double* kr = &w[k_off + c * co];
                  if (gx) {
                    double acc = 0.0;
                    for (std::size_t q = 0; q < co; ++q) acc += o[q] * kr[q];
                    (*gx)[in_off + c] += acc;
                  }
                  if (gw) {
                    const double v = x[in_off + c];
                    double* gr = &(*gw)[k_off + c * co];
                    for (std::size_t q = 0; q < co; ++q) gr[q] += v * o[q];
                  }
                }
              }
            }
          }
        }
      });
}

Var gather_channels(Var a, std::span<const std::size_t> channels) {
  const Tensor& av = a.value();
  require_rank3(av, "gather_channels");
  const std::size_t c = av.dim(2), hw = av.dim(0) * av.dim(1);
  for (auto ch : channels) {
    if (ch >= c) {
      throw ConfigError("gather_channels: channel " + std::to_string(ch) +
                        " out of range for " + shape_str(av.shape()));
    }
  }
  std::vector<std::size_t> idx(channels.begin(), channels.end());
  const std::size_t m = idx.size();
  Tensor out({av.dim(0), av.dim(1), m});
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t j = 0; j < m; ++j) out[p * m + j] = av[p * c + idx[j]];
  }
  return a.graph().record("gather_channels", std::move(out), {a},
                          [a, idx, c, hw](Graph& g, const Tensor& go) {
                            Tensor& ga = g.grad_buffer(a);
                            const std::size_t m = idx.size();
                            for (std::size_t p = 0; p < hw; ++p) {
                              for (std::size_t j = 0; j < m; ++j) {
                                ga[p * c + idx[j]] += go[p * m + j];
                              }
                            }
                          });
}

Var slice_channels(Var a, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (std::size_t j = 0; j < count; ++j) idx[j] = begin + j;
  return gather_channels(a, idx);
}

Var separable_filter_valid(Var a, std::span<const double> taps_in) {
  const Tensor& av = a.value();
  require_rank3(av, "separable_filter_valid");
  std::vector<double> taps(taps_in.begin(), taps_in.end());
  const std::size_t t = taps.size(), h = av.dim(0), w = av.dim(1), c = av.dim(2);
  if (t == 0 || t > h || t > w) {
    throw ConfigError("separable_filter_valid: window " + std::to_string(t) +
                      " larger than image " + shape_str(av.shape()));
  }
  const std::size_t oh = h - t + 1, ow = w - t + 1;
  // Horizontal pass into tmp [h, ow, c], then vertical into out [oh, ow, c].
  Tensor tmp({h, ow, c});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t k = 0; k < c; ++k)
          tmp.at(y, x, k) += taps[i] * av.at(y, x + i, k);
  Tensor out({oh, ow, c});
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t k = 0; k < c; ++k)
          out.at(y, x, k) += taps[i] * tmp.at(y + i, x, k);

  return a.graph().record(
      "separable_filter", std::move(out), {a},
      [a, taps, h, w, c, oh, ow](Graph& g, const Tensor& go) {
        const std::size_t t = taps.size();
        Tensor gtmp({h, ow, c});
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t x = 0; x < ow; ++x)
              for (std::size_t k = 0; k < c; ++k)
                gtmp.at(y + i, x, k) += taps[i] * go.at(y, x, k);
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t i = 0; i < t; ++i)
              for (std::size_t k = 0; k < c; ++k)
                ga.at(y, x + i, k) += taps[i] * gtmp.at(y, x, k);
        (void)w;
      });
}

Var avg_pool2(Var a) {
  const Tensor& av = a.value();
  require_rank3(av, "avg_pool2");
  const std::size_t oh = av.dim(0) / 2, ow = av.dim(1) / 2, c = av.dim(2);
  if (oh == 0 || ow == 0) {
    throw ConfigError("avg_pool2: input too small " + shape_str(av.shape()));
  }
  Tensor out({oh, ow, c});
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t k = 0; k < c; ++k)
        out.at(y, x, k) = 0.25 * (av.at(2 * y, 2 * x, k) + av.at(2 * y, 2 * x + 1, k) +
                                  av.at(2 * y + 1, 2 * x, k) +
                                  av.at(2 * y + 1, 2 * x + 1, k));
  return a.graph().record("avg_pool2", std::move(out), {a},
                          [a, oh, ow, c](Graph& g, const Tensor& go) {
                            Tensor& ga = g.grad_buffer(a);
                            for (std::size_t y = 0; y < oh; ++y)
                              for (std::size_t x = 0; x < ow; ++x)
                                for (std::size_t k = 0; k < c; ++k) {
                                  const double v = 0.25 * go.at(y, x, k);
                                  ga.at(2 * y, 2 * x, k) += v;
                                  ga.at(2 * y, 2 * x + 1, k) += v;
                                  ga.at(2 * y + 1, 2 * x, k) += v;
                                  ga.at(2 * y + 1, 2 * x + 1, k) += v;
                                }
                          });
}

}  // namespace mkc
