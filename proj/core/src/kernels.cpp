#include "edgeinfer/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "edgeinfer/error.hpp"

namespace edgeinfer::kernels {

namespace {

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

// Shared direct-convolution loop. For every output pixel the accumulator row
// (one entry per output channel) is built by streaming over the receptive
// field; `finish(acc, channel)` turns an accumulator into the output value.
template <typename In, typename Acc, typename Out, typename Finish>
void conv2d_core(std::span<const In> x, const Shape& xs, std::span<const In> k, const Shape& ks, const ConvParams& p,
                 const Shape& os, std::span<Out> out, Finish finish) {
  const auto N = xs[0], H = xs[1], W = xs[2], C = xs[3];
  const auto KH = ks[0], KW = ks[1], O = ks[3];
  const auto OH = os[1], OW = os[2];
  const auto [pad_top, pad_left] = conv_padding_before(xs, ks, os, p);
  std::vector<Acc> acc(sz(O));
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t oy = 0; oy < OH; ++oy) {
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        std::fill(acc.begin(), acc.end(), Acc{0});
        for (std::int64_t ky = 0; ky < KH; ++ky) {
          const auto iy = oy * p.strides[0] + ky - pad_top;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t kx = 0; kx < KW; ++kx) {
            const auto ix = ox * p.strides[1] + kx - pad_left;
            if (ix < 0 || ix >= W) continue;
            const In* xrow = x.data() + sz(((n * H + iy) * W + ix) * C);
            const In* krow = k.data() + sz((ky * KW + kx) * C * O);
            for (std::int64_t c = 0; c < C; ++c) {
              const Acc xv = static_cast<Acc>(xrow[c]);
              const In* kc = krow + sz(c * O);
              for (std::int64_t o = 0; o < O; ++o) acc[sz(o)] += xv * static_cast<Acc>(kc[o]);
            }
          }
        }
        Out* dst = out.data() + sz(((n * OH + oy) * OW + ox) * O);
        for (std::int64_t o = 0; o < O; ++o) dst[o] = finish(acc[sz(o)], sz(o));
      }
    }
  }
}

template <typename In, typename Acc, typename Out, typename Finish>
void depthwise_core(std::span<const In> x, const Shape& xs, std::span<const In> k, const Shape& ks,
                    const ConvParams& p, const Shape& os, std::span<Out> out, Finish finish) {
  const auto N = xs[0], H = xs[1], W = xs[2], C = xs[3];
  const auto KH = ks[0], KW = ks[1], M = ks[3];
  const auto OH = os[1], OW = os[2];
  const auto [pad_top, pad_left] = conv_padding_before(xs, ks, os, p);
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t oy = 0; oy < OH; ++oy) {
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        Out* dst = out.data() + sz(((n * OH + oy) * OW + ox) * C * M);
        for (std::int64_t c = 0; c < C; ++c) {
          for (std::int64_t m = 0; m < M; ++m) {
            Acc acc{0};
            for (std::int64_t ky = 0; ky < KH; ++ky) {
              const auto iy = oy * p.strides[0] + ky - pad_top;
              if (iy < 0 || iy >= H) continue;
              for (std::int64_t kx = 0; kx < KW; ++kx) {
                const auto ix = ox * p.strides[1] + kx - pad_left;
                if (ix < 0 || ix >= W) continue;
                acc += static_cast<Acc>(x[sz(((n * H + iy) * W + ix) * C + c)]) *
                       static_cast<Acc>(k[sz(((ky * KW + kx) * C + c) * M + m)]);
              }
            }
            dst[c * M + m] = finish(acc, sz(c), sz(c * M + m));
          }
        }
      }
    }
  }
}

template <typename In, typename Acc, typename Out, typename Finish>
void matmul_core(std::span<const In> a, const Shape& as, std::span<const In> b, const Shape& bs, std::span<Out> out,
                 Finish finish) {
  const auto N = as[0], K = as[1], M = bs[1];
  std::vector<Acc> acc(sz(M));
  for (std::int64_t n = 0; n < N; ++n) {
    std::fill(acc.begin(), acc.end(), Acc{0});
    for (std::int64_t kk = 0; kk < K; ++kk) {
      const Acc av = static_cast<Acc>(a[sz(n * K + kk)]);
      const In* brow = b.data() + sz(kk * M);
      for (std::int64_t m = 0; m < M; ++m) acc[sz(m)] += av * static_cast<Acc>(brow[m]);
    }
    for (std::int64_t m = 0; m < M; ++m) out[sz(n * M + m)] = finish(acc[sz(m)], sz(m));
  }
}

// For every input element, the flat index of the output element it reduces into.
template <typename Fn>
void for_each_reduced(const Shape& xs, std::span<const int> axes, Fn fn) {
  const std::size_t rank = xs.size();
  std::vector<bool> reduced(rank, false);
  for (int a : axes) reduced[sz(a < 0 ? a + static_cast<int>(rank) : a)] = true;
  std::vector<std::size_t> out_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = rank; d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = stride;
      stride *= sz(xs[d]);
    }
  }
  const std::size_t total = element_count(xs);
  std::vector<std::int64_t> coord(rank, 0);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < rank; ++d) o += sz(coord[d]) * out_stride[d];
    fn(i, o);
    for (std::size_t d = rank; d-- > 0;) {
      if (++coord[d] < xs[d]) break;
      coord[d] = 0;
    }
  }
}

std::size_t reduced_count(const Shape& xs, std::span<const int> axes) {
  std::size_t count = 1;
  std::vector<bool> seen(xs.size(), false);
  for (int a : axes) {
    const auto d = sz(a < 0 ? a + static_cast<int>(xs.size()) : a);
    if (!seen[d]) count *= sz(xs[d]);
    seen[d] = true;
  }
  return count;
}

template <typename T>
std::vector<T> pad_core(std::span<const T> x, const Shape& xs,
                        std::span<const std::pair<std::int64_t, std::int64_t>> pads, const Shape& os) {
  std::vector<T> out(element_count(os), T{0});
  const std::size_t rank = xs.size();
  std::vector<std::int64_t> coord(rank, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < rank; ++d) o = o * sz(os[d]) + sz(coord[d] + pads[d].first);
    out[o] = x[i];
    for (std::size_t d = rank; d-- > 0;) {
      if (++coord[d] < xs[d]) break;
      coord[d] = 0;
    }
  }
  return out;
}

}  // namespace

std::array<std::int64_t, 2> conv_padding_before(const Shape& x, const Shape& k, const Shape& out,
                                                 const ConvParams& p) {
  if (p.padding == Padding::kValid) return {0, 0};
  const auto total_h = std::max<std::int64_t>((out[1] - 1) * p.strides[0] + k[0] - x[1], 0);
  const auto total_w = std::max<std::int64_t>((out[2] - 1) * p.strides[1] + k[1] - x[2], 0);
  return {total_h / 2, total_w / 2};
}

std::size_t broadcast_index(std::size_t i, std::size_t operand_numel, std::size_t out_numel) {
  if (operand_numel == out_numel) return i;
  if (operand_numel == 1) return 0;
  return i % operand_numel;
}

std::int8_t requantize_value(double acc, double multiplier) noexcept {
  return quantize_value(acc * multiplier, 1.0);
}

std::vector<float> conv2d(std::span<const float> x, const Shape& xs, std::span<const float> k, const Shape& ks,
                          const ConvParams& p, const Shape& os) {
  std::vector<float> out(element_count(os));
  conv2d_core<float, float, float>(x, xs, k, ks, p, os, std::span(out), [](float acc, std::size_t) { return acc; });
  return out;
}

std::vector<float> depthwise_conv2d(std::span<const float> x, const Shape& xs, std::span<const float> k,
                                    const Shape& ks, const ConvParams& p, const Shape& os) {
  std::vector<float> out(element_count(os));
  depthwise_core<float, float, float>(x, xs, k, ks, p, os, std::span(out),
                                      [](float acc, std::size_t, std::size_t) { return acc; });
  return out;
}

std::vector<float> matmul(std::span<const float> a, const Shape& as, std::span<const float> b, const Shape& bs) {
  std::vector<float> out(sz(as[0] * bs[1]));
  matmul_core<float, float, float>(a, as, b, bs, std::span(out), [](float acc, std::size_t) { return acc; });
  return out;
}

std::vector<float> add(std::span<const float> a, const Shape&, std::span<const float> b, const Shape&,
                       const Shape& os) {
  const std::size_t n = element_count(os);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a[broadcast_index(i, a.size(), n)] + b[broadcast_index(i, b.size(), n)];
  }
  return out;
}

std::vector<float> mul(std::span<const float> a, const Shape&, std::span<const float> b, const Shape&,
                       const Shape& os) {
  const std::size_t n = element_count(os);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a[broadcast_index(i, a.size(), n)] * b[broadcast_index(i, b.size(), n)];
  }
  return out;
}

std::vector<float> relu6(std::span<const float> x) {
  std::vector<float> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](float v) { return std::min(std::max(v, 0.0f), 6.0f); });
  return out;
}

std::vector<float> mean(std::span<const float> x, const Shape& xs, std::span<const int> axes) {
  const std::size_t count = reduced_count(xs, axes);
  std::vector<double> sums(x.size() / count, 0.0);
  for_each_reduced(xs, axes, [&](std::size_t i, std::size_t o) { sums[o] += x[i]; });
  std::vector<float> out(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) out[i] = static_cast<float>(sums[i] / static_cast<double>(count));
  return out;
}

std::vector<float> pad(std::span<const float> x, const Shape& xs,
                       std::span<const std::pair<std::int64_t, std::int64_t>> pads, const Shape& os) {
  return pad_core(x, xs, pads, os);
}

std::vector<std::int8_t> conv2d_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                   std::span<const std::int8_t> k, const Shape& ks, std::span<const float> k_scales,
                                   const ConvParams& p, const Shape& os, float out_scale) {
  std::vector<double> multiplier(k_scales.size());
  for (std::size_t o = 0; o < k_scales.size(); ++o) {
    multiplier[o] = static_cast<double>(x_scale) * k_scales[o] / out_scale;
  }
  std::vector<std::int8_t> out(element_count(os));
  conv2d_core<std::int8_t, std::int32_t, std::int8_t>(
      x, xs, k, ks, p, os, std::span(out),
      [&](std::int32_t acc, std::size_t o) { return requantize_value(acc, multiplier[o]); });
  return out;
}

std::vector<std::int8_t> depthwise_conv2d_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                             std::span<const std::int8_t> k, const Shape& ks,
                                             std::span<const float> k_scales, const ConvParams& p, const Shape& os,
                                             float out_scale) {
  std::vector<double> multiplier(k_scales.size());
  for (std::size_t c = 0; c < k_scales.size(); ++c) {
    multiplier[c] = static_cast<double>(x_scale) * k_scales[c] / out_scale;
  }
  std::vector<std::int8_t> out(element_count(os));
  depthwise_core<std::int8_t, std::int32_t, std::int8_t>(
      x, xs, k, ks, p, os, std::span(out),
      [&](std::int32_t acc, std::size_t c, std::size_t) { return requantize_value(acc, multiplier[c]); });
  return out;
}

std::vector<std::int8_t> matmul_i8(std::span<const std::int8_t> a, const Shape& as, float a_scale,
                                   std::span<const std::int8_t> b, const Shape& bs, std::span<const float> b_scales,
                                   float out_scale) {
  std::vector<double> multiplier(b_scales.size());
  for (std::size_t m = 0; m < b_scales.size(); ++m) {
    multiplier[m] = static_cast<double>(a_scale) * b_scales[m] / out_scale;
  }
  std::vector<std::int8_t> out(sz(as[0] * bs[1]));
  matmul_core<std::int8_t, std::int32_t, std::int8_t>(
      a, as, b, bs, std::span(out), [&](std::int32_t acc, std::size_t m) { return requantize_value(acc, multiplier[m]); });
  return out;
}

std::vector<std::int8_t> add_i8(std::span<const std::int8_t> a, float a_scale, std::span<const std::int8_t> b,
                                float b_scale, std::size_t out_numel, float out_scale) {
  const double ma = static_cast<double>(a_scale) / out_scale;
  const double mb = static_cast<double>(b_scale) / out_scale;
  std::vector<std::int8_t> out(out_numel);
  for (std::size_t i = 0; i < out_numel; ++i) {
    const double v = a[broadcast_index(i, a.size(), out_numel)] * ma + b[broadcast_index(i, b.size(), out_numel)] * mb;
    out[i] = requantize_value(v, 1.0);
  }
  return out;
}

std::vector<std::int8_t> add_bias_i8(std::span<const std::int8_t> a, float a_scale, std::span<const float> bias,
                                     float out_scale) {
  std::vector<std::int32_t> bias_q(bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) {
    bias_q[i] = static_cast<std::int32_t>(round_half_even(static_cast<double>(bias[i]) / a_scale));
  }
  const double m = static_cast<double>(a_scale) / out_scale;
  std::vector<std::int8_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int32_t acc = static_cast<std::int32_t>(a[i]) + bias_q[broadcast_index(i, bias_q.size(), a.size())];
    out[i] = requantize_value(acc, m);
  }
  return out;
}

std::vector<std::int8_t> mul_i8(std::span<const std::int8_t> a, float a_scale, std::span<const std::int8_t> b,
                                float b_scale, std::size_t out_numel, float out_scale) {
  const double m = static_cast<double>(a_scale) * b_scale / out_scale;
  std::vector<std::int8_t> out(out_numel);
  for (std::size_t i = 0; i < out_numel; ++i) {
    const std::int32_t acc = static_cast<std::int32_t>(a[broadcast_index(i, a.size(), out_numel)]) *
                             static_cast<std::int32_t>(b[broadcast_index(i, b.size(), out_numel)]);
    out[i] = requantize_value(acc, m);
  }
  return out;
}

std::vector<std::int8_t> relu6_i8(std::span<const std::int8_t> x, float x_scale, float out_scale) {
  const auto six = static_cast<std::int32_t>(round_half_even(6.0 / x_scale));
  const double m = static_cast<double>(x_scale) / out_scale;
  std::vector<std::int8_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::int32_t v = std::clamp<std::int32_t>(x[i], 0, six);
    out[i] = requantize_value(v, m);
  }
  return out;
}

std::vector<std::int8_t> mean_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                 std::span<const int> axes, float out_scale) {
  const std::size_t count = reduced_count(xs, axes);
  std::vector<std::int32_t> sums(x.size() / count, 0);
  for_each_reduced(xs, axes, [&](std::size_t i, std::size_t o) { sums[o] += x[i]; });
  const double m = static_cast<double>(x_scale) / (static_cast<double>(count) * out_scale);
  std::vector<std::int8_t> out(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) out[i] = requantize_value(sums[i], m);
  return out;
}

std::vector<std::int8_t> pad_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                std::span<const std::pair<std::int64_t, std::int64_t>> pads, const Shape& os,
                                float out_scale) {
  auto out = pad_core(x, xs, pads, os);
  if (x_scale == out_scale) return out;
  return requantize(out, x_scale, out_scale);
}

std::vector<std::int8_t> requantize(std::span<const std::int8_t> x, float x_scale, float out_scale) {
  std::vector<std::int8_t> out(x.size());
  if (x_scale == out_scale) {
    std::copy(x.begin(), x.end(), out.begin());
    return out;
  }
  const double m = static_cast<double>(x_scale) / out_scale;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = requantize_value(x[i], m);
  return out;
}

}  // namespace edgeinfer::kernels
