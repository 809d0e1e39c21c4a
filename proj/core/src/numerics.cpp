#include "accelbridge/numerics.hpp"

#include "accelbridge/error.hpp"

#include <cmath>
#include <regex>

namespace accelbridge::fx {

FixedSpec::FixedSpec(int w, int f) : width(w), frac_bits(f) {
  if (w < 4 || w > 32) throw Error(ErrorCode::InvalidArgument, "fixed-point width must be 4..32");
  if (f < 0 || f > w - 1) throw Error(ErrorCode::InvalidArgument, "fractional bits must be 0..width-1");
}

double FixedSpec::resolution() const { return std::ldexp(1.0, -frac_bits); }
double FixedSpec::min_value() const { return std::ldexp(static_cast<double>(raw_min()), -frac_bits); }
double FixedSpec::max_value() const { return std::ldexp(static_cast<double>(raw_max()), -frac_bits); }

std::string FixedSpec::str() const {
  return "fx<" + std::to_string(width) + "," + std::to_string(frac_bits) + ">";
}

FixedSpec FixedSpec::parse(std::string_view text) {
  static const std::regex re(R"(\s*fx<\s*(\d+)\s*,\s*(\d+)\s*>\s*)");
  std::cmatch m;
  if (!std::regex_match(text.begin(), text.end(), m, re))
    throw Error(ErrorCode::InvalidArgument, "expected fx<width,frac>, got '" + std::string(text) + "'");
  return FixedSpec(std::stoi(m[1].str()), std::stoi(m[2].str()));
}

AccelNumerics::AccelNumerics(FixedSpec weight, FixedSpec act, FixedSpec acc)
    : weight_spec(weight), act_spec(act), acc_spec(acc) {
  if (acc.width < act.width) throw Error(ErrorCode::InvalidArgument, "accumulator narrower than activations");
}

AccelNumerics AccelNumerics::v1() { return {FixedSpec(8, 6), FixedSpec(16, 8), FixedSpec(32, 14)}; }
AccelNumerics AccelNumerics::v2() { return {FixedSpec(16, 8), FixedSpec(16, 8), FixedSpec(32, 16)}; }
AccelNumerics AccelNumerics::exact_int() { return {FixedSpec(8, 0), FixedSpec(16, 0), FixedSpec(32, 0)}; }

AccelNumerics AccelNumerics::parse(std::string_view text) {
  if (text == "v1") return v1();
  if (text == "v2") return v2();
  if (text == "exact") return exact_int();
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '<') ++depth;
    if (text[i] == '>') --depth;
    if (text[i] == ',' && depth == 0) {
      parts.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  parts.push_back(text.substr(start));
  if (parts.size() != 3)
    throw Error(ErrorCode::InvalidArgument,
                "numerics must be v1, v2, exact or a weight,act,acc triple of fx<w,f>; got '" + std::string(text) + "'");
  return {FixedSpec::parse(parts[0]), FixedSpec::parse(parts[1]), FixedSpec::parse(parts[2])};
}

std::string AccelNumerics::str() const {
  return weight_spec.str() + "," + act_spec.str() + "," + acc_spec.str();
}

namespace {

int64_t saturate(i128 v, const FixedSpec& s) {
  if (v < s.raw_min()) return s.raw_min();
  if (v > s.raw_max()) return s.raw_max();
  return static_cast<int64_t>(v);
}

// Arithmetic shift right by `shift` with round-half-to-even.
i128 shift_round_even(i128 v, int shift) {
  if (shift <= 0) return v;
  const i128 one = 1;
  const i128 q = v >> shift;  // floor
  const i128 rem = v - (q << shift);
  const i128 half = one << (shift - 1);
  if (rem > half || (rem == half && (q & 1))) return q + 1;
  return q;
}

}  // namespace

int64_t quantize(double x, const FixedSpec& spec) {
  if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "quantize of non-finite value");
  const double scaled = std::ldexp(x, spec.frac_bits);  // exact
  if (scaled <= static_cast<double>(spec.raw_min())) return spec.raw_min();
  if (scaled >= static_cast<double>(spec.raw_max())) return spec.raw_max();
  double r = std::floor(scaled);
  const double diff = scaled - r;  // exact: scaled and r are within 2^32 of each other
  if (diff > 0.5 || (diff == 0.5 && std::fmod(r, 2.0) != 0.0)) r += 1.0;
  return saturate(static_cast<i128>(r), spec);
}

double dequantize(int64_t raw, const FixedSpec& spec) {
  if (raw < spec.raw_min() || raw > spec.raw_max())
    throw Error(ErrorCode::OutOfRange, std::to_string(raw) + " outside " + spec.str());
  return std::ldexp(static_cast<double>(raw), -spec.frac_bits);
}

int64_t requantize(i128 value, int from_frac, const FixedSpec& to) {
  if (to.frac_bits >= from_frac) {
    const int up = to.frac_bits - from_frac;
    // Saturate before shifting so large values cannot overflow the wide type.
    const i128 limit = static_cast<i128>(1) << 62;
    if (value > limit) return to.raw_max();
    if (value < -limit) return to.raw_min();
    return saturate(value << up, to);
  }
  return saturate(shift_round_even(value, from_frac - to.frac_bits), to);
}

RawTensor::RawTensor(Shape s, std::vector<int64_t> d) : shape(std::move(s)), data(std::move(d)) {
  if (static_cast<int64_t>(data.size()) != shape.elements())
    throw Error(ErrorCode::ShapeMismatch, "raw tensor data length does not match " + shape.str());
}

int64_t RawTensor::at(std::initializer_list<int64_t> idx) const {
  int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : idx) flat = flat * shape[axis++] + i;
  return data.at(static_cast<std::size_t>(flat));
}

namespace {

void check_range(const RawTensor& t, const FixedSpec& s, const char* what) {
  for (auto v : t.data)
    if (v < s.raw_min() || v > s.raw_max())
      throw Error(ErrorCode::OutOfRange, std::string(what) + " value " + std::to_string(v) + " outside " + s.str());
}

// Exact sum at product_frac -> accumulator -> activation.
int64_t finish(i128 sum, int product_frac, const AccelNumerics& num) {
  const int64_t acc = requantize(sum, product_frac, num.acc_spec);
  return requantize(acc, num.acc_spec.frac_bits, num.act_spec);
}

}  // namespace

RawTensor fx_linear(const RawTensor& a, const RawTensor& w, const RawTensor& b, const AccelNumerics& num) {
  if (a.shape.rank() != 2 || w.shape.rank() != 2 || b.shape.rank() != 1 || a.shape[1] != w.shape[1] ||
      b.shape[0] != w.shape[0])
    throw Error(ErrorCode::ShapeMismatch,
                "fx_linear expects a[M,K], w[N,K], b[N]; got " + a.shape.str() + ", " + w.shape.str() + ", " +
                    b.shape.str());
  check_range(a, num.act_spec, "input");
  check_range(w, num.weight_spec, "weight");
  check_range(b, num.act_spec, "bias");

  const int64_t M = a.shape[0], K = a.shape[1], N = w.shape[0];
  const int product_frac = num.act_spec.frac_bits + num.weight_spec.frac_bits;
  const int bias_shift = product_frac - num.act_spec.frac_bits;

  std::vector<int64_t> out(static_cast<std::size_t>(M * N));
  for (int64_t m = 0; m < M; ++m) {
    for (int64_t n = 0; n < N; ++n) {
      i128 sum = 0;
      for (int64_t k = 0; k < K; ++k)
        sum += static_cast<i128>(a.data[m * K + k]) * static_cast<i128>(w.data[n * K + k]);
      sum += static_cast<i128>(b.data[n]) << bias_shift;
      out[m * N + n] = finish(sum, product_frac, num);
    }
  }
  return {Shape{M, N}, std::move(out)};
}

RawTensor fx_conv2d(const RawTensor& data, const RawTensor& weight, const ConvAttrs& at, const AccelNumerics& num) {
  if (data.shape.rank() != 4 || weight.shape.rank() != 4 || data.shape[1] != weight.shape[1])
    throw Error(ErrorCode::ShapeMismatch,
                "fx_conv2d expects data[N,C,H,W], weight[O,C,kh,kw]; got " + data.shape.str() + ", " +
                    weight.shape.str());
  if (at.stride_h < 1 || at.stride_w < 1 || at.pad_h < 0 || at.pad_w < 0)
    throw Error(ErrorCode::InvalidArgument, "bad stride/pad");
  check_range(data, num.act_spec, "input");
  check_range(weight, num.weight_spec, "weight");

  const int64_t N = data.shape[0], C = data.shape[1], H = data.shape[2], W = data.shape[3];
  const int64_t O = weight.shape[0], KH = weight.shape[2], KW = weight.shape[3];
  const int64_t hspan = H + 2 * at.pad_h - KH, wspan = W + 2 * at.pad_w - KW;
  if (hspan < 0 || wspan < 0 || hspan % at.stride_h != 0 || wspan % at.stride_w != 0)
    throw Error(ErrorCode::ShapeMismatch, "conv window does not tile the padded input");
  const int64_t OH = hspan / at.stride_h + 1, OW = wspan / at.stride_w + 1;
  const int product_frac = num.act_spec.frac_bits + num.weight_spec.frac_bits;

  std::vector<int64_t> out(static_cast<std::size_t>(N * O * OH * OW));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          i128 sum = 0;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t kh = 0; kh < KH; ++kh)
              for (int64_t kw = 0; kw < KW; ++kw) {
                const int64_t ih = oh * at.stride_h + kh - at.pad_h;
                const int64_t iw = ow * at.stride_w + kw - at.pad_w;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                sum += static_cast<i128>(data.data[((n * C + c) * H + ih) * W + iw]) *
                       static_cast<i128>(weight.data[((o * C + c) * KH + kh) * KW + kw]);
              }
          out[((n * O + o) * OH + oh) * OW + ow] = finish(sum, product_frac, num);
        }
  return {Shape{N, O, OH, OW}, std::move(out)};
}

RawTensor fx_relu(RawTensor t) {
  for (auto& v : t.data) v = v < 0 ? 0 : v;
  return t;
}

}  // namespace accelbridge::fx
