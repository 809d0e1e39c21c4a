#pragma once

// Signed fixed-point arithmetic used by the accelerator models and their
// oracles. Rounding is round-half-to-even; overflow always saturates.

#include "accelbridge/shape.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace accelbridge::fx {

/// fx<width,frac>: a width-bit two's complement integer scaled by 2^-frac.
struct FixedSpec {
  int width = 16;
  int frac_bits = 8;

  FixedSpec() = default;
  FixedSpec(int width, int frac_bits);

  int64_t raw_min() const noexcept { return -(int64_t{1} << (width - 1)); }
  int64_t raw_max() const noexcept { return (int64_t{1} << (width - 1)) - 1; }
  double resolution() const;
  double min_value() const;
  double max_value() const;

  /// "fx<8,6>"
  std::string str() const;
  static FixedSpec parse(std::string_view text);

  friend bool operator==(const FixedSpec&, const FixedSpec&) = default;
};

struct AccelNumerics {
  FixedSpec weight_spec;
  FixedSpec act_spec;
  FixedSpec acc_spec;

  AccelNumerics() = default;
  AccelNumerics(FixedSpec weight, FixedSpec act, FixedSpec acc);

  /// Narrow-weight configuration: weights fx<8,6>, acts fx<16,8>, acc fx<32,14>.
  static AccelNumerics v1();
  /// Repaired configuration: weights fx<16,8>, acts fx<16,8>, acc fx<32,16>.
  static AccelNumerics v2();
  /// Integer grid: weights fx<8,0>, acts fx<16,0>, acc fx<32,0>.
  static AccelNumerics exact_int();

  /// Accepts "v1", "v2", "exact" or "fx<w,f>,fx<w,f>,fx<w,f>" (weight, act, acc).
  static AccelNumerics parse(std::string_view text);
  std::string str() const;

  friend bool operator==(const AccelNumerics&, const AccelNumerics&) = default;
};

__extension__ using i128 = __int128;

int64_t quantize(double x, const FixedSpec& spec);

/// Throws OutOfRange when raw is outside the spec's integer range.
double dequantize(int64_t raw, const FixedSpec& spec);

/// Rescales an exact value held at `from_frac` fractional bits into `to`
/// (round-half-even on right shifts, then saturate).
int64_t requantize(i128 value, int from_frac, const FixedSpec& to);

/// Row-major integer tensor of raw fixed-point values.
struct RawTensor {
  Shape shape;
  std::vector<int64_t> data;

  RawTensor() = default;
  RawTensor(Shape s, std::vector<int64_t> d);

  int64_t at(std::initializer_list<int64_t> idx) const;
};

/// a[M,K] (act), w[N,K] (weight), b[N] (act) -> out[M,N] (act).
RawTensor fx_linear(const RawTensor& a, const RawTensor& w, const RawTensor& b, const AccelNumerics& num);

struct ConvAttrs {
  int64_t stride_h = 1;
  int64_t stride_w = 1;
  int64_t pad_h = 0;
  int64_t pad_w = 0;

  friend bool operator==(const ConvAttrs&, const ConvAttrs&) = default;
};

/// data[N,C,H,W] (act), weight[O,C,kh,kw] (weight) -> out[N,O,H',W'] (act).
/// Zero padding; cross-correlation; same accumulate/requantize contract as fx_linear.
RawTensor fx_conv2d(const RawTensor& data, const RawTensor& weight, const ConvAttrs& attrs,
                    const AccelNumerics& num);

/// Elementwise max(raw, 0).
RawTensor fx_relu(RawTensor t);

}  // namespace accelbridge::fx
