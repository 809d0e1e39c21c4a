#pragma once

// The two synthetic MMIO accelerators, FXLIN (linear and fused linear+ReLU)
// and FXCNN (direct conv2d), as ILA models with pluggable numerics.

#include "accelbridge/ila.hpp"
#include "accelbridge/numerics.hpp"
#include "accelbridge/tensor_ir.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace accelbridge::accel {

inline constexpr std::string_view kFxlin = "FXLIN";
inline constexpr std::string_view kFxcnn = "FXCNN";

// Shared register layout.
inline constexpr uint32_t kCfg0 = 0x0000'0010;
inline constexpr uint32_t kCfg1 = 0x0000'0014;
inline constexpr uint32_t kCfg2 = 0x0000'0018;
inline constexpr uint32_t kStart = 0x0000'0020;
inline constexpr uint32_t kWeightBase = 0x0001'0000;
inline constexpr uint32_t kInputBase = 0x0002'0000;
inline constexpr uint32_t kOutputBase = 0x0003'0000;
inline constexpr uint32_t kBiasBase = 0x0004'0000;  // FXLIN only
inline constexpr uint32_t kRegionBytes = 0x0001'0000;

// Every buffer holds this many 32-bit words.
inline constexpr unsigned kBufferAddrBits = 14;
inline constexpr int64_t kBufferWords = int64_t{1} << kBufferAddrBits;

// Element words carry the raw value sign-extended to this many bits.
inline constexpr int kWordBits = 16;

inline constexpr int64_t kLinMaxDim = 64;
inline constexpr int64_t kCnnMaxBatch = 4;
inline constexpr int64_t kCnnMaxChannels = 16;
inline constexpr int64_t kCnnMaxSpatial = 32;
inline constexpr int64_t kCnnMaxKernel = 7;
inline constexpr int64_t kCnnMaxStridePad = 255;

struct AcceleratorDef {
  std::string id;
  ila::IlaModel model;
  fx::AccelNumerics numerics;
};

/// Throws InvalidArgument when a weight or activation spec is wider than a word element.
AcceleratorDef build_fxlin(const fx::AccelNumerics& numerics);
AcceleratorDef build_fxcnn(const fx::AccelNumerics& numerics);

/// "FXLIN" or "FXCNN"; anything else throws InvalidArgument.
AcceleratorDef build_accelerator(std::string_view id, const fx::AccelNumerics& numerics);
std::vector<std::string> accelerator_ids();

bool fxlin_fits(int64_t m, int64_t k, int64_t n);
bool fxcnn_fits(const Shape& data, const Shape& weight, ir::IntPair stride, ir::IntPair pad);

/// Throws CapacityExceeded (or ShapeMismatch for malformed operands).
void check_capacity(const ir::OpAttrs& call, std::span<const Shape> args);

uint32_t encode_word(int64_t raw);
int64_t decode_word(uint32_t word, int width);

/// Quantize, run the fixed-point kernel, dequantize. Bit-identical to the
/// simulated accelerator by construction of both.
ir::TensorValue accel_oracle(const AcceleratorDef& def, const ir::OpAttrs& call,
                             const std::vector<ir::TensorValue>& args);

/// Markdown reference of the accelerator's registers and buffer regions.
std::string address_map_markdown(const AcceleratorDef& def);

}  // namespace accelbridge::accel
