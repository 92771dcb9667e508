#include "tkc/tensor.hpp"

#include <cmath>

namespace tkc {

int64_t scalar_width(ScalarBase b) {
  switch (b) {
    case ScalarBase::U8:
    case ScalarBase::I8:
      return 1;
    case ScalarBase::BF16:
      return 2;
    case ScalarBase::I32:
    case ScalarBase::F32:
      return 4;
    case ScalarBase::U64:
      return 8;
  }
  return 0;
}

bool scalar_is_float(ScalarBase b) { return b == ScalarBase::F32 || b == ScalarBase::BF16; }

bool scalar_is_signed(ScalarBase b) { return b == ScalarBase::I8 || b == ScalarBase::I32; }

const char* scalar_name(ScalarBase b) {
  switch (b) {
    case ScalarBase::U8: return "u8";
    case ScalarBase::I8: return "i8";
    case ScalarBase::I32: return "i32";
    case ScalarBase::U64: return "u64";
    case ScalarBase::F32: return "f32";
    case ScalarBase::BF16: return "bf16";
  }
  return "?";
}

ScalarBase parse_scalar_base(const std::string& s) {
  if (s == "u8") return ScalarBase::U8;
  if (s == "i8") return ScalarBase::I8;
  if (s == "i32") return ScalarBase::I32;
  if (s == "u64") return ScalarBase::U64;
  if (s == "f32") return ScalarBase::F32;
  if (s == "bf16") return ScalarBase::BF16;
  throw Error("unknown base type: " + s);
}

float bf16_to_f32(uint16_t bits) {
  uint32_t u = static_cast<uint32_t>(bits) << 16;
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

uint16_t f32_to_bf16(float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  if (std::isnan(f)) return static_cast<uint16_t>((u >> 16) | 0x0040);
  uint32_t rounding = 0x7fffu + ((u >> 16) & 1u);
  return static_cast<uint16_t>((u + rounding) >> 16);
}

int64_t TensorType::elem_count() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

bool TensorType::valid() const {
  for (int64_t d : shape)
    if (d < 1) return false;
  return true;
}

std::string TensorType::str() const {
  std::string s = scalar_name(base);
  s += '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  s += ']';
  return s;
}

TensorValue::TensorValue(TensorType t, std::vector<uint8_t> b) : type(std::move(t)), bytes(std::move(b)) {
  if (static_cast<int64_t>(bytes.size()) != type.byte_size())
    throw Error("value size mismatch for " + type.str() + ": got " + std::to_string(bytes.size()) +
                " bytes, want " + std::to_string(type.byte_size()));
}

uint64_t TensorValue::get_uint(int64_t i) const {
  int64_t w = scalar_width(type.base);
  uint64_t v = 0;
  std::memcpy(&v, bytes.data() + i * w, w);  // little-endian host
  return v;
}

int64_t TensorValue::get_int(int64_t i) const {
  uint64_t v = get_uint(i);
  switch (type.base) {
    case ScalarBase::I8: return static_cast<int8_t>(v);
    case ScalarBase::I32: return static_cast<int32_t>(v);
    default: return static_cast<int64_t>(v);
  }
}

void TensorValue::set_uint(int64_t i, uint64_t v) {
  int64_t w = scalar_width(type.base);
  std::memcpy(bytes.data() + i * w, &v, w);
}

float TensorValue::get_float(int64_t i) const {
  if (type.base == ScalarBase::BF16) {
    uint16_t h;
    std::memcpy(&h, bytes.data() + i * 2, 2);
    return bf16_to_f32(h);
  }
  float f;
  std::memcpy(&f, bytes.data() + i * 4, 4);
  return f;
}

void TensorValue::set_float(int64_t i, float v) {
  if (type.base == ScalarBase::BF16) {
    uint16_t h = f32_to_bf16(v);
    std::memcpy(bytes.data() + i * 2, &h, 2);
  } else {
    std::memcpy(bytes.data() + i * 4, &v, 4);
  }
}

TensorValue byte_flatten(const TensorValue& v) {
  return TensorValue(TensorType(ScalarBase::U8, {v.type.byte_size()}), v.bytes);
}

TensorValue byte_unflatten(const TensorType& t, const std::vector<uint8_t>& bytes) {
  if (static_cast<int64_t>(bytes.size()) != t.byte_size())
    throw Error("byte_unflatten: " + std::to_string(bytes.size()) + " bytes cannot form " + t.str());
  return TensorValue(t, bytes);
}

int64_t flat_index(const std::vector<int64_t>& shape, const std::vector<int64_t>& idx) {
  int64_t f = 0;
  for (size_t d = 0; d < shape.size(); ++d) f = f * shape[d] + idx[d];
  return f;
}

void next_index(const std::vector<int64_t>& shape, std::vector<int64_t>& idx) {
  for (int64_t d = static_cast<int64_t>(shape.size()) - 1; d >= 0; --d) {
    if (++idx[d] < shape[d]) return;
    idx[d] = 0;
  }
}

std::string hex_encode(const std::vector<uint8_t>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

std::vector<uint8_t> hex_decode(const std::string& s) {
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(std::string("bad hex digit: ") + c);
  };
  if (s.size() % 2) throw Error("odd hex string length");
  std::vector<uint8_t> out(s.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<uint8_t>(nib(s[2 * i]) << 4 | nib(s[2 * i + 1]));
  return out;
}

}  // namespace tkc
