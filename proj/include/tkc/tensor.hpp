#ifndef TKC_TENSOR_HPP
#define TKC_TENSOR_HPP

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace tkc {

class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scalar basetypes. Byte widths: u8/i8 = 1, i32 = 4, u64 = 8, f32 = 4, bf16 = 2.
enum class ScalarBase : uint8_t { U8, I8, I32, U64, F32, BF16 };

int64_t scalar_width(ScalarBase b);
bool scalar_is_float(ScalarBase b);
bool scalar_is_signed(ScalarBase b);
const char* scalar_name(ScalarBase b);
ScalarBase parse_scalar_base(const std::string& s);  // throws Error on unknown name

// bf16 <-> f32: widen exactly, narrow with round-to-nearest-even.
float bf16_to_f32(uint16_t bits);
uint16_t f32_to_bf16(float f);

struct TensorType {
  ScalarBase base = ScalarBase::U8;
  std::vector<int64_t> shape;  // every dim >= 1; empty shape = 0-D scalar

  TensorType() = default;
  TensorType(ScalarBase b, std::vector<int64_t> s) : base(b), shape(std::move(s)) {}

  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t elem_count() const;
  int64_t byte_size() const { return elem_count() * scalar_width(base); }
  bool valid() const;

  bool operator==(const TensorType& o) const { return base == o.base && shape == o.shape; }
  bool operator!=(const TensorType& o) const { return !(*this == o); }

  std::string str() const;  // e.g. "bf16[64,64]"
};

// A tensor value: row-major little-endian bytes. Element accessors widen to
// int64/uint64/double so arithmetic lives in one place.
struct TensorValue {
  TensorType type;
  std::vector<uint8_t> bytes;

  TensorValue() = default;
  explicit TensorValue(TensorType t) : type(std::move(t)), bytes(type.byte_size(), 0) {}
  TensorValue(TensorType t, std::vector<uint8_t> b);

  int64_t elem_count() const { return type.elem_count(); }

  // Integer elements are read/written through uint64 with two's-complement
  // wraparound on store; get_int sign-extends for signed bases.
  uint64_t get_uint(int64_t i) const;
  int64_t get_int(int64_t i) const;
  void set_uint(int64_t i, uint64_t v);

  // Float elements (f32/bf16); bf16 stores round-to-nearest-even.
  float get_float(int64_t i) const;
  void set_float(int64_t i, float v);

  bool operator==(const TensorValue& o) const { return type == o.type && bytes == o.bytes; }
};

// bflat / bflat^-1 (both loss-free; bflat(t) has type u8[mem(t)]).
TensorValue byte_flatten(const TensorValue& v);
TensorValue byte_unflatten(const TensorType& t, const std::vector<uint8_t>& bytes);

// Row-major index helpers.
int64_t flat_index(const std::vector<int64_t>& shape, const std::vector<int64_t>& idx);
void next_index(const std::vector<int64_t>& shape, std::vector<int64_t>& idx);  // odometer step

std::string hex_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> hex_decode(const std::string& s);

}  // namespace tkc

#endif
