#include "dense/serialize.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace dense {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw std::runtime_error("tensor blob truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

constexpr std::uint32_t kMaxRank = 16;

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw std::runtime_error("failed writing tensor blob");
}

Tensor read_tensor(std::istream& in) {
  const std::uint32_t rank = get_u32(in);
  if (rank == 0 || rank > kMaxRank) throw std::runtime_error("tensor blob has invalid rank");
  Shape shape(rank);
  for (auto& e : shape) e = get_u32(in);
  std::vector<float> data(shape_numel(shape));
  for (auto& v : data) v = std::bit_cast<float>(get_u32(in));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace dense
