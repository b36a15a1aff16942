#include "prodehaze/seed.hpp"

#include <string>

namespace prodehaze {
namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  return splitmix64(root ^ fnv1a64(label));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index) {
  return derive_seed(root, std::string(label) + "/" + std::to_string(index));
}

ImageTensor Rng::normal_tensor(std::size_t h, std::size_t w, std::size_t c, double scale) {
  ImageTensor t(h, w, c);
  for (double& v : t.values()) v = scale * normal();
  return t;
}

ImageTensor Rng::uniform_tensor(std::size_t h, std::size_t w, std::size_t c, double lo,
                                double hi) {
  ImageTensor t(h, w, c);
  for (double& v : t.values()) v = uniform(lo, hi);
  return t;
}

}  // namespace prodehaze
