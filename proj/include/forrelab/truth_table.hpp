#pragma once

#include <cstdint>
#include <vector>

#include "bitvec.hpp"
#include "rng.hpp"

namespace forrelab {

// Boolean function {0,1}^ell -> {0,1} as a packed table indexed by the input
// read as an integer (input bit j is bit j of the index).
class TruthTable {
 public:
  static constexpr int kMaxEll = 24;

  TruthTable() : ell_(0), bits_(1) {}

  explicit TruthTable(int ell) : ell_(checked(ell)), bits_(size_t(1) << ell) {}

  static TruthTable uniform(int ell, Rng& rng) {
    TruthTable t(ell);
    for (size_t x = 0; x < t.domain_size(); ++x) t.set(x, rng.bit());
    return t;
  }

  static TruthTable from_string(const std::string& s) {
    int ell = 0;
    while ((size_t(1) << ell) < s.size()) ++ell;
    require((size_t(1) << ell) == s.size(), "TruthTable::from_string: size not a power of two");
    TruthTable t(ell);
    for (size_t x = 0; x < s.size(); ++x) {
      require(s[x] == '0' || s[x] == '1', "TruthTable::from_string: not a 01 string");
      t.set(x, s[x] == '1');
    }
    return t;
  }

  int ell() const { return ell_; }
  size_t domain_size() const { return size_t(1) << ell_; }

  bool get(size_t x) const { return bits_.get(x); }
  void set(size_t x, bool b) { bits_.set(x, b); }

  const BitVec& bits() const { return bits_; }

  // (-1)^f as integers, for transform work.
  std::vector<int64_t> signs() const {
    std::vector<int64_t> v(domain_size());
    for (size_t x = 0; x < v.size(); ++x) v[x] = get(x) ? -1 : 1;
    return v;
  }

  // 1 byte ell, then the table LSB-first packed into bytes.
  void serialize(std::vector<uint8_t>& out) const {
    out.push_back(uint8_t(ell_));
    bits_.write_bytes(out);
  }

  static TruthTable parse(const std::vector<uint8_t>& in, size_t& pos) {
    require(pos < in.size(), "TruthTable::parse: truncated");
    int ell = in[pos++];
    require(ell <= kMaxEll, "TruthTable::parse: ell too large");
    TruthTable t(ell);
    t.bits_ = BitVec::read_bytes(in, pos, size_t(1) << ell);
    return t;
  }

  bool operator==(const TruthTable& o) const { return ell_ == o.ell_ && bits_ == o.bits_; }
  bool operator!=(const TruthTable& o) const { return !(*this == o); }

 private:
  static int checked(int ell) {
    require(ell >= 0 && ell <= kMaxEll, "TruthTable: ell out of range");
    return ell;
  }

  int ell_;
  BitVec bits_;
};

// In-place Walsh-Hadamard butterfly (unnormalized): v <- H v with
// H[x][y] = (-1)^{x.y}. Applying twice multiplies by 2^ell.
template <typename T>
inline void fwht_inplace(std::vector<T>& v) {
  size_t n = v.size();
  require(n != 0 && (n & (n - 1)) == 0, "fwht_inplace: size must be a power of two");
  for (size_t h = 1; h < n; h <<= 1) {
    for (size_t i = 0; i < n; i += h << 1) {
      for (size_t j = i; j < i + h; ++j) {
        T a = v[j], b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

// Unnormalized spectrum of (-1)^f: hat(y) = sum_x (-1)^{f(x) + x.y}.
inline std::vector<int64_t> walsh_spectrum(const TruthTable& f) {
  std::vector<int64_t> v = f.signs();
  fwht_inplace(v);
  return v;
}

}  // namespace forrelab
