#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace forrelab {

// Thrown when a caller violates a documented precondition. The CLI maps this
// to exit code 2; everything else unexpected maps to exit code 1.
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw PreconditionError(msg);
}

// Dynamic bit string. Bit i lives in word i/64 at position i%64 (LSB-first).
// Byte serialization is LSB-first within each byte, so bit i of the stream is
// byte i/8, bit i%8.
class BitVec {
 public:
  BitVec() : nbits_(0) {}
  explicit BitVec(size_t nbits) : nbits_(nbits), words_((nbits + 63) / 64, 0) {}

  static BitVec from_string(const std::string& s) {
    BitVec v(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '1') v.set(i, true);
      else if (s[i] != '0') throw PreconditionError("BitVec::from_string: not a 01 string");
    }
    return v;
  }

  // Low `width` bits of value, bit j of value -> position j.
  static BitVec from_u64(uint64_t value, size_t width) {
    if (width > 64) throw PreconditionError("BitVec::from_u64: width > 64");
    BitVec v(width);
    if (width) v.words_[0] = width == 64 ? value : (value & ((uint64_t(1) << width) - 1));
    return v;
  }

  size_t size() const { return nbits_; }
  bool empty() const { return nbits_ == 0; }

  bool get(size_t i) const {
    check_index(i);
    return (words_[i >> 6] >> (i & 63)) & 1;
  }

  void set(size_t i, bool b) {
    check_index(i);
    uint64_t mask = uint64_t(1) << (i & 63);
    if (b) words_[i >> 6] |= mask;
    else words_[i >> 6] &= ~mask;
  }

  // Bits [pos, pos+width) as an integer, bit pos+j -> bit j. width <= 64.
  uint64_t slice_u64(size_t pos, size_t width) const {
    if (width > 64) throw PreconditionError("BitVec::slice_u64: width > 64");
    if (pos + width > nbits_) throw PreconditionError("BitVec::slice_u64: out of range");
    uint64_t out = 0;
    for (size_t j = 0; j < width; ++j) out |= uint64_t(get(pos + j)) << j;
    return out;
  }

  void set_slice_u64(size_t pos, size_t width, uint64_t value) {
    if (width > 64) throw PreconditionError("BitVec::set_slice_u64: width > 64");
    if (pos + width > nbits_) throw PreconditionError("BitVec::set_slice_u64: out of range");
    for (size_t j = 0; j < width; ++j) set(pos + j, (value >> j) & 1);
  }

  void append_bit(bool b) {
    if ((nbits_ & 63) == 0) words_.push_back(0);
    ++nbits_;
    set(nbits_ - 1, b);
  }

  void append_u64(uint64_t value, size_t width) {
    for (size_t j = 0; j < width; ++j) append_bit((value >> j) & 1);
  }

  void append(const BitVec& other) {
    for (size_t i = 0; i < other.size(); ++i) append_bit(other.get(i));
  }

  BitVec slice(size_t pos, size_t width) const {
    if (pos + width > nbits_) throw PreconditionError("BitVec::slice: out of range");
    BitVec out(width);
    for (size_t j = 0; j < width; ++j) out.set(j, get(pos + j));
    return out;
  }

  size_t popcount() const {
    size_t c = 0;
    for (size_t i = 0; i < nbits_; ++i) c += get(i);
    return c;
  }

  std::string to_string() const {
    std::string s(nbits_, '0');
    for (size_t i = 0; i < nbits_; ++i) if (get(i)) s[i] = '1';
    return s;
  }

  // Hex with bit 0 as the most significant bit of the first nibble; the last
  // nibble is zero-padded on the right. This is the CLI/wire convention.
  std::string to_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (size_t i = 0; i < nbits_; i += 4) {
      unsigned nib = 0;
      for (size_t j = 0; j < 4 && i + j < nbits_; ++j)
        nib |= unsigned(get(i + j)) << (3 - j);
      s.push_back(digits[nib]);
    }
    return s;
  }

  static BitVec from_hex(size_t nbits, const std::string& hex) {
    if (hex.size() != (nbits + 3) / 4)
      throw PreconditionError("BitVec::from_hex: length mismatch");
    BitVec v(nbits);
    for (size_t i = 0; i < nbits; ++i) {
      char c = hex[i / 4];
      unsigned nib;
      if (c >= '0' && c <= '9') nib = c - '0';
      else if (c >= 'a' && c <= 'f') nib = 10 + (c - 'a');
      else if (c >= 'A' && c <= 'F') nib = 10 + (c - 'A');
      else throw PreconditionError("BitVec::from_hex: bad digit");
      v.set(i, (nib >> (3 - (i & 3))) & 1);
    }
    return v;
  }

  void write_bytes(std::vector<uint8_t>& out) const {
    size_t nbytes = (nbits_ + 7) / 8;
    for (size_t b = 0; b < nbytes; ++b) {
      uint8_t byte = 0;
      for (size_t j = 0; j < 8 && b * 8 + j < nbits_; ++j)
        byte |= uint8_t(get(b * 8 + j)) << j;
      out.push_back(byte);
    }
  }

  // Reads ceil(nbits/8) bytes starting at `pos`, advancing it.
  static BitVec read_bytes(const std::vector<uint8_t>& in, size_t& pos, size_t nbits) {
    size_t nbytes = (nbits + 7) / 8;
    if (pos + nbytes > in.size()) throw PreconditionError("BitVec::read_bytes: truncated");
    BitVec v(nbits);
    for (size_t i = 0; i < nbits; ++i)
      v.set(i, (in[pos + i / 8] >> (i % 8)) & 1);
    pos += nbytes;
    return v;
  }

  bool operator==(const BitVec& o) const {
    if (nbits_ != o.nbits_) return false;
    for (size_t i = 0; i < words_.size(); ++i)
      if (words_[i] != o.words_[i]) return false;
    return true;
  }
  bool operator!=(const BitVec& o) const { return !(*this == o); }

  uint64_t fnv_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto eat = [&h](uint64_t x) {
      for (int b = 0; b < 8; ++b) {
        h ^= (x >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    };
    eat(nbits_);
    for (uint64_t w : words_) eat(w);
    return h;
  }

 private:
  void check_index(size_t i) const {
    if (i >= nbits_) throw PreconditionError("BitVec: index out of range");
  }

  size_t nbits_;
  std::vector<uint64_t> words_;
};

}  // namespace forrelab
