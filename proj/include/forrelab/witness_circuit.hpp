#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bitvec.hpp"

namespace forrelab {

// Query format for the second oracle: a bit string is interpreted as an
// existentially quantified circuit over witness bits with oracle-gate leaves.
// The answer is 1 iff some witness assignment satisfies it; anything that
// fails to parse answers 0.
//
// Byte layout (bytes are the LSB-first packing of the query bits; trailing
// partial bytes and bytes after the last node are ignored but still count
// toward the query length):
//   [0]    magic 0xC5
//   [1]    witness bit count W, 0..16
//   [2..3] node count C (LE), 1..1024
//   then C node records, each:
//     op 0x00 CONST0 | 0x01 CONST1
//     op 0x02 WITNESS, u8 index < W
//     op 0x03 NOT,  u16 child
//     op 0x04 AND,  u8 arity, arity x u16 children
//     op 0x05 OR,   u8 arity, arity x u16 children
//     op 0x06 QUERY_A, u16 address length in bits, one symbol byte per bit
//     op 0x07 QUERY_B, same shape
//   children reference strictly earlier nodes; the last node is the output.
// Address symbol bytes: 0x00 / 0x01 literal bit, 0x40|i witness bit i.
//
// A query of total length l bits may only address the oracles on strings of
// length at most floor(sqrt(l)); the bound is checked syntactically before
// any evaluation, and a violating query is malformed as a whole.

constexpr uint8_t kAddrConst0 = 0x00;
constexpr uint8_t kAddrConst1 = 0x01;
constexpr uint8_t kAddrWitness = 0x40;  // ored with the witness index

struct WitnessNode {
  enum class Op : uint8_t {
    kConst0 = 0,
    kConst1 = 1,
    kWitness = 2,
    kNot = 3,
    kAnd = 4,
    kOr = 5,
    kQueryA = 6,
    kQueryB = 7,
  };
  Op op = Op::kConst0;
  uint8_t witness_index = 0;
  std::vector<uint16_t> children;
  std::vector<uint8_t> addr_symbols;
};

inline uint64_t isqrt_u64(uint64_t n) {
  uint64_t r = uint64_t(std::sqrt(double(n)));
  while (r > 0 && r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

struct WitnessCircuit {
  static constexpr uint8_t kMagic = 0xC5;
  static constexpr int kMaxWitnessBits = 16;
  static constexpr size_t kMaxNodes = 1024;

  uint8_t witness_bits = 0;
  std::vector<WitnessNode> nodes;

  // Strict structural parse; nullopt on any malformation. `query.size()` sets
  // the subquery budget floor(sqrt(l)).
  static std::optional<WitnessCircuit> parse(const BitVec& query) {
    std::vector<uint8_t> bytes;
    query.write_bytes(bytes);
    size_t usable = query.size() / 8;  // a trailing partial byte is ignored
    uint64_t max_addr_bits = isqrt_u64(query.size());

    size_t pos = 0;
    auto need = [&](size_t k) { return pos + k <= usable; };
    if (!need(4)) return std::nullopt;
    if (bytes[pos++] != kMagic) return std::nullopt;
    WitnessCircuit c;
    c.witness_bits = bytes[pos++];
    if (c.witness_bits > kMaxWitnessBits) return std::nullopt;
    size_t count = bytes[pos] | (size_t(bytes[pos + 1]) << 8);
    pos += 2;
    if (count < 1 || count > kMaxNodes) return std::nullopt;

    for (size_t i = 0; i < count; ++i) {
      if (!need(1)) return std::nullopt;
      uint8_t op = bytes[pos++];
      WitnessNode node;
      switch (op) {
        case 0:
        case 1:
          node.op = op ? WitnessNode::Op::kConst1 : WitnessNode::Op::kConst0;
          break;
        case 2: {
          if (!need(1)) return std::nullopt;
          uint8_t w = bytes[pos++];
          if (w >= c.witness_bits) return std::nullopt;
          node.op = WitnessNode::Op::kWitness;
          node.witness_index = w;
          break;
        }
        case 3: {
          if (!need(2)) return std::nullopt;
          uint16_t child = bytes[pos] | (uint16_t(bytes[pos + 1]) << 8);
          pos += 2;
          if (child >= i) return std::nullopt;
          node.op = WitnessNode::Op::kNot;
          node.children.push_back(child);
          break;
        }
        case 4:
        case 5: {
          if (!need(1)) return std::nullopt;
          uint8_t arity = bytes[pos++];
          if (!need(size_t(arity) * 2)) return std::nullopt;
          node.op = op == 4 ? WitnessNode::Op::kAnd : WitnessNode::Op::kOr;
          for (uint8_t a = 0; a < arity; ++a) {
            uint16_t child = bytes[pos] | (uint16_t(bytes[pos + 1]) << 8);
            pos += 2;
            if (child >= i) return std::nullopt;
            node.children.push_back(child);
          }
          break;
        }
        case 6:
        case 7: {
          if (!need(2)) return std::nullopt;
          uint16_t alen = bytes[pos] | (uint16_t(bytes[pos + 1]) << 8);
          pos += 2;
          if (alen > max_addr_bits) return std::nullopt;  // subquery budget
          if (!need(alen)) return std::nullopt;
          node.op = op == 6 ? WitnessNode::Op::kQueryA : WitnessNode::Op::kQueryB;
          for (uint16_t a = 0; a < alen; ++a) {
            uint8_t sym = bytes[pos++];
            if (sym != kAddrConst0 && sym != kAddrConst1 &&
                !(sym >= kAddrWitness && sym < kAddrWitness + c.witness_bits))
              return std::nullopt;
            node.addr_symbols.push_back(sym);
          }
          break;
        }
        default:
          return std::nullopt;
      }
      c.nodes.push_back(std::move(node));
    }
    return c;
  }

  std::vector<uint8_t> encode_bytes() const {
    require(nodes.size() >= 1 && nodes.size() <= kMaxNodes, "WitnessCircuit: bad node count");
    std::vector<uint8_t> out;
    out.push_back(kMagic);
    out.push_back(witness_bits);
    out.push_back(uint8_t(nodes.size() & 0xff));
    out.push_back(uint8_t(nodes.size() >> 8));
    for (const WitnessNode& n : nodes) {
      switch (n.op) {
        case WitnessNode::Op::kConst0: out.push_back(0); break;
        case WitnessNode::Op::kConst1: out.push_back(1); break;
        case WitnessNode::Op::kWitness:
          out.push_back(2);
          out.push_back(n.witness_index);
          break;
        case WitnessNode::Op::kNot:
          out.push_back(3);
          out.push_back(uint8_t(n.children[0] & 0xff));
          out.push_back(uint8_t(n.children[0] >> 8));
          break;
        case WitnessNode::Op::kAnd:
        case WitnessNode::Op::kOr:
          out.push_back(n.op == WitnessNode::Op::kAnd ? 4 : 5);
          require(n.children.size() <= 255, "WitnessCircuit: arity too large");
          out.push_back(uint8_t(n.children.size()));
          for (uint16_t c : n.children) {
            out.push_back(uint8_t(c & 0xff));
            out.push_back(uint8_t(c >> 8));
          }
          break;
        case WitnessNode::Op::kQueryA:
        case WitnessNode::Op::kQueryB:
          out.push_back(n.op == WitnessNode::Op::kQueryA ? 6 : 7);
          out.push_back(uint8_t(n.addr_symbols.size() & 0xff));
          out.push_back(uint8_t(n.addr_symbols.size() >> 8));
          for (uint8_t s : n.addr_symbols) out.push_back(s);
          break;
      }
    }
    return out;
  }

  // Encode as a query of exactly `pad_to_bits` bits (zero padded). With 0,
  // the natural byte length is used.
  BitVec encode(size_t pad_to_bits = 0) const {
    std::vector<uint8_t> bytes = encode_bytes();
    size_t natural = bytes.size() * 8;
    if (pad_to_bits == 0) pad_to_bits = natural;
    require(pad_to_bits >= natural, "WitnessCircuit::encode: padding below natural length");
    BitVec q(pad_to_bits);
    for (size_t i = 0; i < natural; ++i)
      q.set(i, (bytes[i / 8] >> (i % 8)) & 1);
    return q;
  }

  // Substitute witness bit j by a constant, both in WITNESS nodes and inside
  // query address symbols. Witness count is left unchanged so the encoded
  // header (and the enumeration space) keeps its shape.
  WitnessCircuit with_witness_bit(int j, bool b) const {
    WitnessCircuit out = *this;
    for (WitnessNode& n : out.nodes) {
      if (n.op == WitnessNode::Op::kWitness && n.witness_index == j)
        n = WitnessNode{b ? WitnessNode::Op::kConst1 : WitnessNode::Op::kConst0, 0, {}, {}};
      for (uint8_t& sym : n.addr_symbols)
        if (sym == (kAddrWitness | uint8_t(j))) sym = b ? kAddrConst1 : kAddrConst0;
    }
    return out;
  }

  BitVec resolve_address(const WitnessNode& n, uint64_t witness) const {
    BitVec addr(n.addr_symbols.size());
    for (size_t i = 0; i < n.addr_symbols.size(); ++i) {
      uint8_t s = n.addr_symbols[i];
      addr.set(i, s == kAddrConst1 ||
                      (s >= kAddrWitness && ((witness >> (s & 0x3f)) & 1)));
    }
    return addr;
  }

  // Evaluate under one witness assignment, with oracle callbacks.
  bool evaluate(uint64_t witness, const std::function<bool(const BitVec&)>& read_a,
                const std::function<bool(const BitVec&)>& query_b) const {
    std::vector<char> val(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) {
      const WitnessNode& n = nodes[i];
      char v = 0;
      switch (n.op) {
        case WitnessNode::Op::kConst0: v = 0; break;
        case WitnessNode::Op::kConst1: v = 1; break;
        case WitnessNode::Op::kWitness: v = (witness >> n.witness_index) & 1; break;
        case WitnessNode::Op::kNot: v = !val[n.children[0]]; break;
        case WitnessNode::Op::kAnd:
          v = 1;
          for (uint16_t c : n.children) v &= val[c];
          break;
        case WitnessNode::Op::kOr:
          v = 0;
          for (uint16_t c : n.children) v |= val[c];
          break;
        case WitnessNode::Op::kQueryA: v = read_a(resolve_address(n, witness)); break;
        case WitnessNode::Op::kQueryB: v = query_b(resolve_address(n, witness)); break;
      }
      val[i] = v;
    }
    return val.back();
  }

  // Existential value: true iff some witness satisfies the circuit.
  bool exists_witness(const std::function<bool(const BitVec&)>& read_a,
                      const std::function<bool(const BitVec&)>& query_b,
                      uint64_t* found = nullptr) const {
    uint64_t total = uint64_t(1) << witness_bits;
    for (uint64_t w = 0; w < total; ++w) {
      if (evaluate(w, read_a, query_b)) {
        if (found) *found = w;
        return true;
      }
    }
    return false;
  }
};

}  // namespace forrelab
