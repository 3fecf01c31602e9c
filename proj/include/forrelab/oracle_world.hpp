#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bitvec.hpp"
#include "forrelation.hpp"
#include "quantum.hpp"
#include "rng.hpp"
#include "truth_table.hpp"
#include "witness_circuit.hpp"

namespace forrelab {

// An oracle world is a long bit string addressed by structured strings. The
// string is organized as blocks of L = 2^{ell+1} bits; each block holds one
// Forrelation instance (f table then g table). A hidden plaintext pattern
// decides per block whether the instance comes from the forrelated sampler
// (pattern bit 1) or from the uniform distribution (pattern bit 0), so a
// block's pattern bit can be read back with the quantum Forrelation test but
// is invisible to low-sensitivity classical algorithms.
//
// Two world shapes are provided:
//   PrfWorld        address  k (n) | x (n) | pos (ell+1), pattern bit f_k(x)
//   TrapdoorWorld   address  tag (2) | fields | pos (ell+1) with regions
//     tag 00  G:  td (n) | i (w3n)          pattern bit i of G(td), 3n bits
//     tag 01  F:  pk (3n) | x (n) | i (w6n) pattern bit i of F(pk,x), 6n bits
//     tag 10  I:  td (n) | y (6n) | i (wn1) pattern bit i of I(td,y), n+1 bits
//   where wV = bit width of the index range V and I(td,y) packs a found flag
//   followed by the lexicographically least x with F(G(td),x) = y (zeros if
//   none). Every address of any other shape or length reads 0.
//
// Encodings are lazy and deterministic: block randomness is derived from the
// world seed, the block coordinates and a per-row salt, so worlds are cheap
// to copy and snapshots replay bit for bit. Resampling bumps the salt (and
// rewrites the plaintext), which redraws exactly the addressed blocks.

enum class SamplerKind : uint8_t {
  kUniform = 0,    // pattern bit 1 blocks also drawn uniform (baseline worlds)
  kGaussian = 1,
  kExact = 2,
};

enum class WorldKind : uint8_t { kPrf = 0, kTrapdoor = 1 };

constexpr int kDefaultDecodeReps = 64;
constexpr double kDefaultDecodeThreshold = 0.3;

namespace detail {

constexpr uint64_t kTagPrfRowPlain = 0x11;
constexpr uint64_t kTagPrfBlock = 0x12;
constexpr uint64_t kTagGPlain = 0x21;
constexpr uint64_t kTagFPlain = 0x22;
constexpr uint64_t kTagGBlock = 0x23;
constexpr uint64_t kTagFBlock = 0x24;
constexpr uint64_t kTagIBlock = 0x25;

inline int index_width(uint64_t count) {
  require(count >= 2, "index_width: degenerate range");
  return std::bit_width(count - 1);
}

inline uint64_t fresh_salt(uint64_t sub_seed) { return mix64(sub_seed) | 1; }

inline void put_u8(std::vector<uint8_t>& v, uint8_t x) { v.push_back(x); }
inline void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(uint8_t(x));
  v.push_back(uint8_t(x >> 8));
}
inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(uint8_t(x >> (8 * i)));
}
inline void put_u64(std::vector<uint8_t>& v, uint64_t x) {
  for (int i = 0; i < 8; ++i) v.push_back(uint8_t(x >> (8 * i)));
}

struct ByteReader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;
  uint8_t u8() {
    require(pos + 1 <= buf.size(), "snapshot: truncated");
    return buf[pos++];
  }
  uint16_t u16() { return uint16_t(u8()) | (uint16_t(u8()) << 8); }
  uint32_t u32() {
    uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= uint32_t(u8()) << (8 * i);
    return x;
  }
  uint64_t u64() {
    uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= uint64_t(u8()) << (8 * i);
    return x;
  }
};

inline uint64_t fnv64(const std::vector<uint8_t>& bytes, size_t n) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

struct ScaleProfile {
  int n = 2;
  int ell = 8;
  SamplerKind sampler = SamplerKind::kExact;
  bool exact_scale = false;  // pins ell to the asymptotically faithful value
  double eps = 0.0;          // Gaussian sampler strength; 0 means the default

  size_t block_bits() const { return size_t(2) << ell; }

  void validate(WorldKind kind) const {
    require(n >= 1, "profile: n must be >= 1");
    require(ell >= 1 && ell <= kMaxSamplerEll, "profile: ell out of range");
    require(eps >= 0.0 && eps <= 1.0, "profile: eps out of range");
    if (kind == WorldKind::kPrf) {
      require(n <= 12, "profile: n too large for the key oracle");
      if (exact_scale)
        require(ell == 4 * n - 1, "profile: exact-scale key oracle needs ell = 4n-1");
      // plaintext rows + addressable bit count stay within desk scale
      require(2 * n + ell + 1 <= 40, "profile: address space too large");
    } else {
      require(n <= 5, "profile: n too large for the trapdoor oracle");
      if (exact_scale)
        require(ell == 15 * n - 1, "profile: exact-scale trapdoor oracle needs ell = 15n-1");
    }
  }
};

// Shared per-world caches. Copies made by resampling get a fresh cache so a
// mutated copy can never serve stale derived values.
struct WorldCache {
  std::mutex mu;
  std::unordered_map<uint64_t, ForrelationInstance> instances;
  std::unordered_map<uint64_t, double> accept_prob;
  std::unordered_map<std::string, bool> b_answers;
};

// Which block of a world an address points into. `region` is world specific:
// kPrf worlds only use kRegionPrf, trapdoor worlds use the other three.
enum class Region : uint8_t { kPrf = 0, kG = 1, kF = 2, kI = 3 };

struct BlockRef {
  Region region = Region::kPrf;
  uint64_t a = 0;  // prf: k   G: td  F: pk  I: td
  uint64_t b = 0;  // prf: x   G: i   F: x   I: y
  uint64_t c = 0;  //          G: -   F: i   I: i
};

// Block address layout, computable from the profile alone so that callers
// holding only metered access can still address blocks.
inline BitVec block_address_for(const ScaleProfile& p, const BlockRef& ref) {
  int n = p.n;
  BitVec addr;
  switch (ref.region) {
    case Region::kPrf:
      require(ref.a < (uint64_t(1) << n) && ref.b < (uint64_t(1) << n),
              "block_address: out of range");
      addr.append_u64(ref.a, n);
      addr.append_u64(ref.b, n);
      break;
    case Region::kG:
      require(ref.a < (uint64_t(1) << n) && ref.b < uint64_t(3 * n),
              "block_address: out of range");
      addr.append_u64(0, 2);
      addr.append_u64(ref.a, n);
      addr.append_u64(ref.b, detail::index_width(3 * n));
      break;
    case Region::kF:
      require(ref.a < (uint64_t(1) << (3 * n)) && ref.b < (uint64_t(1) << n) &&
                  ref.c < uint64_t(6 * n),
              "block_address: out of range");
      addr.append_u64(1, 2);
      addr.append_u64(ref.a, 3 * n);
      addr.append_u64(ref.b, n);
      addr.append_u64(ref.c, detail::index_width(6 * n));
      break;
    case Region::kI:
      require(ref.a < (uint64_t(1) << n) && ref.b < (uint64_t(1) << (6 * n)) &&
                  ref.c < uint64_t(n + 1),
              "block_address: out of range");
      addr.append_u64(2, 2);
      addr.append_u64(ref.a, n);
      addr.append_u64(ref.b, 6 * n);
      addr.append_u64(ref.c, detail::index_width(n + 1));
      break;
  }
  return addr;
}

inline ForrelationInstance draw_block_instance(uint64_t seed, int ell, bool marked,
                                               SamplerKind sampler, double eps) {
  if (!marked) return sample_uniform_instance(ell, seed);
  switch (sampler) {
    case SamplerKind::kUniform: return sample_uniform_instance(ell, seed);
    case SamplerKind::kGaussian: return sample_gaussian_forrelated(ell, eps, seed);
    case SamplerKind::kExact: return sample_exact_forrelated(ell, seed);
  }
  throw PreconditionError("draw_block_instance: bad sampler");
}

namespace detail {

// Memoized recursive evaluation of the witness-circuit oracle on top of a
// concrete world. Subquery lengths shrink at least as fast as sqrt, so the
// depth guard is unreachable for any parseable query.
template <class World>
bool query_b_impl(const World& world, const BitVec& query, int depth) {
  if (depth > 16) throw std::logic_error("query_b: recursion too deep");
  WorldCache& cache = world.cache();
  std::string key = query.to_string();
  {
    std::lock_guard<std::mutex> lock(cache.mu);
    auto it = cache.b_answers.find(key);
    if (it != cache.b_answers.end()) return it->second;
  }
  bool answer = false;
  if (auto circuit = WitnessCircuit::parse(query)) {
    answer = circuit->exists_witness(
        [&world](const BitVec& a) { return world.read_a(a); },
        [&world, depth](const BitVec& q) { return query_b_impl(world, q, depth + 1); });
  }
  std::lock_guard<std::mutex> lock(cache.mu);
  cache.b_answers.emplace(std::move(key), answer);
  return answer;
}

}  // namespace detail

// ---- PRF-shaped world -------------------------------------------------------

class PrfWorld {
 public:
  static PrfWorld sample(const ScaleProfile& profile, uint64_t seed) {
    profile.validate(WorldKind::kPrf);
    uint64_t keys = uint64_t(1) << profile.n;
    require(keys * keys * (uint64_t(2) << profile.ell) <= (uint64_t(1) << 30),
            "profile: oracle exceeds the memory budget");
    PrfWorld w;
    w.profile_ = profile;
    w.seed_ = seed;
    Rng rng(derive_seed(seed, {detail::kTagPrfRowPlain}));
    w.rows_.reserve(keys);
    for (uint64_t k = 0; k < keys; ++k)
      w.rows_.push_back(TruthTable::uniform(profile.n, rng));
    w.row_salt_.assign(keys, 0);
    w.cache_ = std::make_shared<WorldCache>();
    return w;
  }

  const ScaleProfile& profile() const { return profile_; }
  uint64_t seed() const { return seed_; }
  uint64_t keys() const { return uint64_t(1) << profile_.n; }
  int addr_bits() const { return 2 * profile_.n + profile_.ell + 1; }
  int block_addr_bits() const { return 2 * profile_.n; }

  // Challenger-side plaintext: the function table of key k.
  const TruthTable& plain_row(uint64_t k) const {
    require(k < keys(), "plain_row: key out of range");
    return rows_[k];
  }
  bool pattern_bit(uint64_t k, uint64_t x) const {
    require(k < keys() && x < keys(), "pattern_bit: out of range");
    return rows_[k].get(x);
  }

  uint64_t row_salt(uint64_t k) const {
    require(k < keys(), "row_salt: key out of range");
    return row_salt_[k];
  }

  ForrelationInstance block_instance(const BlockRef& ref) const {
    require(ref.region == Region::kPrf && ref.a < keys() && ref.b < keys(),
            "block_instance: bad block");
    uint64_t key = block_key(ref);
    {
      std::lock_guard<std::mutex> lock(cache_->mu);
      auto it = cache_->instances.find(key);
      if (it != cache_->instances.end()) return it->second;
    }
    uint64_t s = derive_seed(seed_, {detail::kTagPrfBlock, ref.a, ref.b, row_salt_[ref.a]});
    ForrelationInstance inst = draw_block_instance(s, profile_.ell, pattern_bit(ref.a, ref.b),
                                                   profile_.sampler, profile_.eps);
    std::lock_guard<std::mutex> lock(cache_->mu);
    return cache_->instances.emplace(key, std::move(inst)).first->second;
  }

  double block_accept_probability(const BlockRef& ref) const {
    uint64_t key = block_key(ref);
    {
      std::lock_guard<std::mutex> lock(cache_->mu);
      auto it = cache_->accept_prob.find(key);
      if (it != cache_->accept_prob.end()) return it->second;
    }
    double p = forrelation_accept_probability(block_instance(ref));
    std::lock_guard<std::mutex> lock(cache_->mu);
    cache_->accept_prob.emplace(key, p);
    return p;
  }

  // Total oracle function: mis-shaped addresses read 0.
  bool read_a(const BitVec& addr) const {
    if (addr.size() != size_t(addr_bits())) return false;
    int n = profile_.n;
    uint64_t k = addr.slice_u64(0, n);
    uint64_t x = addr.slice_u64(n, n);
    uint64_t pos = addr.slice_u64(2 * n, profile_.ell + 1);
    return block_instance(BlockRef{Region::kPrf, k, x, 0}).table_bit(pos);
  }

  bool query_b(const BitVec& query) const { return detail::query_b_impl(*this, query, 0); }

  std::optional<BlockRef> parse_block_address(const BitVec& addr) const {
    if (addr.size() != size_t(block_addr_bits())) return std::nullopt;
    int n = profile_.n;
    return BlockRef{Region::kPrf, addr.slice_u64(0, n), addr.slice_u64(n, n), 0};
  }

  BitVec block_address(uint64_t k, uint64_t x) const {
    return block_address_for(profile_, BlockRef{Region::kPrf, k, x, 0});
  }

  BitVec a_address(uint64_t k, uint64_t x, uint64_t pos) const {
    require(pos < profile_.block_bits(), "a_address: position out of range");
    BitVec addr = block_address(k, x);
    addr.append_u64(pos, profile_.ell + 1);
    return addr;
  }

  // Replace the plaintext row of key k and redraw its encoded blocks. The
  // copy has identical content everywhere outside row k.
  PrfWorld resample_row(uint64_t k, const TruthTable& h, uint64_t sub_seed) const {
    require(k < keys(), "resample_row: key out of range");
    require(h.ell() == profile_.n, "resample_row: replacement row has wrong arity");
    PrfWorld w = *this;
    w.rows_[k] = h;
    w.row_salt_[k] = detail::fresh_salt(sub_seed);
    w.cache_ = std::make_shared<WorldCache>();
    return w;
  }

  WorldCache& cache() const { return *cache_; }

  std::vector<uint8_t> to_bytes() const {
    std::vector<uint8_t> out;
    serialize_header(out, WorldKind::kPrf, profile_, seed_);
    for (uint64_t k = 0; k < keys(); ++k) {
      detail::put_u64(out, row_salt_[k]);
      rows_[k].serialize(out);
    }
    detail::put_u64(out, detail::fnv64(out, out.size()));
    return out;
  }

  static PrfWorld from_bytes(const std::vector<uint8_t>& bytes) {
    detail::ByteReader r{bytes};
    ScaleProfile profile;
    uint64_t seed = 0;
    parse_header(r, WorldKind::kPrf, profile, seed);
    PrfWorld w;
    w.profile_ = profile;
    w.seed_ = seed;
    uint64_t keys = uint64_t(1) << profile.n;
    for (uint64_t k = 0; k < keys; ++k) {
      w.row_salt_.push_back(r.u64());
      TruthTable row = TruthTable::parse(bytes, r.pos);
      require(row.ell() == profile.n, "snapshot: row arity mismatch");
      w.rows_.push_back(std::move(row));
    }
    check_trailer(r);
    w.cache_ = std::make_shared<WorldCache>();
    return w;
  }

  static void serialize_header(std::vector<uint8_t>& out, WorldKind kind,
                               const ScaleProfile& p, uint64_t seed) {
    out.push_back('F');
    out.push_back('W');
    out.push_back('L');
    out.push_back('D');
    detail::put_u16(out, 1);  // format version
    detail::put_u8(out, uint8_t(kind));
    detail::put_u8(out, uint8_t(p.n));
    detail::put_u8(out, uint8_t(p.ell));
    detail::put_u8(out, uint8_t(p.sampler));
    detail::put_u8(out, p.exact_scale ? 1 : 0);
    uint64_t eps_bits = 0;
    static_assert(sizeof(double) == 8);
    std::memcpy(&eps_bits, &p.eps, 8);
    detail::put_u64(out, eps_bits);
    detail::put_u64(out, seed);
  }

  static void parse_header(detail::ByteReader& r, WorldKind expect, ScaleProfile& p,
                           uint64_t& seed) {
    require(r.u8() == 'F' && r.u8() == 'W' && r.u8() == 'L' && r.u8() == 'D',
            "snapshot: bad magic");
    require(r.u16() == 1, "snapshot: unsupported version");
    require(r.u8() == uint8_t(expect), "snapshot: wrong world kind");
    p.n = r.u8();
    p.ell = r.u8();
    uint8_t sampler = r.u8();
    require(sampler <= 2, "snapshot: bad sampler tag");
    p.sampler = SamplerKind(sampler);
    p.exact_scale = r.u8() != 0;
    uint64_t eps_bits = r.u64();
    std::memcpy(&p.eps, &eps_bits, 8);
    seed = r.u64();
    p.validate(expect);
  }

  static void check_trailer(detail::ByteReader& r) {
    uint64_t expect = detail::fnv64(r.buf, r.pos);
    require(r.u64() == expect, "snapshot: checksum mismatch");
    require(r.pos == r.buf.size(), "snapshot: trailing bytes");
  }

 private:
  uint64_t block_key(const BlockRef& ref) const { return (ref.a << 20) | ref.b; }

  ScaleProfile profile_;
  uint64_t seed_ = 0;
  std::vector<TruthTable> rows_;
  std::vector<uint64_t> row_salt_;
  std::shared_ptr<WorldCache> cache_;
};

// ---- Trapdoor-shaped world --------------------------------------------------
//
// Plaintext: G maps an n-bit trapdoor to a 3n-bit public key, F maps a
// (3n-bit public key, n-bit input) pair to a 6n-bit output, both sampled
// uniformly. I(td, y) is derived on demand as the least x with
// F(G(td), x) = y, packed as (found flag, x bits).

class TrapdoorWorld {
 public:
  static TrapdoorWorld sample(const ScaleProfile& profile, uint64_t seed) {
    profile.validate(WorldKind::kTrapdoor);
    TrapdoorWorld w;
    w.profile_ = profile;
    w.seed_ = seed;
    int n = profile.n;
    uint64_t tds = uint64_t(1) << n;
    uint64_t f_entries = uint64_t(1) << (4 * n);
    require(f_entries * 8 <= (uint64_t(1) << 30) / 8, "profile: oracle exceeds the memory budget");
    Rng grng(derive_seed(seed, {detail::kTagGPlain}));
    w.g_table_.reserve(tds);
    for (uint64_t td = 0; td < tds; ++td)
      w.g_table_.push_back(uint32_t(grng.below(uint64_t(1) << (3 * n))));
    Rng frng(derive_seed(seed, {detail::kTagFPlain}));
    w.f_table_.reserve(f_entries);
    for (uint64_t i = 0; i < f_entries; ++i)
      w.f_table_.push_back(frng.below(uint64_t(1) << (6 * n)));
    w.td_salt_.assign(tds, 0);
    w.cache_ = std::make_shared<WorldCache>();
    return w;
  }

  const ScaleProfile& profile() const { return profile_; }
  uint64_t seed() const { return seed_; }
  int n() const { return profile_.n; }
  uint64_t td_count() const { return uint64_t(1) << n(); }
  uint64_t pk_count() const { return uint64_t(1) << (3 * n()); }
  uint64_t x_count() const { return uint64_t(1) << n(); }
  uint64_t y_count() const { return uint64_t(1) << (6 * n()); }
  int g_index_count() const { return 3 * n(); }
  int f_index_count() const { return 6 * n(); }
  int i_index_count() const { return n() + 1; }

  // Challenger-side plaintext.
  uint64_t g_plain(uint64_t td) const {
    require(td < td_count(), "g_plain: out of range");
    return g_table_[td];
  }
  uint64_t f_plain(uint64_t pk, uint64_t x) const {
    require(pk < pk_count() && x < x_count(), "f_plain: out of range");
    return f_table_[(pk << n()) | x];
  }
  // Least preimage of y under F(G(td), .), if any.
  std::optional<uint64_t> i_plain(uint64_t td, uint64_t y) const {
    require(td < td_count() && y < y_count(), "i_plain: out of range");
    uint64_t pk = g_table_[td];
    for (uint64_t x = 0; x < x_count(); ++x)
      if (f_plain(pk, x) == y) return x;
    return std::nullopt;
  }
  // Packed inversion record: bit 0 found flag, bits 1..n the preimage.
  uint64_t i_record(uint64_t td, uint64_t y) const {
    std::optional<uint64_t> x = i_plain(td, y);
    return x ? (uint64_t(1) | (*x << 1)) : 0;
  }

  bool pattern_bit(const BlockRef& ref) const {
    switch (ref.region) {
      case Region::kG:
        require(ref.a < td_count() && int(ref.b) < g_index_count(), "pattern_bit: bad block");
        return (g_plain(ref.a) >> ref.b) & 1;
      case Region::kF:
        require(ref.a < pk_count() && ref.b < x_count() && int(ref.c) < f_index_count(),
                "pattern_bit: bad block");
        return (f_plain(ref.a, ref.b) >> ref.c) & 1;
      case Region::kI:
        require(ref.a < td_count() && ref.b < y_count() && int(ref.c) < i_index_count(),
                "pattern_bit: bad block");
        return (i_record(ref.a, ref.b) >> ref.c) & 1;
      default:
        throw PreconditionError("pattern_bit: bad region");
    }
  }

  ForrelationInstance block_instance(const BlockRef& ref) const {
    uint64_t key = block_key(ref);
    {
      std::lock_guard<std::mutex> lock(cache_->mu);
      auto it = cache_->instances.find(key);
      if (it != cache_->instances.end()) return it->second;
    }
    uint64_t s = 0;
    switch (ref.region) {
      case Region::kG:
        s = derive_seed(seed_, {detail::kTagGBlock, ref.a, ref.b, td_salt_[ref.a]});
        break;
      case Region::kF:
        s = derive_seed(seed_, {detail::kTagFBlock, ref.a, ref.b, ref.c, f_salt(ref.a, ref.b)});
        break;
      case Region::kI:
        s = derive_seed(seed_, {detail::kTagIBlock, ref.a, ref.b, ref.c, td_salt_[ref.a]});
        break;
      default:
        throw PreconditionError("block_instance: bad region");
    }
    ForrelationInstance inst =
        draw_block_instance(s, profile_.ell, pattern_bit(ref), profile_.sampler, profile_.eps);
    std::lock_guard<std::mutex> lock(cache_->mu);
    return cache_->instances.emplace(key, std::move(inst)).first->second;
  }

  double block_accept_probability(const BlockRef& ref) const {
    uint64_t key = block_key(ref);
    {
      std::lock_guard<std::mutex> lock(cache_->mu);
      auto it = cache_->accept_prob.find(key);
      if (it != cache_->accept_prob.end()) return it->second;
    }
    double p = forrelation_accept_probability(block_instance(ref));
    std::lock_guard<std::mutex> lock(cache_->mu);
    cache_->accept_prob.emplace(key, p);
    return p;
  }

  int g_block_addr_bits() const { return 2 + n() + detail::index_width(g_index_count()); }
  int f_block_addr_bits() const {
    return 2 + 3 * n() + n() + detail::index_width(f_index_count());
  }
  int i_block_addr_bits() const {
    return 2 + n() + 6 * n() + detail::index_width(i_index_count());
  }

  BitVec block_address(const BlockRef& ref) const {
    require(ref.region != Region::kPrf, "block_address: bad region");
    return block_address_for(profile_, ref);
  }

  BitVec a_address(const BlockRef& ref, uint64_t pos) const {
    require(pos < profile_.block_bits(), "a_address: position out of range");
    BitVec addr = block_address(ref);
    addr.append_u64(pos, profile_.ell + 1);
    return addr;
  }

  std::optional<BlockRef> parse_block_address(const BitVec& addr) const {
    if (addr.size() < 2) return std::nullopt;
    uint64_t tag = addr.slice_u64(0, 2);
    BlockRef ref;
    if (tag == 0 && addr.size() == size_t(g_block_addr_bits())) {
      ref.region = Region::kG;
      ref.a = addr.slice_u64(2, n());
      ref.b = addr.slice_u64(2 + n(), detail::index_width(g_index_count()));
      if (int(ref.b) >= g_index_count()) return std::nullopt;
      return ref;
    }
    if (tag == 1 && addr.size() == size_t(f_block_addr_bits())) {
      ref.region = Region::kF;
      ref.a = addr.slice_u64(2, 3 * n());
      ref.b = addr.slice_u64(2 + 3 * n(), n());
      ref.c = addr.slice_u64(2 + 4 * n(), detail::index_width(f_index_count()));
      if (int(ref.c) >= f_index_count()) return std::nullopt;
      return ref;
    }
    if (tag == 2 && addr.size() == size_t(i_block_addr_bits())) {
      ref.region = Region::kI;
      ref.a = addr.slice_u64(2, n());
      ref.b = addr.slice_u64(2 + n(), 6 * n());
      ref.c = addr.slice_u64(2 + 7 * n(), detail::index_width(i_index_count()));
      if (int(ref.c) >= i_index_count()) return std::nullopt;
      return ref;
    }
    return std::nullopt;
  }

  bool read_a(const BitVec& addr) const {
    int pos_bits = profile_.ell + 1;
    if (addr.size() < size_t(pos_bits) + 2) return false;
    BitVec block = addr.slice(0, addr.size() - pos_bits);
    std::optional<BlockRef> ref = parse_block_address(block);
    if (!ref) return false;
    uint64_t pos = addr.slice_u64(addr.size() - pos_bits, pos_bits);
    return block_instance(*ref).table_bit(pos);
  }

  bool query_b(const BitVec& query) const { return detail::query_b_impl(*this, query, 0); }

  // Point td's row at a chosen public key; its G row and its whole derived
  // inversion region re-encode, everything else is untouched.
  TrapdoorWorld resample_td_row(uint64_t td, uint64_t pk_star, uint64_t sub_seed) const {
    require(td < td_count(), "resample_td_row: out of range");
    require(pk_star < pk_count(), "resample_td_row: bad public key");
    TrapdoorWorld w = *this;
    w.g_table_[td] = uint32_t(pk_star);
    w.td_salt_[td] = detail::fresh_salt(sub_seed);
    w.cache_ = std::make_shared<WorldCache>();
    return w;
  }

  // Rewrite one F entry. Inversion blocks whose plaintext depends on this
  // entry re-encode through their pattern bits; their salts are unchanged.
  TrapdoorWorld resample_f_slice(uint64_t pk, uint64_t x, uint64_t y_star,
                                 uint64_t sub_seed) const {
    require(pk < pk_count() && x < x_count(), "resample_f_slice: out of range");
    require(y_star < y_count(), "resample_f_slice: bad output");
    TrapdoorWorld w = *this;
    w.f_table_[(pk << n()) | x] = y_star;
    w.f_salt_[(pk << n()) | x] = detail::fresh_salt(sub_seed);
    w.cache_ = std::make_shared<WorldCache>();
    return w;
  }

  WorldCache& cache() const { return *cache_; }

  std::vector<uint8_t> to_bytes() const {
    std::vector<uint8_t> out;
    PrfWorld::serialize_header(out, WorldKind::kTrapdoor, profile_, seed_);
    for (uint64_t td = 0; td < td_count(); ++td) {
      detail::put_u64(out, td_salt_[td]);
      detail::put_u32(out, g_table_[td]);
    }
    for (uint64_t i = 0; i < (uint64_t(1) << (4 * n())); ++i)
      detail::put_u64(out, f_table_[i]);
    std::vector<std::pair<uint64_t, uint64_t>> salts(f_salt_.begin(), f_salt_.end());
    std::sort(salts.begin(), salts.end());
    detail::put_u64(out, salts.size());
    for (const auto& [idx, salt] : salts) {
      detail::put_u64(out, idx);
      detail::put_u64(out, salt);
    }
    detail::put_u64(out, detail::fnv64(out, out.size()));
    return out;
  }

  static TrapdoorWorld from_bytes(const std::vector<uint8_t>& bytes) {
    detail::ByteReader r{bytes};
    ScaleProfile profile;
    uint64_t seed = 0;
    PrfWorld::parse_header(r, WorldKind::kTrapdoor, profile, seed);
    TrapdoorWorld w;
    w.profile_ = profile;
    w.seed_ = seed;
    int n = profile.n;
    for (uint64_t td = 0; td < (uint64_t(1) << n); ++td) {
      w.td_salt_.push_back(r.u64());
      uint32_t g = r.u32();
      require(g < (uint64_t(1) << (3 * n)), "snapshot: bad G entry");
      w.g_table_.push_back(g);
    }
    for (uint64_t i = 0; i < (uint64_t(1) << (4 * n)); ++i) {
      uint64_t f = r.u64();
      require(f < (uint64_t(1) << (6 * n)), "snapshot: bad F entry");
      w.f_table_.push_back(f);
    }
    uint64_t salt_count = r.u64();
    require(salt_count <= (uint64_t(1) << (4 * n)), "snapshot: bad salt count");
    uint64_t prev = 0;
    for (uint64_t i = 0; i < salt_count; ++i) {
      uint64_t idx = r.u64();
      require(idx < (uint64_t(1) << (4 * n)), "snapshot: bad salt index");
      require(i == 0 || idx > prev, "snapshot: salt indices not increasing");
      prev = idx;
      w.f_salt_[idx] = r.u64();
    }
    PrfWorld::check_trailer(r);
    w.cache_ = std::make_shared<WorldCache>();
    return w;
  }

 private:
  uint64_t f_salt(uint64_t pk, uint64_t x) const {
    auto it = f_salt_.find((pk << n()) | x);
    return it == f_salt_.end() ? 0 : it->second;
  }

  uint64_t block_key(const BlockRef& ref) const {
    switch (ref.region) {
      case Region::kG: return (uint64_t(1) << 62) | (ref.a << 8) | ref.b;
      case Region::kF: return (uint64_t(2) << 62) | (ref.a << 26) | (ref.b << 8) | ref.c;
      case Region::kI: return (uint64_t(3) << 62) | (ref.a << 40) | (ref.b << 8) | ref.c;
      default: throw PreconditionError("block_key: bad region");
    }
  }

  ScaleProfile profile_;
  uint64_t seed_ = 0;
  std::vector<uint32_t> g_table_;
  std::vector<uint64_t> f_table_;
  std::vector<uint64_t> td_salt_;
  std::unordered_map<uint64_t, uint64_t> f_salt_;
  std::shared_ptr<WorldCache> cache_;
};

// ---- Decoding and metered access --------------------------------------------

// Reads a block's hidden pattern bit by running the repeated Forrelation test
// against its encoded instance. Matches quantum_forrelation_test draw for
// draw, with the block's acceptance probability served from the world cache.
template <class World>
bool decode_block_bit(const World& world, const BlockRef& ref, Rng& rng,
                      int repetitions = kDefaultDecodeReps,
                      double threshold = kDefaultDecodeThreshold) {
  return repeated_threshold_test(world.block_accept_probability(ref), repetitions, threshold,
                                 rng);
}

class QueryCapExceeded : public std::runtime_error {
 public:
  explicit QueryCapExceeded(const std::string& what) : std::runtime_error(what) {}
};

// Metered oracle handle. All adversary-side access flows through one of
// these; the challenger-side plaintext never does. Costs: one per direct
// read or witness query, 2 * repetitions per decode (the test circuit makes
// two oracle calls per repetition). cap 0 means unmetered.
class OracleAccess {
 public:
  explicit OracleAccess(const PrfWorld& w, uint64_t cap = 0) : prf_(&w), cap_(cap) {}
  explicit OracleAccess(const TrapdoorWorld& w, uint64_t cap = 0) : td_(&w), cap_(cap) {}

  bool read_a(const BitVec& addr) {
    charge(1);
    ++a_reads_;
    return prf_ ? prf_->read_a(addr) : td_->read_a(addr);
  }

  bool query_b(const BitVec& query) {
    charge(1);
    ++b_queries_;
    return prf_ ? prf_->query_b(query) : td_->query_b(query);
  }

  bool decode_block(const BitVec& block_addr, Rng& rng, int repetitions = kDefaultDecodeReps,
                    double threshold = kDefaultDecodeThreshold) {
    require(repetitions >= 1, "decode_block: repetitions must be >= 1");
    charge(uint64_t(2) * uint64_t(repetitions));
    ++decodes_;
    if (prf_) {
      std::optional<BlockRef> ref = prf_->parse_block_address(block_addr);
      require(ref.has_value(), "decode_block: unaddressable block");
      return decode_block_bit(*prf_, *ref, rng, repetitions, threshold);
    }
    std::optional<BlockRef> ref = td_->parse_block_address(block_addr);
    require(ref.has_value(), "decode_block: unaddressable block");
    return decode_block_bit(*td_, *ref, rng, repetitions, threshold);
  }

  uint64_t a_reads() const { return a_reads_; }
  uint64_t b_queries() const { return b_queries_; }
  uint64_t decodes() const { return decodes_; }
  uint64_t total_cost() const { return total_cost_; }
  uint64_t cap() const { return cap_; }

  WorldKind kind() const { return prf_ ? WorldKind::kPrf : WorldKind::kTrapdoor; }
  const ScaleProfile& profile() const { return prf_ ? prf_->profile() : td_->profile(); }

 private:
  void charge(uint64_t c) {
    if (cap_ != 0 && total_cost_ + c > cap_)
      throw QueryCapExceeded("oracle query cap exceeded");
    total_cost_ += c;
  }

  const PrfWorld* prf_ = nullptr;
  const TrapdoorWorld* td_ = nullptr;
  uint64_t cap_ = 0;
  uint64_t total_cost_ = 0;
  uint64_t a_reads_ = 0;
  uint64_t b_queries_ = 0;
  uint64_t decodes_ = 0;
};

// ---- Witness search through the oracles --------------------------------------

struct WitnessSearchResult {
  bool satisfiable = false;
  uint64_t witness = 0;
  bool verified = false;
};

// Finds a satisfying witness with 1 + W existential queries by substituting
// one witness bit at a time (if the zero-substitution is unsatisfiable the
// one-substitution must hold), then checks the result by direct evaluation.
// `oracle` needs read_a and query_b; a world or an OracleAccess both fit.
template <class Oracle>
WitnessSearchResult np_find_witness(Oracle& oracle, const WitnessCircuit& base,
                                    size_t pad_to_bits = 0) {
  if (pad_to_bits == 0) pad_to_bits = base.encode_bytes().size() * 8;
  WitnessSearchResult result;
  if (!oracle.query_b(base.encode(pad_to_bits))) return result;
  result.satisfiable = true;
  WitnessCircuit cur = base;
  for (int j = 0; j < base.witness_bits; ++j) {
    WitnessCircuit zero = cur.with_witness_bit(j, 0);
    if (oracle.query_b(zero.encode(pad_to_bits))) {
      cur = std::move(zero);
    } else {
      cur = cur.with_witness_bit(j, 1);
      result.witness |= uint64_t(1) << j;
    }
  }
  result.verified =
      base.evaluate(result.witness, [&](const BitVec& a) { return oracle.read_a(a); },
                    [&](const BitVec& q) { return oracle.query_b(q); });
  return result;
}

// Convenience for file snapshots.
inline void save_world_bytes(const std::vector<uint8_t>& bytes, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "save: cannot open file");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  require(out.good(), "save: write failed");
}

inline std::vector<uint8_t> load_world_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load: cannot open file");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

inline WorldKind snapshot_kind(const std::vector<uint8_t>& bytes) {
  require(bytes.size() >= 7, "snapshot: truncated");
  require(bytes[0] == 'F' && bytes[1] == 'W' && bytes[2] == 'L' && bytes[3] == 'D',
          "snapshot: bad magic");
  uint8_t kind = bytes[6];
  require(kind <= 1, "snapshot: bad world kind");
  return WorldKind(kind);
}

}  // namespace forrelab
