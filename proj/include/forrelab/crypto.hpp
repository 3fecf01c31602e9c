#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "oracle_world.hpp"

namespace forrelab {

// Cryptographic constructions over the oracle worlds. Honest parties and
// adversaries read the world only through a metered OracleAccess handle and
// recover hidden bits with the repeated Forrelation test; challenger-side
// scoring uses the plaintext tables directly. Each primitive comes in both
// flavors so tests can separate decoding noise from structural failures.

inline bool parity_dot(uint64_t a, uint64_t b) { return std::popcount(a & b) & 1; }

// ---- Keyed function (key oracle) ---------------------------------------------

inline bool prf_eval(OracleAccess& oracle, uint64_t k, uint64_t x, Rng& rng,
                     int repetitions = kDefaultDecodeReps) {
  require(oracle.kind() == WorldKind::kPrf, "prf_eval: wrong world kind");
  return oracle.decode_block(block_address_for(oracle.profile(), {Region::kPrf, k, x, 0}),
                             rng, repetitions);
}

inline bool prf_plain(const PrfWorld& w, uint64_t k, uint64_t x) {
  return w.pattern_bit(k, x);
}

// ---- Fixed-input one-way candidate -------------------------------------------
//
// Maps a key to its function's values on the nonzero inputs 1..width with
// width = min(3n, 2^n - 1). The full 3n-bit stretch needs n >= 4; smaller n
// runs with a narrower output and a correspondingly weaker collision bound.

inline int owf_output_bits(int n) {
  uint64_t domain = (uint64_t(1) << n) - 1;
  return int(std::min<uint64_t>(uint64_t(3 * n), domain));
}

inline BitVec owf_eval(OracleAccess& oracle, uint64_t k, Rng& rng,
                       int repetitions = kDefaultDecodeReps) {
  require(oracle.kind() == WorldKind::kPrf, "owf_eval: wrong world kind");
  int width = owf_output_bits(oracle.profile().n);
  BitVec out{size_t(width)};
  for (int i = 1; i <= width; ++i)
    out.set(i - 1, prf_eval(oracle, k, uint64_t(i), rng, repetitions));
  return out;
}

inline BitVec owf_plain(const PrfWorld& w, uint64_t k) {
  int width = owf_output_bits(w.profile().n);
  BitVec out{size_t(width)};
  for (int i = 1; i <= width; ++i) out.set(i - 1, w.pattern_bit(k, uint64_t(i)));
  return out;
}

// ---- Trapdoor function family -------------------------------------------------

struct TrapdoorKeyPair {
  uint64_t td = 0;
  uint64_t pk = 0;
};

// Honest key generation: a uniform trapdoor and its public key.
inline TrapdoorKeyPair towf_gen(const TrapdoorWorld& w, Rng& rng) {
  uint64_t td = rng.below(w.td_count());
  return TrapdoorKeyPair{td, w.g_plain(td)};
}

inline uint64_t towf_eval(OracleAccess& oracle, uint64_t pk, uint64_t x, Rng& rng,
                          int repetitions = kDefaultDecodeReps) {
  require(oracle.kind() == WorldKind::kTrapdoor, "towf_eval: wrong world kind");
  const ScaleProfile& p = oracle.profile();
  require(pk < (uint64_t(1) << (3 * p.n)), "towf_eval: bad public key");
  require(x < (uint64_t(1) << p.n), "towf_eval: bad input");
  uint64_t y = 0;
  for (int i = 0; i < 6 * p.n; ++i) {
    bool bit = oracle.decode_block(block_address_for(p, {Region::kF, pk, x, uint64_t(i)}),
                                   rng, repetitions);
    y |= uint64_t(bit) << i;
  }
  return y;
}

inline uint64_t towf_eval_plain(const TrapdoorWorld& w, uint64_t pk, uint64_t x) {
  return w.f_plain(pk, x);
}

struct InvertResult {
  bool found = false;
  uint64_t x = 0;
};

inline InvertResult towf_inv(OracleAccess& oracle, uint64_t td, uint64_t y, Rng& rng,
                             int repetitions = kDefaultDecodeReps) {
  require(oracle.kind() == WorldKind::kTrapdoor, "towf_inv: wrong world kind");
  const ScaleProfile& p = oracle.profile();
  require(td < (uint64_t(1) << p.n), "towf_inv: bad trapdoor");
  require(y < (uint64_t(1) << (6 * p.n)), "towf_inv: bad image point");
  if (!oracle.decode_block(block_address_for(p, {Region::kI, td, y, 0}), rng, repetitions))
    return {};
  InvertResult r;
  r.found = true;
  for (int i = 1; i <= p.n; ++i) {
    bool bit = oracle.decode_block(block_address_for(p, {Region::kI, td, y, uint64_t(i)}),
                                   rng, repetitions);
    r.x |= uint64_t(bit) << (i - 1);
  }
  return r;
}

inline InvertResult towf_inv_plain(const TrapdoorWorld& w, uint64_t td, uint64_t y) {
  uint64_t rec = w.i_record(td, y);
  if (!(rec & 1)) return {};
  return InvertResult{true, rec >> 1};
}

// ---- Bit encryption with a hardcore mask --------------------------------------
//
// Enc(pk, m): sample x and r, send (F(pk, x), r, <x,r> xor m).
// Dec(td, (y, r, c)): recover the least preimage of y and output <x,r> xor c;
// a missing preimage contributes an all-zeros x.

struct PkeCiphertext {
  uint64_t y = 0;
  uint64_t r = 0;
  bool mask = false;
};

inline PkeCiphertext pke_enc_with(OracleAccess& oracle, uint64_t pk, bool m, uint64_t x,
                                  uint64_t r, Rng& rng, int repetitions = kDefaultDecodeReps) {
  uint64_t y = towf_eval(oracle, pk, x, rng, repetitions);
  return PkeCiphertext{y, r, parity_dot(x, r) != m};
}

inline PkeCiphertext pke_enc(OracleAccess& oracle, uint64_t pk, bool m, Rng& rng,
                             int repetitions = kDefaultDecodeReps) {
  uint64_t xmax = uint64_t(1) << oracle.profile().n;
  uint64_t x = rng.below(xmax);
  uint64_t r = rng.below(xmax);
  return pke_enc_with(oracle, pk, m, x, r, rng, repetitions);
}

inline bool pke_dec(OracleAccess& oracle, uint64_t td, const PkeCiphertext& ct, Rng& rng,
                    int repetitions = kDefaultDecodeReps) {
  InvertResult inv = towf_inv(oracle, td, ct.y, rng, repetitions);
  uint64_t x = inv.found ? inv.x : 0;
  return parity_dot(x, ct.r) != ct.mask;
}

// Plaintext counterparts for separating decoding noise from structure.
inline PkeCiphertext pke_enc_plain(const TrapdoorWorld& w, uint64_t pk, bool m, uint64_t x,
                                   uint64_t r) {
  return PkeCiphertext{towf_eval_plain(w, pk, x), r, parity_dot(x, r) != m};
}

inline bool pke_dec_plain(const TrapdoorWorld& w, uint64_t td, const PkeCiphertext& ct) {
  InvertResult inv = towf_inv_plain(w, td, ct.y);
  uint64_t x = inv.found ? inv.x : 0;
  return parity_dot(x, ct.r) != ct.mask;
}

// ---- Key exchange --------------------------------------------------------------
//
// One side publishes a public key; the other picks an n-bit session key and
// sends it bit by bit under that key.

struct KeyExchangeResult {
  uint64_t pk = 0;
  uint64_t alice_key = 0;
  uint64_t bob_key = 0;
  bool agreed = false;
  std::vector<PkeCiphertext> transcript;
};

inline KeyExchangeResult key_exchange(const TrapdoorWorld& w, uint64_t session_seed,
                                      int repetitions = kDefaultDecodeReps,
                                      uint64_t query_cap = 0) {
  Rng alice(derive_seed(session_seed, {1}));
  Rng bob(derive_seed(session_seed, {2}));
  OracleAccess alice_oracle(w, query_cap);
  OracleAccess bob_oracle(w, query_cap);
  TrapdoorKeyPair kp = towf_gen(w, alice);
  KeyExchangeResult res;
  res.pk = kp.pk;
  for (int i = 0; i < w.n(); ++i) {
    bool bit = bob.bit();
    res.bob_key |= uint64_t(bit) << i;
    PkeCiphertext ct = pke_enc(bob_oracle, kp.pk, bit, bob, repetitions);
    res.transcript.push_back(ct);
    res.alice_key |= uint64_t(pke_dec(alice_oracle, kp.td, ct, alice, repetitions)) << i;
  }
  res.agreed = res.alice_key == res.bob_key;
  return res;
}

// ---- 1-of-2 oblivious transfer (semi-honest) ------------------------------------
//
// The receiver generates a keyed slot for its choice bit and a uniform fake
// key for the other slot; the sender encrypts each message under its slot.

struct OtResult {
  bool m0 = false, m1 = false;
  bool choice = false;
  bool received = false;
  bool correct = false;
  uint64_t pk0 = 0, pk1 = 0;
};

inline OtResult ot_run(const TrapdoorWorld& w, bool m0, bool m1, bool choice,
                       uint64_t session_seed, int repetitions = kDefaultDecodeReps,
                       uint64_t query_cap = 0) {
  Rng receiver(derive_seed(session_seed, {1}));
  Rng sender(derive_seed(session_seed, {2}));
  OracleAccess receiver_oracle(w, query_cap);
  OracleAccess sender_oracle(w, query_cap);
  TrapdoorKeyPair kp = towf_gen(w, receiver);
  uint64_t fake_pk = receiver.below(w.pk_count());
  OtResult res;
  res.m0 = m0;
  res.m1 = m1;
  res.choice = choice;
  res.pk0 = choice ? fake_pk : kp.pk;
  res.pk1 = choice ? kp.pk : fake_pk;
  PkeCiphertext ct0 = pke_enc(sender_oracle, res.pk0, m0, sender, repetitions);
  PkeCiphertext ct1 = pke_enc(sender_oracle, res.pk1, m1, sender, repetitions);
  res.received = pke_dec(receiver_oracle, kp.td, choice ? ct1 : ct0, receiver, repetitions);
  res.correct = res.received == (choice ? m1 : m0);
  return res;
}

// ---- Built-in inverters -----------------------------------------------------------

// Holds the matching trapdoor: a single inversion-region read.
struct TrapdoorInverter {
  uint64_t td = 0;
  int repetitions = kDefaultDecodeReps;
  InvertResult operator()(OracleAccess& oracle, uint64_t /*pk*/, uint64_t y, Rng& rng) const {
    return towf_inv(oracle, td, y, rng, repetitions);
  }
};

// No trapdoor: walk every candidate trapdoor's inversion row and keep the
// first preimage that evaluates back to y. Exponential in n; desk scale only.
struct ScanInverter {
  int repetitions = kDefaultDecodeReps;
  InvertResult operator()(OracleAccess& oracle, uint64_t pk, uint64_t y, Rng& rng) const {
    uint64_t tds = uint64_t(1) << oracle.profile().n;
    for (uint64_t td = 0; td < tds; ++td) {
      InvertResult r = towf_inv(oracle, td, y, rng, repetitions);
      if (r.found && towf_eval(oracle, pk, r.x, rng, repetitions) == y) return r;
    }
    return {};
  }
};

struct RandomGuessInverter {
  InvertResult operator()(OracleAccess& oracle, uint64_t /*pk*/, uint64_t /*y*/,
                          Rng& rng) const {
    return InvertResult{true, rng.below(uint64_t(1) << oracle.profile().n)};
  }
};

struct ZeroInverter {
  InvertResult operator()(OracleAccess&, uint64_t, uint64_t, Rng&) const {
    return InvertResult{true, 0};
  }
};

// Reads the challenger's plaintext: an upper bound no oracle-bound adversary
// can beat, used to sanity-check game plumbing.
struct PeekInverter {
  const TrapdoorWorld* world = nullptr;
  InvertResult operator()(OracleAccess&, uint64_t pk, uint64_t y, Rng&) const {
    for (uint64_t x = 0; x < world->x_count(); ++x)
      if (world->f_plain(pk, x) == y) return InvertResult{true, x};
    return {};
  }
};

// ---- One-call consistency probe ----------------------------------------------------
//
// Wraps any inverter into a test of a public key: sample a domain point,
// evaluate it, hand the inverter the image point exactly once, and accept
// iff the claimed preimage evaluates back to the same point. Keys from
// honest generation pass whenever the inverter works; keys outside the
// generator's image make every trapdoor-based inverter miss.

template <class Inverter>
bool image_consistency_probe(const TrapdoorWorld& w, uint64_t pk, Inverter&& invert,
                             Rng& rng, int repetitions = kDefaultDecodeReps,
                             uint64_t query_cap = 0) {
  OracleAccess oracle(w, query_cap);
  uint64_t x = rng.below(w.x_count());
  uint64_t y = towf_eval(oracle, pk, x, rng, repetitions);
  InvertResult r = invert(oracle, pk, y, rng);
  if (!r.found || r.x >= w.x_count()) return false;
  return towf_eval(oracle, pk, r.x, rng, repetitions) == y;
}

}  // namespace forrelab
