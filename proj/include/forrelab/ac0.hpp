#pragma once

#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bitvec.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace forrelab {

// Unbounded fan-in AND/OR/NOT circuits as a topologically ordered DAG.
// Node ids: 0..num_inputs-1 are the inputs, gate j is node num_inputs+j.
// Conventions: AND of nothing is 1, OR of nothing is 0 (constants), NOT has
// exactly one fanin. size() counts AND/OR gates with at least one fanin;
// NOT gates and constants are free, matching the literal-input circuit model.
// depth() counts AND/OR alternations along paths with NOT transparent
// (a NOT between same-typed gates still alternates, via De Morgan).
enum class GateType : uint8_t { kAnd, kOr, kNot };

struct Gate {
  GateType type;
  std::vector<uint32_t> fanin;
};

class Ac0Circuit {
 public:
  explicit Ac0Circuit(uint32_t num_inputs) : num_inputs_(num_inputs), output_(0) {
    require(num_inputs >= 1, "Ac0Circuit: need at least one input");
  }

  uint32_t num_inputs() const { return num_inputs_; }
  uint32_t num_nodes() const { return num_inputs_ + uint32_t(gates_.size()); }
  const std::vector<Gate>& gates() const { return gates_; }
  uint32_t output() const { return output_; }

  uint32_t add_gate(GateType type, std::vector<uint32_t> fanin) {
    for (uint32_t ref : fanin)
      require(ref < num_nodes(), "Ac0Circuit::add_gate: fanin must reference an earlier node");
    if (type == GateType::kNot)
      require(fanin.size() == 1, "Ac0Circuit::add_gate: NOT takes exactly one fanin");
    gates_.push_back(Gate{type, std::move(fanin)});
    return num_nodes() - 1;
  }

  void set_output(uint32_t node) {
    require(node < num_nodes(), "Ac0Circuit::set_output: no such node");
    output_ = node;
  }

  bool evaluate(const BitVec& input) const {
    require(input.size() == num_inputs_, "Ac0Circuit::evaluate: input length mismatch");
    std::vector<char> val(num_nodes());
    for (uint32_t i = 0; i < num_inputs_; ++i) val[i] = input.get(i);
    for (size_t j = 0; j < gates_.size(); ++j) {
      const Gate& g = gates_[j];
      char v;
      switch (g.type) {
        case GateType::kAnd:
          v = 1;
          for (uint32_t r : g.fanin) v &= val[r];
          break;
        case GateType::kOr:
          v = 0;
          for (uint32_t r : g.fanin) v |= val[r];
          break;
        default:
          v = !val[g.fanin[0]];
      }
      val[num_inputs_ + j] = v;
    }
    return val[output_];
  }

  // AND/OR gates with at least one fanin.
  size_t size() const {
    size_t s = 0;
    for (const Gate& g : gates_) s += g.type != GateType::kNot && !g.fanin.empty();
    return s;
  }

  int depth() const {
    // Per node: alternation depth and the effective root type as seen through
    // NOT chains (kNot value means "no type": input or constant).
    std::vector<int> d(num_nodes(), 0);
    std::vector<GateType> eff(num_nodes(), GateType::kNot);
    for (size_t j = 0; j < gates_.size(); ++j) {
      uint32_t id = num_inputs_ + uint32_t(j);
      const Gate& g = gates_[j];
      if (g.type == GateType::kNot) {
        uint32_t c = g.fanin[0];
        d[id] = d[c];
        eff[id] = eff[c] == GateType::kAnd   ? GateType::kOr
                  : eff[c] == GateType::kOr  ? GateType::kAnd
                                             : GateType::kNot;
        continue;
      }
      if (g.fanin.empty()) continue;  // constant
      int best = 0;
      for (uint32_t c : g.fanin) {
        int contrib = eff[c] == g.type ? d[c] : d[c] + 1;
        if (contrib > best) best = contrib;
      }
      d[id] = best;
      eff[id] = g.type;
    }
    return d[output_];
  }

  // Netlist text form:
  //   # comment
  //   inputs N
  //   <id> AND|OR|NOT <fanin ids...>
  //   output <id>
  // Gate ids must be consecutive starting at N; fanins reference earlier nodes.
  std::string to_netlist() const {
    std::ostringstream os;
    os << "inputs " << num_inputs_ << "\n";
    for (size_t j = 0; j < gates_.size(); ++j) {
      const Gate& g = gates_[j];
      os << (num_inputs_ + j) << ' '
         << (g.type == GateType::kAnd ? "AND" : g.type == GateType::kOr ? "OR" : "NOT");
      for (uint32_t r : g.fanin) os << ' ' << r;
      os << "\n";
    }
    os << "output " << output_ << "\n";
    return os.str();
  }

  static Ac0Circuit from_netlist(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    Ac0Circuit circ(1);
    bool have_inputs = false, have_output = false;
    while (std::getline(is, line)) {
      size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      std::string tok;
      if (!(ls >> tok)) continue;
      if (tok == "inputs") {
        require(!have_inputs, "netlist: duplicate inputs line");
        long n = -1;
        ls >> n;
        require(n >= 1 && n <= (1 << 26), "netlist: bad input count");
        circ = Ac0Circuit(uint32_t(n));
        have_inputs = true;
      } else if (tok == "output") {
        require(have_inputs, "netlist: output before inputs");
        require(!have_output, "netlist: duplicate output line");
        long id = -1;
        ls >> id;
        require(id >= 0 && uint32_t(id) < circ.num_nodes(), "netlist: output references no such node");
        circ.set_output(uint32_t(id));
        have_output = true;
      } else {
        require(have_inputs, "netlist: gate before inputs");
        require(!have_output, "netlist: gate after output");
        long id = -1;
        try {
          id = std::stol(tok);
        } catch (...) {
          throw PreconditionError("netlist: bad gate id");
        }
        require(id >= 0 && uint32_t(id) == circ.num_nodes(), "netlist: gate ids must be consecutive");
        std::string type;
        require(bool(ls >> type), "netlist: missing gate type");
        GateType gt;
        if (type == "AND") gt = GateType::kAnd;
        else if (type == "OR") gt = GateType::kOr;
        else if (type == "NOT") gt = GateType::kNot;
        else throw PreconditionError("netlist: unknown gate type");
        std::vector<uint32_t> fanin;
        long r;
        while (ls >> r) {
          require(r >= 0 && uint32_t(r) < circ.num_nodes(), "netlist: fanin must reference an earlier node");
          fanin.push_back(uint32_t(r));
        }
        require(!ls.fail() || ls.eof(), "netlist: bad fanin token");
        circ.add_gate(gt, std::move(fanin));
      }
    }
    require(have_inputs, "netlist: missing inputs line");
    require(have_output, "netlist: missing output line");
    return circ;
  }

 private:
  uint32_t num_inputs_;
  std::vector<Gate> gates_;
  uint32_t output_;
};

// Number of coordinates whose flip changes the circuit value at x.
inline int sensitivity_at(const Ac0Circuit& c, const BitVec& x) {
  bool base = c.evaluate(x);
  int s = 0;
  BitVec y = x;
  for (size_t i = 0; i < x.size(); ++i) {
    y.set(i, !y.get(i));
    s += c.evaluate(y) != base;
    y.set(i, x.get(i));
  }
  return s;
}

// Monte Carlo estimate of Pr_x[s^x(c) >= t] over uniform x, Wilson 95% CI.
inline BinomialEstimate sensitivity_tail_estimate(const Ac0Circuit& c, int t, uint64_t trials,
                                                  uint64_t seed) {
  require(trials > 0, "sensitivity_tail_estimate: trials must be positive");
  Rng rng(seed);
  uint64_t hits = 0;
  for (uint64_t i = 0; i < trials; ++i)
    hits += sensitivity_at(c, rng.bits(c.num_inputs())) >= t;
  return wilson_estimate(hits, trials);
}

// Inputs of a circuit viewed as a K x M grid; input (i, j) is bit i*M + j.
struct BlockShape {
  uint32_t K = 1;
  uint32_t M = 1;
  size_t total() const { return size_t(K) * M; }
};

using RowSampler = std::function<BitVec(Rng&)>;   // draws M bits
using InputSampler = std::function<BitVec(Rng&)>; // draws a full input

// Pr over (x ~ sampler^K, i ~ [K], fresh row ~ sampler) that replacing row i
// of x flips the circuit. Wilson 95% CI.
inline BinomialEstimate block_resample_flip_prob(const Ac0Circuit& c, BlockShape shape,
                                                 const RowSampler& sampler, uint64_t trials,
                                                 uint64_t seed) {
  require(c.num_inputs() == shape.total(), "block_resample_flip_prob: shape mismatch");
  require(trials > 0, "block_resample_flip_prob: trials must be positive");
  Rng rng(seed);
  uint64_t hits = 0;
  for (uint64_t t = 0; t < trials; ++t) {
    BitVec x(shape.total());
    for (uint32_t i = 0; i < shape.K; ++i) {
      BitVec row = sampler(rng);
      require(row.size() == shape.M, "block_resample_flip_prob: sampler row length mismatch");
      for (uint32_t j = 0; j < shape.M; ++j) x.set(size_t(i) * shape.M + j, row.get(j));
    }
    bool before = c.evaluate(x);
    uint32_t i = uint32_t(rng.below(shape.K));
    BitVec row = sampler(rng);
    BitVec y = x;
    for (uint32_t j = 0; j < shape.M; ++j) y.set(size_t(i) * shape.M + j, row.get(j));
    hits += c.evaluate(y) != before;
  }
  return wilson_estimate(hits, trials);
}

// Same experiment with the starting point held fixed at x.
inline BinomialEstimate block_resample_flip_prob_at(const Ac0Circuit& c, BlockShape shape,
                                                    const RowSampler& sampler, const BitVec& x,
                                                    uint64_t trials, uint64_t seed) {
  require(c.num_inputs() == shape.total(), "block_resample_flip_prob_at: shape mismatch");
  require(x.size() == shape.total(), "block_resample_flip_prob_at: x length mismatch");
  require(trials > 0, "block_resample_flip_prob_at: trials must be positive");
  Rng rng(seed);
  bool before = c.evaluate(x);
  uint64_t hits = 0;
  for (uint64_t t = 0; t < trials; ++t) {
    uint32_t i = uint32_t(rng.below(shape.K));
    BitVec row = sampler(rng);
    require(row.size() == shape.M, "block_resample_flip_prob_at: sampler row length mismatch");
    BitVec y = x;
    for (uint32_t j = 0; j < shape.M; ++j) y.set(size_t(i) * shape.M + j, row.get(j));
    hits += c.evaluate(y) != before;
  }
  return wilson_estimate(hits, trials);
}

// Substitute each grid input (i, j) of a K x M circuit by w0[i,j] / w1[i,j]
// according to the value of a fresh variable z_i: the result is a K-input
// circuit computing z -> f(w_z), where row i of w_z is row i of w_{z_i}.
// Constant folding keeps the result no larger and no deeper than the source.
inline Ac0Circuit gw_reduction(const Ac0Circuit& c, BlockShape shape, const BitVec& w0,
                               const BitVec& w1) {
  require(c.num_inputs() == shape.total(), "gw_reduction: shape mismatch");
  require(w0.size() == shape.total() && w1.size() == shape.total(),
          "gw_reduction: substitution matrices must be K*M bits");

  struct Sub {
    enum Kind { kConst0, kConst1, kLit, kNegLit, kNode } kind;
    uint32_t idx = 0;  // input index for literals, node id for kNode
  };

  Ac0Circuit out(shape.K);
  std::vector<int64_t> neg_lit_node(shape.K, -1);  // memoized NOT z_i
  auto as_node = [&](const Sub& s) -> uint32_t {
    switch (s.kind) {
      case Sub::kLit:
        return s.idx;
      case Sub::kNegLit: {
        if (neg_lit_node[s.idx] < 0)
          neg_lit_node[s.idx] = out.add_gate(GateType::kNot, {s.idx});
        return uint32_t(neg_lit_node[s.idx]);
      }
      case Sub::kNode:
        return s.idx;
      case Sub::kConst0:
        return out.add_gate(GateType::kOr, {});
      default:
        return out.add_gate(GateType::kAnd, {});
    }
  };

  std::vector<Sub> sub(c.num_nodes());
  for (uint32_t i = 0; i < shape.K; ++i) {
    for (uint32_t j = 0; j < shape.M; ++j) {
      size_t p = size_t(i) * shape.M + j;
      bool b0 = w0.get(p), b1 = w1.get(p);
      Sub& s = sub[p];
      if (b0 == b1) s.kind = b0 ? Sub::kConst1 : Sub::kConst0;
      else if (b1) { s.kind = Sub::kLit; s.idx = i; }
      else { s.kind = Sub::kNegLit; s.idx = i; }
    }
  }

  for (size_t j = 0; j < c.gates().size(); ++j) {
    const Gate& g = c.gates()[j];
    Sub& me = sub[c.num_inputs() + j];
    if (g.type == GateType::kNot) {
      Sub ch = sub[g.fanin[0]];
      switch (ch.kind) {
        case Sub::kConst0: me.kind = Sub::kConst1; break;
        case Sub::kConst1: me.kind = Sub::kConst0; break;
        case Sub::kLit: me = {Sub::kNegLit, ch.idx}; break;
        case Sub::kNegLit: me = {Sub::kLit, ch.idx}; break;
        default: me = {Sub::kNode, out.add_gate(GateType::kNot, {ch.idx})};
      }
      continue;
    }
    bool is_and = g.type == GateType::kAnd;
    Sub::Kind killer = is_and ? Sub::kConst0 : Sub::kConst1;
    Sub::Kind neutral = is_and ? Sub::kConst1 : Sub::kConst0;
    bool killed = false;
    std::vector<Sub> kept;
    for (uint32_t r : g.fanin) {
      const Sub& ch = sub[r];
      if (ch.kind == killer) { killed = true; break; }
      if (ch.kind != neutral) kept.push_back(ch);
    }
    if (killed) { me.kind = killer; continue; }
    if (kept.empty()) { me.kind = neutral; continue; }
    if (kept.size() == 1) { me = kept[0]; continue; }
    std::vector<uint32_t> fanin;
    for (const Sub& ch : kept) fanin.push_back(as_node(ch));
    me = {Sub::kNode, out.add_gate(g.type, std::move(fanin))};
  }

  out.set_output(as_node(sub[c.output()]));
  return out;
}

struct AdvantageEstimate {
  BinomialEstimate accept_a;
  BinomialEstimate accept_b;
  double advantage = 0.0;  // accept_a - accept_b
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Pr_{x~a}[c(x)=1] - Pr_{x~b}[c(x)=1] with a normal-approximation CI on the
// difference (each arm gets `trials` fresh samples).
inline AdvantageEstimate distinguishing_advantage(const Ac0Circuit& c, const InputSampler& a,
                                                  const InputSampler& b, uint64_t trials,
                                                  uint64_t seed) {
  require(trials > 0, "distinguishing_advantage: trials must be positive");
  Rng rng_a(derive_seed(seed, {0}));
  Rng rng_b(derive_seed(seed, {1}));
  uint64_t hits_a = 0, hits_b = 0;
  for (uint64_t t = 0; t < trials; ++t) hits_a += c.evaluate(a(rng_a));
  for (uint64_t t = 0; t < trials; ++t) hits_b += c.evaluate(b(rng_b));
  AdvantageEstimate e;
  e.accept_a = wilson_estimate(hits_a, trials);
  e.accept_b = wilson_estimate(hits_b, trials);
  e.advantage = e.accept_a.estimate - e.accept_b.estimate;
  double n = double(trials);
  double se = std::sqrt(e.accept_a.estimate * (1 - e.accept_a.estimate) / n +
                        e.accept_b.estimate * (1 - e.accept_b.estimate) / n);
  e.ci_lo = e.advantage - kZ95 * se;
  e.ci_hi = e.advantage + kZ95 * se;
  return e;
}

// ---- Canonical circuit builders --------------------------------------------

inline Ac0Circuit make_and_circuit(uint32_t n) {
  Ac0Circuit c(n);
  std::vector<uint32_t> all(n);
  for (uint32_t i = 0; i < n; ++i) all[i] = i;
  c.set_output(c.add_gate(GateType::kAnd, all));
  return c;
}

inline Ac0Circuit make_or_circuit(uint32_t n) {
  Ac0Circuit c(n);
  std::vector<uint32_t> all(n);
  for (uint32_t i = 0; i < n; ++i) all[i] = i;
  c.set_output(c.add_gate(GateType::kOr, all));
  return c;
}

// Parity as a balanced XOR tree, each XOR lowered to OR(AND(a, !b), AND(!a, b)).
inline Ac0Circuit make_parity_circuit(uint32_t n) {
  require(n >= 1, "make_parity_circuit: need at least one input");
  Ac0Circuit c(n);
  std::vector<uint32_t> layer(n);
  for (uint32_t i = 0; i < n; ++i) layer[i] = i;
  while (layer.size() > 1) {
    std::vector<uint32_t> next;
    for (size_t i = 0; i + 1 < layer.size(); i += 2) {
      uint32_t a = layer[i], b = layer[i + 1];
      uint32_t na = c.add_gate(GateType::kNot, {a});
      uint32_t nb = c.add_gate(GateType::kNot, {b});
      uint32_t t1 = c.add_gate(GateType::kAnd, {a, nb});
      uint32_t t2 = c.add_gate(GateType::kAnd, {na, b});
      next.push_back(c.add_gate(GateType::kOr, {t1, t2}));
    }
    if (layer.size() % 2) next.push_back(layer.back());
    layer = std::move(next);
  }
  c.set_output(layer[0]);
  return c;
}

// Threshold >= t of n bits as a flat DNF over all t-subsets.
inline Ac0Circuit make_threshold_circuit(uint32_t n, uint32_t t) {
  require(t >= 1 && t <= n && n <= 24, "make_threshold_circuit: bad parameters");
  Ac0Circuit c(n);
  std::vector<uint32_t> terms;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (uint32_t(__builtin_popcount(mask)) != t) continue;
    std::vector<uint32_t> fanin;
    for (uint32_t i = 0; i < n; ++i)
      if ((mask >> i) & 1) fanin.push_back(i);
    terms.push_back(c.add_gate(GateType::kAnd, std::move(fanin)));
  }
  c.set_output(c.add_gate(GateType::kOr, std::move(terms)));
  return c;
}

inline Ac0Circuit random_circuit(Rng& rng, uint32_t n, uint32_t gates) {
  Ac0Circuit c(n);
  for (uint32_t j = 0; j < gates; ++j) {
    uint32_t kind = uint32_t(rng.below(3));
    if (kind == 2) {
      c.add_gate(GateType::kNot, {uint32_t(rng.below(c.num_nodes()))});
      continue;
    }
    uint32_t fanin_count = 1 + uint32_t(rng.below(4));
    std::vector<uint32_t> fanin;
    for (uint32_t f = 0; f < fanin_count; ++f)
      fanin.push_back(uint32_t(rng.below(c.num_nodes())));
    c.add_gate(kind ? GateType::kOr : GateType::kAnd, std::move(fanin));
  }
  c.set_output(c.num_nodes() - 1);
  return c;
}

}  // namespace forrelab
