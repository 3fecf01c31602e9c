#pragma once

#include <complex>
#include <cstdint>
#include <variant>
#include <vector>

#include "forrelation.hpp"
#include "rng.hpp"

namespace forrelab {

using Complex = std::complex<double>;
using State = std::vector<Complex>;

constexpr int kMaxQubits = 20;

inline State zero_state(int qubits) {
  require(qubits >= 0 && qubits <= kMaxQubits, "zero_state: qubit count out of range");
  State psi(size_t(1) << qubits, Complex(0, 0));
  psi[0] = Complex(1, 0);
  return psi;
}

inline void hadamard_on_qubit(State& psi, int q) {
  const double inv_sqrt2 = 0.70710678118654752440;
  size_t step = size_t(1) << q;
  for (size_t i = 0; i < psi.size(); i += step << 1) {
    for (size_t j = i; j < i + step; ++j) {
      Complex a = psi[j], b = psi[j + step];
      psi[j] = (a + b) * inv_sqrt2;
      psi[j + step] = (a - b) * inv_sqrt2;
    }
  }
}

inline void hadamard_all(State& psi, int qubits) {
  for (int q = 0; q < qubits; ++q) hadamard_on_qubit(psi, q);
}

// |x> -> (-1)^{f(x)} |x>
inline void phase_by_table(State& psi, const TruthTable& f) {
  require(psi.size() == f.domain_size(), "phase_by_table: dimension mismatch");
  for (size_t x = 0; x < psi.size(); ++x)
    if (f.get(x)) psi[x] = -psi[x];
}

inline double norm_sq(const State& psi) {
  double s = 0;
  for (const Complex& a : psi) s += std::norm(a);
  return s;
}

// Acceptance probability of the two-query test circuit
// H^ell . phase(g) . H^ell . phase(f) . H^ell on |0^ell>, accepting on the
// all-zeros outcome. Equal to Phi(f,g)^2 as an algebraic identity.
inline double forrelation_accept_probability(const ForrelationInstance& inst) {
  State psi = zero_state(inst.ell());
  hadamard_all(psi, inst.ell());
  phase_by_table(psi, inst.f);
  hadamard_all(psi, inst.ell());
  phase_by_table(psi, inst.g);
  hadamard_all(psi, inst.ell());
  return std::norm(psi[0]);
}

// `repetitions` independent Bernoulli draws at probability p; outputs 1 iff
// the success frequency reaches `threshold`.
inline bool repeated_threshold_test(double p, int repetitions, double threshold, Rng& rng) {
  require(repetitions >= 1, "repeated_threshold_test: repetitions must be >= 1");
  require(threshold >= 0.0 && threshold <= 1.0, "repeated_threshold_test: bad threshold");
  int accepts = 0;
  for (int r = 0; r < repetitions; ++r)
    if (rng.real01() < p) ++accepts;
  return double(accepts) / double(repetitions) >= threshold;
}

// Runs the test circuit `repetitions` times and outputs 1 iff the acceptance
// frequency reaches `threshold`. Each repetition is an independent Bernoulli
// draw at the simulated acceptance probability.
inline bool quantum_forrelation_test(const ForrelationInstance& inst, int repetitions,
                                     double threshold, Rng& rng) {
  return repeated_threshold_test(forrelation_accept_probability(inst), repetitions,
                                 threshold, rng);
}

// ---- Instrumented query programs ------------------------------------------
//
// A program is a sequence of layers over `qubits` qubits: unitary gate layers
// and phase-oracle calls. An oracle call maps every basis state to a position
// in the supplied oracle bit string (or to no position at all); the state
// picks up phase (-1)^{oracle bit} wherever it addresses one. Query mass per
// position accumulates the squared amplitude of the basis states addressing
// it at the moment of each call, so one call spends total mass at most 1.

struct GateHadamard { int qubit; };
struct GateSingle { int qubit; Complex m00, m01, m10, m11; };  // arbitrary 2x2
struct GateCZ { int a, b; };
struct GateCX { int control, target; };

using QuantumGate = std::variant<GateHadamard, GateSingle, GateCZ, GateCX>;

struct UnitaryLayer {
  std::vector<QuantumGate> gates;
};

constexpr int64_t kNoQuery = -1;

struct OracleCall {
  // position_of_basis[x] is an index into the oracle bits, or kNoQuery.
  std::vector<int64_t> position_of_basis;
};

using Layer = std::variant<UnitaryLayer, OracleCall>;

struct QueryProgram {
  int qubits = 0;
  std::vector<Layer> layers;

  int oracle_calls() const {
    int t = 0;
    for (const Layer& l : layers) t += std::holds_alternative<OracleCall>(l);
    return t;
  }
};

struct QueryAlgorithmRun {
  State final_state;
  std::vector<double> query_mass;  // one entry per oracle position
  int calls = 0;
};

inline void apply_gate(State& psi, const QuantumGate& g) {
  if (const auto* h = std::get_if<GateHadamard>(&g)) {
    hadamard_on_qubit(psi, h->qubit);
  } else if (const auto* s = std::get_if<GateSingle>(&g)) {
    size_t step = size_t(1) << s->qubit;
    for (size_t i = 0; i < psi.size(); i += step << 1) {
      for (size_t j = i; j < i + step; ++j) {
        Complex a = psi[j], b = psi[j + step];
        psi[j] = s->m00 * a + s->m01 * b;
        psi[j + step] = s->m10 * a + s->m11 * b;
      }
    }
  } else if (const auto* cz = std::get_if<GateCZ>(&g)) {
    size_t ma = size_t(1) << cz->a, mb = size_t(1) << cz->b;
    for (size_t x = 0; x < psi.size(); ++x)
      if ((x & ma) && (x & mb)) psi[x] = -psi[x];
  } else if (const auto* cx = std::get_if<GateCX>(&g)) {
    size_t mc = size_t(1) << cx->control, mt = size_t(1) << cx->target;
    for (size_t x = 0; x < psi.size(); ++x)
      if ((x & mc) && !(x & mt)) std::swap(psi[x], psi[x | mt]);
  }
}

inline QueryAlgorithmRun run_query_algorithm(const QueryProgram& prog, const BitVec& oracle_bits) {
  require(prog.qubits >= 0 && prog.qubits <= kMaxQubits,
          "run_query_algorithm: qubit count out of range");
  size_t dim = size_t(1) << prog.qubits;
  for (const Layer& l : prog.layers) {
    if (const auto* call = std::get_if<OracleCall>(&l)) {
      require(call->position_of_basis.size() == dim,
              "run_query_algorithm: oracle call map has wrong size");
      for (int64_t p : call->position_of_basis)
        require(p == kNoQuery || (p >= 0 && size_t(p) < oracle_bits.size()),
                "run_query_algorithm: oracle position out of range");
    }
  }

  QueryAlgorithmRun run;
  run.final_state = zero_state(prog.qubits);
  run.query_mass.assign(oracle_bits.size(), 0.0);
  for (const Layer& l : prog.layers) {
    if (const auto* ul = std::get_if<UnitaryLayer>(&l)) {
      for (const QuantumGate& g : ul->gates) apply_gate(run.final_state, g);
    } else {
      const auto& map = std::get<OracleCall>(l).position_of_basis;
      for (size_t x = 0; x < dim; ++x) {
        int64_t p = map[x];
        if (p == kNoQuery) continue;
        run.query_mass[p] += std::norm(run.final_state[x]);
        if (oracle_bits.get(size_t(p))) run.final_state[x] = -run.final_state[x];
      }
      ++run.calls;
    }
    double n = norm_sq(run.final_state);
    if (std::abs(n - 1.0) > 1e-9)
      throw std::logic_error("run_query_algorithm: state norm drifted");
  }
  return run;
}

inline std::vector<double> measurement_distribution(const State& psi) {
  std::vector<double> p(psi.size());
  for (size_t x = 0; x < psi.size(); ++x) p[x] = std::norm(psi[x]);
  return p;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  require(p.size() == q.size(), "total_variation: size mismatch");
  double s = 0;
  for (size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return s / 2.0;
}

// The two-query forrelation test as an instrumented program over the
// concatenated f||g oracle string (positions 0..2^ell-1 then 2^ell..2^{ell+1}-1).
inline QueryProgram make_forrelation_program(int ell) {
  require(ell >= 0 && ell <= kMaxQubits, "make_forrelation_program: ell out of range");
  size_t dim = size_t(1) << ell;
  QueryProgram prog;
  prog.qubits = ell;
  UnitaryLayer h;
  for (int q = 0; q < ell; ++q) h.gates.push_back(GateHadamard{q});
  std::vector<int64_t> f_map(dim), g_map(dim);
  for (size_t x = 0; x < dim; ++x) {
    f_map[x] = int64_t(x);
    g_map[x] = int64_t(dim + x);
  }
  prog.layers.push_back(h);
  prog.layers.push_back(OracleCall{f_map});
  prog.layers.push_back(h);
  prog.layers.push_back(OracleCall{g_map});
  prog.layers.push_back(h);
  return prog;
}

inline BitVec instance_oracle_bits(const ForrelationInstance& inst) {
  BitVec v(inst.table_bits());
  for (size_t i = 0; i < v.size(); ++i) v.set(i, inst.table_bit(i));
  return v;
}

}  // namespace forrelab
