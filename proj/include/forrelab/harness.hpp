#pragma once

// Experiment orchestration: security games over sampled oracle worlds,
// resampling experiments, the advantage-squaring wrapper, decoder
// calibration, a worker-pool trial runner, and canonical report
// serialization (CSV and JSON lines).
//
// Reproducibility contract: every estimate is a pure function of the
// experiment parameters and the seed. Trials derive per-trial seeds, own
// their worlds and RNG streams, and write only to their own result slot, so
// reports are byte-identical regardless of worker count or scheduling.

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ac0.hpp"
#include "crypto.hpp"
#include "oracle_world.hpp"
#include "quantum.hpp"
#include "stats.hpp"
#include "witness_circuit.hpp"

namespace forrelab {

// ---- Bit-string text forms ----------------------------------------------------
//
// Hex form: the bits of a string b_0 b_1 ... in index order, four per nibble
// with b_0 in the nibble's most significant position; the last nibble is
// zero-padded. Binary form: characters '0'/'1' with the leftmost character
// the most significant bit of a numeric field.

inline std::string bits_to_hex(const BitVec& v) {
  static const char* digits = "0123456789ABCDEF";
  std::string out;
  out.reserve((v.size() + 3) / 4);
  uint8_t nib = 0;
  int fill = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    nib = uint8_t((nib << 1) | v.get(i));
    if (++fill == 4) {
      out.push_back(digits[nib]);
      nib = 0;
      fill = 0;
    }
  }
  if (fill) out.push_back(digits[nib << (4 - fill)]);
  return out;
}

inline BitVec bits_from_hex(const std::string& hex, size_t nbits) {
  require(hex.size() == (nbits + 3) / 4, "hex string length does not match bit count");
  BitVec v(nbits);
  for (size_t c = 0; c < hex.size(); ++c) {
    char ch = hex[c];
    int val;
    if (ch >= '0' && ch <= '9') val = ch - '0';
    else if (ch >= 'a' && ch <= 'f') val = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F') val = ch - 'A' + 10;
    else { require(false, "bad hex digit"); return v; }
    for (int j = 0; j < 4; ++j) {
      size_t i = c * 4 + size_t(j);
      bool bit = (val >> (3 - j)) & 1;
      if (i < nbits) v.set(i, bit);
      else require(!bit, "hex string has nonzero padding bits");
    }
  }
  return v;
}

// Parses an MSB-first binary string ("01" -> 1) into a value of known width.
inline uint64_t value_from_binary(const std::string& s, int width) {
  require(int(s.size()) == width, "binary string has the wrong width");
  uint64_t v = 0;
  for (char c : s) {
    require(c == '0' || c == '1', "binary string may contain only 0 and 1");
    v = (v << 1) | uint64_t(c - '0');
  }
  return v;
}

// ---- Report rows ----------------------------------------------------------------

struct ReportRow {
  std::string experiment;
  std::string params;
  double estimate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  uint64_t trials = 0;
  uint64_t seed = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  double wall_ms = 0.0;     // console display only; never serialized
  uint64_t world_hash = 0;  // snapshot hash when the run used one fixed world
};

// Shortest decimal that round-trips; stable across runs and platforms.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline constexpr const char* kReportCsvHeader = "experiment,params,estimate,ci_lo,ci_hi,trials,seed";

inline std::string report_to_csv(const std::vector<ReportRow>& rows) {
  std::string out = kReportCsvHeader;
  out += '\n';
  for (const ReportRow& r : rows) {
    out += csv_escape(r.experiment);
    out += ',';
    out += csv_escape(r.params);
    out += ',';
    out += format_double(r.estimate);
    out += ',';
    out += format_double(r.ci_lo);
    out += ',';
    out += format_double(r.ci_hi);
    out += ',';
    out += std::to_string(r.trials);
    out += ',';
    out += std::to_string(r.seed);
    out += '\n';
  }
  return out;
}

// One JSON object per row, same fields as the CSV columns.
inline std::string report_to_json_lines(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const ReportRow& r : rows) {
    nlohmann::ordered_json j;
    j["experiment"] = r.experiment;
    j["params"] = r.params;
    j["estimate"] = r.estimate;
    j["ci_lo"] = r.ci_lo;
    j["ci_hi"] = r.ci_hi;
    j["trials"] = r.trials;
    j["seed"] = r.seed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// Canonical `key=value;...` builder for the params column.
class Params {
 public:
  Params& add(const std::string& key, const std::string& value) {
    if (!s_.empty()) s_ += ';';
    s_ += key;
    s_ += '=';
    s_ += value;
    return *this;
  }
  Params& add(const std::string& key, uint64_t value) { return add(key, std::to_string(value)); }
  Params& add(const std::string& key, int value) { return add(key, std::to_string(value)); }
  Params& add(const std::string& key, double value) { return add(key, format_double(value)); }
  const std::string& str() const { return s_; }

 private:
  std::string s_;
};

inline const char* sampler_name(SamplerKind s) {
  switch (s) {
    case SamplerKind::kUniform: return "uniform";
    case SamplerKind::kGaussian: return "gaussian";
    case SamplerKind::kExact: return "exact";
  }
  return "?";
}

inline SamplerKind parse_sampler(const std::string& name) {
  if (name == "uniform") return SamplerKind::kUniform;
  if (name == "gaussian") return SamplerKind::kGaussian;
  if (name == "exact") return SamplerKind::kExact;
  require(false, "unknown sampler name");
  return SamplerKind::kUniform;
}

inline const char* world_kind_name(WorldKind k) {
  return k == WorldKind::kPrf ? "prf" : "trapdoor";
}

inline WorldKind parse_world_kind(const std::string& name) {
  if (name == "prf") return WorldKind::kPrf;
  if (name == "trapdoor" || name == "td") return WorldKind::kTrapdoor;
  require(false, "unknown world kind");
  return WorldKind::kPrf;
}

inline Params profile_params(WorldKind kind, const ScaleProfile& p) {
  Params out;
  out.add("kind", world_kind_name(kind))
      .add("n", p.n)
      .add("ell", p.ell)
      .add("sampler", sampler_name(p.sampler));
  if (p.sampler == SamplerKind::kGaussian) out.add("eps", p.eps);
  if (p.exact_scale) out.add("exact_scale", 1);
  return out;
}

// ---- Worker pool ------------------------------------------------------------------

inline int worker_count_from_env() {
  const char* s = std::getenv("FORRELAB_WORKERS");
  if (!s || !*s) return 1;
  int v = std::atoi(s);
  return std::clamp(v, 1, 256);
}

// Runs fn(t) for t in [0, trials) across `workers` threads. fn must confine
// its writes to per-trial slots; the first exception thrown by any trial is
// rethrown here after all threads stop.
template <class F>
inline void run_trials(uint64_t trials, int workers, F&& fn) {
  if (workers <= 1 || trials <= 1) {
    for (uint64_t t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::atomic<uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      uint64_t t = next.fetch_add(1);
      if (t >= trials || failed.load()) return;
      try {
        fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  int count = int(std::min<uint64_t>(uint64_t(workers), trials));
  std::vector<std::thread> pool;
  pool.reserve(size_t(count) - 1);
  for (int i = 1; i < count; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---- Game specification --------------------------------------------------------------

enum class GameKind {
  kPrfDistinguish,
  kPkPseudorandom,
  kTowfInvert,
  kOwfInvert,
  kBlockResample,
  kSensitivityTail,
  kPlantedIndist,
};

inline const char* game_name(GameKind g) {
  switch (g) {
    case GameKind::kPrfDistinguish: return "prf_distinguish";
    case GameKind::kPkPseudorandom: return "pk_pseudorandom";
    case GameKind::kTowfInvert: return "towf_invert";
    case GameKind::kOwfInvert: return "owf_invert";
    case GameKind::kBlockResample: return "block_resample";
    case GameKind::kSensitivityTail: return "sensitivity_tail";
    case GameKind::kPlantedIndist: return "planted_indist";
  }
  return "?";
}

struct GameSpec {
  GameKind game = GameKind::kPrfDistinguish;
  ScaleProfile profile{};
  std::string adversary = "constant0";  // built-in name, netlist:<file>[@window], exec:<cmd>
  std::string mode = "gen";             // inversion challenge: gen | uniform-pk | uniform-y
  std::string config = "prf-row";       // resample slice: prf-row | td-row | f-slice
  uint64_t trials = 100;
  uint64_t inner = 32;  // inner runs per resample trial
  uint64_t seed = 1;
  uint64_t query_cap = 0;  // per adversary run; 0 = unmetered
  int decode_reps = kDefaultDecodeReps;
  int workers = 0;  // 0 = take FORRELAB_WORKERS
  // circuit-experiment extras
  uint32_t shape_k = 2;
  uint32_t shape_m = 2;
  int tail_threshold = 1;
};

inline int effective_workers(const GameSpec& spec) {
  return spec.workers > 0 ? spec.workers : worker_count_from_env();
}

// ---- Adversary interfaces ------------------------------------------------------------

// One-bit distinguisher: metered oracle access plus the challenge string.
using BitAdversaryFn = std::function<bool(OracleAccess&, const BitVec&, Rng&)>;

// Preimage-finding adversary for the trapdoor game.
using TowfAdversaryFn = std::function<InvertResult(OracleAccess&, uint64_t, uint64_t, Rng&)>;

// Key-guessing adversary for the fixed-input map game.
using OwfAdversaryFn = std::function<uint64_t(OracleAccess&, const BitVec&, Rng&)>;

// ---- Netlist adversary over a declared bit window -------------------------------------
//
// The circuit's inputs are A bits at fixed declared addresses, optionally
// followed by the challenge bits. The window file lists one address per
// line as `<bit_length> <hex>`; '#' starts a comment.

struct NetlistAdversary {
  Ac0Circuit circuit{1};
  std::vector<BitVec> window;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open text file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<BitVec> parse_window(const std::string& text) {
  std::vector<BitVec> window;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    size_t nbits;
    std::string hex;
    if (!(ls >> nbits)) continue;
    require(bool(ls >> hex), "window line is missing the address hex");
    window.push_back(bits_from_hex(hex, nbits));
  }
  return window;
}

inline bool run_netlist_adversary(const NetlistAdversary& a, OracleAccess& oracle,
                                  const BitVec& challenge) {
  size_t w = a.window.size();
  size_t want = a.circuit.num_inputs();
  require(want == w || want == w + challenge.size(),
          "netlist adversary: circuit inputs must cover the window, or the window plus the "
          "challenge");
  BitVec input(want);
  for (size_t i = 0; i < w; ++i) input.set(i, oracle.read_a(a.window[i]));
  if (want > w)
    for (size_t i = 0; i < challenge.size(); ++i) input.set(w + i, challenge.get(i));
  return a.circuit.evaluate(input);
}

// ---- External subprocess adversary ------------------------------------------------------
//
// One process per run, speaking a line protocol on stdin/stdout:
//   harness:   HELLO <kind> <n> <ell>      then  CHAL <len_bits> <hex>
//   adversary: QA <len_bits> <hex>         read one A bit
//              QB <len_bits> <hex>         one existential witness query
//              OUT <bit>  or  OUT <hex>    final answer (hex for multi-bit answers)
//   harness:   BIT <0|1>                   reply to each QA/QB
// Hex is the MSB-first nibble form above. A malformed or truncated session
// is a protocol violation; oracle metering applies to QA/QB as usual.

class SubprocessAdversary {
 public:
  explicit SubprocessAdversary(std::vector<std::string> argv) : argv_(std::move(argv)) {
    require(!argv_.empty(), "external adversary: empty command line");
  }

  // Splits "cmd arg arg" on single spaces.
  static SubprocessAdversary from_command_line(const std::string& cmd) {
    std::vector<std::string> argv;
    std::istringstream is(cmd);
    std::string tok;
    while (is >> tok) argv.push_back(tok);
    return SubprocessAdversary(std::move(argv));
  }

  BitVec run(OracleAccess& oracle, const BitVec& challenge, size_t out_bits) const {
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { signal(SIGPIPE, SIG_IGN); });

    int to_child[2], from_child[2];
    require(pipe(to_child) == 0, "external adversary: pipe failed");
    require(pipe(from_child) == 0, "external adversary: pipe failed");
    pid_t pid = fork();
    require(pid >= 0, "external adversary: fork failed");
    if (pid == 0) {
      dup2(to_child[0], 0);
      dup2(from_child[1], 1);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> cargv;
      cargv.reserve(argv_.size() + 1);
      for (const std::string& a : argv_) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      execvp(cargv[0], cargv.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);

    struct Session {
      FILE* in = nullptr;
      FILE* out = nullptr;
      pid_t pid = -1;
      bool reaped = false;
      ~Session() {
        if (out) fclose(out);
        if (in) fclose(in);
        if (pid > 0 && !reaped) {
          kill(pid, SIGKILL);
          waitpid(pid, nullptr, 0);
        }
      }
    } s;
    s.pid = pid;
    s.in = fdopen(from_child[0], "r");
    s.out = fdopen(to_child[1], "w");
    require(s.in != nullptr && s.out != nullptr, "external adversary: fdopen failed");

    const ScaleProfile& p = oracle.profile();
    fprintf(s.out, "HELLO %s %d %d\n", world_kind_name(oracle.kind()), p.n, p.ell);
    fprintf(s.out, "CHAL %zu %s\n", challenge.size(), bits_to_hex(challenge).c_str());
    fflush(s.out);

    auto read_line = [&]() -> std::string {
      std::string line;
      int c;
      while ((c = fgetc(s.in)) != EOF && c != '\n') line.push_back(char(c));
      require(!line.empty() || c == '\n', "external adversary: stream ended before OUT");
      return line;
    };

    for (;;) {
      std::istringstream ls(read_line());
      std::string verb;
      require(bool(ls >> verb), "external adversary: blank protocol line");
      if (verb == "QA" || verb == "QB") {
        size_t nbits;
        std::string hex;
        require(bool(ls >> nbits >> hex), "external adversary: malformed query line");
        BitVec q = bits_from_hex(hex, nbits);
        bool bit = verb == "QA" ? oracle.read_a(q) : oracle.query_b(q);
        fprintf(s.out, "BIT %d\n", int(bit));
        fflush(s.out);
      } else if (verb == "OUT") {
        std::string payload;
        require(bool(ls >> payload), "external adversary: OUT without a payload");
        BitVec result;
        if (out_bits == 1 && (payload == "0" || payload == "1")) {
          result = BitVec(1);
          result.set(0, payload == "1");
        } else {
          result = bits_from_hex(payload, out_bits);
        }
        fclose(s.out);
        s.out = nullptr;
        waitpid(pid, nullptr, 0);
        s.reaped = true;
        return result;
      } else {
        require(false, "external adversary: unknown protocol verb");
      }
    }
  }

 private:
  std::vector<std::string> argv_;
};

// ---- Built-in one-bit adversaries ----------------------------------------------------

namespace detail {

// Fixed A-independent witness queries: a satisfiable one and an
// unsatisfiable one. Both answers are constants of the oracle definition,
// so any strategy built on them alone has advantage exactly zero.
inline std::pair<BitVec, BitVec> b_probe_queries() {
  WitnessCircuit sat;
  sat.witness_bits = 1;
  WitnessNode w;
  w.op = WitnessNode::Op::kWitness;
  w.witness_index = 0;
  sat.nodes.push_back(w);
  WitnessCircuit unsat;
  unsat.witness_bits = 0;
  WitnessNode c0;
  c0.op = WitnessNode::Op::kConst0;
  unsat.nodes.push_back(c0);
  return {sat.encode(), unsat.encode()};
}

}  // namespace detail

// Resolves a built-in one-bit adversary by name. Names:
//   constant0 / constant1   fixed output
//   coin                    fresh random bit
//   challenge_bit           copies challenge bit 0
//   readbit                 reads one fixed A bit (the all-zero address)
//   decode_first            decodes the lexicographically first block
//   decode_compare          decodes whole rows and compares to the challenge
//                           table (distinguishing-game sanity adversary)
//   b_probe                 queries B on fixed A-independent strings
//   probe_scan / probe_zero the one-call consistency probe over an inverter
//                           (public-key game; challenge = pk bits)
inline BitAdversaryFn make_builtin_bit_adversary(const std::string& name, int decode_reps) {
  if (name == "constant0") return [](OracleAccess&, const BitVec&, Rng&) { return false; };
  if (name == "constant1") return [](OracleAccess&, const BitVec&, Rng&) { return true; };
  if (name == "coin") return [](OracleAccess&, const BitVec&, Rng& rng) { return rng.bit(); };
  if (name == "challenge_bit")
    return [](OracleAccess&, const BitVec& chal, Rng&) {
      require(chal.size() >= 1, "challenge_bit: empty challenge");
      return chal.get(0);
    };
  if (name == "readbit")
    return [](OracleAccess& oracle, const BitVec&, Rng&) {
      const ScaleProfile& p = oracle.profile();
      size_t bits = oracle.kind() == WorldKind::kPrf
                        ? size_t(2 * p.n + p.ell + 1)
                        : size_t(2 + p.n + detail::index_width(3 * p.n) + p.ell + 1);
      return oracle.read_a(BitVec(bits));
    };
  if (name == "decode_first")
    return [decode_reps](OracleAccess& oracle, const BitVec&, Rng& rng) {
      Region region = oracle.kind() == WorldKind::kPrf ? Region::kPrf : Region::kG;
      BitVec addr = block_address_for(oracle.profile(), BlockRef{region, 0, 0, 0});
      return oracle.decode_block(addr, rng, decode_reps);
    };
  if (name == "decode_compare")
    return [decode_reps](OracleAccess& oracle, const BitVec& chal, Rng& rng) {
      require(oracle.kind() == WorldKind::kPrf, "decode_compare runs on keyed worlds");
      const ScaleProfile& p = oracle.profile();
      uint64_t count = uint64_t(1) << p.n;
      require(chal.size() == count, "decode_compare: challenge must be a full table");
      for (uint64_t k = 0; k < count; ++k) {
        bool match = true;
        for (uint64_t x = 0; x < count && match; ++x) {
          BitVec addr = block_address_for(p, BlockRef{Region::kPrf, k, x, 0});
          match = oracle.decode_block(addr, rng, decode_reps) == chal.get(size_t(x));
        }
        if (match) return true;
      }
      return false;
    };
  if (name == "b_probe")
    return [](OracleAccess& oracle, const BitVec&, Rng&) {
      auto [sat, unsat] = detail::b_probe_queries();
      bool a = oracle.query_b(sat);
      bool b = oracle.query_b(unsat);
      return a && !b;
    };
  if (name == "probe_scan" || name == "probe_zero") {
    bool zero = name == "probe_zero";
    return [zero, decode_reps](OracleAccess& oracle, const BitVec& chal, Rng& rng) {
      require(oracle.kind() == WorldKind::kTrapdoor, "consistency probes run on trapdoor worlds");
      const ScaleProfile& p = oracle.profile();
      require(chal.size() == size_t(3 * p.n), "consistency probe: challenge must be a public key");
      uint64_t pk = chal.slice_u64(0, 3 * p.n);
      uint64_t x = rng.below(uint64_t(1) << p.n);
      uint64_t y = towf_eval(oracle, pk, x, rng, decode_reps);
      InvertResult r;
      if (zero) r = ZeroInverter{}(oracle, pk, y, rng);
      else r = ScanInverter{decode_reps}(oracle, pk, y, rng);
      if (!r.found || r.x >= (uint64_t(1) << p.n)) return false;
      return towf_eval(oracle, pk, r.x, rng, decode_reps) == y;
    };
  }
  require(false, "unknown built-in adversary name");
  return {};
}

// Resolves any adversary reference: exec:<command>, netlist:<file>[@window],
// or a built-in name.
inline BitAdversaryFn make_bit_adversary(const std::string& ref, int decode_reps) {
  if (ref.rfind("exec:", 0) == 0) {
    auto sub = std::make_shared<SubprocessAdversary>(
        SubprocessAdversary::from_command_line(ref.substr(5)));
    return [sub](OracleAccess& oracle, const BitVec& chal, Rng&) {
      return sub->run(oracle, chal, 1).get(0);
    };
  }
  if (ref.rfind("netlist:", 0) == 0) {
    std::string spec = ref.substr(8);
    size_t at = spec.find('@');
    auto adv = std::make_shared<NetlistAdversary>();
    if (at == std::string::npos) {
      adv->circuit = Ac0Circuit::from_netlist(read_text_file(spec));
    } else {
      adv->circuit = Ac0Circuit::from_netlist(read_text_file(spec.substr(0, at)));
      adv->window = parse_window(read_text_file(spec.substr(at + 1)));
    }
    return [adv](OracleAccess& oracle, const BitVec& chal, Rng&) {
      return run_netlist_adversary(*adv, oracle, chal);
    };
  }
  return make_builtin_bit_adversary(ref, decode_reps);
}

// ---- Paired two-arm bit games ------------------------------------------------------

struct PairedGameResult {
  BinomialEstimate real;
  BinomialEstimate random;
  double advantage = 0.0;  // |real - random|
  double adv_lo = 0.0;
  double adv_hi = 0.0;
};

// fn(trial, trial_seed) -> (real-arm bit, random-arm bit). The advantage
// interval is a Wald interval on the rate difference with Laplace-smoothed
// variance, folded at zero since the reported estimate is an absolute value.
template <class TrialFn>
inline PairedGameResult run_paired_bit_game(uint64_t trials, uint64_t seed, int workers,
                                            TrialFn&& fn) {
  require(trials > 0, "paired game: trials must be positive");
  std::vector<uint8_t> real_bits(trials), random_bits(trials);
  run_trials(trials, workers, [&](uint64_t t) {
    auto [r, s] = fn(t, derive_seed(seed, {t}));
    real_bits[t] = r;
    random_bits[t] = s;
  });
  uint64_t real_ones = 0, random_ones = 0;
  for (uint64_t t = 0; t < trials; ++t) {
    real_ones += real_bits[t];
    random_ones += random_bits[t];
  }
  PairedGameResult out;
  out.real = wilson_estimate(real_ones, trials);
  out.random = wilson_estimate(random_ones, trials);
  double p1 = (double(real_ones) + 1.0) / (double(trials) + 2.0);
  double p2 = (double(random_ones) + 1.0) / (double(trials) + 2.0);
  double se = std::sqrt(p1 * (1 - p1) / double(trials) + p2 * (1 - p2) / double(trials));
  out.advantage = std::abs(out.real.estimate - out.random.estimate);
  out.adv_lo = std::max(0.0, out.advantage - kZ95 * se);
  out.adv_hi = std::min(1.0, out.advantage + kZ95 * se);
  return out;
}

inline void append_game_rows(std::vector<ReportRow>& rows, const std::string& name,
                             const std::string& params, const PairedGameResult& g,
                             uint64_t trials, uint64_t seed) {
  rows.push_back({name + "_real", params, g.real.estimate, g.real.ci_lo, g.real.ci_hi, trials, seed});
  rows.push_back({name + "_random", params, g.random.estimate, g.random.ci_lo, g.random.ci_hi,
                  trials, seed});
  rows.push_back({name + "_advantage", params, g.advantage, g.adv_lo, g.adv_hi, trials, seed});
}

template <class Body>
inline ExperimentReport timed_report(Body&& body) {
  auto start = std::chrono::steady_clock::now();
  ExperimentReport report = body();
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---- Keyed-function distinguishing game ----------------------------------------------
//
// Per trial: sample a fresh world, pick a key k and an independent uniform
// table h; the real arm hands the adversary the table of row k, the random
// arm hands it h, both over the same world and metered access. Reported:
// each arm's acceptance rate and their absolute difference.

inline ExperimentReport run_prf_game(const GameSpec& spec, const BitAdversaryFn& adversary) {
  return timed_report([&] {
    spec.profile.validate(WorldKind::kPrf);
    uint64_t count = uint64_t(1) << spec.profile.n;
    PairedGameResult g =
        run_paired_bit_game(spec.trials, spec.seed, effective_workers(spec), [&](uint64_t,
                                                                                 uint64_t ts) {
          PrfWorld world = PrfWorld::sample(spec.profile, derive_seed(ts, {0}));
          Rng chal(derive_seed(ts, {1}));
          uint64_t k = chal.below(count);
          BitVec real_table{size_t(count)};
          BitVec random_table{size_t(count)};
          for (uint64_t x = 0; x < count; ++x) {
            real_table.set(size_t(x), prf_plain(world, k, x));
            random_table.set(size_t(x), chal.bit());
          }
          OracleAccess real_oracle(world, spec.query_cap);
          Rng real_rng(derive_seed(ts, {2}));
          bool r = adversary(real_oracle, real_table, real_rng);
          OracleAccess random_oracle(world, spec.query_cap);
          Rng random_rng(derive_seed(ts, {3}));
          bool s = adversary(random_oracle, random_table, random_rng);
          return std::pair<bool, bool>(r, s);
        });
    ExperimentReport report;
    Params params = profile_params(WorldKind::kPrf, spec.profile);
    params.add("adversary", spec.adversary).add("cap", spec.query_cap).add("reps", spec.decode_reps);
    append_game_rows(report.rows, "prf_game", params.str(), g, spec.trials, spec.seed);
    return report;
  });
}

inline ExperimentReport run_prf_game(const GameSpec& spec) {
  return run_prf_game(spec, make_bit_adversary(spec.adversary, spec.decode_reps));
}

// ---- Public-key pseudorandomness game --------------------------------------------------
//
// Real arm: pk from the generator on a uniform trapdoor. Random arm: pk
// uniform over the full key space. The challenge string is the key itself.

inline ExperimentReport run_pk_game(const GameSpec& spec, const BitAdversaryFn& adversary) {
  return timed_report([&] {
    spec.profile.validate(WorldKind::kTrapdoor);
    int n = spec.profile.n;
    PairedGameResult g =
        run_paired_bit_game(spec.trials, spec.seed, effective_workers(spec), [&](uint64_t,
                                                                                 uint64_t ts) {
          TrapdoorWorld world = TrapdoorWorld::sample(spec.profile, derive_seed(ts, {0}));
          Rng chal(derive_seed(ts, {1}));
          uint64_t real_pk = world.g_plain(chal.below(world.td_count()));
          uint64_t random_pk = chal.below(world.pk_count());
          BitVec real_bits, random_bits;
          real_bits.append_u64(real_pk, 3 * n);
          random_bits.append_u64(random_pk, 3 * n);
          OracleAccess real_oracle(world, spec.query_cap);
          Rng real_rng(derive_seed(ts, {2}));
          bool r = adversary(real_oracle, real_bits, real_rng);
          OracleAccess random_oracle(world, spec.query_cap);
          Rng random_rng(derive_seed(ts, {3}));
          bool s = adversary(random_oracle, random_bits, random_rng);
          return std::pair<bool, bool>(r, s);
        });
    ExperimentReport report;
    Params params = profile_params(WorldKind::kTrapdoor, spec.profile);
    params.add("adversary", spec.adversary).add("cap", spec.query_cap).add("reps", spec.decode_reps);
    append_game_rows(report.rows, "pk_game", params.str(), g, spec.trials, spec.seed);
    return report;
  });
}

inline ExperimentReport run_pk_game(const GameSpec& spec) {
  return run_pk_game(spec, make_bit_adversary(spec.adversary, spec.decode_reps));
}

// Wraps a preimage finder into a public-key distinguisher through the
// one-call consistency probe: evaluate a random point, invert once, accept
// iff the claimed preimage maps back.
inline BitAdversaryFn fake_pk_adversary_wrap(TowfAdversaryFn inverter, int decode_reps) {
  return [inverter = std::move(inverter), decode_reps](OracleAccess& oracle, const BitVec& chal,
                                                       Rng& rng) {
    require(oracle.kind() == WorldKind::kTrapdoor, "consistency probe runs on trapdoor worlds");
    const ScaleProfile& p = oracle.profile();
    require(chal.size() == size_t(3 * p.n), "consistency probe: challenge must be a public key");
    uint64_t pk = chal.slice_u64(0, 3 * p.n);
    uint64_t x = rng.below(uint64_t(1) << p.n);
    uint64_t y = towf_eval(oracle, pk, x, rng, decode_reps);
    InvertResult r = inverter(oracle, pk, y, rng);
    if (!r.found || r.x >= (uint64_t(1) << p.n)) return false;
    return towf_eval(oracle, pk, r.x, rng, decode_reps) == y;
  };
}

// ---- Inversion games -----------------------------------------------------------------

enum class TowfMode { kGenPk, kUniformPk, kUniformY };

inline TowfMode parse_towf_mode(const std::string& s) {
  if (s == "gen") return TowfMode::kGenPk;
  if (s == "uniform-pk") return TowfMode::kUniformPk;
  if (s == "uniform-y") return TowfMode::kUniformY;
  require(false, "unknown inversion challenge mode");
  return TowfMode::kGenPk;
}

inline const char* towf_mode_name(TowfMode m) {
  switch (m) {
    case TowfMode::kGenPk: return "gen";
    case TowfMode::kUniformPk: return "uniform-pk";
    case TowfMode::kUniformY: return "uniform-y";
  }
  return "?";
}

// Per trial: fresh world and challenge (pk, y) per the mode; success iff the
// adversary's claimed preimage maps to y under the world's tables. Built-in
// adversaries: random_guess, zero, scan, trapdoor (challenger shares the
// trapdoor; test-only), peek (reads plaintext; test-only upper bound).
// uniform-y mode also reports the image-membership rate of the challenge.
inline ExperimentReport run_towf_invert_game(const GameSpec& spec) {
  return timed_report([&] {
    spec.profile.validate(WorldKind::kTrapdoor);
    TowfMode mode = parse_towf_mode(spec.mode);
    uint64_t xc = uint64_t(1) << spec.profile.n;
    std::vector<uint8_t> wins(spec.trials), members(spec.trials, 0);

    std::shared_ptr<SubprocessAdversary> sub;
    if (spec.adversary.rfind("exec:", 0) == 0)
      sub = std::make_shared<SubprocessAdversary>(
          SubprocessAdversary::from_command_line(spec.adversary.substr(5)));

    run_trials(spec.trials, effective_workers(spec), [&](uint64_t t) {
      uint64_t ts = derive_seed(spec.seed, {t});
      TrapdoorWorld world = TrapdoorWorld::sample(spec.profile, derive_seed(ts, {0}));
      Rng chal(derive_seed(ts, {1}));
      uint64_t td = 0, pk, y;
      if (mode == TowfMode::kGenPk) {
        td = chal.below(world.td_count());
        pk = world.g_plain(td);
      } else {
        pk = chal.below(world.pk_count());
      }
      if (mode == TowfMode::kUniformY) {
        y = chal.below(world.y_count());
        bool member = false;
        for (uint64_t x = 0; x < xc && !member; ++x) member = world.f_plain(pk, x) == y;
        members[t] = member;
      } else {
        y = world.f_plain(pk, chal.below(xc));
      }

      OracleAccess oracle(world, spec.query_cap);
      Rng rng(derive_seed(ts, {2}));
      InvertResult r;
      if (sub) {
        BitVec bits;
        bits.append_u64(pk, 3 * spec.profile.n);
        bits.append_u64(y, 6 * spec.profile.n);
        BitVec out = sub->run(oracle, bits, size_t(spec.profile.n));
        r = InvertResult{true, out.slice_u64(0, spec.profile.n)};
      } else if (spec.adversary == "random_guess") {
        r = RandomGuessInverter{}(oracle, pk, y, rng);
      } else if (spec.adversary == "zero") {
        r = ZeroInverter{}(oracle, pk, y, rng);
      } else if (spec.adversary == "scan") {
        r = ScanInverter{spec.decode_reps}(oracle, pk, y, rng);
      } else if (spec.adversary == "trapdoor") {
        require(mode == TowfMode::kGenPk, "the trapdoor adversary needs a generated key");
        r = TrapdoorInverter{td, spec.decode_reps}(oracle, pk, y, rng);
      } else if (spec.adversary == "peek") {
        r = PeekInverter{&world}(oracle, pk, y, rng);
      } else {
        require(false, "unknown inversion adversary");
      }
      wins[t] = r.found && r.x < xc && world.f_plain(pk, r.x) == y;
    });

    uint64_t win_count = 0, member_count = 0;
    for (uint64_t t = 0; t < spec.trials; ++t) {
      win_count += wins[t];
      member_count += members[t];
    }
    ExperimentReport report;
    Params params = profile_params(WorldKind::kTrapdoor, spec.profile);
    params.add("mode", towf_mode_name(mode))
        .add("adversary", spec.adversary)
        .add("cap", spec.query_cap)
        .add("reps", spec.decode_reps);
    BinomialEstimate win = wilson_estimate(win_count, spec.trials);
    report.rows.push_back({"towf_invert", params.str(), win.estimate, win.ci_lo, win.ci_hi,
                           spec.trials, spec.seed});
    if (mode == TowfMode::kUniformY) {
      BinomialEstimate mem = wilson_estimate(member_count, spec.trials);
      report.rows.push_back({"towf_image_membership", params.str(), mem.estimate, mem.ci_lo,
                             mem.ci_hi, spec.trials, spec.seed});
    }
    return report;
  });
}

// Key-recovery game for the fixed-input map: challenge y is the map's output
// on a hidden uniform key; success iff the guessed key has the same output.
inline ExperimentReport run_owf_invert_game(const GameSpec& spec) {
  return timed_report([&] {
    spec.profile.validate(WorldKind::kPrf);
    uint64_t keys = uint64_t(1) << spec.profile.n;
    std::vector<uint8_t> wins(spec.trials);

    std::shared_ptr<SubprocessAdversary> sub;
    if (spec.adversary.rfind("exec:", 0) == 0)
      sub = std::make_shared<SubprocessAdversary>(
          SubprocessAdversary::from_command_line(spec.adversary.substr(5)));

    run_trials(spec.trials, effective_workers(spec), [&](uint64_t t) {
      uint64_t ts = derive_seed(spec.seed, {t});
      PrfWorld world = PrfWorld::sample(spec.profile, derive_seed(ts, {0}));
      Rng chal(derive_seed(ts, {1}));
      uint64_t k = chal.below(keys);
      BitVec y = owf_plain(world, k);

      OracleAccess oracle(world, spec.query_cap);
      Rng rng(derive_seed(ts, {2}));
      uint64_t guess = keys;  // out of range = forfeit
      if (sub) {
        BitVec out = sub->run(oracle, y, size_t(spec.profile.n));
        guess = out.slice_u64(0, spec.profile.n);
      } else if (spec.adversary == "random_guess") {
        guess = rng.below(keys);
      } else if (spec.adversary == "zero") {
        guess = 0;
      } else if (spec.adversary == "scan") {
        for (uint64_t cand = 0; cand < keys && guess == keys; ++cand) {
          BitVec img = owf_eval(oracle, cand, rng, spec.decode_reps);
          bool same = true;
          for (size_t i = 0; i < y.size() && same; ++i) same = img.get(i) == y.get(i);
          if (same) guess = cand;
        }
        if (guess == keys) guess = 0;
      } else {
        require(false, "unknown key-recovery adversary");
      }
      if (guess < keys) {
        BitVec img = owf_plain(world, guess);
        bool same = true;
        for (size_t i = 0; i < y.size() && same; ++i) same = img.get(i) == y.get(i);
        wins[t] = same;
      }
    });

    uint64_t win_count = 0;
    for (uint64_t t = 0; t < spec.trials; ++t) win_count += wins[t];
    ExperimentReport report;
    Params params = profile_params(WorldKind::kPrf, spec.profile);
    params.add("adversary", spec.adversary).add("cap", spec.query_cap).add("reps", spec.decode_reps);
    BinomialEstimate win = wilson_estimate(win_count, spec.trials);
    report.rows.push_back({"owf_invert", params.str(), win.estimate, win.ci_lo, win.ci_hi,
                           spec.trials, spec.seed});
    return report;
  });
}

// ---- Resampling experiments --------------------------------------------------------
//
// Generic estimator for the row-resampling bias of a distinguisher: outer
// trials sample a base instance and a challenge, inner runs compare the
// distinguisher on the base against a freshly resampled variant. Both arms
// of an inner run replay the same coin stream (common random numbers), so a
// distinguisher that never looks at the resampled slice differs on no inner
// run and reports a bias of exactly zero.
//
//   sample_base(seed) -> (World, challenge)
//   resample(world, challenge, seed) -> World
//   dist(world, challenge, Rng&) -> bool

struct ResampleOutcome {
  MeanEstimate abs_diff;   // E over outer trials of |mean inner difference|
  BinomialEstimate flip;   // Pr over all inner runs of an output flip
};

template <class World, class SampleBase, class Resample, class Distinguish>
inline ResampleOutcome resample_diff_core(SampleBase&& sample_base, Resample&& resample,
                                          Distinguish&& dist, uint64_t outer, uint64_t inner,
                                          uint64_t seed, int workers) {
  require(outer > 0 && inner > 0, "resample experiment: trial counts must be positive");
  std::vector<double> diffs(outer);
  std::vector<uint64_t> flip_slots(outer);
  run_trials(outer, workers, [&](uint64_t t) {
    uint64_t ts = derive_seed(seed, {t});
    auto [base, chal] = sample_base(derive_seed(ts, {0}));
    int64_t sum = 0;
    uint64_t flips = 0;
    for (uint64_t j = 0; j < inner; ++j) {
      uint64_t coin_seed = derive_seed(ts, {1, j});
      Rng coins_base(coin_seed);
      bool a = dist(base, chal, coins_base);
      World redrawn = resample(base, chal, derive_seed(ts, {2, j}));
      Rng coins_redrawn(coin_seed);
      bool b = dist(redrawn, chal, coins_redrawn);
      sum += int(a) - int(b);
      flips += a != b;
    }
    diffs[t] = std::abs(double(sum)) / double(inner);
    flip_slots[t] = flips;
  });
  uint64_t flips = 0;
  for (uint64_t f : flip_slots) flips += f;
  return {mean_estimate(diffs), wilson_estimate(flips, outer * inner)};
}

enum class ResampleConfig { kPrfRow, kTdRow, kFSlice };

inline ResampleConfig parse_resample_config(const std::string& s) {
  if (s == "prf-row") return ResampleConfig::kPrfRow;
  if (s == "td-row") return ResampleConfig::kTdRow;
  if (s == "f-slice") return ResampleConfig::kFSlice;
  require(false, "unknown resample configuration");
  return ResampleConfig::kPrfRow;
}

inline const char* resample_config_name(ResampleConfig c) {
  switch (c) {
    case ResampleConfig::kPrfRow: return "prf-row";
    case ResampleConfig::kTdRow: return "td-row";
    case ResampleConfig::kFSlice: return "f-slice";
  }
  return "?";
}

// Challenge and slice per configuration:
//   prf-row  challenge = a uniform table h; a uniform row is rewritten to
//            encode h under a fresh salt
//   td-row   challenge = a uniform target key pk*; a uniform generator row
//            is repointed at pk*
//   f-slice  challenge = a uniform image point y*; a uniform map entry is
//            rewritten to output y*; also reports how often y* already has
//            a preimage under a uniform key (the trivial-inversion rate)
inline ExperimentReport run_resample_experiment(const GameSpec& spec,
                                                const BitAdversaryFn& adversary) {
  return timed_report([&] {
    ResampleConfig config = parse_resample_config(spec.config);
    ExperimentReport report;
    Params params;
    uint64_t cap = spec.query_cap;
    ResampleOutcome outcome;
    std::vector<uint8_t> trivial(spec.trials, 0);

    if (config == ResampleConfig::kPrfRow) {
      spec.profile.validate(WorldKind::kPrf);
      params = profile_params(WorldKind::kPrf, spec.profile);
      uint64_t count = uint64_t(1) << spec.profile.n;
      auto sample_base = [&](uint64_t s) {
        PrfWorld world = PrfWorld::sample(spec.profile, derive_seed(s, {0}));
        Rng rng(derive_seed(s, {1}));
        return std::pair<PrfWorld, BitVec>(std::move(world), rng.bits(size_t(count)));
      };
      auto resample = [&](const PrfWorld& base, const BitVec& chal, uint64_t s) {
        Rng rng(s);
        uint64_t k = rng.below(count);
        TruthTable h(spec.profile.n);
        for (uint64_t x = 0; x < count; ++x) h.set(x, chal.get(size_t(x)));
        return base.resample_row(k, h, rng.next_u64());
      };
      auto dist = [&](const PrfWorld& w, const BitVec& chal, Rng& rng) {
        OracleAccess oracle(w, cap);
        return adversary(oracle, chal, rng);
      };
      outcome = resample_diff_core<PrfWorld>(sample_base, resample, dist, spec.trials, spec.inner,
                                             spec.seed, effective_workers(spec));
    } else {
      spec.profile.validate(WorldKind::kTrapdoor);
      params = profile_params(WorldKind::kTrapdoor, spec.profile);
      int n = spec.profile.n;
      bool slice = config == ResampleConfig::kFSlice;
      auto sample_base = [&](uint64_t s) {
        TrapdoorWorld world = TrapdoorWorld::sample(spec.profile, derive_seed(s, {0}));
        Rng rng(derive_seed(s, {1}));
        BitVec chal;
        if (slice) chal.append_u64(rng.below(world.y_count()), 6 * n);
        else chal.append_u64(rng.below(world.pk_count()), 3 * n);
        return std::pair<TrapdoorWorld, BitVec>(std::move(world), std::move(chal));
      };
      auto resample = [&](const TrapdoorWorld& base, const BitVec& chal, uint64_t s) {
        Rng rng(s);
        if (slice) {
          uint64_t y_star = chal.slice_u64(0, 6 * n);
          uint64_t pk = rng.below(base.pk_count());
          uint64_t x = rng.below(base.x_count());
          return base.resample_f_slice(pk, x, y_star, rng.next_u64());
        }
        uint64_t pk_star = chal.slice_u64(0, 3 * n);
        uint64_t td = rng.below(base.td_count());
        return base.resample_td_row(td, pk_star, rng.next_u64());
      };
      auto dist = [&](const TrapdoorWorld& w, const BitVec& chal, Rng& rng) {
        OracleAccess oracle(w, cap);
        return adversary(oracle, chal, rng);
      };
      outcome = resample_diff_core<TrapdoorWorld>(sample_base, resample, dist, spec.trials,
                                                  spec.inner, spec.seed, effective_workers(spec));
      if (slice) {
        run_trials(spec.trials, effective_workers(spec), [&](uint64_t t) {
          uint64_t ts = derive_seed(spec.seed, {t});
          auto [world, chal] = sample_base(derive_seed(ts, {0}));
          uint64_t y_star = chal.slice_u64(0, 6 * n);
          uint64_t pk = Rng(derive_seed(ts, {3})).below(world.pk_count());
          bool member = false;
          for (uint64_t x = 0; x < world.x_count() && !member; ++x)
            member = world.f_plain(pk, x) == y_star;
          trivial[t] = member;
        });
      }
    }

    params.add("config", resample_config_name(config))
        .add("distinguisher", spec.adversary)
        .add("inner", spec.inner)
        .add("cap", cap)
        .add("reps", spec.decode_reps);
    report.rows.push_back({"resample_bias", params.str(), outcome.abs_diff.mean,
                           outcome.abs_diff.ci_lo, outcome.abs_diff.ci_hi, spec.trials,
                           spec.seed});
    report.rows.push_back({"resample_flip", params.str(), outcome.flip.estimate,
                           outcome.flip.ci_lo, outcome.flip.ci_hi, spec.trials * spec.inner,
                           spec.seed});
    if (config == ResampleConfig::kFSlice) {
      uint64_t members = 0;
      for (uint8_t m : trivial) members += m;
      BinomialEstimate mem = wilson_estimate(members, spec.trials);
      report.rows.push_back({"resample_trivial_inversion", params.str(), mem.estimate, mem.ci_lo,
                             mem.ci_hi, spec.trials, spec.seed});
    }
    return report;
  });
}

inline ExperimentReport run_resample_experiment(const GameSpec& spec) {
  return run_resample_experiment(spec, make_bit_adversary(spec.adversary, spec.decode_reps));
}

// ---- Advantage squaring ---------------------------------------------------------------
//
// A one-bit guessing game over paired challenge distributions. The wrapper
// takes any one-bit adversary and produces another whose advantage is the
// square of the original's: on challenge X it draws a side coin c, samples
// its own challenge Y from side c, runs the inner adversary on X and then
// on Y (exactly two runs), and answers c when the two answers agree and
// not-c when they differ.

template <class Challenge>
struct BitGuessEnsemble {
  // sample(real_side, seed) -> challenge drawn from that side
  std::function<Challenge(bool, uint64_t)> sample;
};

template <class Challenge>
using ChallengeAdversary = std::function<bool(const Challenge&, Rng&)>;

template <class Challenge>
struct SquaredAdversary {
  ChallengeAdversary<Challenge> inner;
  BitGuessEnsemble<Challenge> ensemble;
  std::shared_ptr<std::atomic<uint64_t>> inner_runs = std::make_shared<std::atomic<uint64_t>>(0);

  bool operator()(const Challenge& x, Rng& rng) const {
    bool side = rng.bit();
    Challenge y = ensemble.sample(side, rng.next_u64());
    inner_runs->fetch_add(1);
    bool u = inner(x, rng);
    inner_runs->fetch_add(1);
    bool v = inner(y, rng);
    return side ^ u ^ v;
  }
};

template <class Challenge>
inline SquaredAdversary<Challenge> advantage_squaring_wrap(ChallengeAdversary<Challenge> inner,
                                                           BitGuessEnsemble<Challenge> ensemble) {
  return SquaredAdversary<Challenge>{std::move(inner), std::move(ensemble)};
}

// Measures a one-bit adversary's advantage over an ensemble with paired
// real/random challenges per trial.
template <class Challenge, class Adversary>
inline ExperimentReport measure_bit_advantage(const BitGuessEnsemble<Challenge>& ensemble,
                                              Adversary&& adversary, uint64_t trials,
                                              uint64_t seed, int workers, const std::string& name,
                                              const std::string& params) {
  return timed_report([&] {
    PairedGameResult g = run_paired_bit_game(trials, seed, workers, [&](uint64_t, uint64_t ts) {
      Challenge real = ensemble.sample(true, derive_seed(ts, {0}));
      Rng real_rng(derive_seed(ts, {1}));
      bool r = adversary(real, real_rng);
      Challenge random = ensemble.sample(false, derive_seed(ts, {2}));
      Rng random_rng(derive_seed(ts, {3}));
      bool s = adversary(random, random_rng);
      return std::pair<bool, bool>(r, s);
    });
    ExperimentReport report;
    append_game_rows(report.rows, name, params, g, trials, seed);
    return report;
  });
}

// Synthetic two-bit ensemble with a known best advantage of exactly 1/2:
// the real side repeats bit 0 into bit 1, the random side draws both bits
// uniformly. The compare adversary accepts iff the bits agree.
inline BitGuessEnsemble<BitVec> rigged_bit_ensemble() {
  BitGuessEnsemble<BitVec> e;
  e.sample = [](bool real_side, uint64_t seed) {
    Rng rng(seed);
    BitVec v(2);
    v.set(0, rng.bit());
    v.set(1, real_side ? v.get(0) : rng.bit());
    return v;
  };
  return e;
}

inline ChallengeAdversary<BitVec> rigged_compare_adversary() {
  return [](const BitVec& chal, Rng&) { return chal.get(0) == chal.get(1); };
}

// Keyed-world instantiation for the wrapper: a challenge is a world handle
// plus a function table. The real side must produce the table of a hidden
// row, which an adversary-side sampler can only obtain through the oracle,
// so it decodes the row bit by bit; the random side draws the table
// uniformly.
struct PrfChallenge {
  std::shared_ptr<const PrfWorld> world;
  BitVec table;
  uint64_t cap = 0;
  int decode_reps = kDefaultDecodeReps;
};

inline BitGuessEnsemble<PrfChallenge> prf_bit_ensemble(const ScaleProfile& profile, uint64_t cap,
                                                       int decode_reps) {
  profile.validate(WorldKind::kPrf);
  BitGuessEnsemble<PrfChallenge> e;
  e.sample = [profile, cap, decode_reps](bool real_side, uint64_t seed) {
    auto world = std::make_shared<PrfWorld>(PrfWorld::sample(profile, derive_seed(seed, {0})));
    Rng rng(derive_seed(seed, {1}));
    uint64_t count = uint64_t(1) << profile.n;
    BitVec table{size_t(count)};
    if (real_side) {
      uint64_t k = rng.below(count);
      OracleAccess oracle(*world, cap);
      for (uint64_t x = 0; x < count; ++x) {
        BitVec addr = block_address_for(profile, BlockRef{Region::kPrf, k, x, 0});
        table.set(size_t(x), oracle.decode_block(addr, rng, decode_reps));
      }
    } else {
      for (uint64_t x = 0; x < count; ++x) table.set(size_t(x), rng.bit());
    }
    return PrfChallenge{std::move(world), std::move(table), cap, decode_reps};
  };
  return e;
}

// The table-matching adversary over PrfChallenge: accepts iff some decoded
// row equals the challenge table.
inline ChallengeAdversary<PrfChallenge> prf_compare_adversary() {
  return [](const PrfChallenge& chal, Rng& rng) {
    OracleAccess oracle(*chal.world, chal.cap);
    return make_builtin_bit_adversary("decode_compare", chal.decode_reps)(oracle, chal.table, rng);
  };
}

// ---- Decoder calibration ----------------------------------------------------------------

struct CalibrationPoint {
  int repetitions = 0;
  double threshold = 0.0;       // accept iff accepts/repetitions >= threshold
  MeanEstimate marked_error;    // Pr[decode=0 | marked], averaged over instances
  MeanEstimate unmarked_error;  // Pr[decode=1 | unmarked]
};

namespace detail {

// pmf of Binomial(n, p) via log-gamma; exact enough for error reporting.
inline std::vector<double> binomial_pmf(int n, double p) {
  std::vector<double> pmf(size_t(n) + 1, 0.0);
  if (p <= 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  if (p >= 1.0) {
    pmf[size_t(n)] = 1.0;
    return pmf;
  }
  double lp = std::log(p), lq = std::log1p(-p);
  double lgn = std::lgamma(double(n) + 1.0);
  for (int k = 0; k <= n; ++k) {
    double lg = lgn - std::lgamma(double(k) + 1.0) - std::lgamma(double(n - k) + 1.0);
    pmf[size_t(k)] = std::exp(lg + double(k) * lp + double(n - k) * lq);
  }
  return pmf;
}

}  // namespace detail

// For each repetition count, finds the integer cutoff minimizing the worse
// of the two decode error rates, computed exactly per sampled instance from
// the instance's acceptance probability (the repeated test is binomial).
inline std::vector<CalibrationPoint> calibrate_decoder(int ell, SamplerKind sampler, double eps,
                                                       uint64_t instance_samples,
                                                       const std::vector<int>& reps_list,
                                                       uint64_t seed) {
  require(ell >= 1 && ell <= kMaxSamplerEll, "calibrate: ell out of range");
  require(instance_samples >= 2, "calibrate: need at least two instances per side");
  std::vector<double> marked_p(instance_samples), unmarked_p(instance_samples);
  for (uint64_t i = 0; i < instance_samples; ++i) {
    uint64_t si = derive_seed(seed, {i});
    ForrelationInstance marked = draw_block_instance(derive_seed(si, {0}), ell, true, sampler, eps);
    ForrelationInstance unmarked =
        draw_block_instance(derive_seed(si, {1}), ell, false, sampler, eps);
    marked_p[i] = forrelation_accept_probability(marked);
    unmarked_p[i] = forrelation_accept_probability(unmarked);
  }

  std::vector<CalibrationPoint> points;
  for (int reps : reps_list) {
    require(reps >= 1 && reps <= 4096, "calibrate: repetition count out of range");
    // cdf_below[i][c] = Pr[Bin(reps, p_i) < c]
    std::vector<std::vector<double>> below_marked(instance_samples),
        below_unmarked(instance_samples);
    for (uint64_t i = 0; i < instance_samples; ++i) {
      for (int side = 0; side < 2; ++side) {
        std::vector<double> pmf =
            detail::binomial_pmf(reps, side ? unmarked_p[i] : marked_p[i]);
        std::vector<double> below(size_t(reps) + 2, 0.0);
        for (int c = 1; c <= reps + 1; ++c) below[size_t(c)] = below[size_t(c) - 1] + pmf[size_t(c) - 1];
        (side ? below_unmarked : below_marked)[i] = std::move(below);
      }
    }
    int best_c = 1;
    double best = 2.0;
    for (int c = 1; c <= reps; ++c) {
      double em = 0, eu = 0;
      for (uint64_t i = 0; i < instance_samples; ++i) {
        em += below_marked[i][size_t(c)];            // marked decoded 0: accepts < c
        eu += 1.0 - below_unmarked[i][size_t(c)];    // unmarked decoded 1: accepts >= c
      }
      double worst = std::max(em, eu) / double(instance_samples);
      if (worst < best) {
        best = worst;
        best_c = c;
      }
    }
    CalibrationPoint pt;
    pt.repetitions = reps;
    pt.threshold = double(best_c) / double(reps);
    std::vector<double> em(instance_samples), eu(instance_samples);
    for (uint64_t i = 0; i < instance_samples; ++i) {
      em[i] = below_marked[i][size_t(best_c)];
      eu[i] = 1.0 - below_unmarked[i][size_t(best_c)];
    }
    pt.marked_error = mean_estimate(em);
    pt.unmarked_error = mean_estimate(eu);
    points.push_back(std::move(pt));
  }
  return points;
}

inline ExperimentReport calibration_report(int ell, SamplerKind sampler, double eps,
                                           uint64_t instance_samples,
                                           const std::vector<int>& reps_list, uint64_t seed,
                                           double target_error) {
  return timed_report([&] {
    std::vector<CalibrationPoint> points =
        calibrate_decoder(ell, sampler, eps, instance_samples, reps_list, seed);
    ExperimentReport report;
    int recommended = 0;
    for (const CalibrationPoint& pt : points) {
      Params params;
      params.add("ell", ell).add("sampler", sampler_name(sampler));
      if (sampler == SamplerKind::kGaussian) params.add("eps", eps);
      params.add("reps", pt.repetitions).add("threshold", pt.threshold);
      report.rows.push_back({"calibrate_marked_error", params.str(), pt.marked_error.mean,
                             pt.marked_error.ci_lo, pt.marked_error.ci_hi, instance_samples,
                             seed});
      report.rows.push_back({"calibrate_unmarked_error", params.str(), pt.unmarked_error.mean,
                             pt.unmarked_error.ci_lo, pt.unmarked_error.ci_hi, instance_samples,
                             seed});
      if (recommended == 0 &&
          std::max(pt.marked_error.mean, pt.unmarked_error.mean) <= target_error)
        recommended = pt.repetitions;
    }
    Params params;
    params.add("ell", ell).add("sampler", sampler_name(sampler)).add("target", target_error);
    report.rows.push_back({"calibrate_recommended_reps", params.str(), double(recommended), 0.0,
                           0.0, instance_samples, seed});
    return report;
  });
}

// ---- Exhaustive resampling identity ---------------------------------------------------
//
// For a K x M circuit f and every x (integer counting, common denominator
// 2^{KM+K}): K * sum_{i,row} [f(x) != f(x[row i := row])] * 2^{KM-M} equals
// the sum over x' and z of the sensitivity at z of the substituted circuit
// g_w, where w routes row i to x's row i on side z_i and x''s row on the
// other side.

inline bool resample_identity_holds(const Ac0Circuit& c, BlockShape shape) {
  require(c.num_inputs() == shape.total(), "identity check: shape mismatch");
  size_t total = shape.total();
  require(total <= 16 && shape.K <= 16, "identity check: enumeration is limited to 16 bits");
  uint64_t inputs = uint64_t(1) << total;
  uint64_t rows = uint64_t(1) << shape.M;
  uint64_t patterns = uint64_t(1) << shape.K;

  auto unpack = [](uint64_t v, size_t bits) {
    BitVec x(bits);
    for (size_t i = 0; i < bits; ++i) x.set(i, (v >> i) & 1);
    return x;
  };

  for (uint64_t xb = 0; xb < inputs; ++xb) {
    BitVec x = unpack(xb, total);
    bool fx = c.evaluate(x);
    int64_t flips = 0;
    for (uint32_t i = 0; i < shape.K; ++i)
      for (uint64_t row = 0; row < rows; ++row) {
        BitVec y = x;
        y.set_slice_u64(size_t(i) * shape.M, shape.M, row);
        flips += c.evaluate(y) != fx;
      }
    int64_t lhs = flips * (int64_t(1) << (total + shape.K - shape.M));

    int64_t rhs = 0;
    for (uint64_t xpb = 0; xpb < inputs; ++xpb) {
      BitVec xp = unpack(xpb, total);
      for (uint64_t zb = 0; zb < patterns; ++zb) {
        BitVec z = unpack(zb, shape.K);
        BitVec w0(total), w1(total);
        for (uint32_t i = 0; i < shape.K; ++i)
          for (uint32_t j = 0; j < shape.M; ++j) {
            size_t pos = size_t(i) * shape.M + j;
            bool xi = x.get(pos), xpi = xp.get(pos);
            if (z.get(i)) {
              w1.set(pos, xi);
              w0.set(pos, xpi);
            } else {
              w0.set(pos, xi);
              w1.set(pos, xpi);
            }
          }
        rhs += sensitivity_at(gw_reduction(c, shape, w0, w1), z);
      }
    }
    if (lhs != rhs) return false;
  }
  return true;
}

// The standard family the identity is checked over at a given shape.
inline std::vector<Ac0Circuit> identity_check_family(BlockShape shape, uint64_t seed,
                                                     int random_count = 8) {
  uint32_t total = uint32_t(shape.total());
  std::vector<Ac0Circuit> family;
  family.push_back(make_and_circuit(total));
  family.push_back(make_or_circuit(total));
  family.push_back(make_parity_circuit(total));
  family.push_back(make_threshold_circuit(total, (total + 1) / 2));
  Rng rng(seed);
  for (int i = 0; i < random_count; ++i) family.push_back(random_circuit(rng, total, 10));
  return family;
}

// ---- Witness-circuit bridge --------------------------------------------------------------

// Compiles a gate netlist into the witness-query byte form: netlist inputs
// become witness bits, gates map one to one, and the output gate is routed
// to the final node if it is not already last.
inline WitnessCircuit ac0_to_witness_circuit(const Ac0Circuit& c) {
  require(c.num_inputs() <= WitnessCircuit::kMaxWitnessBits,
          "witness compile: too many inputs");
  require(c.num_nodes() + 1 <= WitnessCircuit::kMaxNodes, "witness compile: too many gates");
  WitnessCircuit out;
  out.witness_bits = uint8_t(c.num_inputs());
  for (uint32_t i = 0; i < c.num_inputs(); ++i) {
    WitnessNode node;
    node.op = WitnessNode::Op::kWitness;
    node.witness_index = uint8_t(i);
    out.nodes.push_back(std::move(node));
  }
  for (const Gate& g : c.gates()) {
    WitnessNode node;
    switch (g.type) {
      case GateType::kNot: node.op = WitnessNode::Op::kNot; break;
      case GateType::kAnd: node.op = WitnessNode::Op::kAnd; break;
      case GateType::kOr: node.op = WitnessNode::Op::kOr; break;
    }
    require(g.fanin.size() <= 255, "witness compile: gate arity above 255");
    for (uint32_t ref : g.fanin) node.children.push_back(uint16_t(ref));
    out.nodes.push_back(std::move(node));
  }
  if (c.output() + 1 != c.num_nodes()) {
    WitnessNode route;
    route.op = WitnessNode::Op::kOr;
    route.children.push_back(uint16_t(c.output()));
    out.nodes.push_back(std::move(route));
  }
  return out;
}

// ---- Protocol experiment runners ---------------------------------------------------------

// Encrypt-then-decrypt round trips of single bits under fresh worlds.
inline ExperimentReport run_pke_experiment(const ScaleProfile& profile, uint64_t trials,
                                           uint64_t seed, int decode_reps, int workers,
                                           uint64_t query_cap = 0) {
  return timed_report([&] {
    profile.validate(WorldKind::kTrapdoor);
    std::vector<uint8_t> ok(trials);
    run_trials(trials, workers, [&](uint64_t t) {
      uint64_t ts = derive_seed(seed, {t});
      TrapdoorWorld world = TrapdoorWorld::sample(profile, derive_seed(ts, {0}));
      Rng rng(derive_seed(ts, {1}));
      TrapdoorKeyPair kp = towf_gen(world, rng);
      bool m = rng.bit();
      OracleAccess enc_oracle(world, query_cap);
      PkeCiphertext ct = pke_enc(enc_oracle, kp.pk, m, rng, decode_reps);
      OracleAccess dec_oracle(world, query_cap);
      ok[t] = pke_dec(dec_oracle, kp.td, ct, rng, decode_reps) == m;
    });
    uint64_t wins = 0;
    for (uint8_t b : ok) wins += b;
    BinomialEstimate e = wilson_estimate(wins, trials);
    ExperimentReport report;
    Params params = profile_params(WorldKind::kTrapdoor, profile);
    params.add("reps", decode_reps).add("cap", query_cap);
    report.rows.push_back({"pke_roundtrip", params.str(), e.estimate, e.ci_lo, e.ci_hi, trials,
                           seed});
    return report;
  });
}

inline ExperimentReport run_key_exchange_experiment(const ScaleProfile& profile, uint64_t trials,
                                                    uint64_t seed, int decode_reps, int workers,
                                                    uint64_t query_cap = 0) {
  return timed_report([&] {
    profile.validate(WorldKind::kTrapdoor);
    std::vector<uint8_t> ok(trials);
    run_trials(trials, workers, [&](uint64_t t) {
      uint64_t ts = derive_seed(seed, {t});
      TrapdoorWorld world = TrapdoorWorld::sample(profile, derive_seed(ts, {0}));
      KeyExchangeResult r = key_exchange(world, derive_seed(ts, {1}), decode_reps, query_cap);
      ok[t] = r.agreed;
    });
    uint64_t wins = 0;
    for (uint8_t b : ok) wins += b;
    BinomialEstimate e = wilson_estimate(wins, trials);
    ExperimentReport report;
    Params params = profile_params(WorldKind::kTrapdoor, profile);
    params.add("reps", decode_reps).add("cap", query_cap);
    report.rows.push_back({"key_exchange_agree", params.str(), e.estimate, e.ci_lo, e.ci_hi,
                           trials, seed});
    return report;
  });
}

inline ExperimentReport run_ot_experiment(const ScaleProfile& profile, uint64_t trials,
                                          uint64_t seed, int decode_reps, int workers,
                                          uint64_t query_cap = 0) {
  return timed_report([&] {
    profile.validate(WorldKind::kTrapdoor);
    std::vector<uint8_t> ok(trials);
    run_trials(trials, workers, [&](uint64_t t) {
      uint64_t ts = derive_seed(seed, {t});
      TrapdoorWorld world = TrapdoorWorld::sample(profile, derive_seed(ts, {0}));
      Rng rng(derive_seed(ts, {1}));
      bool m0 = rng.bit(), m1 = rng.bit(), choice = rng.bit();
      OtResult r = ot_run(world, m0, m1, choice, derive_seed(ts, {2}), decode_reps, query_cap);
      ok[t] = r.correct;
    });
    uint64_t wins = 0;
    for (uint8_t b : ok) wins += b;
    BinomialEstimate e = wilson_estimate(wins, trials);
    ExperimentReport report;
    Params params = profile_params(WorldKind::kTrapdoor, profile);
    params.add("reps", decode_reps).add("cap", query_cap);
    report.rows.push_back({"ot_correct", params.str(), e.estimate, e.ci_lo, e.ci_hi, trials,
                           seed});
    return report;
  });
}

// ---- Circuit experiments (no oracle world) -------------------------------------------------

// Resolves a circuit reference: netlist:<file> or a named builtin sized to
// `inputs` ("and", "or", "parity", "majority", "threshold:<t>").
inline Ac0Circuit circuit_from_reference(const std::string& ref, uint32_t inputs) {
  if (ref.rfind("netlist:", 0) == 0) {
    Ac0Circuit c = Ac0Circuit::from_netlist(read_text_file(ref.substr(8)));
    require(c.num_inputs() == inputs, "netlist circuit has the wrong input count");
    return c;
  }
  if (ref == "and") return make_and_circuit(inputs);
  if (ref == "or") return make_or_circuit(inputs);
  if (ref == "parity") return make_parity_circuit(inputs);
  if (ref == "majority") return make_threshold_circuit(inputs, (inputs + 1) / 2);
  if (ref.rfind("threshold:", 0) == 0)
    return make_threshold_circuit(inputs, uint32_t(std::stoul(ref.substr(10))));
  require(false, "unknown circuit reference");
  return Ac0Circuit(1);
}

inline ExperimentReport run_block_resample_game(const GameSpec& spec) {
  return timed_report([&] {
    BlockShape shape{spec.shape_k, spec.shape_m};
    Ac0Circuit c = circuit_from_reference(spec.adversary, uint32_t(shape.total()));
    RowSampler uniform_rows = [m = shape.M](Rng& rng) { return rng.bits(m); };
    BinomialEstimate e = block_resample_flip_prob(c, shape, uniform_rows, spec.trials, spec.seed);
    ExperimentReport report;
    Params params;
    params.add("K", uint64_t(shape.K)).add("M", uint64_t(shape.M)).add("circuit", spec.adversary);
    report.rows.push_back({"block_resample_flip", params.str(), e.estimate, e.ci_lo, e.ci_hi,
                           spec.trials, spec.seed});
    return report;
  });
}

inline ExperimentReport run_sensitivity_tail_game(const GameSpec& spec) {
  return timed_report([&] {
    uint32_t inputs = uint32_t(BlockShape{spec.shape_k, spec.shape_m}.total());
    Ac0Circuit c = circuit_from_reference(spec.adversary, inputs);
    BinomialEstimate e = sensitivity_tail_estimate(c, spec.tail_threshold, spec.trials, spec.seed);
    ExperimentReport report;
    Params params;
    params.add("inputs", uint64_t(inputs))
        .add("t", spec.tail_threshold)
        .add("circuit", spec.adversary);
    report.rows.push_back({"sensitivity_tail", params.str(), e.estimate, e.ci_lo, e.ci_hi,
                           spec.trials, spec.seed});
    return report;
  });
}

inline ExperimentReport run_planted_indist_game(const GameSpec& spec) {
  return timed_report([&] {
    int ell = spec.profile.ell;
    require(ell >= 1 && ell <= 12, "planted distinguishing: ell out of range for evaluation");
    uint32_t inputs = uint32_t(2) << ell;
    Ac0Circuit c = circuit_from_reference(spec.adversary, inputs);
    double eps = spec.profile.eps;
    SamplerKind sampler = spec.profile.sampler == SamplerKind::kUniform ? SamplerKind::kExact
                                                                        : spec.profile.sampler;
    InputSampler planted = [ell, sampler, eps](Rng& rng) {
      return instance_oracle_bits(draw_block_instance(rng.next_u64(), ell, true, sampler, eps));
    };
    InputSampler uniform = [ell](Rng& rng) {
      return instance_oracle_bits(draw_block_instance(rng.next_u64(), ell, false,
                                                      SamplerKind::kUniform, 0.0));
    };
    AdvantageEstimate e = distinguishing_advantage(c, planted, uniform, spec.trials, spec.seed);
    ExperimentReport report;
    Params params;
    params.add("ell", ell).add("sampler", sampler_name(sampler)).add("circuit", spec.adversary);
    report.rows.push_back({"planted_indist_planted", params.str(), e.accept_a.estimate,
                           e.accept_a.ci_lo, e.accept_a.ci_hi, spec.trials, spec.seed});
    report.rows.push_back({"planted_indist_uniform", params.str(), e.accept_b.estimate,
                           e.accept_b.ci_lo, e.accept_b.ci_hi, spec.trials, spec.seed});
    double lo = e.ci_lo <= 0.0 && e.ci_hi >= 0.0
                    ? 0.0
                    : std::min(std::abs(e.ci_lo), std::abs(e.ci_hi));
    double hi = std::max(std::abs(e.ci_lo), std::abs(e.ci_hi));
    report.rows.push_back({"planted_indist_advantage", params.str(), std::abs(e.advantage), lo,
                           hi, spec.trials, spec.seed});
    return report;
  });
}

// ---- Dispatcher -----------------------------------------------------------------------------

inline ExperimentReport run_game(const GameSpec& spec) {
  switch (spec.game) {
    case GameKind::kPrfDistinguish: return run_prf_game(spec);
    case GameKind::kPkPseudorandom: return run_pk_game(spec);
    case GameKind::kTowfInvert: return run_towf_invert_game(spec);
    case GameKind::kOwfInvert: return run_owf_invert_game(spec);
    case GameKind::kBlockResample: return run_block_resample_game(spec);
    case GameKind::kSensitivityTail: return run_sensitivity_tail_game(spec);
    case GameKind::kPlantedIndist: return run_planted_indist_game(spec);
  }
  require(false, "unknown game kind");
  return {};
}

}  // namespace forrelab
