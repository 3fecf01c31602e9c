#include <cstdlib>
#include <fstream>
#include <set>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "forrelab/harness.hpp"

using namespace forrelab;

namespace {

ScaleProfile tiny_prf(int n = 2, int ell = 6) {
  ScaleProfile p;
  p.n = n;
  p.ell = ell;
  p.sampler = SamplerKind::kExact;
  return p;
}

const ReportRow& find_row(const ExperimentReport& report, const std::string& name) {
  for (const ReportRow& r : report.rows)
    if (r.experiment == name) return r;
  FAIL("missing report row: " << name);
  return report.rows.front();
}

std::string stub_command(const std::string& mode) {
  const char* env = std::getenv("FORRELAB_STUB");
  std::string path = env && *env ? env : "./adversary_stub";
  return "exec:" + path + " " + mode;
}

double binom_coeff(int n, int k) {
  double c = 1;
  for (int i = 0; i < k; ++i) c = c * double(n - i) / double(i + 1);
  return c;
}

}  // namespace

TEST_CASE("hex and binary string forms") {
  BitVec v(11);
  v.set(0, true);
  v.set(5, true);
  v.set(10, true);
  std::string hex = bits_to_hex(v);
  REQUIRE(hex.size() == 3);
  REQUIRE(bits_to_hex(bits_from_hex(hex, 11)) == hex);
  BitVec back = bits_from_hex(hex, 11);
  REQUIRE(back.size() == 11);
  for (size_t i = 0; i < 11; ++i) REQUIRE(back.get(i) == v.get(i));

  // Bit 0 sits in the most significant position of the first nibble.
  BitVec one(4);
  one.set(0, true);
  REQUIRE(bits_to_hex(one) == "8");

  // Nonzero padding bits in the last nibble are rejected.
  REQUIRE_THROWS_AS(bits_from_hex("F", 3), PreconditionError);
  REQUIRE_NOTHROW(bits_from_hex("E", 3));
  REQUIRE_THROWS_AS(bits_from_hex("12", 11), PreconditionError);
  REQUIRE_THROWS_AS(bits_from_hex("1G8", 11), PreconditionError);

  REQUIRE(value_from_binary("01", 2) == 1);
  REQUIRE(value_from_binary("10", 2) == 2);
  REQUIRE_THROWS_AS(value_from_binary("2", 1), PreconditionError);
  REQUIRE_THROWS_AS(value_from_binary("01", 3), PreconditionError);
}

TEST_CASE("report serialization is canonical") {
  std::vector<ReportRow> rows;
  rows.push_back({"alpha", "n=2;ell=6", 0.5, 0.25, 0.75, 100, 7});
  rows.push_back({"beta", "funny,\"params\"", 1.0 / 3.0, 0.0, 1.0, 3, 1});
  std::string csv = report_to_csv(rows);
  std::string expected =
      "experiment,params,estimate,ci_lo,ci_hi,trials,seed\n"
      "alpha,n=2;ell=6,0.5,0.25,0.75,100,7\n"
      "beta,\"funny,\"\"params\"\"\",0.3333333333333333,0,1,3,1\n";
  REQUIRE(csv == expected);

  std::string jsonl = report_to_json_lines(rows);
  REQUIRE(jsonl.find("\"experiment\":\"alpha\"") != std::string::npos);
  REQUIRE(std::count(jsonl.begin(), jsonl.end(), '\n') == 2);
  // Round trip through the JSON parser preserves the estimate exactly.
  auto first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  REQUIRE(double(first["estimate"]) == 0.5);

  REQUIRE(format_double(0.1) == "0.1");
  REQUIRE(format_double(std::nan("")) == "nan");
  REQUIRE(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("worker pool covers every trial and rethrows") {
  std::vector<int> hits(1000, 0);
  run_trials(1000, 4, [&](uint64_t t) { hits[t] += 1; });
  for (int h : hits) REQUIRE(h == 1);

  REQUIRE_THROWS_AS(run_trials(100, 3,
                               [&](uint64_t t) {
                                 if (t == 57) throw PreconditionError("boom");
                               }),
                    PreconditionError);

  setenv("FORRELAB_WORKERS", "7", 1);
  REQUIRE(worker_count_from_env() == 7);
  unsetenv("FORRELAB_WORKERS");
  REQUIRE(worker_count_from_env() == 1);
}

TEST_CASE("worker count does not change results") {
  GameSpec spec;
  spec.game = GameKind::kPrfDistinguish;
  spec.profile = tiny_prf();
  spec.adversary = "decode_compare";
  spec.trials = 12;
  spec.seed = 41;
  spec.workers = 1;
  std::string csv1 = report_to_csv(run_prf_game(spec).rows);
  spec.workers = 3;
  std::string csv3 = report_to_csv(run_prf_game(spec).rows);
  REQUIRE(csv1 == csv3);

  GameSpec inv;
  inv.game = GameKind::kTowfInvert;
  inv.profile = tiny_prf(2, 6);
  inv.adversary = "random_guess";
  inv.trials = 60;
  inv.seed = 5;
  inv.workers = 1;
  std::string a = report_to_csv(run_towf_invert_game(inv).rows);
  inv.workers = 4;
  std::string b = report_to_csv(run_towf_invert_game(inv).rows);
  REQUIRE(a == b);
}

TEST_CASE("keyed distinguishing game: blind adversaries have no advantage") {
  GameSpec spec;
  spec.profile = tiny_prf();
  spec.trials = 40;
  spec.seed = 11;
  spec.workers = 1;

  spec.adversary = "constant0";
  ExperimentReport r = run_prf_game(spec);
  REQUIRE(find_row(r, "prf_game_advantage").estimate == 0.0);
  REQUIRE(find_row(r, "prf_game_real").estimate == 0.0);

  // Existential queries on challenge-independent strings are constants of
  // the oracle definition, so the two arms agree on every trial.
  spec.adversary = "b_probe";
  r = run_prf_game(spec);
  REQUIRE(find_row(r, "prf_game_advantage").estimate == 0.0);
  REQUIRE(find_row(r, "prf_game_real").estimate == 1.0);

  spec.adversary = "coin";
  spec.trials = 400;
  r = run_prf_game(spec);
  REQUIRE(find_row(r, "prf_game_advantage").estimate < 0.12);
}

TEST_CASE("keyed distinguishing game: decoding adversary wins") {
  GameSpec spec;
  spec.profile = tiny_prf(4, 6);
  spec.adversary = "decode_compare";
  spec.trials = 50;
  spec.seed = 3;
  spec.workers = 1;
  ExperimentReport r = run_prf_game(spec);
  REQUIRE(find_row(r, "prf_game_advantage").estimate >= 0.9);
  REQUIRE(find_row(r, "prf_game_real").estimate >= 0.9);
  REQUIRE(find_row(r, "prf_game_random").estimate <= 0.1);
}

TEST_CASE("public key game: inversion probes separate generated keys") {
  GameSpec spec;
  spec.game = GameKind::kPkPseudorandom;
  spec.profile = tiny_prf(2, 6);
  spec.adversary = "probe_scan";
  spec.trials = 30;
  spec.seed = 9;
  spec.workers = 1;
  ExperimentReport r = run_pk_game(spec);
  REQUIRE(find_row(r, "pk_game_real").estimate >= 0.7);
  REQUIRE(find_row(r, "pk_game_advantage").estimate >= 0.5);

  // The wrapped scan inverter is the same probe, so the numbers match.
  ExperimentReport wrapped =
      run_pk_game(spec, fake_pk_adversary_wrap(
                            [](OracleAccess& oracle, uint64_t pk, uint64_t y, Rng& rng) {
                              return ScanInverter{}(oracle, pk, y, rng);
                            },
                            spec.decode_reps));
  REQUIRE(find_row(wrapped, "pk_game_real").estimate ==
          find_row(r, "pk_game_real").estimate);
  REQUIRE(find_row(wrapped, "pk_game_random").estimate ==
          find_row(r, "pk_game_random").estimate);

  // Guessing a fixed preimage gives both arms the same small success rate.
  spec.adversary = "probe_zero";
  spec.trials = 200;
  r = run_pk_game(spec);
  REQUIRE(find_row(r, "pk_game_advantage").estimate < 0.15);
}

TEST_CASE("inversion game: random guessing matches exhaustive enumeration") {
  GameSpec spec;
  spec.game = GameKind::kTowfInvert;
  spec.profile = tiny_prf(2, 6);
  spec.adversary = "random_guess";
  spec.mode = "gen";
  spec.trials = 300;
  spec.seed = 17;
  spec.workers = 1;
  ExperimentReport r = run_towf_invert_game(spec);
  double estimate = find_row(r, "towf_invert").estimate;

  // Replay each trial's world and key draw, then average the exact success
  // probability of a uniform guess against a uniform challenge input.
  double mean = 0, var = 0;
  for (uint64_t t = 0; t < spec.trials; ++t) {
    uint64_t ts = derive_seed(spec.seed, {t});
    TrapdoorWorld world = TrapdoorWorld::sample(spec.profile, derive_seed(ts, {0}));
    Rng chal(derive_seed(ts, {1}));
    uint64_t pk = world.g_plain(chal.below(world.td_count()));
    double wins = 0;
    for (uint64_t x = 0; x < 4; ++x)
      for (uint64_t g = 0; g < 4; ++g) wins += world.f_plain(pk, g) == world.f_plain(pk, x);
    double mu = wins / 16.0;
    mean += mu;
    var += mu * (1 - mu);
  }
  mean /= double(spec.trials);
  double sigma = std::sqrt(var) / double(spec.trials);
  REQUIRE(std::abs(estimate - mean) <= 4 * sigma + 1e-12);
}

TEST_CASE("inversion game: trapdoor holder succeeds") {
  GameSpec spec;
  spec.game = GameKind::kTowfInvert;
  spec.profile = tiny_prf(3, 7);
  spec.adversary = "trapdoor";
  spec.mode = "gen";
  spec.trials = 50;
  spec.seed = 23;
  spec.workers = 1;
  ExperimentReport r = run_towf_invert_game(spec);
  REQUIRE(find_row(r, "towf_invert").estimate >= 0.75);
}

TEST_CASE("inversion game: uniform targets are rarely invertible") {
  GameSpec spec;
  spec.game = GameKind::kTowfInvert;
  spec.profile = tiny_prf(2, 6);
  spec.adversary = "peek";
  spec.mode = "uniform-y";
  spec.trials = 400;
  spec.seed = 29;
  spec.workers = 1;
  ExperimentReport r = run_towf_invert_game(spec);
  const ReportRow& invert = find_row(r, "towf_invert");
  const ReportRow& member = find_row(r, "towf_image_membership");
  // Reading the tables directly inverts exactly the image points.
  REQUIRE(invert.estimate == member.estimate);
  REQUIRE(member.estimate <= 0.02);
}

TEST_CASE("key recovery game") {
  GameSpec spec;
  spec.game = GameKind::kOwfInvert;
  spec.profile = tiny_prf(3, 7);
  spec.adversary = "scan";
  spec.trials = 40;
  spec.seed = 31;
  spec.workers = 1;
  ExperimentReport r = run_owf_invert_game(spec);
  REQUIRE(find_row(r, "owf_invert").estimate >= 0.8);

  spec.adversary = "random_guess";
  spec.trials = 200;
  r = run_owf_invert_game(spec);
  double est = find_row(r, "owf_invert").estimate;
  REQUIRE(est >= 0.03);
  REQUIRE(est <= 0.24);
}

TEST_CASE("resampling: toy ensemble matches exhaustive enumeration") {
  // Two blocks; only a marker bit per block matters. A marked block's bit is
  // 1 with probability 3/4, an unmarked block's with probability 1/2. The
  // challenge is the replacement pattern; resampling redraws one uniform
  // block under the challenge's marking for it.
  struct ToyWorld {
    bool marked[2];
    bool bit[2];
  };
  auto draw_bit = [](bool marked, Rng& rng) {
    return marked ? rng.below(4) < 3 : rng.bit();
  };
  auto sample_base = [&](uint64_t seed) {
    Rng rng(seed);
    ToyWorld w;
    for (int i = 0; i < 2; ++i) w.marked[i] = rng.bit();
    for (int i = 0; i < 2; ++i) w.bit[i] = draw_bit(w.marked[i], rng);
    BitVec z = rng.bits(2);
    return std::pair<ToyWorld, BitVec>(w, z);
  };
  auto resample = [&](const ToyWorld& base, const BitVec& z, uint64_t seed) {
    Rng rng(seed);
    ToyWorld w = base;
    uint64_t k = rng.below(2);
    w.marked[k] = z.get(size_t(k));
    w.bit[k] = draw_bit(w.marked[k], rng);
    return w;
  };
  auto dist = [](const ToyWorld& w, const BitVec&, Rng&) { return w.bit[0]; };

  const uint64_t outer = 4000, inner = 8;
  ResampleOutcome out =
      resample_diff_core<ToyWorld>(sample_base, resample, dist, outer, inner, 77, 1);

  // Exact law: block 0 is redrawn with probability 1/2 per inner run, to a
  // bit with mean 3/4 or 1/2 depending on challenge bit 0. Enumerate the
  // distribution of the inner-run difference sum for each (base bit, z0).
  double p_base1 = 0.5 * 0.75 + 0.5 * 0.5;
  double exact_bias = 0, exact_flip = 0;
  for (int a = 0; a <= 1; ++a) {
    double pa = a ? p_base1 : 1 - p_base1;
    for (int z0 = 0; z0 <= 1; ++z0) {
      double mu = z0 ? 0.75 : 0.5;
      double cond = 0;
      for (int m = 0; m <= int(inner); ++m) {
        double pm = binom_coeff(int(inner), m) / std::pow(2.0, double(inner));
        for (int ones = 0; ones <= m; ++ones) {
          double po = binom_coeff(m, ones) * std::pow(mu, ones) * std::pow(1 - mu, m - ones);
          cond += pm * po * std::abs(double(m * a - ones)) / double(inner);
        }
      }
      exact_bias += 0.5 * pa * cond;
      exact_flip += 0.5 * pa * 0.5 * (a ? 1 - mu : mu);
    }
  }
  REQUIRE(std::abs(out.abs_diff.mean - exact_bias) < 0.04);
  REQUIRE(std::abs(out.flip.estimate - exact_flip) < 0.02);
}

TEST_CASE("resampling: blind distinguisher reports exactly zero") {
  GameSpec spec;
  spec.game = GameKind::kBlockResample;
  spec.profile = tiny_prf(2, 6);
  spec.adversary = "constant0";
  spec.config = "prf-row";
  spec.trials = 30;
  spec.inner = 4;
  spec.seed = 43;
  spec.workers = 1;
  ExperimentReport r = run_resample_experiment(spec);
  REQUIRE(find_row(r, "resample_bias").estimate == 0.0);
  REQUIRE(find_row(r, "resample_flip").estimate == 0.0);

  // Same for coin flippers: both arms replay the same coin stream.
  spec.adversary = "coin";
  r = run_resample_experiment(spec);
  REQUIRE(find_row(r, "resample_bias").estimate == 0.0);

  spec.config = "f-slice";
  spec.adversary = "constant0";
  spec.trials = 300;
  spec.inner = 2;
  r = run_resample_experiment(spec);
  REQUIRE(find_row(r, "resample_bias").estimate == 0.0);
  REQUIRE(find_row(r, "resample_trivial_inversion").estimate <= 0.02);

  spec.config = "td-row";
  spec.adversary = "readbit";
  spec.trials = 20;
  r = run_resample_experiment(spec);
  REQUIRE(find_row(r, "resample_bias").estimate <= 1.0);
}

TEST_CASE("resampling: decoding distinguisher sees replaced rows") {
  GameSpec spec;
  spec.game = GameKind::kBlockResample;
  spec.profile = tiny_prf(2, 6);
  spec.adversary = "decode_first";
  spec.config = "prf-row";
  spec.trials = 200;
  spec.inner = 8;
  spec.seed = 47;
  spec.workers = 1;
  ExperimentReport r = run_resample_experiment(spec);
  // The replaced row is the decoded one with probability 1/4; its block 0
  // marking changes with probability 1/2.
  double flip = find_row(r, "resample_flip").estimate;
  REQUIRE(flip >= 0.08);
  REQUIRE(flip <= 0.18);
  REQUIRE(find_row(r, "resample_bias").estimate > 0.02);
}

TEST_CASE("advantage squaring: rigged ensemble") {
  BitGuessEnsemble<BitVec> ensemble = rigged_bit_ensemble();
  ChallengeAdversary<BitVec> inner = rigged_compare_adversary();

  ExperimentReport direct =
      measure_bit_advantage(ensemble, inner, 4000, 51, 1, "rigged_direct", "");
  REQUIRE(std::abs(find_row(direct, "rigged_direct_advantage").estimate - 0.5) < 0.04);

  SquaredAdversary<BitVec> squared = advantage_squaring_wrap(inner, ensemble);
  ExperimentReport wrapped =
      measure_bit_advantage(ensemble, squared, 4000, 53, 1, "rigged_squared", "");
  REQUIRE(std::abs(find_row(wrapped, "rigged_squared_advantage").estimate - 0.25) < 0.045);
  // Exactly two inner runs per decision, two decisions per trial.
  REQUIRE(squared.inner_runs->load() == 4 * 4000);
}

TEST_CASE("advantage squaring: constant adversary stays blind") {
  BitGuessEnsemble<BitVec> ensemble = rigged_bit_ensemble();
  ChallengeAdversary<BitVec> constant = [](const BitVec&, Rng&) { return false; };
  SquaredAdversary<BitVec> squared = advantage_squaring_wrap(constant, ensemble);
  ExperimentReport wrapped =
      measure_bit_advantage(ensemble, squared, 2000, 59, 1, "const_squared", "");
  REQUIRE(find_row(wrapped, "const_squared_advantage").estimate < 0.07);
}

TEST_CASE("advantage squaring: oracle ensemble self-consistency") {
  ScaleProfile profile = tiny_prf(2, 6);
  BitGuessEnsemble<PrfChallenge> ensemble = prf_bit_ensemble(profile, 0, kDefaultDecodeReps);
  ChallengeAdversary<PrfChallenge> inner = prf_compare_adversary();

  ExperimentReport direct =
      measure_bit_advantage(ensemble, inner, 700, 61, 1, "prf_wrap_direct", "");
  double adv = find_row(direct, "prf_wrap_direct_advantage").estimate;
  REQUIRE(adv > 0.5);

  SquaredAdversary<PrfChallenge> squared = advantage_squaring_wrap(inner, ensemble);
  ExperimentReport wrapped =
      measure_bit_advantage(ensemble, squared, 700, 67, 1, "prf_wrap_squared", "");
  double adv2 = find_row(wrapped, "prf_wrap_squared_advantage").estimate;
  REQUIRE(std::abs(adv2 - adv * adv) < 0.09);
}

TEST_CASE("decoder calibration finds working repetition counts") {
  std::vector<CalibrationPoint> points =
      calibrate_decoder(5, SamplerKind::kExact, 0.0, 40, {1, 8, 64}, 71);
  REQUIRE(points.size() == 3);
  for (const CalibrationPoint& pt : points) {
    REQUIRE(pt.threshold > 0.0);
    REQUIRE(pt.threshold <= 1.0);
  }
  auto worst = [](const CalibrationPoint& pt) {
    return std::max(pt.marked_error.mean, pt.unmarked_error.mean);
  };
  REQUIRE(worst(points[2]) <= worst(points[0]) + 1e-9);
  REQUIRE(worst(points[2]) <= 0.05);

  ExperimentReport r = calibration_report(5, SamplerKind::kExact, 0.0, 40, {8, 64}, 71, 0.05);
  REQUIRE(find_row(r, "calibrate_recommended_reps").estimate > 0.0);
  REQUIRE(r.rows.size() == 5);
}

TEST_CASE("external adversary protocol") {
  GameSpec spec;
  spec.profile = tiny_prf(2, 6);
  spec.trials = 6;
  spec.seed = 83;
  spec.workers = 1;

  spec.adversary = stub_command("const0");
  ExperimentReport r = run_prf_game(spec);
  REQUIRE(find_row(r, "prf_game_advantage").estimate == 0.0);
  REQUIRE(find_row(r, "prf_game_real").estimate == 0.0);

  // The parrot answers challenge bit 0; replay the challenge streams to
  // predict both arms exactly.
  spec.adversary = stub_command("parrot");
  r = run_prf_game(spec);
  uint64_t real_ones = 0, random_ones = 0;
  for (uint64_t t = 0; t < spec.trials; ++t) {
    uint64_t ts = derive_seed(derive_seed(spec.seed, {t}), {1});
    PrfWorld world =
        PrfWorld::sample(spec.profile, derive_seed(derive_seed(spec.seed, {t}), {0}));
    Rng chal(ts);
    uint64_t k = chal.below(4);
    bool random_bit0 = chal.bit();  // x = 0 comes first in the stream
    real_ones += prf_plain(world, k, 0);
    random_ones += random_bit0;
  }
  REQUIRE(find_row(r, "prf_game_real").estimate == double(real_ones) / double(spec.trials));
  REQUIRE(find_row(r, "prf_game_random").estimate ==
          double(random_ones) / double(spec.trials));

  // The probe reads one fixed world bit, identical across both arms.
  spec.adversary = stub_command("probe");
  r = run_prf_game(spec);
  REQUIRE(find_row(r, "prf_game_advantage").estimate == 0.0);

  // A query hog trips the per-run cap.
  spec.adversary = stub_command("hog");
  spec.query_cap = 10;
  spec.trials = 1;
  REQUIRE_THROWS_AS(run_prf_game(spec), QueryCapExceeded);

  // Multi-bit answers work for the inversion game.
  GameSpec inv;
  inv.game = GameKind::kTowfInvert;
  inv.profile = tiny_prf(2, 6);
  inv.adversary = stub_command("const0");
  inv.trials = 5;
  inv.seed = 89;
  inv.workers = 1;
  ExperimentReport ri = run_towf_invert_game(inv);
  REQUIRE(find_row(ri, "towf_invert").trials == 5);
}

TEST_CASE("netlist adversary over a declared window") {
  ScaleProfile profile = tiny_prf(2, 6);
  std::ofstream("harness_win_circuit.txt") << make_or_circuit(2).to_netlist();
  {
    std::ofstream win("harness_win_window.txt");
    BitVec zero(11);
    BitVec other(11);
    other.set(10, true);
    win << "# two fixed world addresses\n";
    win << "11 " << bits_to_hex(zero) << "\n";
    win << "11 " << bits_to_hex(other) << "\n";
  }

  GameSpec spec;
  spec.profile = profile;
  spec.adversary = "netlist:harness_win_circuit.txt@harness_win_window.txt";
  spec.trials = 10;
  spec.seed = 97;
  spec.workers = 1;
  // The circuit sees only world bits, never the challenge, so both arms
  // agree on every trial.
  ExperimentReport r = run_prf_game(spec);
  REQUIRE(find_row(r, "prf_game_advantage").estimate == 0.0);

  // Input count must cover the window or the window plus the challenge.
  std::ofstream("harness_win_bad.txt") << make_or_circuit(3).to_netlist();
  spec.adversary = "netlist:harness_win_bad.txt@harness_win_window.txt";
  REQUIRE_THROWS_AS(run_prf_game(spec), PreconditionError);

  // Window plus challenge: 2 window bits and 4 table bits.
  std::ofstream("harness_win_mixed.txt") << make_or_circuit(6).to_netlist();
  spec.adversary = "netlist:harness_win_mixed.txt@harness_win_window.txt";
  ExperimentReport mixed = run_prf_game(spec);
  REQUIRE(find_row(mixed, "prf_game_advantage").estimate <= 1.0);
}

TEST_CASE("row resampling identity holds exhaustively") {
  BlockShape shape{2, 2};
  for (const Ac0Circuit& c : identity_check_family(shape, 101, 4))
    REQUIRE(resample_identity_holds(c, shape));
}

TEST_CASE("gate circuits compile to witness circuits") {
  std::vector<Ac0Circuit> cases;
  cases.push_back(make_parity_circuit(3));
  cases.push_back(make_and_circuit(2));
  cases.push_back(make_threshold_circuit(4, 2));
  Rng rng(103);
  cases.push_back(random_circuit(rng, 3, 8));
  // Output that is not the last node gets a routing node appended.
  Ac0Circuit routed(2);
  uint32_t g1 = routed.add_gate(GateType::kAnd, {0, 1});
  routed.add_gate(GateType::kOr, {0, 1});
  routed.set_output(g1);
  cases.push_back(routed);

  auto no_a = [](const BitVec&) { return false; };
  auto no_b = [](const BitVec&) { return false; };
  for (const Ac0Circuit& c : cases) {
    WitnessCircuit w = ac0_to_witness_circuit(c);
    REQUIRE(w.witness_bits == int(c.num_inputs()));
    for (uint64_t witness = 0; witness < (uint64_t(1) << c.num_inputs()); ++witness) {
      BitVec input(c.num_inputs());
      for (uint32_t i = 0; i < c.num_inputs(); ++i) input.set(i, (witness >> i) & 1);
      REQUIRE(w.evaluate(witness, no_a, no_b) == c.evaluate(input));
    }
  }

  // Witness search through a metered oracle: one base query, then one
  // substituted query per witness bit.
  PrfWorld world = PrfWorld::sample(tiny_prf(2, 6), 107);
  OracleAccess oracle(world);
  WitnessSearchResult found = np_find_witness(oracle, ac0_to_witness_circuit(make_and_circuit(2)));
  REQUIRE(found.satisfiable);
  REQUIRE(found.verified);
  REQUIRE(found.witness == 3);
  REQUIRE(oracle.b_queries() == 3);

  Ac0Circuit contradiction(1);
  uint32_t neg = contradiction.add_gate(GateType::kNot, {0});
  contradiction.set_output(contradiction.add_gate(GateType::kAnd, {0, neg}));
  WitnessSearchResult none =
      np_find_witness(oracle, ac0_to_witness_circuit(contradiction));
  REQUIRE_FALSE(none.satisfiable);
}

TEST_CASE("protocol experiments round trip") {
  ScaleProfile profile = tiny_prf(2, 6);
  ExperimentReport pke = run_pke_experiment(profile, 30, 113, kDefaultDecodeReps, 1);
  REQUIRE(find_row(pke, "pke_roundtrip").estimate >= 0.8);
  ExperimentReport kx = run_key_exchange_experiment(profile, 25, 127, kDefaultDecodeReps, 1);
  REQUIRE(find_row(kx, "key_exchange_agree").estimate >= 0.7);
  ExperimentReport ot = run_ot_experiment(profile, 25, 131, kDefaultDecodeReps, 1);
  REQUIRE(find_row(ot, "ot_correct").estimate >= 0.7);

  // Byte-identical on rerun.
  ExperimentReport again = run_pke_experiment(profile, 30, 113, kDefaultDecodeReps, 1);
  REQUIRE(report_to_csv(pke.rows) == report_to_csv(again.rows));
}

TEST_CASE("run_game dispatches every kind") {
  GameSpec spec;
  spec.profile = tiny_prf(2, 6);
  spec.trials = 5;
  spec.inner = 2;
  spec.seed = 139;
  spec.workers = 1;

  spec.game = GameKind::kPrfDistinguish;
  spec.adversary = "constant1";
  REQUIRE_FALSE(run_game(spec).rows.empty());

  spec.game = GameKind::kPkPseudorandom;
  spec.adversary = "probe_zero";
  REQUIRE_FALSE(run_game(spec).rows.empty());

  spec.game = GameKind::kTowfInvert;
  spec.adversary = "random_guess";
  REQUIRE_FALSE(run_game(spec).rows.empty());

  spec.game = GameKind::kOwfInvert;
  spec.adversary = "zero";
  REQUIRE_FALSE(run_game(spec).rows.empty());

  spec.game = GameKind::kBlockResample;
  spec.adversary = "and";
  spec.trials = 50;
  REQUIRE_FALSE(run_game(spec).rows.empty());

  spec.game = GameKind::kSensitivityTail;
  spec.adversary = "parity";
  spec.shape_k = 2;
  spec.shape_m = 3;
  spec.tail_threshold = 3;
  spec.trials = 50;
  ExperimentReport tail = run_game(spec);
  // Parity flips on every coordinate, so the tail probability is 1.
  REQUIRE(find_row(tail, "sensitivity_tail").estimate == 1.0);

  spec.game = GameKind::kPlantedIndist;
  spec.adversary = "or";
  spec.profile.ell = 3;
  spec.trials = 60;
  ExperimentReport planted = run_game(spec);
  REQUIRE(find_row(planted, "planted_indist_advantage").estimate <= 1.0);

  // Unknown names fail fast with the precondition error.
  spec.game = GameKind::kPrfDistinguish;
  spec.profile = tiny_prf(2, 6);
  spec.adversary = "no_such_adversary";
  REQUIRE_THROWS_AS(run_game(spec), PreconditionError);
}

TEST_CASE("block resample game matches direct estimator") {
  GameSpec spec;
  spec.game = GameKind::kBlockResample;
  spec.adversary = "and";
  spec.shape_k = 2;
  spec.shape_m = 2;
  spec.trials = 4000;
  spec.seed = 149;
  ExperimentReport r = run_block_resample_game(spec);
  const ReportRow& row = find_row(r, "block_resample_flip");
  // AND of 4 bits: flipping needs all other bits 1, and the redrawn row to
  // change the conjunction of its own two, so the rate is small but positive.
  REQUIRE(row.estimate > 0.0);
  REQUIRE(row.estimate < 0.25);

  BlockShape shape{2, 2};
  RowSampler rows = [](Rng& rng) { return rng.bits(2); };
  BinomialEstimate direct =
      block_resample_flip_prob(make_and_circuit(4), shape, rows, spec.trials, spec.seed);
  REQUIRE(row.estimate == direct.estimate);
}
