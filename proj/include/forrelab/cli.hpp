#pragma once

// Command line front end. Every subcommand is a thin parser over the harness
// entry points, so a report produced from a plan file is byte-identical to
// the concatenation of the individual runs.
//
// Exit codes: 0 success, 2 bad invocation or bad input data, 1 runtime
// failure (including oracle cap violations by an adversary).

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harness.hpp"

namespace forrelab {

namespace cli_detail {

struct ProfileFlags {
  int n = 2;
  int ell = 8;
  std::string sampler = "exact";
  double eps = 0.0;
  bool exact_scale = false;

  void attach(CLI::App* sub) {
    sub->add_option("--n", n, "input length in bits");
    sub->add_option("--ell", ell, "log2 of each encoded table length");
    sub->add_option("--sampler", sampler, "exact | gaussian | uniform");
    sub->add_option("--eps", eps, "gaussian sampler strength (0 = default)");
    sub->add_flag("--exact-scale", exact_scale, "pin ell to the asymptotically faithful value");
  }

  ScaleProfile profile() const {
    ScaleProfile p;
    p.n = n;
    p.ell = ell;
    p.sampler = parse_sampler(sampler);
    p.eps = eps;
    p.exact_scale = exact_scale;
    return p;
  }
};

struct RunFlags {
  uint64_t trials = 100;
  uint64_t seed = 1;
  uint64_t cap = 0;
  int reps = kDefaultDecodeReps;
  int workers = 0;

  void attach(CLI::App* sub) {
    sub->add_option("--trials", trials, "trial count");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--cap", cap, "oracle query cap per adversary run (0 = unmetered)");
    sub->add_option("--reps", reps, "decode repetitions per block");
    sub->add_option("--workers", workers, "worker threads (0 = FORRELAB_WORKERS)");
  }
};

struct OutputFlags {
  std::string report_path;
  std::string json_path;

  void attach(CLI::App* sub) {
    sub->add_option("--report", report_path, "write rows as CSV to this file");
    sub->add_option("--json", json_path, "write rows as JSON lines to this file");
  }
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "cannot open output file");
  f.write(text.data(), std::streamsize(text.size()));
  require(f.good(), "write failed");
}

inline void print_rows(std::ostream& out, const ExperimentReport& report) {
  for (const ReportRow& r : report.rows) {
    out << r.experiment << " = " << format_double(r.estimate) << "  ci=["
        << format_double(r.ci_lo) << "," << format_double(r.ci_hi) << "]  trials=" << r.trials
        << "  seed=" << r.seed;
    if (!r.params.empty()) out << "  " << r.params;
    out << "\n";
  }
  out << "# wall_ms " << format_double(report.wall_ms) << "\n";
}

inline void deliver(const ExperimentReport& report, const OutputFlags& files, std::ostream& out,
                    std::vector<ReportRow>* sink) {
  print_rows(out, report);
  if (!files.report_path.empty()) write_file(files.report_path, report_to_csv(report.rows));
  if (!files.json_path.empty()) write_file(files.json_path, report_to_json_lines(report.rows));
  if (sink) sink->insert(sink->end(), report.rows.begin(), report.rows.end());
}

inline uint64_t bytes_hash(const std::vector<uint8_t>& bytes) {
  return detail::fnv64(bytes, bytes.size());
}

inline std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

}  // namespace cli_detail

// Parses and runs one invocation. Collected report rows are appended to
// `sink` when given (used by plan files). Throws on failure; cli_main maps
// exceptions to exit codes.
inline void run_cli_args(const std::vector<std::string>& args, std::ostream& out,
                         std::ostream& err, std::vector<ReportRow>* sink, int depth = 0) {
  using cli_detail::ProfileFlags;
  using cli_detail::RunFlags;
  using cli_detail::OutputFlags;

  CLI::App app{"Forrelation-encoded oracle worlds: simulator and experiment harness"};
  app.name("forrelab");
  app.require_subcommand(1);

  // ---- sample-world -------------------------------------------------------
  auto* sample = app.add_subcommand("sample-world", "sample an oracle world and snapshot it");
  ProfileFlags sample_profile;
  sample_profile.attach(sample);
  std::string sample_kind = "prf";
  uint64_t sample_seed = 1;
  std::string sample_out;
  sample->add_option("--kind", sample_kind, "prf | trapdoor");
  sample->add_option("--seed", sample_seed, "world seed");
  sample->add_option("--out", sample_out, "snapshot file")->required();

  // ---- save / load --------------------------------------------------------
  auto* save = app.add_subcommand("save", "re-serialize a snapshot (integrity check)");
  std::string save_world, save_out;
  save->add_option("--world", save_world, "snapshot file")->required();
  save->add_option("--out", save_out, "output file")->required();

  auto* load = app.add_subcommand("load", "validate a snapshot and print its profile");
  std::string load_world;
  load->add_option("--world", load_world, "snapshot file")->required();

  // ---- decode --------------------------------------------------------------
  auto* decode = app.add_subcommand("decode", "decode one encoded block of a snapshot");
  std::string dec_world, dec_region = "prf";
  std::string dec_k, dec_x, dec_td, dec_pk, dec_y;
  int dec_index = 0, dec_reps = kDefaultDecodeReps;
  uint64_t dec_seed = 1;
  bool dec_plain = false;
  decode->add_option("--world", dec_world, "snapshot file")->required();
  decode->add_option("--region", dec_region, "prf | g | f | i");
  decode->add_option("--k", dec_k, "key bits (keyed worlds)");
  decode->add_option("--x", dec_x, "input bits");
  decode->add_option("--td", dec_td, "trapdoor bits");
  decode->add_option("--pk", dec_pk, "public key bits");
  decode->add_option("--y", dec_y, "image bits");
  decode->add_option("--index", dec_index, "output bit index within the region row");
  decode->add_option("--reps", dec_reps, "decode repetitions");
  decode->add_option("--seed", dec_seed, "decoder coin seed");
  decode->add_flag("--plain", dec_plain, "print the plaintext pattern bit instead of decoding");

  // ---- calibrate ------------------------------------------------------------
  auto* calibrate = app.add_subcommand("calibrate", "decode error rates per repetition count");
  int cal_ell = 6;
  std::string cal_sampler = "exact";
  double cal_eps = 0.0, cal_target = 0.01;
  uint64_t cal_samples = 50, cal_seed = 1;
  std::vector<int> cal_reps{1, 2, 4, 8, 16, 32, 64, 128, 256};
  OutputFlags cal_files;
  calibrate->add_option("--ell", cal_ell, "log2 of each encoded table length");
  calibrate->add_option("--sampler", cal_sampler, "exact | gaussian | uniform");
  calibrate->add_option("--eps", cal_eps, "gaussian sampler strength");
  calibrate->add_option("--samples", cal_samples, "instances per side");
  calibrate->add_option("--reps-list", cal_reps, "repetition counts to sweep")->delimiter(',');
  calibrate->add_option("--target", cal_target, "error target for the recommendation row");
  calibrate->add_option("--seed", cal_seed, "root seed");
  cal_files.attach(calibrate);

  // ---- prf-game --------------------------------------------------------------
  auto* prf = app.add_subcommand("prf-game", "keyed-function distinguishing game");
  ProfileFlags prf_profile;
  RunFlags prf_run;
  OutputFlags prf_files;
  std::string prf_adversary = "constant0";
  prf_profile.attach(prf);
  prf_run.attach(prf);
  prf_files.attach(prf);
  prf->add_option("--adversary", prf_adversary,
                  "built-in name, netlist:<file>[@window], or exec:<command>");

  // ---- towf-game --------------------------------------------------------------
  auto* towf = app.add_subcommand("towf-game", "inversion game");
  ProfileFlags towf_profile;
  RunFlags towf_run;
  OutputFlags towf_files;
  std::string towf_adversary = "random_guess", towf_mode = "gen";
  bool towf_owf = false;
  towf_profile.attach(towf);
  towf_run.attach(towf);
  towf_files.attach(towf);
  towf->add_option("--adversary", towf_adversary, "built-in name or exec:<command>");
  towf->add_option("--mode", towf_mode, "challenge mode: gen | uniform-pk | uniform-y");
  towf->add_flag("--owf", towf_owf, "key-recovery variant on keyed worlds");

  // ---- pke / ot ----------------------------------------------------------------
  auto* pke = app.add_subcommand("pke", "encryption round trip and key exchange");
  ProfileFlags pke_profile;
  RunFlags pke_run;
  OutputFlags pke_files;
  pke_profile.attach(pke);
  pke_run.attach(pke);
  pke_files.attach(pke);

  auto* ot = app.add_subcommand("ot", "1-of-2 oblivious transfer round trip");
  ProfileFlags ot_profile;
  RunFlags ot_run_flags;
  OutputFlags ot_files;
  ot_profile.attach(ot);
  ot_run_flags.attach(ot);
  ot_files.attach(ot);

  // ---- resample-exp ---------------------------------------------------------------
  auto* resample = app.add_subcommand("resample-exp", "row resampling bias of a distinguisher");
  ProfileFlags res_profile;
  RunFlags res_run;
  OutputFlags res_files;
  std::string res_config = "prf-row", res_adversary = "constant0";
  uint64_t res_inner = 32;
  res_profile.attach(resample);
  res_run.attach(resample);
  res_files.attach(resample);
  resample->add_option("--config", res_config, "prf-row | td-row | f-slice");
  resample->add_option("--adversary", res_adversary, "distinguisher reference");
  resample->add_option("--inner", res_inner, "inner runs per outer trial");

  // ---- sensitivity -------------------------------------------------------------------
  auto* sens = app.add_subcommand("sensitivity", "sensitivity tail or block flip rate");
  std::string sens_circuit = "parity";
  uint32_t sens_k = 2, sens_m = 2;
  int sens_t = 1;
  uint64_t sens_trials = 1000, sens_seed = 1;
  bool sens_flip = false;
  OutputFlags sens_files;
  sens->add_option("--circuit", sens_circuit, "and | or | parity | majority | threshold:<t> | netlist:<file>");
  sens->add_option("--K", sens_k, "block count");
  sens->add_option("--M", sens_m, "bits per block");
  sens->add_option("--t", sens_t, "tail threshold");
  sens->add_option("--trials", sens_trials, "trial count");
  sens->add_option("--seed", sens_seed, "root seed");
  sens->add_flag("--flip", sens_flip, "estimate the one-block resampling flip rate instead");
  sens_files.attach(sens);

  // ---- gw-check ------------------------------------------------------------------------
  auto* gw = app.add_subcommand("gw-check", "exhaustive row resampling identity check");
  uint32_t gw_k = 2, gw_m = 2;
  uint64_t gw_seed = 1;
  int gw_random = 4;
  gw->add_option("--K", gw_k, "block count");
  gw->add_option("--M", gw_m, "bits per block");
  gw->add_option("--seed", gw_seed, "seed for the random circuits");
  gw->add_option("--random", gw_random, "number of random circuits");

  // ---- np-demo ----------------------------------------------------------------------------
  auto* np = app.add_subcommand("np-demo", "find a witness through the existential oracle");
  std::string np_world, np_target;
  np->add_option("--world", np_world, "snapshot file")->required();
  np->add_option("--target", np_target, "gate netlist file")->required();

  // ---- report -----------------------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "run a plan file and collect every row");
  std::string plan_path, report_out, report_json;
  report_cmd->add_option("--spec", plan_path, "plan file, one invocation per line")->required();
  report_cmd->add_option("--out", report_out, "combined CSV output")->required();
  report_cmd->add_option("--json", report_json, "combined JSON lines output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return;
  }

  if (sample->parsed()) {
    ScaleProfile p = sample_profile.profile();
    WorldKind kind = parse_world_kind(sample_kind);
    p.validate(kind);
    std::vector<uint8_t> bytes;
    if (kind == WorldKind::kPrf) bytes = PrfWorld::sample(p, sample_seed).to_bytes();
    else bytes = TrapdoorWorld::sample(p, sample_seed).to_bytes();
    save_world_bytes(bytes, sample_out);
    out << "kind " << world_kind_name(kind) << "\n";
    out << "bytes " << bytes.size() << "\n";
    out << "hash " << cli_detail::bytes_hash(bytes) << "\n";
    return;
  }

  if (save->parsed()) {
    std::vector<uint8_t> bytes = load_world_bytes(save_world);
    std::vector<uint8_t> again;
    if (snapshot_kind(bytes) == WorldKind::kPrf) again = PrfWorld::from_bytes(bytes).to_bytes();
    else again = TrapdoorWorld::from_bytes(bytes).to_bytes();
    require(again == bytes, "snapshot does not round trip");
    save_world_bytes(again, save_out);
    out << "hash " << cli_detail::bytes_hash(again) << "\n";
    return;
  }

  if (load->parsed()) {
    std::vector<uint8_t> bytes = load_world_bytes(load_world);
    WorldKind kind = snapshot_kind(bytes);
    ScaleProfile p;
    if (kind == WorldKind::kPrf) p = PrfWorld::from_bytes(bytes).profile();
    else p = TrapdoorWorld::from_bytes(bytes).profile();
    out << "kind " << world_kind_name(kind) << "\n";
    out << "n " << p.n << "\n";
    out << "ell " << p.ell << "\n";
    out << "sampler " << sampler_name(p.sampler) << "\n";
    out << "hash " << cli_detail::bytes_hash(bytes) << "\n";
    return;
  }

  if (decode->parsed()) {
    std::vector<uint8_t> bytes = load_world_bytes(dec_world);
    WorldKind kind = snapshot_kind(bytes);
    Rng rng(dec_seed);
    bool bit;
    if (kind == WorldKind::kPrf) {
      require(dec_region == "prf", "keyed snapshots have only the prf region");
      PrfWorld world = PrfWorld::from_bytes(bytes);
      int n = world.profile().n;
      uint64_t k = value_from_binary(dec_k, n);
      uint64_t x = value_from_binary(dec_x, n);
      if (dec_plain) {
        bit = world.pattern_bit(k, x);
      } else {
        OracleAccess oracle(world);
        bit = oracle.decode_block(block_address_for(world.profile(), {Region::kPrf, k, x, 0}),
                                  rng, dec_reps);
      }
    } else {
      TrapdoorWorld world = TrapdoorWorld::from_bytes(bytes);
      int n = world.profile().n;
      BlockRef ref;
      if (dec_region == "g") {
        ref = {Region::kG, value_from_binary(dec_td, n), uint64_t(dec_index), 0};
      } else if (dec_region == "f") {
        ref = {Region::kF, value_from_binary(dec_pk, 3 * n), value_from_binary(dec_x, n),
               uint64_t(dec_index)};
      } else if (dec_region == "i") {
        ref = {Region::kI, value_from_binary(dec_td, n), value_from_binary(dec_y, 6 * n),
               uint64_t(dec_index)};
      } else {
        require(false, "trapdoor snapshots need --region g, f, or i");
        return;
      }
      if (dec_plain) {
        bit = world.pattern_bit(ref);
      } else {
        OracleAccess oracle(world);
        bit = oracle.decode_block(block_address_for(world.profile(), ref), rng, dec_reps);
      }
    }
    out << "bit " << int(bit) << "\n";
    return;
  }

  if (calibrate->parsed()) {
    ExperimentReport r = calibration_report(cal_ell, parse_sampler(cal_sampler), cal_eps,
                                            cal_samples, cal_reps, cal_seed, cal_target);
    cli_detail::deliver(r, cal_files, out, sink);
    return;
  }

  if (prf->parsed()) {
    GameSpec spec;
    spec.game = GameKind::kPrfDistinguish;
    spec.profile = prf_profile.profile();
    spec.adversary = prf_adversary;
    spec.trials = prf_run.trials;
    spec.seed = prf_run.seed;
    spec.query_cap = prf_run.cap;
    spec.decode_reps = prf_run.reps;
    spec.workers = prf_run.workers;
    cli_detail::deliver(run_prf_game(spec), prf_files, out, sink);
    return;
  }

  if (towf->parsed()) {
    GameSpec spec;
    spec.game = towf_owf ? GameKind::kOwfInvert : GameKind::kTowfInvert;
    spec.profile = towf_profile.profile();
    spec.adversary = towf_adversary;
    spec.mode = towf_mode;
    spec.trials = towf_run.trials;
    spec.seed = towf_run.seed;
    spec.query_cap = towf_run.cap;
    spec.decode_reps = towf_run.reps;
    spec.workers = towf_run.workers;
    cli_detail::deliver(run_game(spec), towf_files, out, sink);
    return;
  }

  if (pke->parsed()) {
    ScaleProfile p = pke_profile.profile();
    ExperimentReport r =
        run_pke_experiment(p, pke_run.trials, pke_run.seed, pke_run.reps,
                           pke_run.workers > 0 ? pke_run.workers : worker_count_from_env(),
                           pke_run.cap);
    ExperimentReport kx =
        run_key_exchange_experiment(p, pke_run.trials, pke_run.seed, pke_run.reps,
                                    pke_run.workers > 0 ? pke_run.workers
                                                        : worker_count_from_env(),
                                    pke_run.cap);
    r.rows.insert(r.rows.end(), kx.rows.begin(), kx.rows.end());
    r.wall_ms += kx.wall_ms;
    cli_detail::deliver(r, pke_files, out, sink);
    return;
  }

  if (ot->parsed()) {
    ExperimentReport r = run_ot_experiment(
        ot_profile.profile(), ot_run_flags.trials, ot_run_flags.seed, ot_run_flags.reps,
        ot_run_flags.workers > 0 ? ot_run_flags.workers : worker_count_from_env(),
        ot_run_flags.cap);
    cli_detail::deliver(r, ot_files, out, sink);
    return;
  }

  if (resample->parsed()) {
    GameSpec spec;
    spec.game = GameKind::kBlockResample;
    spec.profile = res_profile.profile();
    spec.adversary = res_adversary;
    spec.config = res_config;
    spec.trials = res_run.trials;
    spec.inner = res_inner;
    spec.seed = res_run.seed;
    spec.query_cap = res_run.cap;
    spec.decode_reps = res_run.reps;
    spec.workers = res_run.workers;
    cli_detail::deliver(run_resample_experiment(spec), res_files, out, sink);
    return;
  }

  if (sens->parsed()) {
    GameSpec spec;
    spec.game = sens_flip ? GameKind::kBlockResample : GameKind::kSensitivityTail;
    spec.adversary = sens_circuit;
    spec.shape_k = sens_k;
    spec.shape_m = sens_m;
    spec.tail_threshold = sens_t;
    spec.trials = sens_trials;
    spec.seed = sens_seed;
    ExperimentReport r =
        sens_flip ? run_block_resample_game(spec) : run_sensitivity_tail_game(spec);
    cli_detail::deliver(r, sens_files, out, sink);
    return;
  }

  if (gw->parsed()) {
    BlockShape shape{gw_k, gw_m};
    bool all_hold = true;
    int index = 0;
    for (const Ac0Circuit& c : identity_check_family(shape, gw_seed, gw_random)) {
      bool ok = resample_identity_holds(c, shape);
      all_hold = all_hold && ok;
      out << "identity circuit " << index++ << " gates=" << c.gates().size() << " "
          << (ok ? "PASS" : "FAIL") << "\n";
    }
    out << "identity K=" << gw_k << " M=" << gw_m << " " << (all_hold ? "PASS" : "FAIL")
        << "\n";
    if (!all_hold) throw std::runtime_error("resampling identity violated");
    return;
  }

  if (np->parsed()) {
    std::vector<uint8_t> bytes = load_world_bytes(np_world);
    WitnessCircuit target = ac0_to_witness_circuit(Ac0Circuit::from_netlist(read_text_file(np_target)));
    WitnessSearchResult found;
    uint64_t queries = 0;
    if (snapshot_kind(bytes) == WorldKind::kPrf) {
      PrfWorld world = PrfWorld::from_bytes(bytes);
      OracleAccess oracle(world);
      found = np_find_witness(oracle, target);
      queries = oracle.b_queries();
    } else {
      TrapdoorWorld world = TrapdoorWorld::from_bytes(bytes);
      OracleAccess oracle(world);
      found = np_find_witness(oracle, target);
      queries = oracle.b_queries();
    }
    out << "satisfiable " << int(found.satisfiable) << "\n";
    if (found.satisfiable) {
      out << "witness " << found.witness << "\n";
      out << "verified " << int(found.verified) << "\n";
    }
    out << "queries " << queries << "\n";
    if (found.satisfiable && !found.verified)
      throw std::runtime_error("witness failed verification");
    return;
  }

  if (report_cmd->parsed()) {
    require(depth == 0, "plan files may not contain report lines");
    std::vector<ReportRow> rows;
    std::istringstream plan(read_text_file(plan_path));
    std::string line;
    size_t line_no = 0;
    while (std::getline(plan, line)) {
      ++line_no;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::vector<std::string> toks = cli_detail::tokenize(line);
      if (toks.empty()) continue;
      try {
        run_cli_args(toks, out, err, &rows, depth + 1);
      } catch (const std::exception& e) {
        throw PreconditionError("plan line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    cli_detail::write_file(report_out, report_to_csv(rows));
    if (!report_json.empty()) cli_detail::write_file(report_json, report_to_json_lines(rows));
    out << "rows " << rows.size() << "\n";
    return;
  }
}

inline int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    run_cli_args(args, out, err, nullptr);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "invocation error: " << e.what() << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    err << "precondition: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace forrelab
