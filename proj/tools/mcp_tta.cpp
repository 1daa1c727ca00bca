// mcp-tta: command-line front end for the MCP / MCP++ engine.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>
#include <spdlog/sinks/stdout_color_sinks.h>

#include "mcp/config.hpp"
#include "mcp/engine.hpp"
#include "mcp/fig2.hpp"
#include "mcp/metrics.hpp"
#include "mcp/run.hpp"
#include "mcp/synth.hpp"
#include "mcp/theory.hpp"
#include "mcp/tuning.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheck = 4;

struct CommonOptions {
  std::string config;
  std::string stream;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::vector<std::string> sets;
  bool no_entropy_cache = false, no_align_cache = false, no_negative_cache = false;
  bool no_text_term = false, no_visual_term = false, no_cache_term = false;
  bool no_align_loss = false, no_contrast_loss = false;
  bool persist_residuals = false, emit_terms = false;
};

void add_engine_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "key=value run configuration file");
  app->add_option("--stream", o.stream, "embedding stream file");
  app->add_option("--out", o.out, "output path or prefix");
  app->add_option("--seed", o.seed, "seed");
  app->add_option("--mode", o.mode, "mcp or mcp++")->check(CLI::IsMember({"mcp", "mcp++"}));
  app->add_option("--set", o.sets, "override one config key (key=value); repeatable");
  app->add_flag("--no-entropy-cache", o.no_entropy_cache);
  app->add_flag("--no-align-cache", o.no_align_cache);
  app->add_flag("--no-negative-cache", o.no_negative_cache);
  app->add_flag("--no-text-term", o.no_text_term);
  app->add_flag("--no-visual-term", o.no_visual_term);
  app->add_flag("--no-cache-term", o.no_cache_term);
  app->add_flag("--no-align-loss", o.no_align_loss);
  app->add_flag("--no-contrast-loss", o.no_contrast_loss);
  app->add_flag("--persist-residuals", o.persist_residuals);
  app->add_flag("--emit-terms", o.emit_terms, "include the three fusion terms in the JSONL");
}

mcp::RunConfig resolve_config(const CommonOptions& o) {
  mcp::RunConfig cfg = o.config.empty() ? mcp::RunConfig{} : mcp::RunConfig::from_file(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw mcp::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.mode.empty()) cfg.mode = mcp::parse_mode(o.mode);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.stream.empty()) cfg.stream = o.stream;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.no_entropy_cache) cfg.caches.entropy = false;
  if (o.no_align_cache) cfg.caches.align = false;
  if (o.no_negative_cache) cfg.caches.negative = false;
  if (o.no_text_term) cfg.terms.text = false;
  if (o.no_visual_term) cfg.terms.visual = false;
  if (o.no_cache_term) cfg.terms.cache = false;
  if (o.no_align_loss) cfg.losses.align = false;
  if (o.no_contrast_loss) cfg.losses.contrast = false;
  if (o.persist_residuals) cfg.persist_residuals = true;
  if (o.emit_terms) cfg.emit_terms = true;
  cfg.validate();
  return cfg;
}

const std::string& require_stream(const mcp::RunConfig& cfg) {
  if (cfg.stream.empty()) throw mcp::ConfigError("no stream given (--stream or 'stream' in the config)");
  return cfg.stream;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw mcp::DataError("cannot open '" + path + "' for writing");
  os << text;
  if (text.empty() || text.back() != '\n') os << '\n';
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("mcp");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("MCP_LOG_LEVEL");
  const std::string level = env ? env : "warn";
  static const std::map<std::string, spdlog::level::level_enum> kLevels = {
      {"error", spdlog::level::err}, {"warn", spdlog::level::warn},
      {"info", spdlog::level::info}, {"debug", spdlog::level::debug}};
  const auto it = kLevels.find(level);
  if (it == kLevels.end())
    throw mcp::ConfigError("MCP_LOG_LEVEL must be one of error, warn, info, debug (got '" + level + "')");
  spdlog::set_level(it->second);
}

// ---- subcommands ----

int cmd_run(const CommonOptions& o, const std::string& resume, const std::string& save_snapshot) {
  const auto cfg = resolve_config(o);
  mcp::StreamReader reader(require_stream(cfg));
  mcp::Engine engine(reader.header(), cfg);
  if (!resume.empty()) engine.load_snapshot(resume);
  std::ofstream jsonl;
  if (!cfg.out.empty()) {
    jsonl.open(cfg.out + ".jsonl", std::ios::trunc);
    if (!jsonl) throw mcp::DataError("cannot open '" + cfg.out + ".jsonl' for writing");
  }
  mcp::RunSummary summary;
  auto flush_summary = [&] {
    const std::string text = summary.to_json();
    if (cfg.out.empty()) std::cout << text << '\n';
    else write_text(cfg.out + ".summary.json", text);
  };
  try {
    mcp::run_stream(engine, reader, cfg.out.empty() ? nullptr : &jsonl, summary);
  } catch (...) {
    flush_summary();
    throw;
  }
  flush_summary();
  if (!save_snapshot.empty()) engine.save_snapshot(save_snapshot);
  spdlog::info("{} samples, accuracy {}", summary.samples,
               summary.accuracy() ? std::to_string(*summary.accuracy()) : "n/a");
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::vector<std::string>& sets,
              std::optional<std::uint64_t> seed, const std::string& out) {
  mcp::SynthSpec spec = spec_path.empty() ? mcp::SynthSpec{} : mcp::load_synth_spec(spec_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw mcp::ConfigError("--set expects key=value, got '" + kv + "'");
    spec.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) spec.seed = *seed;
  spec.validate();
  if (out.empty()) throw mcp::ConfigError("synth needs --out");
  mcp::write_synth_stream(spec, out);
  spdlog::info("wrote {} samples to {}", spec.samples, out);
  return kExitOk;
}

int cmd_gradcheck(std::size_t instances, std::uint64_t seed, double h, double tol) {
  const auto rep = mcp::run_gradcheck(instances, seed, h);
  ordered_json j;
  j["instances"] = rep.instances;
  for (const auto& t : rep.terms) j["max_rel_error"][t.name] = t.max_rel_error;
  j["max_rel_error_all"] = rep.max_rel_error();
  j["seconds"] = rep.seconds;
  j["tolerance"] = tol;
  j["pass"] = rep.max_rel_error() < tol;
  std::cout << j.dump(2) << '\n';
  return rep.max_rel_error() < tol ? kExitOk : kExitCheck;
}

int cmd_compactness(const std::string& stream) {
  if (stream.empty()) throw mcp::ConfigError("compactness needs --stream");
  mcp::StreamReader reader(stream);
  std::vector<mcp::Vec> features;
  std::vector<std::size_t> labels;
  mcp::SampleRecord rec;
  while (reader.next(rec)) {
    if (!rec.label) continue;
    features.push_back(mcp::l2_normalize(rec.views.row(0)));
    labels.push_back(*rec.label);
  }
  const auto rep = mcp::compactness(features, labels, reader.header().num_classes());
  ordered_json j;
  j["samples_used"] = rep.samples_used;
  j["grand_mean_distance"] = rep.grand_mean_distance;
  j["compactness"] = rep.compactness;
  ordered_json per = ordered_json::array();
  for (const auto& c : rep.classes) {
    ordered_json e{{"count", c.count}};
    if (c.mean_distance) e["mean_distance"] = *c.mean_distance;
    per.push_back(e);
  }
  j["classes"] = per;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_pearson(const std::string& input, const std::vector<double>& xs_in, const std::vector<double>& ys_in) {
  std::vector<double> xs = xs_in, ys = ys_in;
  if (!input.empty()) {
    std::ifstream in(input);
    if (!in) throw mcp::DataError("cannot open '" + input + "'");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      for (char& ch : line)
        if (ch == '\t' || ch == ';') ch = ',';
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw mcp::DataError(input + ": expected two columns");
      try {
        const double x = std::stod(line.substr(0, comma));
        const double y = std::stod(line.substr(comma + 1));
        xs.push_back(x);
        ys.push_back(y);
      } catch (const std::logic_error&) {
        continue;  // header row
      }
    }
  }
  if (xs.size() != ys.size()) throw mcp::ConfigError("pearson: x and y lengths differ");
  const auto r = mcp::pearson(xs, ys);
  std::cout << ordered_json{{"n", r.n}, {"r", r.r}, {"t", r.t}, {"p", r.p}}.dump(2) << '\n';
  return kExitOk;
}

int cmd_fig2(const std::string& sweep, const CommonOptions& o, std::size_t threads, bool check) {
  if (sweep.empty()) throw mcp::ConfigError("fig2 needs --sweep");
  CommonOptions engine_opts = o;
  const auto cfg = resolve_config(engine_opts);
  const auto rep = mcp::fig2_experiment(mcp::load_fig2_sweep(sweep), cfg, threads);
  if (!cfg.out.empty()) {
    write_text(cfg.out + ".csv", rep.csv());
    write_text(cfg.out + ".json", rep.json());
  }
  std::cout << rep.json() << '\n';
  if (check && !(rep.cached.r > 0.5 && rep.cached.p < 0.05)) return kExitCheck;
  return kExitOk;
}

int cmd_theory(std::uint64_t seed, std::uint64_t n) {
  namespace th = mcp::theory;
  ordered_json j;
  bool ok = true;
  double max_gap = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s)
    max_gap = std::max(max_gap, th::retention_ratio_sim(n, 0.3, 0.5, seed + s).gap);
  const auto dep = th::retention_ratio_sim(n, 0.3, 0.5, seed, true);
  j["retention"] = {{"max_gap_10_seeds", max_gap}, {"dependent_gap", dep.gap}};
  ok = ok && max_gap < 0.01;

  const auto mix = th::Mixture::standard();
  ordered_json dens = ordered_json::array();
  for (double q : {0.25, 0.5, 0.75, 0.9}) {
    const double d0 = th::radius_quantile(mix, q, seed);
    const auto r = th::density_constants_sim(mix, d0, seed, n);
    const double rel = std::abs(r.ratio * r.region_prob_ref - 1.0);
    const bool pass = r.c_a_hat > r.c_t_hat && rel < 0.05;
    ok = ok && pass;
    dens.push_back({{"quantile", q}, {"d0", d0}, {"c_t_hat", r.c_t_hat}, {"c_a_hat", r.c_a_hat},
                    {"ratio", r.ratio}, {"inverse_region_prob", 1.0 / r.region_prob_ref},
                    {"pass", pass}});
  }
  const auto eq = th::density_constants_sim(mix, th::kInfiniteRadius, seed, n);
  dens.push_back({{"quantile", 1.0}, {"c_t_hat", eq.c_t_hat}, {"c_a_hat", eq.c_a_hat},
                  {"equality_case", eq.equality_case}});
  ok = ok && eq.equality_case && eq.c_a_hat == eq.c_t_hat;
  j["density"] = dens;
  j["pass"] = ok;
  std::cout << j.dump(2) << '\n';
  return ok ? kExitOk : kExitCheck;
}

int cmd_gridsearch(const CommonOptions& o, const mcp::GridSpec& grid, std::size_t threads) {
  const auto cfg = resolve_config(o);
  const auto data = mcp::load_stream(require_stream(cfg));
  const auto res = mcp::grid_search(cfg, [&] { return std::make_unique<mcp::MemorySource>(data.source()); },
                                    grid, threads);
  if (!cfg.out.empty()) write_text(cfg.out, mcp::grid_table_tsv(res));
  const auto& b = res.rows[res.best];
  std::cout << ordered_json{{"rows", res.rows.size()},
                            {"best", {{"alpha1", b.alpha1}, {"alpha2", b.alpha2}, {"alpha3", b.alpha3},
                                      {"w", b.w}, {"accuracy", b.accuracy}}}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

int cmd_snapshot(const CommonOptions& o, const std::string& inspect) {
  if (!inspect.empty()) {
    const auto cfg = resolve_config(o);
    mcp::StreamReader reader(require_stream(cfg));
    mcp::Engine engine(reader.header(), cfg);
    engine.load_snapshot(inspect);
    ordered_json j;
    j["samples_seen"] = engine.samples_seen();
    for (mcp::CacheKind k : mcp::kAllCacheKinds) {
      const auto& c = engine.bank().counters(k);
      j["caches"][mcp::to_string(k)] = {{"occupancy", engine.bank().occupancy(k)},
                                        {"admitted", c.admitted},
                                        {"replaced", c.replaced},
                                        {"rejected", c.rejected}};
    }
    j["optimizer_steps"] = engine.optimizer().step;
    std::cout << j.dump(2) << '\n';
    return kExitOk;
  }
  const auto cfg = resolve_config(o);
  if (cfg.out.empty()) throw mcp::ConfigError("snapshot needs --out (or --inspect PATH)");
  mcp::StreamReader reader(require_stream(cfg));
  mcp::Engine engine(reader.header(), cfg);
  mcp::run_stream(engine, reader, nullptr);
  engine.save_snapshot(cfg.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCP / MCP++ test-time adaptation over embedding streams"};
  app.require_subcommand(1);

  CommonOptions run_o, fig_o, grid_o, snap_o;
  std::string resume, save_snapshot;
  auto* run = app.add_subcommand("run", "adapt over a stream; JSONL per sample plus a summary");
  add_engine_flags(run, run_o);
  run->add_option("--resume", resume, "restore a snapshot before running");
  run->add_option("--save-snapshot", save_snapshot, "write a snapshot after the run");

  std::string synth_spec, synth_out;
  std::vector<std::string> synth_sets;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic embedding stream");
  synth->add_option("--config", synth_spec, "synth spec file (key=value)");
  synth->add_option("--set", synth_sets, "override one spec key (key=value)");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out, "output stream path");

  std::size_t gc_instances = 50;
  std::uint64_t gc_seed = 0;
  double gc_h = 1e-5, gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the residual gradients");
  gradcheck->add_option("--instances", gc_instances);
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--step", gc_h, "central-difference step");
  gradcheck->add_option("--tol", gc_tol, "max relative error");

  std::string comp_stream;
  auto* comp = app.add_subcommand("compactness", "class compactness of a labeled stream");
  comp->add_option("--stream", comp_stream);

  std::string pearson_in;
  std::vector<double> px, py;
  auto* pear = app.add_subcommand("pearson", "Pearson correlation with a two-sided p-value");
  pear->add_option("--input", pearson_in, "two-column CSV");
  pear->add_option("--x", px)->delimiter(',');
  pear->add_option("--y", py)->delimiter(',');

  std::string sweep;
  std::size_t fig_threads = 0;
  bool fig_check = false;
  auto* fig2 = app.add_subcommand("fig2", "compactness vs accuracy-gain correlation over a spread sweep");
  add_engine_flags(fig2, fig_o);
  fig2->add_option("--sweep", sweep, "sweep file")->required();
  fig2->add_option("--threads", fig_threads);
  fig2->add_flag("--check", fig_check, "exit 4 unless r > 0.5 and p < 0.05");

  std::uint64_t th_seed = 0, th_n = 1'000'000;
  auto* theory = app.add_subcommand("theory", "retention-ratio and density-constant simulations");
  theory->add_option("--seed", th_seed);
  theory->add_option("--n", th_n, "samples per simulation");

  mcp::GridSpec grid;
  std::size_t grid_threads = 0;
  auto* gs = app.add_subcommand("gridsearch", "exhaustive search over alpha1..alpha3 and w");
  add_engine_flags(gs, grid_o);
  gs->add_option("--alpha1", grid.alpha1)->delimiter(',');
  gs->add_option("--alpha2", grid.alpha2)->delimiter(',');
  gs->add_option("--alpha3", grid.alpha3)->delimiter(',');
  gs->add_option("--w", grid.w)->delimiter(',');
  gs->add_option("--threads", grid_threads);

  std::string inspect;
  auto* snap = app.add_subcommand("snapshot", "run a stream and save the adapted state, or inspect one");
  add_engine_flags(snap, snap_o);
  snap->add_option("--inspect", inspect, "snapshot file to summarize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    configure_logging();
    if (*run) return cmd_run(run_o, resume, save_snapshot);
    if (*synth) return cmd_synth(synth_spec, synth_sets, synth_seed, synth_out);
    if (*gradcheck) return cmd_gradcheck(gc_instances, gc_seed, gc_h, gc_tol);
    if (*comp) return cmd_compactness(comp_stream);
    if (*pear) return cmd_pearson(pearson_in, px, py);
    if (*fig2) return cmd_fig2(sweep, fig_o, fig_threads, fig_check);
    if (*theory) return cmd_theory(th_seed, th_n);
    if (*gs) return cmd_gridsearch(grid_o, grid, grid_threads);
    if (*snap) return cmd_snapshot(snap_o, inspect);
  } catch (const mcp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mcp::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mcp::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const mcp::DegenerateInput& e) {
    std::cerr << "degenerate input: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
