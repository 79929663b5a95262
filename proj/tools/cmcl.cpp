#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cmcl/eval.hpp"
#include "cmcl/fixtures.hpp"
#include "cmcl/maps.hpp"
#include "cmcl/planner.hpp"
#include "cmcl/runlog.hpp"
#include "cmcl/sim.hpp"
#include "cmcl/svg.hpp"

namespace fs = std::filesystem;
using namespace cmcl;

namespace {

constexpr int kCsvSchema = 1;
constexpr int kManifestSchema = 1;

/// Usage problems detected after parsing (exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string map = "symmetric";
  std::uint64_t seed = 1;
  std::string out;
  std::string strategies;
  std::size_t particles = 0;
  std::size_t repeats = 5;
  std::size_t scenarios = 1;
  std::size_t seeds_per_scenario = 1;
  double alpha = 0.06;
  std::string sizes = "1000,10000";
  std::size_t jobs = 0;
  bool keep_logs = false;
  std::size_t k = 8;
  std::string name;
  MclConfig mcl;
  CompressionConfig compression;
  MetricConfig metric;
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string csv_preamble(const std::string& columns) {
  return "# cmcl csv schema " + std::to_string(kCsvSchema) + "\n" + columns + "\n";
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

const BundledMap* bundled(const std::string& name) {
  for (const auto& m : bundled_maps()) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

/// A bundled map name or a map file; relative paths fall back to the config file's directory.
std::pair<OccupancyGrid, std::string> load_map(const std::string& ref, const std::string& config) {
  if (const BundledMap* b = bundled(ref)) return {b->build(), b->name};
  fs::path p(ref);
  if (!fs::exists(p) && p.is_relative() && !config.empty()) {
    const fs::path alt = fs::path(config).parent_path() / p;
    if (fs::exists(alt)) p = alt;
  }
  if (!fs::exists(p)) throw std::runtime_error("map file not found: " + ref);
  return {load_grid_file(p.string()), fs::weakly_canonical(p).string()};
}

std::string map_digest(const OccupancyGrid& g) { return hex64(fnv1a64(to_document(g))); }

std::size_t particles_for(const Options& o, const std::string& map_ref) {
  if (o.particles > 0) return o.particles;
  if (const BundledMap* b = bundled(map_ref)) return b->particles;
  for (const auto& b : bundled_maps()) {
    if (fs::path(map_ref).filename() == b.file) return b.particles;
  }
  return o.mcl.n_particles;
}

/// "name" or "name:alpha"; "mcl" is the plain filter.
StrategyChoice parse_strategy(const std::string& token, double default_alpha) {
  const auto colon = token.find(':');
  const std::string name = token.substr(0, colon);
  double alpha = default_alpha;
  if (colon != std::string::npos) {
    try {
      alpha = std::stod(token.substr(colon + 1));
    } catch (const std::exception&) {
      throw UsageError("bad alpha in strategy '" + token + "'");
    }
  }
  if (name == "mcl") return std::nullopt;
  try {
    return FusionStrategy(parse_method(name), alpha);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

// ---------------------------------------------------------------------------------------------

int cmd_record(const Options& o) {
  if (o.scenarios < 1 || o.seeds_per_scenario < 1) throw UsageError("--scenarios and --seeds must be >= 1");
  const auto [grid, ref] = load_map(o.map, o.config);
  const fs::path dir = prepare_out(o.out);
  const SensorSpec spec;
  const MotionSpec motion;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < o.scenarios; ++i) {
    const std::uint64_t ss = o.seed + i;
    const Scenario sc = generate_scenario(grid, ss, spec, motion, ScenarioSpec{}, ref);
    const std::string sname = "scenario_" + std::to_string(ss) + ".json";
    write_file((dir / sname).string(), scenario_document(sc));
    for (std::size_t r = 0; r < o.seeds_per_scenario; ++r) {
      const std::uint64_t seed = 1000 * ss + r;
      const RunLog log = record(sc, grid, spec, motion, seed);
      const std::string rname = "run_" + std::to_string(ss) + "_" + std::to_string(r) + ".jsonl";
      write_file((dir / rname).string(), to_jsonl(log));
      const std::string d = digest(log);
      runs.push_back({{"file", rname}, {"scenario", ss}, {"seed", seed}, {"digest", d}});
      std::cout << rname << " " << d << "\n";
    }
  }
  const nlohmann::json manifest = {{"schema", kManifestSchema}, {"map", ref},           {"map_digest", map_digest(grid)},
                                   {"runs", runs},              {"scenario_seed", o.seed}};
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct Cell {
  std::size_t run = 0;
  std::size_t strategy = 0;
};

struct CellResult {
  RunSummary summary;
  std::optional<Track> track;
  std::string error;
};

int cmd_evaluate(const Options& o, const std::string& run_dir) {
  const fs::path dir(run_dir);
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw std::runtime_error("no manifest.json in run directory " + run_dir);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw LogFormatError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("schema", -1) != kManifestSchema) {
    throw LogFormatError(manifest_path.string() + ": unsupported manifest schema");
  }
  const std::string map_ref = manifest.at("map").get<std::string>();
  const auto [grid, ref] = load_map(map_ref, "");
  if (map_digest(grid) != manifest.at("map_digest").get<std::string>()) {
    throw LogFormatError("map " + map_ref + " does not match the one used for recording");
  }

  std::vector<StrategyChoice> strategies;
  for (const auto& t : split(o.strategies.empty() ? "mcl,naive,std_thinning,det,prorok,kmeans,compresspp" : o.strategies)) {
    strategies.push_back(parse_strategy(t, o.alpha));
  }
  if (strategies.empty()) throw UsageError("no strategies given");
  validate(o.metric);

  std::vector<std::string> files;
  std::vector<RunLog> logs;
  for (const auto& r : manifest.at("runs")) {
    const std::string f = r.at("file").get<std::string>();
    try {
      logs.push_back(parse_jsonl(read_file((dir / f).string())));
    } catch (const LogFormatError& e) {
      throw LogFormatError(f + ": " + e.what());
    }
    files.push_back(f);
  }

  RunConfig rc;
  rc.mcl = o.mcl;
  rc.mcl.n_particles = particles_for(o, map_ref);
  rc.compression = o.compression;
  rc.snapshot_messages = 0;

  std::vector<Cell> cells;
  for (std::size_t r = 0; r < logs.size(); ++r) {
    for (std::size_t s = 0; s < strategies.size(); ++s) cells.push_back({r, s});
  }
  std::vector<CellResult> results(cells.size());
  const fs::path log_dir = dir / "replays";
  if (o.keep_logs) fs::create_directories(log_dir);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell c = cells[i];
      const RunLog& rec = logs[c.run];
      const StrategyChoice& st = strategies[c.strategy];
      CellResult& res = results[i];
      try {
        const RunLog out = replay(rec, grid, st, rc, rec.header.seed);
        if (o.keep_logs) {
          const std::string label = strategy_label(st) + (st ? "_" + fmt(st->alpha) : "");
          write_file((log_dir / (label + "_" + files[c.run])).string(), to_jsonl(out));
        }
        res.summary = summarize_run(out, o.metric);
        res.track = track_b(out);
      } catch (const std::exception& e) {
        res.summary.strategy = strategy_label(st);
        res.summary.alpha = st ? st->alpha : 0.0;
        res.summary.scenario_seed = rec.header.scenario.seed;
        res.summary.seed = rec.header.seed;
        res.error = e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, o.jobs ? o.jobs : std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < std::min(jobs, cells.size()); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  const fs::path out = o.out.empty() ? dir : prepare_out(o.out);
  std::ostringstream runs_csv;
  runs_csv << csv_preamble(
      "file,strategy,alpha,scenario,seed,converged,convergence_time,success,ate_rot,ate_trans,messages,bytes,"
      "compression_ms,fusion_ms,error");
  std::vector<RunSummary> summaries;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& s = results[i].summary;
    summaries.push_back(s);
    runs_csv << files[cells[i].run] << "," << s.strategy << "," << fmt(s.alpha) << "," << s.scenario_seed << ","
             << s.seed << "," << s.converged << "," << (s.convergence_time ? fmt(*s.convergence_time) : "") << ","
             << s.success << "," << (s.ate ? fmt(s.ate->rot) : "") << "," << (s.ate ? fmt(s.ate->trans) : "") << ","
             << s.messages << "," << s.bytes_sent << "," << fmt(s.compression_ms) << "," << fmt(s.fusion_ms) << ","
             << results[i].error << "\n";
    if (!results[i].error.empty()) {
      std::cerr << "warning: " << files[cells[i].run] << " / " << s.strategy << ": " << results[i].error << "\n";
    }
  }
  write_file((out / "runs.csv").string(), runs_csv.str());

  const auto agg = aggregate(summaries, o.seed);
  std::map<std::string, int> name_count;
  for (const auto& a : agg) ++name_count[a.strategy];
  const auto label = [&](const StrategyAggregate& a) {
    return name_count[a.strategy] > 1 ? a.strategy + ":" + fmt(a.alpha) : a.strategy;
  };
  std::ostringstream agg_csv;
  agg_csv << csv_preamble(
      "strategy,alpha,runs,success_rate,success_lo,success_hi,convergence_time,convergence_lo,convergence_hi,"
      "ate_rot,ate_rot_lo,ate_rot_hi,ate_trans,ate_trans_lo,ate_trans_hi,bytes_per_message");
  std::vector<std::pair<std::string, double>> bars;
  std::cout << std::left << std::setw(18) << "strategy" << std::setw(8) << "runs" << std::setw(12) << "success"
            << std::setw(12) << "conv_s" << std::setw(12) << "ate_trans" << "bytes/msg\n";
  for (const auto& a : agg) {
    agg_csv << a.strategy << "," << fmt(a.alpha) << "," << a.runs << "," << fmt(a.success_rate.mean) << ","
            << fmt(a.success_rate.lo) << "," << fmt(a.success_rate.hi) << "," << fmt(a.convergence_time.mean) << ","
            << fmt(a.convergence_time.lo) << "," << fmt(a.convergence_time.hi) << "," << fmt(a.ate_rot.mean) << ","
            << fmt(a.ate_rot.lo) << "," << fmt(a.ate_rot.hi) << "," << fmt(a.ate_trans.mean) << ","
            << fmt(a.ate_trans.lo) << "," << fmt(a.ate_trans.hi) << "," << fmt(a.mean_bytes_per_message) << "\n";
    bars.emplace_back(label(a), a.success_rate.mean);
    std::cout << std::setw(18) << label(a) << std::setw(8) << a.runs << std::setw(12)
              << fmt(100 * a.success_rate.mean, 4) + "%" << std::setw(12) << fmt(a.convergence_time.mean, 4)
              << std::setw(12) << fmt(a.ate_trans.mean, 4) << fmt(a.mean_bytes_per_message, 6) << "\n";
  }
  write_file((out / "aggregate.csv").string(), agg_csv.str());
  write_file((out / "success.svg").string(), svg::bar_chart(bars, "success rate"));

  // converged fraction over time, one column per strategy
  std::vector<svg::Series> series;
  std::vector<std::vector<std::pair<double, double>>> fractions;
  for (const auto& a : agg) {
    std::vector<Track> tracks;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& s = results[i].summary;
      if (s.strategy == a.strategy && s.alpha == a.alpha && results[i].track) tracks.push_back(*results[i].track);
    }
    fractions.push_back(converged_fraction(tracks, o.metric, 0.5));
    series.push_back({label(a), fractions.back()});
  }
  std::ostringstream conv_csv;
  std::string columns = "t";
  for (const auto& a : agg) columns += "," + label(a);
  conv_csv << csv_preamble(columns);
  std::size_t rows = 0;
  for (const auto& f : fractions) rows = std::max(rows, f.size());
  for (std::size_t k = 0; k < rows; ++k) {
    conv_csv << fmt(0.5 * static_cast<double>(k));
    for (const auto& f : fractions) conv_csv << "," << (k < f.size() ? fmt(f[k].second) : "");
    conv_csv << "\n";
  }
  write_file((out / "convergence.csv").string(), conv_csv.str());
  write_file((out / "convergence.svg").string(), svg::line_chart(series, "fraction converged"));
  return 0;
}

// ---------------------------------------------------------------------------------------------

int cmd_bench(const Options& o) {
  std::vector<Method> methods;
  for (const auto& t : split(o.strategies.empty() ? "naive,std_thinning,det,prorok,kmeans,compresspp" : o.strategies)) {
    const auto s = parse_strategy(t, o.alpha);
    if (!s) throw UsageError("mcl has no exchange step to benchmark");
    methods.push_back(s->tag);
  }
  std::vector<std::size_t> ns;
  for (const auto& t : split(o.sizes)) {
    try {
      ns.push_back(std::stoul(t));
    } catch (const std::exception&) {
      throw UsageError("bad size '" + t + "'");
    }
  }
  if (methods.empty() || ns.empty()) throw UsageError("need at least one strategy and one size");
  if (o.repeats < 1) throw UsageError("--repeats must be >= 1");
  std::ostringstream csv;
  csv << csv_preamble("strategy,n,compression_ms,fusion_ms,bytes");
  std::cout << std::left << std::setw(14) << "strategy" << std::setw(8) << "N" << std::setw(16) << "compress_ms"
            << std::setw(14) << "fusion_ms" << "bytes\n";
  for (Method m : methods) {
    for (std::size_t n : ns) {
      const BenchRow r = benchmark_step(m, n, o.repeats, o.seed, o.compression);
      csv << r.strategy << "," << r.n << "," << fmt(r.compression_ms) << "," << fmt(r.fusion_ms) << "," << r.bytes
          << "\n";
      std::cout << std::setw(14) << r.strategy << std::setw(8) << r.n << std::setw(16) << fmt(r.compression_ms, 4)
                << std::setw(14) << fmt(r.fusion_ms, 4) << r.bytes << std::endl;
    }
  }
  const fs::path out = o.out.empty() ? fs::path("bench.csv") : fs::path(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file(out.string(), csv.str());
  return 0;
}

// ---------------------------------------------------------------------------------------------

int cmd_fixture(const Options& o) {
  if (o.name != "diamond_center") throw UsageError("unknown fixture '" + o.name + "' (available: diamond_center)");
  const fs::path dir = prepare_out(o.out);
  const LabeledPoints fx = diamond_center(o.seed);
  const auto points_csv = [&](std::span<const Vec2> pts) {
    std::ostringstream s;
    s << csv_preamble("x,y,region");
    for (const auto& p : pts) s << fmt(p.x, 17) << "," << fmt(p.y, 17) << "," << fx.region_of(p) << "\n";
    return s.str();
  };
  write_file((dir / "points.csv").string(), points_csv(fx.points));
  std::vector<svg::PointSet> sets{{"input", fx.points, 2.0}};
  for (Method m : kAllMethods) {
    Rng rng = derive_rng(o.seed, 30);
    const auto reps = representatives(m, fx.points, o.k, rng);
    const std::string name(method_name(m));
    write_file((dir / (name + ".csv")).string(), points_csv(reps));
    std::cout << std::left << std::setw(14) << name << reps.size() << " points, " << fx.regions_covered(reps)
              << "/5 regions\n";
    sets.push_back({name, reps, 4.0});
  }
  write_file((dir / "diamond_center.svg").string(), svg::scatter(sets, "diamond_center"));
  return 0;
}

// ---------------------------------------------------------------------------------------------

int cmd_map_info(const Options& o) {
  const auto [grid, ref] = load_map(o.map, o.config);
  const Traversability tr(grid, MotionSpec{}.robot_radius);
  std::size_t clear = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) clear += tr.clear(grid.cell_of_index(i)) ? 1 : 0;
  std::cout << "map:          " << ref << "\n"
            << "size:         " << grid.width() << " x " << grid.height() << " cells\n"
            << "resolution:   " << grid.resolution() << " m\n"
            << "extent:       " << grid.width() * grid.resolution() << " x " << grid.height() * grid.resolution()
            << " m\n"
            << "origin:       " << grid.origin().x << " " << grid.origin().y << " " << grid.origin().theta << "\n"
            << "free:         " << grid.count(CellState::kFree) << " cells, " << grid.free_area() << " m^2\n"
            << "occupied:     " << grid.count(CellState::kOccupied) << "\n"
            << "unknown:      " << grid.count(CellState::kUnknown) << "\n"
            << "traversable:  " << clear << " cells\n"
            << "digest:       " << map_digest(grid) << "\n";
  return 0;
}

int cmd_export_maps(const Options& o) {
  const fs::path dir = prepare_out(o.out.empty() ? "maps" : o.out);
  for (const auto& m : bundled_maps()) {
    const OccupancyGrid g = m.build();
    write_file((dir / m.file).string(), to_document(g));
    std::cout << (dir / m.file).string() << " " << map_digest(g) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative Monte Carlo localization with compressed belief exchange"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Key-value experiment file (TOML/INI)")->check(CLI::ExistingFile);

  Options o;
  app.add_option("--map", o.map, "Map file or bundled map name (symmetric, office, sparse)");
  app.add_option("--seed", o.seed, "Base seed");
  app.add_option("--out", o.out, "Output directory (bench: CSV file)");
  app.add_option("--strategies", o.strategies, "Comma list of strategies; name[:alpha], mcl = plain filter");
  app.add_option("--particles", o.particles, "Particles per filter (0 = map default)");
  app.add_option("--repeats", o.repeats, "Benchmark repeats");
  app.add_option("--scenarios", o.scenarios, "Number of scenarios to record");
  app.add_option("--seeds", o.seeds_per_scenario, "Recorded runs per scenario");
  app.add_option("--alpha", o.alpha, "Default reciprocal sampling fraction");
  app.add_option("--sizes", o.sizes, "Benchmark particle counts, comma list");
  app.add_option("--jobs", o.jobs, "Parallel replays (0 = all cores)");
  app.add_flag("--keep-logs", o.keep_logs, "Write replayed run logs");
  app.add_option("--k", o.k, "Representatives per method for fixtures");
  app.add_option("--sigma-obs", o.mcl.sigma_obs, "Beam likelihood sigma, m");
  app.add_option("--beam-stride", o.mcl.beam_stride, "Use every n-th LiDAR beam");
  app.add_option("--k-clusters", o.compression.k_clusters, "Clusters for kmeans and prorok");
  app.add_option("--det-leaves", o.compression.det_max_leaves, "DET leaf budget");
  app.add_option("--thinning-k", o.compression.thinning_k, "Points kept by standard thinning");
  app.add_option("--oversample", o.compression.oversample_g, "Compress++ oversampling parameter");
  app.add_option("--pos-threshold", o.metric.pos_threshold, "Convergence position threshold, m");
  app.add_option("--ang-threshold", o.metric.ang_threshold, "Convergence heading threshold, rad");

  auto* rec = app.add_subcommand("record", "Generate scenarios and record sensor logs");
  auto* eval = app.add_subcommand("evaluate", "Replay strategies on recorded runs and aggregate metrics");
  std::string run_dir;
  eval->add_option("run_dir", run_dir, "Directory written by record")->required();
  auto* bench = app.add_subcommand("bench", "Time one compression and fusion step");
  auto* fixture = app.add_subcommand("fixture", "Write a point fixture and each method's representatives");
  fixture->add_option("name", o.name, "Fixture name")->required();
  auto* info = app.add_subcommand("map-info", "Print map statistics");
  info->add_option("map", o.map, "Map file or bundled map name");
  auto* exp = app.add_subcommand("export-maps", "Write the bundled maps as map files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (const CLI::Option* c = app.get_config_ptr(); c != nullptr && c->count() > 0) o.config = c->as<std::string>();

  try {
    if (*rec) return cmd_record(o);
    if (*eval) return cmd_evaluate(o, run_dir);
    if (*bench) return cmd_bench(o);
    if (*fixture) return cmd_fixture(o);
    if (*info) return cmd_map_info(o);
    if (*exp) return cmd_export_maps(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
