#include "cbed/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "cbed/acquisition.hpp"
#include "cbed/config.hpp"
#include "cbed/errors.hpp"
#include "cbed/estimators.hpp"
#include "cbed/posterior.hpp"
#include "cbed/run_io.hpp"
#include "cbed/serialization.hpp"

namespace cbed {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  std::string strategy;
  bool verbose = false;
};

class Log {
 public:
  Log(std::ostream& err, bool verbose) : err_(err), verbose_(verbose) {}
  void info(const std::string& msg) {
    if (!verbose_) return;
    std::lock_guard lock(mu_);
    err_ << msg << '\n';
  }
  void error(const std::string& msg) {
    std::lock_guard lock(mu_);
    err_ << "error: " << msg << '\n';
  }

 private:
  std::ostream& err_;
  bool verbose_;
  std::mutex mu_;
};

TargetSpec parse_target_spec(const std::string& text, std::size_t d) {
  TargetSpec spec;
  std::stringstream designs(text);
  std::string part;
  while (std::getline(designs, part, '|')) {
    std::vector<std::size_t> targets;
    if (part != "obs") {
      std::stringstream ts(part);
      std::string item;
      while (std::getline(ts, item, '+')) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
          v = std::stoul(item, &pos);
        } catch (const std::exception&) {
          throw ConfigError("bad target spec '" + text + "'");
        }
        if (pos != item.size() || v >= d) throw ConfigError("bad target spec '" + text + "'");
        targets.push_back(v);
      }
      std::sort(targets.begin(), targets.end());
    }
    spec.push_back(std::move(targets));
  }
  return spec;
}

// Every assignment of one target per design.
std::vector<TargetSpec> single_target_specs(std::size_t d, std::size_t batch) {
  std::vector<TargetSpec> specs;
  std::vector<std::size_t> idx(batch, 0);
  for (;;) {
    TargetSpec s;
    for (std::size_t b = 0; b < batch; ++b) s.push_back({idx[b]});
    specs.push_back(std::move(s));
    std::size_t b = batch;
    while (b > 0 && ++idx[b - 1] == d) idx[--b] = 0;
    if (b == 0) break;
  }
  return specs;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 1) return {lo};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

Dataset initial_data(const RunConfig& config, Environment& env) {
  Dataset data(config.d);
  if (config.N > 0) data.append(env.sample(Design::observational(), config.N));
  return data;
}

std::string samples_csv(const std::vector<SampleMatrix>& blocks, std::size_t d) {
  std::ostringstream os;
  os.precision(17);
  os << "targets";
  for (std::size_t j = 0; j < d; ++j) os << ",x" << j;
  os << '\n';
  for (const auto& block : blocks) {
    const std::string label = format_target_spec({block.provenance.targets});
    for (Eigen::Index i = 0; i < block.values.rows(); ++i) {
      os << label;
      for (Eigen::Index j = 0; j < block.values.cols(); ++j) os << ',' << block.values(i, j);
      os << '\n';
    }
  }
  return os.str();
}

int cmd_sample(const RunConfig& config, const fs::path& out, Log&) {
  Environment env = make_environment(config);
  write_json_file(out / "scm.json", to_json(env.truth()));
  std::vector<SampleMatrix> blocks;
  blocks.push_back(env.sample(Design::observational(), config.sample.n));
  for (const auto& design : config.sample.interventions) blocks.push_back(env.sample(design, config.sample.n));
  write_text_file(out / "samples.csv", samples_csv(blocks, config.d));
  return 0;
}

ParticleSet landscape_particles(const RunConfig& config, const Dataset& data) {
  if (config.particles_file) return particles_from_json(read_json_file(*config.particles_file));
  Rng rng(derive_seed(config.seed, "posterior"));
  ExactPosteriorOptions opts;
  opts.particles_per_graph = config.particles_per_graph;
  return exact_posterior(data, config.particle_prior, opts, rng);
}

int cmd_eig_grid(const RunConfig& config, const fs::path& out, Log& log) {
  Environment env = make_environment(config);
  const Dataset data = initial_data(config, env);
  const ParticleSet posterior = landscape_particles(config, data);
  std::vector<TargetSpec> specs;
  for (const auto& s : config.grid.specs) specs.push_back(parse_target_spec(s, config.d));
  if (specs.empty()) specs = single_target_specs(config.d, config.B);
  for (const auto& s : specs) {
    if (s.size() != specs.front().size()) throw ConfigError("all target specs need the same batch size");
  }
  log.info("evaluating " + std::to_string(specs.size()) + " target specs");
  const auto cells = eig_grid(posterior, specs, linspace(config.grid.lo, config.grid.hi, config.grid.points),
                              NmcOptions{config.n_outer, config.L, false}, derive_seed(config.seed, "grid"));
  std::ostringstream os;
  write_grid_csv(os, specs, cells);
  write_text_file(out / "eig_grid.csv", os.str());
  return 0;
}

int cmd_design(const RunConfig& config, const fs::path& out, Log& log) {
  Environment env = make_environment(config);
  const Dataset data = initial_data(config, env);
  const ParticleSet particles = design_particles(config, data, nullptr, derive_seed(config.seed, "posterior"));
  const std::uint64_t seed = derive_seed(config.seed, "policy");
  const OptimizeResult result = design_batch(config, particles, seed);
  Rng final_rng(derive_seed(seed, "final"));
  const DesignBatch batch = to_design_batch(sample_relaxed(result.params, final_rng));
  std::string trace;
  for (const auto& row : result.trace) trace += format_trace_row(1, row) + "\n";
  write_text_file(out / "trace.jsonl", trace);
  write_json_file(out / "policy.json", to_json(result.params));
  write_json_file(out / "designs.json", to_json(batch));
  if (!result.trace.empty()) log.info("final objective " + std::to_string(result.trace.back().eig_value));
  return 0;
}

int cmd_evaluate(const RunConfig& config, const fs::path& out, Log&) {
  Environment env = make_environment(config);
  const Dataset data = initial_data(config, env);
  ParticleSet particles;
  if (config.particles_file) {
    particles = particles_from_json(read_json_file(*config.particles_file));
  } else {
    particles = evaluation_posterior(config, data, derive_seed(derive_seed(config.seed, "posterior"), 0));
  }
  IMmdOptions immd;
  immd.designs = config.immd_designs;
  immd.n_per_design = config.immd_samples;
  immd.state_lo = config.state_lo;
  immd.state_hi = config.state_hi;
  Rng rng(derive_seed(derive_seed(config.seed, "eval"), 0));
  const MetricReport report = evaluate_metrics(particles, env.truth(), immd, rng);
  const MetricsRow row{0, report.e_shd, report.f1, report.i_mmd, effective_sample_size(particles), config.seed, false};
  write_text_file(out / "metrics.csv", std::string(kMetricsHeader) + "\n" + format_metrics_row(row) + "\n");
  return 0;
}

int cmd_loop(const RunConfig& base, const Options& opt, const fs::path& out, Log& log) {
  std::vector<std::uint64_t> seeds = opt.seeds;
  const bool sweep = !seeds.empty();
  if (!sweep) seeds.push_back(base.seed);

  std::vector<std::vector<MetricsRow>> results(seeds.size());
  std::vector<int> status(seeds.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      RunConfig c = base;
      c.seed = seeds[i];
      const fs::path dir = sweep ? out / ("seed_" + std::to_string(seeds[i])) : out;
      try {
        DirectorySink sink(dir, c);
        Environment env = make_environment(c);
        log.info("seed " + std::to_string(c.seed) + ": start");
        RunArtifacts art = run_loop(c, env, &sink);
        results[i] = art.metrics;
        if (art.failure) {
          log.error("seed " + std::to_string(c.seed) + ": " + *art.failure);
          status[i] = 1;
        } else {
          log.info("seed " + std::to_string(c.seed) + ": done");
        }
      } catch (const std::exception& e) {
        log.error("seed " + std::to_string(c.seed) + ": " + e.what());
        status[i] = 1;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(opt.jobs, seeds.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  if (sweep) write_aggregate_csv(out / "aggregate.csv", aggregate(results));
  for (int s : status) {
    if (s != 0) return 1;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient-based batch experimental design for causal discovery"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Run configuration (JSON)")->required();
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", opt.seed, "Override the run seed");
    sub->add_option("--seeds", opt.seeds, "Comma separated seed sweep")->delimiter(',');
    sub->add_option("--jobs", opt.jobs, "Concurrent seeds")->check(CLI::PositiveNumber);
    sub->add_option("--strategy", opt.strategy, "policy, random_fixed or random_random");
    sub->add_flag("--verbose", opt.verbose, "Progress on standard error");
  };
  CLI::App* sample = app.add_subcommand("sample", "Sample a ground-truth SCM and data");
  CLI::App* grid = app.add_subcommand("eig-grid", "EIG landscape over fixed designs");
  CLI::App* design = app.add_subcommand("design", "Optimize one design batch");
  CLI::App* loop = app.add_subcommand("loop", "Full acquisition loop");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Metrics of a posterior against the ground truth");
  for (CLI::App* sub : {sample, grid, design, loop, evaluate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  Log log(err, opt.verbose);
  RunConfig config;
  fs::path out_dir;
  try {
    if (!fs::exists(opt.config_path)) throw ConfigError("config file not found: " + opt.config_path);
    config = load_config(opt.config_path);
    if (opt.seed) config.seed = *opt.seed;
    if (!opt.strategy.empty()) config.strategy = parse_strategy(opt.strategy);
    if (!opt.out.empty()) {
      out_dir = opt.out;
    } else if (const char* env = std::getenv("DIFFCBED_OUT"); env && *env) {
      out_dir = env;
    } else {
      out_dir = "cbed_out";
    }
    config.validate();
  } catch (const std::invalid_argument& e) {
    log.error(e.what());
    return 2;
  }

  try {
    fs::create_directories(out_dir);
    write_json_file(out_dir / "config.json", to_json(config));
    if (sample->parsed()) return cmd_sample(config, out_dir, log);
    if (grid->parsed()) return cmd_eig_grid(config, out_dir, log);
    if (design->parsed()) return cmd_design(config, out_dir, log);
    if (evaluate->parsed()) return cmd_evaluate(config, out_dir, log);
    return cmd_loop(config, opt, out_dir, log);
  } catch (const ConfigError& e) {
    log.error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log.error(e.what());
    return 1;
  }
}

}  // namespace cbed
