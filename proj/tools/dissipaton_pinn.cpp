#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dqpinn/errors.hpp"
#include "dqpinn/io/config.hpp"
#include "dqpinn/io/run.hpp"

namespace {

enum Exit : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kPhysics = 3,
  kOptimization = 4,
  kIo = 5,
  kUsage = 64,
};

struct Common {
  std::string config;
  std::string out = "out";
  int threads = 1;
  bool override_failure = false;
  bool out_given = false;
};

void add_common(CLI::App* sub, Common& c, bool needs_config) {
  auto* opt = sub->add_option("--config", c.config, "Run config (TOML) or run manifest (JSON)");
  if (needs_config) opt->required();
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads for loss evaluation")->check(CLI::PositiveNumber);
  sub->add_flag("--override-subdomain-failure", c.override_failure,
                "Continue training past subdomains that miss their final loss target");
}

int run(const std::string& name, const Common& c, const std::vector<std::string>& files) {
  using namespace dqpinn;
  io::RunOptions o;
  o.out = c.out;
  o.threads = c.threads;
  o.override_failure = c.override_failure;
  o.log = &std::cerr;

  if (name == "compare") {
    if (files.size() != 2) throw ConfigError("compare needs exactly two trajectory CSV files");
    const auto r = io::run_compare(files[0], files[1]);
    std::cout << r.dump(2) << "\n";
    if (c.out_given) io::write_atomic(o.out / "compare.json", r.dump(2) + "\n");
    return kOk;
  }

  const io::RunConfig cfg = io::load_config(c.config);
  if (name == "bath") {
    std::cout << io::run_bath(cfg, o).dump(2) << "\n";
  } else if (name == "basis") {
    const auto b = io::run_basis(cfg, o);
    std::cout << "states before filtering: " << b["full_size"] << "\nstates after filtering: " << b["size"]
              << "\nbasis hash: " << b["hash"].get<std::string>() << "\n";
  } else if (name == "propagate") {
    std::cout << io::run_propagate(cfg, o).dump(2) << "\n";
  } else if (name == "gradcheck") {
    const auto r = io::run_gradcheck(cfg, o);
    std::cout << r.dump(2) << "\n";
    if (!r["passed"].get<bool>()) {
      std::cerr << "gradcheck failed: worst relative error " << r["worst"] << "\n";
      return kPhysics;
    }
  } else if (name == "train") {
    const auto t = io::run_train(cfg, o);
    std::cout << io::json{{"status", t.manifest["status"]}, {"metrics", t.metrics}}.dump(2) << "\n";
    if (!t.run.all_passed) {
      std::cerr << "training: " << (t.run.completed ? "some subdomains missed their final loss target"
                                                    : "stopped at t = " + std::to_string(t.run.t_end))
                << "\n";
      return kOptimization;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dissipaton-embedded quantum master equation solver with physics-informed neural networks"};
  app.require_subcommand(1);
  Common common;
  std::vector<std::string> files;
  for (const char* name : {"bath", "basis", "propagate", "train", "gradcheck"}) {
    auto* sub = app.add_subcommand(name);
    add_common(sub, common, true);
  }
  auto* cmp = app.add_subcommand("compare", "Relative time-integrated errors between two trajectory CSVs");
  add_common(cmp, common, false);
  cmp->add_option("files", files, "trajectory.csv reference.csv")->expected(2);
  app.get_subcommand("bath")->description("Bath mode table and correlation functions against quadrature");
  app.get_subcommand("basis")->description("Filtered RDT basis and generator triplets");
  app.get_subcommand("propagate")->description("Reference RK4 propagation");
  app.get_subcommand("train")->description("Subdomain PINN training");
  app.get_subcommand("gradcheck")->description("Loss gradient against finite differences on a 12-state instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  common.out_given = app.get_subcommands().front()->count("--out") > 0;
  try {
    return run(name, common, files);
  } catch (const dqpinn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const dqpinn::PhysicsError& e) {
    std::cerr << "physics error: " << e.what() << "\n";
    return kPhysics;
  } catch (const dqpinn::DimensionError& e) {
    std::cerr << "physics error: " << e.what() << "\n";
    return kPhysics;
  } catch (const dqpinn::OptimizationError& e) {
    std::cerr << "optimization error: " << e.what() << "\n";
    return kOptimization;
  } catch (const dqpinn::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
