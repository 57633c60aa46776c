// hosting_cli: relaxed SOCP, convex iteration and post-audit for PV hosting capacity.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hosting/commands.hpp"

using namespace hosting;

namespace {

struct Scenario {
  RunManifest man;
  std::string log;
  int code = 0;
};

std::vector<double> parse_mults(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("bad load multiplier '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("no load multiplier given");
  return out;
}

std::string default_timestamp() {
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) return iso_utc(std::atoll(e));
  using namespace std::chrono;
  return iso_utc(duration_cast<seconds>(system_clock::now().time_since_epoch()).count());
}

std::string scenario_dir(const std::string& out, const std::string& feeder, double mult) {
  std::string stem = std::filesystem::path(feeder).stem().string();
  return (std::filesystem::path(out) / (stem + "_m" + fmt_num(mult))).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PV hosting capacity on radial feeders: relaxed SOCP and convex iteration"};
  app.set_version_flag("--version", std::string(HOSTING_VERSION));
  app.require_subcommand(1);

  std::vector<std::string> feeders;
  std::string mults = "1.0", out_dir = "out", timestamp, objective = "max-pv", result_path;
  RunManifest defaults;
  double gamma = defaults.gamma, alpha = defaults.alpha, epsilon = defaults.epsilon, penalty = defaults.penalty;
  int max_iter = defaults.max_outer, jobs = 1;
  bool no_timing = false;

  auto scenario_opts = [&](CLI::App* c) {
    c->add_option("--feeder", feeders, "Feeder file or bundled name (ieee13, ieee123, two_bus, ...)")->required();
    c->add_option("--load-mult", mults, "Load multiplier, or a comma-separated list");
    c->add_option("--out", out_dir, "Output directory");
    c->add_option("--jobs", jobs, "Scenarios solved in parallel")->check(CLI::PositiveNumber);
    c->add_option("--timestamp", timestamp, "Manifest timestamp (default: SOURCE_DATE_EPOCH or now)");
  };
  CLI::App* relax = app.add_subcommand("relax", "Solve the relaxed SOCP and report cone gaps");
  scenario_opts(relax);
  relax->add_option("--objective", objective, "max-pv or min-loss")
      ->check(CLI::IsMember({"max-pv", "min-loss"}));
  CLI::App* iterate = app.add_subcommand("iterate", "Run the convex iteration to an exact power flow");
  scenario_opts(iterate);
  iterate->add_option("--gamma", gamma, "Gap contraction ratio in (0, 1)");
  iterate->add_option("--alpha", alpha, "Step acceleration factor in (0, 1)");
  iterate->add_option("--epsilon", epsilon, "Stop tolerance on max |gap|");
  iterate->add_option("--max-iter", max_iter, "Outer iteration cap");
  iterate->add_option("--penalty", penalty, "Cost on cut slack; 0 makes the cut hard");
  iterate->add_flag("--no-timing", no_timing, "Write 0 for per-iteration wall time");
  CLI::App* validate = app.add_subcommand("validate", "Re-check a result with the exact power flow");
  validate->add_option("result", result_path, "result.json written by relax or iterate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (validate->parsed()) return cmd_validate(result_path, std::cout);

  std::vector<Scenario> runs;
  try {
    const std::string ts = timestamp.empty() ? default_timestamp() : timestamp;
    const std::vector<double> ms = parse_mults(mults);
    for (const std::string& f : feeders)
      for (double mult : ms) {
        Scenario s;
        s.man.feeder = f;
        s.man.load_mult = mult;
        s.man.gamma = gamma;
        s.man.alpha = alpha;
        s.man.epsilon = epsilon;
        s.man.max_outer = max_iter;
        s.man.penalty = penalty;
        s.man.timestamp = ts;
        s.man.out_dir = feeders.size() * ms.size() == 1 ? out_dir : scenario_dir(out_dir, f, mult);
        runs.push_back(std::move(s));
      }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  RelaxOptions ropt;
  if (objective == "min-loss") ropt.objective = HostingObjective::min_loss;
  IterationConfig icfg;
  icfg.timing = !no_timing;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < runs.size();) {
      std::ostringstream log;
      try {
        runs[i].code = relax->parsed() ? cmd_relax(runs[i].man, log, ropt) : cmd_iterate(runs[i].man, log, icfg);
      } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        runs[i].code = kExitSolver;
      }
      runs[i].log = log.str();
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(jobs, static_cast<int>(runs.size()));
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  int code = kExitOk;
  for (const Scenario& s : runs) {
    std::cout << s.log;
    code = std::max(code, s.code);
  }
  return code;
}
