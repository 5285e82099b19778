// kraw: command-line driver for training runs, K/H sweeps, learned-p reports,
// filter response plots and synthetic dataset generation.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kraw/experiment.hpp"

namespace {

using kraw::experiment::Command;
using kraw::experiment::ExperimentSpec;

struct RawOptions {
  std::vector<std::string> datasets;
  std::vector<std::string> sbms;
  std::vector<std::string> families;
  std::vector<int> k;
  std::vector<std::size_t> h;
  int n = 20;
  int epochs = -1;
  double lr = 0.01;
  double wd = 5e-4;
  double dropout = 0.5;
  std::uint64_t seed = 0;
  int seeds = 1;
  std::size_t folds = 0;
  unsigned threads = 1;
  bool no_row_normalize = false;
  std::vector<double> p;
  std::string view = "raw";
  int points = 101;
  std::string out = "out";
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ExperimentSpec to_spec(Command command, const RawOptions& o) {
  ExperimentSpec s = kraw::experiment::default_spec(command);
  for (const auto& d : o.datasets) s.sources.push_back({std::filesystem::path(d), std::nullopt});
  for (const auto& j : o.sbms) {
    // Inline JSON or a path to a JSON file.
    const std::string text = !j.empty() && j.front() == '{' ? j : read_file(j);
    s.sources.push_back({std::nullopt, kraw::experiment::sbm_from_json(text)});
  }
  if (!o.families.empty()) {
    s.families.clear();
    for (const auto& f : o.families) s.families.push_back(kraw::poly::parse_family(f));
  }
  if (!o.k.empty()) s.k_values = o.k;
  if (!o.h.empty()) s.h_values = o.h;
  s.N = o.n;
  if (o.epochs >= 0) s.epochs = o.epochs;
  s.lr = o.lr;
  s.weight_decay = o.wd;
  s.dropout = o.dropout;
  s.seed = o.seed;
  s.seeds = o.seeds;
  s.folds = o.folds;
  s.threads = o.threads;
  s.row_normalize = !o.no_row_normalize;
  if (!o.p.empty()) s.p_values = o.p;
  s.view = o.view == "rescaled" ? kraw::poly::ResponseDomain::rescaled
                                : kraw::poly::ResponseDomain::raw;
  s.grid_points = o.points;
  s.out = o.out;
  return s;
}

void add_common(CLI::App* app, RawOptions& o, Command command) {
  app->add_option("--dataset", o.datasets, "Dataset directory in the kraw format");
  app->add_option("--sbm", o.sbms, "SBM config: JSON file or inline JSON object");
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
  if (command == Command::gen_sbm) return;
  app->add_option("--n", o.n, "Krawtchouk N")->capture_default_str();
  if (command == Command::response_plot) {
    app->add_option("--k", o.k, "Number of bases (degrees 0..K-1)")->delimiter(',');
    app->add_option("--p", o.p, "Comma-separated p values")->delimiter(',');
    app->add_option("--view", o.view, "raw (x = lambda) or rescaled (x = N*lambda)")
        ->check(CLI::IsMember({"raw", "rescaled"}))
        ->capture_default_str();
    app->add_option("--points", o.points, "Grid points on [0,1]")->capture_default_str();
    return;
  }
  app->add_option("--family", o.families, "krawtchouk and/or chebyshev (comma-separated)")
      ->delimiter(',');
  app->add_option("--k", o.k, "Number of bases, comma-separated list")->delimiter(',');
  app->add_option("--h", o.h, "Hidden width, comma-separated list")->delimiter(',');
  app->add_option("--epochs", o.epochs,
                  "Training epochs (default: 200, or 400 when edge homophily < 0.5)");
  app->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--wd", o.wd, "L2 weight decay")->capture_default_str();
  app->add_option("--dropout", o.dropout, "Dropout rate")->capture_default_str();
  app->add_option("--seed", o.seed, "Base seed")->capture_default_str();
  app->add_option("--seeds", o.seeds, "Independent repeats (seed, seed+1, ...)")
      ->capture_default_str();
  app->add_option("--folds", o.folds, "Use the first F splits of the dataset (0 = all)")
      ->capture_default_str();
  app->add_option("--threads", o.threads, "Worker threads")->capture_default_str();
  app->add_flag("--no-row-normalize", o.no_row_normalize,
                "Keep raw features when loading a dataset directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Krawtchouk and Chebyshev spectral GNN experiments"};
  // --h is the hidden width, so help is long-form only.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  RawOptions opts;
  std::vector<std::pair<CLI::App*, Command>> commands;
  const std::vector<std::pair<Command, std::string>> descriptions{
      {Command::train, "Train one configuration and write curves, checkpoints and a summary"},
      {Command::sweep_k, "Test accuracy against the number of bases K"},
      {Command::sweep_h, "Test accuracy against the hidden width H"},
      {Command::report_p, "Learned p per dataset next to its edge homophily"},
      {Command::response_plot, "Plot Krawtchouk basis responses over lambda in [0,1]"},
      {Command::gen_sbm, "Write a synthetic SBM dataset in the kraw format"}};
  for (const auto& [cmd, desc] : descriptions) {
    CLI::App* sub = app.add_subcommand(kraw::experiment::to_string(cmd), desc);
    add_common(sub, opts, cmd);
    commands.emplace_back(sub, cmd);
  }
  std::string echo;
  std::string replay_out;
  CLI::App* replay = app.add_subcommand("replay", "Re-run a config.json written by any command");
  replay->add_option("config", echo, "config.json")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "Output directory (default: the echoed one)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::filesystem::path> written;
    if (replay->parsed()) {
      std::optional<std::filesystem::path> out;
      if (!replay_out.empty()) out = replay_out;
      written = kraw::experiment::replay(echo, out);
    } else {
      for (const auto& [sub, cmd] : commands) {
        if (sub->parsed()) written = kraw::experiment::run(to_spec(cmd, opts));
      }
    }
    for (const auto& p : written) std::cout << p.string() << '\n';
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "done in " << secs << " s\n";
  } catch (const std::exception& e) {
    std::cerr << "kraw: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
