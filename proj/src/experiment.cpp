#include "kraw/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "kraw/svg.hpp"

namespace kraw::experiment {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using poly::Family;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string split_name(data::SplitProtocol s) {
  switch (s) {
    case data::SplitProtocol::per_class: return "per_class";
    case data::SplitProtocol::random: return "random";
    case data::SplitProtocol::folds: return "folds";
  }
  return "random";
}

data::SplitProtocol parse_split(const std::string& s) {
  if (s == "per_class") return data::SplitProtocol::per_class;
  if (s == "random") return data::SplitProtocol::random;
  if (s == "folds") return data::SplitProtocol::folds;
  throw std::invalid_argument("unknown split protocol '" + s + "'");
}

std::string view_name(poly::ResponseDomain d) {
  return d == poly::ResponseDomain::raw ? "raw" : "rescaled";
}

poly::ResponseDomain parse_view(const std::string& s) {
  if (s == "raw") return poly::ResponseDomain::raw;
  if (s == "rescaled") return poly::ResponseDomain::rescaled;
  throw std::invalid_argument("unknown response view '" + s + "' (raw | rescaled)");
}

json sbm_json(const data::SbmConfig& c) {
  return json{{"num_nodes", c.num_nodes},         {"num_classes", c.num_classes},
              {"homophily", c.homophily},         {"mean_degree", c.mean_degree},
              {"num_features", c.num_features},   {"class_separation", c.class_separation},
              {"feature_noise", c.feature_noise}, {"seed", c.seed},
              {"split", split_name(c.split)}};
}

data::SbmConfig sbm_from(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("SBM config must be a JSON object");
  data::SbmConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "num_nodes") c.num_nodes = value.get<std::size_t>();
    else if (key == "num_classes") c.num_classes = value.get<int>();
    else if (key == "homophily") c.homophily = value.get<double>();
    else if (key == "mean_degree") c.mean_degree = value.get<double>();
    else if (key == "num_features") c.num_features = value.get<std::size_t>();
    else if (key == "class_separation") c.class_separation = value.get<double>();
    else if (key == "feature_noise") c.feature_noise = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "split") c.split = parse_split(value.get<std::string>());
    else throw std::invalid_argument("unknown SBM config key '" + key + "'");
  }
  c.validate();
  return c;
}

struct LoadedSource {
  // One entry per repeat; directory sources share a single dataset.
  std::vector<std::shared_ptr<const data::Dataset>> per_repeat;
  std::vector<double> homophily;
};

double safe_homophily(const data::Dataset& ds) {
  if (ds.graph.num_edges() == 0) return kNaN;
  return data::edge_homophily(ds);
}

LoadedSource load_source(const DataSource& src, const ExperimentSpec& spec) {
  LoadedSource out;
  if (src.dataset) {
    data::LoadOptions opts;
    opts.row_normalize = spec.row_normalize;
    auto ds = std::make_shared<const data::Dataset>(data::load_dataset(*src.dataset, opts));
    const double h = safe_homophily(*ds);
    out.per_repeat.assign(static_cast<std::size_t>(spec.seeds), ds);
    out.homophily.assign(static_cast<std::size_t>(spec.seeds), h);
  } else {
    for (int r = 0; r < spec.seeds; ++r) {
      data::SbmConfig cfg = *src.sbm;
      cfg.seed += static_cast<std::uint64_t>(r);
      auto ds = std::make_shared<const data::Dataset>(data::generate_sbm(cfg));
      out.homophily.push_back(safe_homophily(*ds));
      out.per_repeat.push_back(std::move(ds));
    }
  }
  return out;
}

std::size_t fold_count(const ExperimentSpec& spec, const data::Dataset& ds) {
  if (spec.folds == 0) return ds.splits.size();
  if (spec.folds > ds.splits.size()) {
    throw std::invalid_argument("--folds " + std::to_string(spec.folds) + " but dataset '" +
                                ds.name + "' has " + std::to_string(ds.splits.size()) +
                                " split(s)");
  }
  return spec.folds;
}

int epochs_for(const ExperimentSpec& spec, double homophily) {
  if (spec.epochs) return *spec.epochs;
  return homophily < 0.5 ? 400 : 200;
}

std::string series_label(Family f) { return std::string(poly::to_string(f)); }

void write(std::vector<fs::path>& written, const fs::path& path, const std::string& text) {
  svg::write_text(path, text);
  written.push_back(path);
}

json runs_json(const std::vector<CellResult>& results) {
  json arr = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const CellResult& r = results[i];
    arr.push_back({{"index", i},
                   {"dataset", r.dataset},
                   {"split_protocol", r.split_protocol},
                   {"family", poly::to_string(r.cell.family)},
                   {"K", r.cell.K},
                   {"H", r.cell.H},
                   {"repeat", r.cell.repeat},
                   {"fold", r.cell.fold},
                   {"seed", r.cell.seed},
                   {"epochs", r.epochs},
                   {"status", r.finite ? "ok" : "diverged"},
                   {"error", r.error},
                   {"final_test_acc", r.finite ? json(r.record.final_test_acc) : json(nullptr)},
                   {"best_val_acc", r.finite ? json(r.record.best_val_acc) : json(nullptr)},
                   {"best_val_epoch", r.record.best_val_epoch},
                   {"best_val_test_acc",
                    r.finite ? json(r.record.best_val_test_acc) : json(nullptr)},
                   {"learned_p", r.record.final_shape_p}});
  }
  return arr;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json groups_json(const std::vector<GroupSummary>& groups) {
  json arr = json::array();
  for (const GroupSummary& g : groups) {
    arr.push_back({{"dataset", g.dataset},
                   {"edge_homophily", finite_or_null(g.edge_homophily)},
                   {"family", poly::to_string(g.family)},
                   {"K", g.K},
                   {"H", g.H},
                   {"runs", g.runs},
                   {"diverged", g.diverged},
                   {"mean_final_test_acc", finite_or_null(g.mean_final_test)},
                   {"std_final_test_acc", finite_or_null(g.std_final_test)},
                   {"mean_best_val_test_acc", finite_or_null(g.mean_best_val_test)},
                   {"std_best_val_test_acc", finite_or_null(g.std_best_val_test)},
                   {"mean_p_conv1", finite_or_null(g.mean_p_conv1)},
                   {"mean_p_conv2", finite_or_null(g.mean_p_conv2)}});
  }
  return arr;
}

std::string sweep_svg(const std::vector<GroupSummary>& groups, bool by_k) {
  // One line per (family, other axis value).
  std::vector<svg::Series> series;
  std::map<std::pair<int, std::size_t>, std::size_t> index;
  for (const GroupSummary& g : groups) {
    const std::size_t other = by_k ? g.H : static_cast<std::size_t>(g.K);
    const auto key = std::make_pair(static_cast<int>(g.family), other);
    auto it = index.find(key);
    if (it == index.end()) {
      std::string label = series_label(g.family);
      label += by_k ? " H=" : " K=";
      label += std::to_string(other);
      series.push_back({label, {}, {}});
      it = index.emplace(key, series.size() - 1).first;
    }
    svg::Series& s = series[it->second];
    s.x.push_back(by_k ? static_cast<double>(g.K) : static_cast<double>(g.H));
    s.y.push_back(g.mean_final_test);
  }
  svg::PlotOptions opt;
  opt.title = by_k ? "Test accuracy vs K" : "Test accuracy vs hidden width";
  opt.x_label = by_k ? "K (number of polynomial bases)" : "H (hidden units)";
  opt.y_label = "mean test accuracy";
  return svg::line_plot(series, opt);
}

std::string curves_svg(const train::RunRecord& rec) {
  svg::Series tr{"train", {}, {}}, va{"val", {}, {}}, te{"test", {}, {}};
  for (const train::EpochRecord& e : rec.epochs) {
    const double x = e.epoch;
    tr.x.push_back(x);
    va.x.push_back(x);
    te.x.push_back(x);
    tr.y.push_back(e.train_acc);
    va.y.push_back(e.val_acc);
    te.y.push_back(e.test_acc);
  }
  const std::vector<svg::Series> all{tr, va, te};
  svg::PlotOptions opt;
  opt.title = "Accuracy per epoch";
  opt.x_label = "epoch";
  opt.y_label = "accuracy";
  opt.markers = false;
  return svg::line_plot(all, opt);
}

std::vector<double> lambda_grid(int points) {
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = double(i) / (points - 1);
  return g;
}

std::vector<double> degree_response(const ExperimentSpec& spec, double p, int degree,
                                    const std::vector<double>& lambdas) {
  poly::KrawtchoukParams params{p, spec.N, spec.k_values.front()};
  std::vector<double> mix(static_cast<std::size_t>(params.K), 0.0);
  mix[static_cast<std::size_t>(degree)] = 1.0;
  return poly::filter_response(params, lambdas, mix, spec.view);
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::train: return "train";
    case Command::sweep_k: return "sweep-k";
    case Command::sweep_h: return "sweep-h";
    case Command::report_p: return "report-p";
    case Command::response_plot: return "response-plot";
    case Command::gen_sbm: return "gen-sbm";
  }
  return "train";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::train, Command::sweep_k, Command::sweep_h, Command::report_p,
                    Command::response_plot, Command::gen_sbm}) {
    if (to_string(c) == name) return c;
  }
  throw std::invalid_argument("unknown command '" + name + "'");
}

void ExperimentSpec::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  for (const DataSource& s : sources) {
    if (s.dataset.has_value() == s.sbm.has_value())
      fail("each data source must be either a dataset directory or an SBM config");
    if (s.sbm) s.sbm->validate();
  }
  switch (command) {
    case Command::response_plot:
      break;
    case Command::gen_sbm:
      if (sources.size() != 1 || !sources.front().sbm) fail("gen-sbm needs exactly one --sbm config");
      break;
    case Command::report_p:
      if (sources.empty()) fail("report-p needs at least one --dataset or --sbm source");
      break;
    default:
      if (sources.size() != 1) fail(to_string(command) + " needs exactly one --dataset or --sbm source");
  }
  if (families.empty()) fail("no model family given");
  if (command == Command::report_p || command == Command::response_plot) {
    for (Family f : families)
      if (f != Family::krawtchouk)
        fail(to_string(command) + " requires --family krawtchouk (learned p is Krawtchouk-only)");
  }
  if (k_values.empty()) fail("no K given");
  for (int k : k_values)
    if (k < 1) fail("K must be >= 1");
  if (h_values.empty()) fail("no hidden width given");
  for (std::size_t h : h_values)
    if (h == 0) fail("hidden width must be >= 1");
  if (N < 1) fail("N must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (epochs && *epochs < 0) fail("epochs must be >= 0");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (weight_decay < 0.0) fail("weight decay must be >= 0");
  if (seeds < 1) fail("seeds must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
  if (command == Command::response_plot) {
    if (p_values.empty()) fail("response-plot needs at least one p");
    for (double p : p_values)
      if (!(p > 0.0 && p < 1.0)) fail("p must be in (0, 1)");
    if (grid_points < 2) fail("grid needs at least 2 points");
  }
  if (out.empty()) fail("output directory is empty");
}

ExperimentSpec default_spec(Command command) {
  ExperimentSpec s;
  s.command = command;
  switch (command) {
    case Command::sweep_k:
      s.families = {Family::krawtchouk, Family::chebyshev};
      s.k_values = {2, 3, 5, 10, 15, 19};
      break;
    case Command::sweep_h:
      s.families = {Family::krawtchouk, Family::chebyshev};
      s.k_values = {10};
      s.h_values = {16, 32, 64};
      break;
    default:
      break;
  }
  return s;
}

std::string sbm_to_json(const data::SbmConfig& config) { return sbm_json(config).dump(2); }

data::SbmConfig sbm_from_json(const std::string& text) {
  try {
    return sbm_from(json::parse(text));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("SBM config: ") + e.what());
  }
}

std::string spec_to_json(const ExperimentSpec& s) {
  json sources = json::array();
  for (const DataSource& src : s.sources) {
    if (src.dataset) sources.push_back({{"dataset", src.dataset->string()}});
    else sources.push_back({{"sbm", sbm_json(*src.sbm)}});
  }
  json families = json::array();
  for (Family f : s.families) families.push_back(poly::to_string(f));
  json j{{"format", "kraw-config-v1"},
         {"command", to_string(s.command)},
         {"sources", sources},
         {"families", families},
         {"k", s.k_values},
         {"h", s.h_values},
         {"n", s.N},
         {"dropout", s.dropout},
         {"epochs", s.epochs ? json(*s.epochs) : json(nullptr)},
         {"lr", s.lr},
         {"wd", s.weight_decay},
         {"seed", s.seed},
         {"seeds", s.seeds},
         {"folds", s.folds},
         {"row_normalize", s.row_normalize},
         {"threads", s.threads},
         {"p", s.p_values},
         {"view", view_name(s.view)},
         {"grid_points", s.grid_points},
         {"out", s.out.string()}};
  return j.dump(2) + "\n";
}

ExperimentSpec spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != "kraw-config-v1")
      throw std::invalid_argument("not a kraw config echo (format != kraw-config-v1)");
    ExperimentSpec s = default_spec(parse_command(j.at("command").get<std::string>()));
    for (const json& src : j.value("sources", json::array())) {
      DataSource d;
      if (src.contains("dataset")) d.dataset = src.at("dataset").get<std::string>();
      if (src.contains("sbm")) d.sbm = sbm_from(src.at("sbm"));
      s.sources.push_back(std::move(d));
    }
    if (j.contains("families")) {
      s.families.clear();
      for (const json& f : j.at("families")) s.families.push_back(poly::parse_family(f.get<std::string>()));
    }
    s.k_values = j.value("k", s.k_values);
    s.h_values = j.value("h", s.h_values);
    s.N = j.value("n", s.N);
    s.dropout = j.value("dropout", s.dropout);
    if (j.contains("epochs") && !j.at("epochs").is_null()) s.epochs = j.at("epochs").get<int>();
    s.lr = j.value("lr", s.lr);
    s.weight_decay = j.value("wd", s.weight_decay);
    s.seed = j.value("seed", s.seed);
    s.seeds = j.value("seeds", s.seeds);
    s.folds = j.value("folds", s.folds);
    s.row_normalize = j.value("row_normalize", s.row_normalize);
    s.threads = j.value("threads", s.threads);
    s.p_values = j.value("p", s.p_values);
    if (j.contains("view")) s.view = parse_view(j.at("view").get<std::string>());
    s.grid_points = j.value("grid_points", s.grid_points);
    if (j.contains("out")) s.out = j.at("out").get<std::string>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config echo: ") + e.what());
  }
}

std::vector<CellResult> run_cells(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<LoadedSource> loaded;
  for (const DataSource& src : spec.sources) loaded.push_back(load_source(src, spec));

  std::vector<CellResult> results;
  for (std::size_t si = 0; si < loaded.size(); ++si) {
    for (Family f : spec.families) {
      for (int K : spec.k_values) {
        for (std::size_t H : spec.h_values) {
          for (int r = 0; r < spec.seeds; ++r) {
            const auto& ds = *loaded[si].per_repeat[static_cast<std::size_t>(r)];
            const std::size_t nf = fold_count(spec, ds);
            for (std::size_t fold = 0; fold < nf; ++fold) {
              CellResult res;
              res.cell = {si, f, K, H, r, fold,
                          spec.seed + static_cast<std::uint64_t>(r) * nf + fold};
              res.dataset = ds.name;
              res.split_protocol = ds.split_protocol;
              res.edge_homophily = loaded[si].homophily[static_cast<std::size_t>(r)];
              res.epochs = epochs_for(spec, res.edge_homophily);
              results.push_back(std::move(res));
            }
          }
        }
      }
    }
  }

  std::vector<std::exception_ptr> errors(results.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < results.size(); i = next++) {
      CellResult& res = results[i];
      try {
        const data::Dataset& ds =
            *loaded[res.cell.source].per_repeat[static_cast<std::size_t>(res.cell.repeat)];
        nn::ModelConfig mc;
        mc.family = res.cell.family;
        mc.in_features = ds.num_features();
        mc.hidden = res.cell.H;
        mc.num_classes = static_cast<std::size_t>(ds.num_classes);
        mc.K = res.cell.K;
        mc.N = spec.N;
        mc.dropout = spec.dropout;
        nn::Model model = nn::make_model(mc, res.cell.seed);
        train::TrainConfig tc;
        tc.lr = spec.lr;
        tc.weight_decay = spec.weight_decay;
        tc.epochs = res.epochs;
        tc.seed = res.cell.seed;
        try {
          res.record = train::train(model, ds, ds.splits[res.cell.fold], tc);
          res.model = std::move(model);
        } catch (const train::TrainingDiverged& e) {
          res.finite = false;
          res.error = e.what();
          res.record.final_test_acc = kNaN;
          res.record.best_val_acc = kNaN;
          res.record.best_val_test_acc = kNaN;
          res.record.final_shape_p = model.shape_p();
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n_threads =
      std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(results.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return results;
}

std::vector<GroupSummary> summarize(const std::vector<CellResult>& results) {
  using Key = std::tuple<std::size_t, int, int, std::size_t>;
  std::map<Key, std::size_t> index;
  std::vector<GroupSummary> groups;
  std::vector<std::vector<const CellResult*>> members;
  for (const CellResult& r : results) {
    const Key key{r.cell.source, static_cast<int>(r.cell.family), r.cell.K, r.cell.H};
    auto it = index.find(key);
    if (it == index.end()) {
      GroupSummary g;
      g.source = r.cell.source;
      g.dataset = r.dataset;
      g.edge_homophily = r.edge_homophily;
      g.family = r.cell.family;
      g.K = r.cell.K;
      g.H = r.cell.H;
      groups.push_back(g);
      members.emplace_back();
      it = index.emplace(key, groups.size() - 1).first;
    }
    members[it->second].push_back(&r);
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    GroupSummary& g = groups[gi];
    std::vector<double> fin, best, p1, p2;
    for (const CellResult* r : members[gi]) {
      ++g.runs;
      if (!r->finite) {
        ++g.diverged;
        continue;
      }
      fin.push_back(r->record.final_test_acc);
      best.push_back(r->record.best_val_test_acc);
      if (r->record.final_shape_p.size() == 2) {
        p1.push_back(r->record.final_shape_p[0]);
        p2.push_back(r->record.final_shape_p[1]);
      }
    }
    auto ms = [](const std::vector<double>& v) {
      return v.empty() ? std::make_pair(kNaN, kNaN) : train::mean_std(v);
    };
    std::tie(g.mean_final_test, g.std_final_test) = ms(fin);
    std::tie(g.mean_best_val_test, g.std_best_val_test) = ms(best);
    std::tie(g.mean_p_conv1, g.std_p_conv1) = ms(p1);
    g.mean_p_conv2 = ms(p2).first;
  }
  return groups;
}

std::string runs_csv(const std::vector<CellResult>& results) {
  std::ostringstream out;
  out << "dataset,edge_homophily,family,K,H,repeat,fold,seed,epochs,status,final_test_acc,"
         "best_val_acc,best_val_epoch,best_val_test_acc,p_conv1,p_conv2\n";
  for (const CellResult& r : results) {
    const auto& p = r.record.final_shape_p;
    out << r.dataset << ',' << num(r.edge_homophily) << ',' << poly::to_string(r.cell.family)
        << ',' << r.cell.K << ',' << r.cell.H << ',' << r.cell.repeat << ',' << r.cell.fold << ','
        << r.cell.seed << ',' << r.epochs << ',' << (r.finite ? "ok" : "diverged") << ','
        << num(r.record.final_test_acc) << ',' << num(r.record.best_val_acc) << ','
        << r.record.best_val_epoch << ',' << num(r.record.best_val_test_acc) << ','
        << (p.size() > 0 ? num(p[0]) : "") << ',' << (p.size() > 1 ? num(p[1]) : "") << '\n';
  }
  return out.str();
}

std::string sweep_csv(const std::vector<GroupSummary>& groups) {
  std::ostringstream out;
  out << "dataset,family,K,H,runs,diverged,mean_final_test_acc,std_final_test_acc,"
         "mean_best_val_test_acc,std_best_val_test_acc,mean_p_conv1\n";
  for (const GroupSummary& g : groups) {
    out << g.dataset << ',' << poly::to_string(g.family) << ',' << g.K << ',' << g.H << ','
        << g.runs << ',' << g.diverged << ',' << num(g.mean_final_test) << ','
        << num(g.std_final_test) << ',' << num(g.mean_best_val_test) << ','
        << num(g.std_best_val_test) << ',' << num(g.mean_p_conv1) << '\n';
  }
  return out.str();
}

std::string report_p_csv(const std::vector<GroupSummary>& groups) {
  std::ostringstream out;
  out << "dataset,edge_homophily,K,H,runs,mean_p_conv1,std_p_conv1,mean_p_conv2,"
         "mean_final_test_acc\n";
  for (const GroupSummary& g : groups) {
    out << g.dataset << ',' << num(g.edge_homophily) << ',' << g.K << ',' << g.H << ','
        << g.runs << ',' << num(g.mean_p_conv1) << ',' << num(g.std_p_conv1) << ','
        << num(g.mean_p_conv2) << ',' << num(g.mean_final_test) << '\n';
  }
  return out.str();
}

std::string response_csv(const ExperimentSpec& spec) {
  const auto lambdas = lambda_grid(spec.grid_points);
  const int K = spec.k_values.front();
  const double scale = spec.view == poly::ResponseDomain::raw ? 1.0 : spec.N;
  std::ostringstream out;
  out << "view,p,degree,lambda,x,value\n";
  for (double p : spec.p_values) {
    for (int d = 0; d < K; ++d) {
      const auto values = degree_response(spec, p, d, lambdas);
      for (std::size_t i = 0; i < lambdas.size(); ++i) {
        out << view_name(spec.view) << ',' << num(p) << ',' << d << ',' << num(lambdas[i]) << ','
            << num(scale * lambdas[i]) << ',' << num(values[i]) << '\n';
      }
    }
  }
  return out.str();
}

std::vector<fs::path> run(const ExperimentSpec& spec) {
  spec.validate();
  fs::create_directories(spec.out);
  std::vector<fs::path> written;
  write(written, spec.out / "config.json", spec_to_json(spec));

  switch (spec.command) {
    case Command::gen_sbm: {
      const data::Dataset ds = data::generate_sbm(*spec.sources.front().sbm);
      data::save_dataset(ds, spec.out);
      for (const char* f : {"meta.json", "edges.csv", "features.csv", "labels.csv", "splits.json"})
        written.push_back(spec.out / f);
      return written;
    }
    case Command::response_plot: {
      write(written, spec.out / "response.csv", response_csv(spec));
      const auto lambdas = lambda_grid(spec.grid_points);
      const int K = spec.k_values.front();
      for (double p : spec.p_values) {
        std::vector<svg::Series> series;
        for (int d = 0; d < K; ++d)
          series.push_back({"P_" + std::to_string(d), lambdas, degree_response(spec, p, d, lambdas)});
        svg::PlotOptions opt;
        opt.title = "Krawtchouk basis response, p=" + num(p) + ", N=" + std::to_string(spec.N) +
                    " (" + view_name(spec.view) + " view)";
        opt.x_label = spec.view == poly::ResponseDomain::raw ? "lambda (x = lambda)"
                                                             : "lambda (x = N * lambda)";
        opt.y_label = "P_k(x)";
        opt.markers = false;
        write(written, spec.out / ("response_p" + num(p) + ".svg"), svg::line_plot(series, opt));
      }
      return written;
    }
    default:
      break;
  }

  const std::vector<CellResult> results = run_cells(spec);
  const std::vector<GroupSummary> groups = summarize(results);
  write(written, spec.out / "runs.csv", runs_csv(results));
  switch (spec.command) {
    case Command::train: {
      for (std::size_t i = 0; i < results.size(); ++i) {
        const std::string tag = std::to_string(i);
        write(written, spec.out / ("curve_" + tag + ".csv"), results[i].record.to_csv());
        if (results[i].model) {
          nn::save_checkpoint(*results[i].model, spec.out / ("model_" + tag + ".json"));
          written.push_back(spec.out / ("model_" + tag + ".json"));
        }
      }
      if (!results.empty() && results.front().finite)
        write(written, spec.out / "curves.svg", curves_svg(results.front().record));
      const json summary{{"config", json::parse(spec_to_json(spec))},
                         {"groups", groups_json(groups)},
                         {"runs", runs_json(results)}};
      write(written, spec.out / "summary.json", summary.dump(2) + "\n");
      break;
    }
    case Command::sweep_k:
      write(written, spec.out / "sweep_k.csv", sweep_csv(groups));
      write(written, spec.out / "sweep_k.svg", sweep_svg(groups, true));
      break;
    case Command::sweep_h:
      write(written, spec.out / "sweep_h.csv", sweep_csv(groups));
      write(written, spec.out / "sweep_h.svg", sweep_svg(groups, false));
      break;
    case Command::report_p:
      write(written, spec.out / "report_p.csv", report_p_csv(groups));
      break;
    default:
      break;
  }
  return written;
}

std::vector<fs::path> replay(const fs::path& echo, const std::optional<fs::path>& out) {
  std::ifstream in(echo, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + echo.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentSpec spec = spec_from_json(buf.str());
  if (out) spec.out = *out;
  return run(spec);
}

}  // namespace kraw::experiment
