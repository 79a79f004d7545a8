// flowanom command line: thin orchestration over the C API.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "flowanom/flowanom.h"

namespace {

struct CliFailure {
  std::string code;
  std::string message;
  int exit_code;
};

[[noreturn]] void raise(fa_status st) {
  throw CliFailure{fa_status_name(st), fa_last_error(), static_cast<int>(st)};
}

void check(fa_status st) {
  if (st != FA_OK) raise(st);
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Records = std::unique_ptr<fa_records, Deleter<fa_records, fa_records_free>>;
using Routes = std::unique_ptr<fa_routes, Deleter<fa_routes, fa_routes_free>>;
using Network = std::unique_ptr<fa_network, Deleter<fa_network, fa_network_free>>;
using ModelH = std::unique_ptr<fa_model, Deleter<fa_model, fa_model_free>>;
using Scored = std::unique_ptr<fa_scored, Deleter<fa_scored, fa_scored_free>>;
using Reports = std::unique_ptr<fa_reports, Deleter<fa_reports, fa_reports_free>>;

Records load_records(const std::string& path) {
  fa_records* r = nullptr;
  check(fa_records_read(path.c_str(), &r));
  Records h(r);
  for (size_t i = 0; i < fa_records_rejected_count(r); ++i) {
    size_t line = 0;
    const char* reason = nullptr;
    fa_records_rejected_at(r, i, &line, &reason);
    std::cerr << "reject line=" << line << " reason=" << reason << '\n';
  }
  std::cerr << "records accepted=" << fa_records_count(r)
            << " rejected=" << fa_records_rejected_count(r) << '\n';
  return h;
}

Network load_network(const std::string& routes_path, double eps_d) {
  fa_routes* routes = nullptr;
  check(fa_routes_read(routes_path.c_str(), &routes));
  Routes rh(routes);
  fa_network* net = nullptr;
  check(fa_network_build(routes, eps_d, &net));
  return Network(net);
}

fa_model_kind parse_kind(const std::string& name) {
  static const std::map<std::string, fa_model_kind> kinds{{"baseline1", FA_MODEL_BASELINE1},
                                                          {"baseline2", FA_MODEL_BASELINE2},
                                                          {"edge", FA_MODEL_EDGE},
                                                          {"smoothed", FA_MODEL_SMOOTHED}};
  auto it = kinds.find(name);
  if (it == kinds.end()) {
    throw CliFailure{"InvalidArgument", "unknown model kind '" + name + "'", FA_ERR_INVALID_ARGUMENT};
  }
  return it->second;
}

void add_train_options(CLI::App* sub, fa_train_config& cfg, bool& no_refresh) {
  sub->add_option("--eta", cfg.eta, "learning rate")->capture_default_str();
  sub->add_option("--tau", cfg.tau, "log-barrier strength")->capture_default_str();
  sub->add_option("--psi", cfg.psi, "smoothing strength")->capture_default_str();
  sub->add_option("--epochs", cfg.epochs, "SGD epochs")->capture_default_str();
  sub->add_option("--c-min", cfg.c_min, "speed floor (m/s)")->capture_default_str();
  sub->add_option("--shuffle-seed", cfg.shuffle_seed, "SGD permutation seed")->capture_default_str();
  sub->add_option("--sigma2-floor", cfg.sigma2_floor, "variance floor inside the gradient")
      ->capture_default_str();
  sub->add_flag("--no-variance-refresh", no_refresh, "keep the initial variance for all epochs");
}

bool truthy(std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  return v == "1" || v == "true" || v == "yes" || v == "on";
}

// Flat key=value file; a key fills the matching --key option of the chosen
// subcommand unless that option already appears on the command line.
std::vector<std::string> merge_config(CLI::App& app, const std::vector<std::string>& args) {
  std::string cfg_path;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      cfg_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      cfg_path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (cfg_path.empty()) return out;

  std::ifstream in(cfg_path);
  if (!in) throw CliFailure{"UnreadableInput", "cannot read config " + cfg_path, FA_ERR_UNREADABLE_INPUT};
  CLI::App* sub = nullptr;
  std::size_t sub_pos = 0;
  for (std::size_t i = 0; i < out.size() && !sub; ++i) {
    for (auto* s : app.get_subcommands({})) {
      if (s->get_name() == out[i]) {
        sub = s;
        sub_pos = i;
        break;
      }
    }
  }
  if (!sub) return out;

  std::vector<std::string> injected;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CliFailure{"ParseError", cfg_path + ":" + std::to_string(lineno) + ": expected key=value",
                       FA_ERR_PARSE};
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt) continue;  // belongs to another subcommand
    const bool given = std::any_of(out.begin() + static_cast<std::ptrdiff_t>(sub_pos), out.end(),
                                   [&](const std::string& a) {
                                     return a == flag || a.rfind(flag + "=", 0) == 0;
                                   });
    if (given) continue;
    if (opt->get_expected_min() == 0) {
      if (truthy(value)) injected.push_back(flag);
    } else {
      injected.push_back(flag);
      injected.push_back(value);
    }
  }
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, injected.begin(),
             injected.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowanom: flow anomaly detection from origin/destination records"};
  app.require_subcommand(1);
  app.add_option("--config", "flat key=value file; command-line flags win");
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic, "force sequential execution (the default)");
  double eps_d = 1.0;
  app.add_option("--eps-d", eps_d, "distance tolerance in metres")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate synthetic records and a truth sidecar");
  fa_synth_config syn;
  fa_synth_config_init(&syn);
  std::string sim_out, sim_truth, sim_routes, congest_from, congest_to;
  bool congest = false;
  sim->add_option("--out", sim_out, "record file")->required();
  sim->add_option("--truth", sim_truth, "truth sidecar file")->required();
  sim->add_option("--routes-out", sim_routes, "also write the generated routes");
  sim->add_option("--services", syn.n_services)->capture_default_str();
  sim->add_option("--stops", syn.stops_per_service)->capture_default_str();
  sim->add_option("--corridor", syn.shared_corridor, "stops shared by every service")
      ->capture_default_str();
  sim->add_option("--segment-min", syn.segment_min_m)->capture_default_str();
  sim->add_option("--segment-max", syn.segment_max_m)->capture_default_str();
  sim->add_option("--speed-min", syn.speed_min_mps)->capture_default_str();
  sim->add_option("--speed-max", syn.speed_max_mps)->capture_default_str();
  sim->add_option("--records", syn.n_records)->capture_default_str();
  sim->add_option("--noise-sigma2", syn.noise_sigma2)->capture_default_str();
  sim->add_option("--max-speed", syn.max_physical_speed)->capture_default_str();
  sim->add_option("--day-start", syn.day_start, "epoch seconds")->capture_default_str();
  sim->add_option("--day-length", syn.day_length_s, "seconds")->capture_default_str();
  sim->add_option("--resolution", syn.time_resolution_s, "timestamp rounding, seconds")
      ->capture_default_str();
  sim->add_flag("--congest", congest, "plant a congested segment");
  sim->add_option("--congest-from", congest_from);
  sim->add_option("--congest-to", congest_to);
  sim->add_option("--window-start", syn.window_start, "epoch seconds")->capture_default_str();
  sim->add_option("--window-end", syn.window_end, "epoch seconds")->capture_default_str();
  sim->add_option("--slowdown", syn.slowdown)->capture_default_str();
  sim->add_option("--seed", syn.seed)->capture_default_str();

  // infer-routes
  auto* infer = app.add_subcommand("infer-routes", "reconstruct service routes from records");
  std::string inf_records, inf_out, inf_rejects;
  infer->add_option("--records", inf_records)->required();
  infer->add_option("--out", inf_out, "route file")->required();
  infer->add_option("--rejects", inf_rejects, "rejection report");

  // train
  auto* train = app.add_subcommand("train", "fit a transmission model");
  fa_train_config tcfg;
  fa_train_config_init(&tcfg);
  bool no_refresh = false;
  std::string tr_records, tr_routes, tr_out, tr_log, tr_kind = "edge";
  train->add_option("--records", tr_records)->required();
  train->add_option("--routes", tr_routes)->required();
  train->add_option("--out", tr_out, "model file")->required();
  train->add_option("--model", tr_kind, "baseline1|baseline2|edge|smoothed")->capture_default_str();
  train->add_option("--epoch-log", tr_log, "per-epoch SSE (default stdout)");
  add_train_options(train, tcfg, no_refresh);

  // crossval
  auto* cv = app.add_subcommand("crossval", "K-fold cross validation");
  fa_train_config ccfg;
  fa_train_config_init(&ccfg);
  bool cv_no_refresh = false;
  std::string cv_records, cv_routes, cv_out, cv_kinds = "baseline1,baseline2,edge,smoothed";
  int cv_k = 5;
  std::uint64_t cv_seed = 1;
  cv->add_option("--records", cv_records)->required();
  cv->add_option("--routes", cv_routes)->required();
  cv->add_option("--out", cv_out, "results file")->required();
  cv->add_option("--folds", cv_k)->capture_default_str();
  cv->add_option("--models", cv_kinds, "comma separated model kinds")->capture_default_str();
  cv->add_option("--fold-seed", cv_seed)->capture_default_str();
  add_train_options(cv, ccfg, cv_no_refresh);

  // detect
  auto* det = app.add_subcommand("detect", "score records and flag significant deviations");
  fa_detect_config dcfg;
  fa_detect_config_init(&dcfg);
  std::string det_model, det_records, det_routes, det_out;
  double det_delta = 0.0;
  det->add_option("--model", det_model)->required();
  det->add_option("--records", det_records)->required();
  det->add_option("--routes", det_routes)->required();
  det->add_option("--out", det_out, "scored record file")->required();
  det->add_option("--quantile", dcfg.delta_quantile, "fraction of records kept")
      ->capture_default_str();
  auto* delta_opt = det->add_option("--delta", det_delta, "absolute cutoff; overrides --quantile");

  // localize
  auto* loc = app.add_subcommand("localize", "rank anomalies and localize congested segments");
  std::string loc_scored, loc_routes, loc_out, loc_daily;
  loc->add_option("--scored", loc_scored)->required();
  loc->add_option("--routes", loc_routes)->required();
  loc->add_option("--out", loc_out, "ranked report file")->required();
  loc->add_option("--daily", loc_daily, "daily series file");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(app, args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      throw CliFailure{"InvalidArgument", e.what(), FA_ERR_INVALID_ARGUMENT};
    }

    if (*sim) {
      std::string cf = congest_from, ct = congest_to;
      syn.congestion = congest ? 1 : 0;
      syn.congested_from = cf.empty() ? nullptr : cf.c_str();
      syn.congested_to = ct.empty() ? nullptr : ct.c_str();
      check(fa_simulate(&syn, sim_out.c_str(), sim_truth.c_str(),
                        sim_routes.empty() ? nullptr : sim_routes.c_str()));
      std::cerr << "simulated records=" << syn.n_records << '\n';
    } else if (*infer) {
      auto records = load_records(inf_records);
      fa_routes* routes = nullptr;
      check(fa_routes_infer(records.get(), eps_d, &routes));
      Routes rh(routes);
      check(fa_routes_write(routes, inf_out.c_str(),
                            inf_rejects.empty() ? nullptr : inf_rejects.c_str()));
      std::cerr << "routes accepted=" << fa_routes_accepted_count(routes)
                << " rejected=" << fa_routes_rejected_count(routes) << '\n';
    } else if (*train) {
      tcfg.variance_refresh = no_refresh ? 0 : 1;
      const fa_model_kind kind = parse_kind(tr_kind);
      auto records = load_records(tr_records);
      auto net = load_network(tr_routes, eps_d);
      std::ofstream log_file;
      std::ostream* log = &std::cout;
      if (!tr_log.empty()) {
        log_file.open(tr_log);
        if (!log_file) {
          throw CliFailure{"UnreadableInput", "cannot write " + tr_log, FA_ERR_UNREADABLE_INPUT};
        }
        log = &log_file;
      }
      *log << "epoch,sse,sigma2\n";
      auto on_epoch = [](int epoch, double sse, double sigma2, void* user) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", epoch, sse, sigma2);
        *static_cast<std::ostream*>(user) << buf;
      };
      fa_model* model = nullptr;
      size_t skipped = 0;
      check(fa_model_train(net.get(), records.get(), kind, &tcfg, eps_d, on_epoch, log, &model,
                           &skipped));
      ModelH mh(model);
      check(fa_model_save(model, tr_out.c_str()));
      std::cerr << "trained model=" << tr_kind << " skipped=" << skipped
                << " sigma2=" << fa_model_sigma2(model) << '\n';
    } else if (*cv) {
      ccfg.variance_refresh = cv_no_refresh ? 0 : 1;
      std::vector<fa_model_kind> kinds;
      std::stringstream ss(cv_kinds);
      for (std::string k; std::getline(ss, k, ',');) kinds.push_back(parse_kind(k));
      auto records = load_records(cv_records);
      auto net = load_network(cv_routes, eps_d);
      check(fa_crossval(net.get(), records.get(), cv_k, kinds.data(), kinds.size(), &ccfg, cv_seed,
                        eps_d, cv_out.c_str()));
    } else if (*det) {
      if (delta_opt->count() > 0) {
        dcfg.use_override = 1;
        dcfg.delta_override = det_delta;
      }
      fa_model* model = nullptr;
      check(fa_model_load(det_model.c_str(), &model));
      ModelH mh(model);
      auto records = load_records(det_records);
      auto net = load_network(det_routes, eps_d);
      fa_scored* scored = nullptr;
      size_t skipped = 0;
      check(fa_detect(model, net.get(), records.get(), &dcfg, eps_d, &scored, &skipped));
      Scored sh(scored);
      check(fa_scored_write(scored, det_out.c_str()));
      std::cerr << "scored=" << fa_scored_total(scored)
                << " significant=" << fa_scored_significant(scored)
                << " delta=" << fa_scored_delta(scored) << " skipped=" << skipped << '\n';
    } else if (*loc) {
      auto net = load_network(loc_routes, eps_d);
      fa_scored* scored = nullptr;
      check(fa_scored_read(loc_scored.c_str(), net.get(), &scored));
      Scored sh(scored);
      fa_reports* reports = nullptr;
      check(fa_localize(scored, &reports));
      Reports rh(reports);
      check(fa_reports_write(reports, loc_out.c_str(), loc_daily.empty() ? nullptr : loc_daily.c_str()));
      std::cerr << "reports=" << fa_reports_count(reports) << '\n';
    }
    return 0;
  } catch (const CliFailure& f) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), '"', '\'');
    std::cerr << "error code=" << f.code << " message=\"" << msg << "\"\n";
    return f.exit_code == 0 ? 1 : f.exit_code;
  }
}
