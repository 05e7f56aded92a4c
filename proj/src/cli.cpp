#include "penex/cli.hpp"

#include <cmath>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "penex/errors.hpp"
#include "penex/io.hpp"
#include "penex/verification.hpp"

namespace penex::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) { return io::format_double(v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

/// NaN and infinities are not valid JSON numbers; they become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_json(const MetricsReport& m) {
  return {{"acc", jnum(m.acc)},
          {"ece", jnum(m.ece)},
          {"ce", jnum(m.ce)},
          {"brier", jnum(m.brier)},
          {"mean_margin", jnum(m.mean_margin)},
          {"margin_quantiles",
           {{"p05", jnum(m.margin_quantiles.p05)},
            {"p25", jnum(m.margin_quantiles.p25)},
            {"p50", jnum(m.margin_quantiles.p50)},
            {"p75", jnum(m.margin_quantiles.p75)},
            {"p95", jnum(m.margin_quantiles.p95)}}},
          {"n", m.n},
          {"ce_saturated", m.ce_saturated}};
}

std::string metrics_row(const MetricsReport& m) {
  return num(m.acc) + "," + num(m.ece) + "," + num(m.ce) + "," + num(m.brier) + "," +
         num(m.mean_margin);
}

std::string histogram_csv(const Histogram& h) {
  std::string s = "bin,lo,hi,count\n";
  const std::size_t bins = h.counts.size();
  for (std::size_t b = 0; b < bins; ++b) {
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    s += std::to_string(b) + "," + num(h.lo + width * static_cast<double>(b)) + "," +
         num(b + 1 == bins ? h.hi : h.lo + width * static_cast<double>(b + 1)) + "," +
         std::to_string(h.counts[b]) + "\n";
  }
  return s;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

bool is_conex(LossKind k) {
  return k == LossKind::kConexSqPenalty || k == LossKind::kConexAugLagrangian ||
         k == LossKind::kConexHard;
}

/// Runs independent jobs on the OpenMP pool. Results are collected per index
/// and any exception is rethrown after the join, lowest index first.
template <typename Result, typename Fn>
std::vector<Result> run_pool(std::size_t count, Fn&& job) {
  std::vector<std::optional<Result>> results(count);
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      results[static_cast<std::size_t>(i)].emplace(job(static_cast<std::size_t>(i)));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  std::vector<Result> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

struct TrainedRun {
  RunReport report;
  std::vector<std::string> warnings;
};

TrainedRun train_with(const ExperimentConfig& config, const TrainConfig& tc) {
  TrainedRun run;
  run.report = run_experiment(config, tc);
  return run;
}

}  // namespace

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c = o.config ? load_experiment(*o.config) : ExperimentConfig{};
  apply_env_overrides(c);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.loss) c.train.loss.kind = loss_kind_from_string(*o.loss);
  if (o.alpha) {
    c.train.loss.alpha = *o.alpha;
    c.sweep = {*o.alpha};
  }
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.rounds) c.rounds = *o.rounds;
  c.validate();
  return c;
}

RunReport run_experiment(const ExperimentConfig& config, const TrainConfig& train_config) {
  auto [tr, va] = make_split(config);
  TrainConfig tc = train_config;
  tc.model.input_dim = tr.d;
  tc.model.num_classes = tr.num_classes;
  return train(tc, tr, va);
}

std::string metrics_csv(const RunReport& report) {
  std::string s = "epoch,split,acc,ece,ce,brier,mean_margin,rho\n";
  for (const auto& e : report.epochs) {
    const std::string rho = opt_num(e.rho);
    s += std::to_string(e.epoch) + ",train," + metrics_row(e.train) + "," + rho + "\n";
    s += std::to_string(e.epoch) + ",val," + metrics_row(e.val) + "," + rho + "\n";
  }
  return s;
}

namespace {

std::string steps_csv(const RunReport& report) {
  std::string s = "step,epoch,loss,rho,grad_norm,diverged\n";
  for (const auto& st : report.steps)
    s += std::to_string(st.step) + "," + std::to_string(st.epoch) + "," + num(st.loss) + "," +
         opt_num(st.rho) + "," + num(st.grad_norm) + "," + (st.diverged ? "1" : "0") + "\n";
  return s;
}

json summary_json(const RunReport& r, const ExperimentConfig& config,
                  const std::vector<std::string>& warnings) {
  ExperimentConfig echo = config;
  echo.train = r.config;
  json rho = json::array(), abs_logit = json::array(), row_sum = json::array();
  for (const auto& e : r.epochs) {
    rho.push_back(e.rho ? jnum(*e.rho) : json(nullptr));
    abs_logit.push_back(jnum(e.mean_abs_logit));
    row_sum.push_back(jnum(e.max_abs_row_sum));
  }
  json j = {{"name", config.name},
            {"config", to_json(echo)},
            {"train_seed", r.config.seed},
            {"epochs_recorded", r.epochs.size()},
            {"steps", r.steps.size()},
            {"diverged", r.diverged},
            {"divergence_epoch", r.divergence_epoch ? json(*r.divergence_epoch) : json(nullptr)},
            {"rho_trajectory", rho},
            {"mean_abs_logit", abs_logit},
            {"max_abs_row_sum", row_sum},
            {"warnings", warnings},
            {"wall_clock_seconds", r.wall_clock_seconds}};
  if (!r.epochs.empty()) {
    j["final_train"] = metrics_json(r.epochs.back().train);
    j["final_val"] = metrics_json(r.epochs.back().val);
  }
  return j;
}

}  // namespace

void write_run(const RunReport& report, const ExperimentConfig& config,
               const std::vector<std::string>& warnings, const fs::path& dir) {
  ensure_dir(dir);
  io::write_text_file(dir / "metrics.csv", metrics_csv(report));
  io::write_text_file(dir / "steps.csv", steps_csv(report));
  io::write_text_file(dir / "margins.csv", histogram_csv(report.margin_histogram));
  io::write_text_file(dir / "summary.json", dump(summary_json(report, config, warnings)));
  save_model(dir / "model.json", report.config, report.final_params);
}

void save_model(const fs::path& path, const TrainConfig& config, const Parameters& params) {
  json layers = json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const Tensor& w = params.weights[l];
    layers.push_back({{"out", w.rows()},
                      {"in", w.cols()},
                      {"weights", std::vector<double>(w.data().begin(), w.data().end())},
                      {"bias", std::vector<double>(params.biases[l].data().begin(),
                                                   params.biases[l].data().end())}});
  }
  const json j = {{"loss", to_json(config.loss)},
                  {"model", to_json(config.effective_model())},
                  {"layers", layers}};
  io::write_text_file(path, dump(j));
}

Parameters load_model(const fs::path& path, TrainConfig& config) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
    config.loss = loss_spec_from_json(j.at("loss"));
    config.model = model_spec_from_json(j.at("model"));
    Parameters p;
    for (const auto& layer : j.at("layers")) {
      const auto out = layer.at("out").get<std::size_t>(), in = layer.at("in").get<std::size_t>();
      auto w = layer.at("weights").get<std::vector<double>>();
      auto b = layer.at("bias").get<std::vector<double>>();
      if (w.size() != out * in || b.size() != out)
        throw DimensionError("layer sizes do not match their shape");
      p.weights.push_back(Tensor::matrix(out, in, std::move(w)));
      p.biases.push_back(Tensor::vector(std::move(b)));
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  std::vector<std::string> warnings;
  auto [tr, va] = make_split(config, &warnings);
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  tc.model.input_dim = tr.d;
  tc.model.num_classes = tr.num_classes;
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  const RunReport report = train(tc, tr, va);
  write_run(report, config, warnings, config.output_dir);
  const auto& last = report.epochs.back();
  out << "train: " << to_string(tc.loss.kind) << " epochs=" << last.epoch
      << " val_acc=" << num(last.val.acc) << " val_mean_margin=" << num(last.val.mean_margin)
      << (report.diverged ? " DIVERGED" : "") << " -> " << config.output_dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& config, const fs::path& model_path, std::ostream& out,
             std::ostream&) {
  TrainConfig tc;
  const Parameters params = load_model(model_path, tc);
  auto [tr, va] = make_split(config);
  if (tr.d != tc.model.input_dim)
    throw DimensionError("model expects " + std::to_string(tc.model.input_dim) +
                         " features, data has " + std::to_string(tr.d));
  const MetricsReport mt = evaluate(tc, params, tr), mv = evaluate(tc, params, va);
  std::string csv = "split,acc,ece,ce,brier,mean_margin\n";
  csv += "train," + metrics_row(mt) + "\n" + "val," + metrics_row(mv) + "\n";
  ensure_dir(config.output_dir);
  io::write_text_file(config.output_dir / "eval.csv", csv);
  out << dump({{"model", model_path.string()},
               {"train", metrics_json(mt)},
               {"val", metrics_json(mv)}});
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& config, std::ostream& out, std::ostream&) {
  if (config.sweep.empty()) throw ParameterError("sweep: no alpha values");
  const auto runs = run_pool<TrainedRun>(config.sweep.size(), [&](std::size_t i) {
    TrainConfig tc = config.train;
    tc.loss.alpha = config.sweep[i];
    tc.seed = config.seed + i;
    return train_with(config, tc);
  });

  std::string merged = "alpha,epoch,split,acc,ece,ce,brier,mean_margin,rho\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string alpha = num(config.sweep[i]);
    write_run(runs[i].report, config, runs[i].warnings, config.output_dir / ("alpha_" + alpha));
    std::istringstream rows(metrics_csv(runs[i].report));
    std::string line;
    std::getline(rows, line);  // header
    while (std::getline(rows, line)) merged += alpha + "," + line + "\n";
    out << "sweep: alpha=" << alpha << " val_acc=" << num(runs[i].report.epochs.back().val.acc)
        << (runs[i].report.diverged ? " DIVERGED" : "") << "\n";
  }
  ensure_dir(config.output_dir);
  io::write_text_file(config.output_dir / "sweep.csv", merged);
  return kExitOk;
}

int cmd_ablate(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  if (config.ablations.empty()) throw ParameterError("ablate: no loss kinds listed");
  const auto runs = run_pool<TrainedRun>(config.ablations.size(), [&](std::size_t i) {
    TrainConfig tc = config.train;
    tc.loss.kind = config.ablations[i];
    tc.loss.rho.reset();
    if (is_conex(tc.loss.kind)) {
      const int k = make_dataset(config).num_classes;
      tc.loss.alpha = 1.0 / static_cast<double>(k - 1);
    }
    tc.seed = config.seed;
    return train_with(config, tc);
  });

  std::string table =
      "loss,epoch,split,acc,ece,ce,brier,mean_margin,rho,mean_abs_logit,max_abs_row_sum\n";
  std::string summary =
      "loss,final_val_acc,diverged,divergence_epoch,final_mean_abs_logit,zero_sum_ok\n";
  std::optional<double> penex_acc, sq_acc;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunReport& r = runs[i].report;
    const std::string name(to_string(config.ablations[i]));
    write_run(r, config, runs[i].warnings, config.output_dir / name);
    bool zero_sum = true;
    for (const auto& e : r.epochs) {
      const std::string extra = opt_num(e.rho) + "," + num(e.mean_abs_logit) + "," +
                                num(e.max_abs_row_sum) + "\n";
      table += name + "," + std::to_string(e.epoch) + ",train," + metrics_row(e.train) + "," + extra;
      table += name + "," + std::to_string(e.epoch) + ",val," + metrics_row(e.val) + "," + extra;
      zero_sum = zero_sum && e.max_abs_row_sum <= 1e-9 * std::max(1.0, e.mean_abs_logit);
    }
    const auto& last = r.epochs.back();
    const bool hard = config.ablations[i] == LossKind::kConexHard;
    summary += name + "," + num(last.val.acc) + "," + (r.diverged ? "1" : "0") + "," +
               (r.divergence_epoch ? std::to_string(*r.divergence_epoch) : "") + "," +
               num(last.mean_abs_logit) + "," + (hard ? (zero_sum ? "1" : "0") : "") + "\n";
    if (hard && !zero_sum) err << "warning: conex_hard outputs left the zero-sum subspace\n";
    if (config.ablations[i] == LossKind::kPenex) penex_acc = last.val.acc;
    if (config.ablations[i] == LossKind::kConexSqPenalty) sq_acc = last.val.acc;
    out << "ablate: " << name << " val_acc=" << num(last.val.acc)
        << " mean_abs_logit=" << num(last.mean_abs_logit) << (r.diverged ? " DIVERGED" : "")
        << "\n";
  }
  // Display only: error-type columns are negated so larger is better throughout.
  out << "loss,val_acc,neg_val_ece,neg_val_ce,neg_val_brier\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const MetricsReport& v = runs[i].report.epochs.back().val;
    out << to_string(config.ablations[i]) << "," << num(v.acc) << "," << num(-v.ece) << ","
        << num(-v.ce) << "," << num(-v.brier) << "\n";
  }
  if (penex_acc && sq_acc)
    err << "note: penex val acc " << num(*penex_acc)
        << (*penex_acc >= *sq_acc ? " >= " : " < ") << "conex_sq_penalty val acc "
        << num(*sq_acc) << "\n";
  ensure_dir(config.output_dir);
  io::write_text_file(config.output_dir / "ablation.csv", table);
  io::write_text_file(config.output_dir / "ablation_summary.csv", summary);
  return kExitOk;
}

int cmd_boost(const ExperimentConfig& config, std::ostream& out, std::ostream&) {
  auto [tr, va] = make_split(config);
  const BoostReport rep = samme_train(tr, config.rounds, config.seed);
  std::string csv = "round,epsilon,eta,train_acc,mean_margin\n";
  for (const auto& r : rep.rounds)
    csv += std::to_string(r.round) + "," + num(r.epsilon) + "," + num(r.eta) + "," +
           num(r.train_acc) + "," + num(r.mean_margin) + "\n";
  ensure_dir(config.output_dir);
  io::write_text_file(config.output_dir / "boost_rounds.csv", csv);

  const std::vector<double> margins = ensemble_margins(rep.ensemble, va);
  io::write_text_file(config.output_dir / "margins.csv", histogram_csv(histogram(margins, 50)));
  const double train_acc = ensemble_accuracy(rep.ensemble, tr);
  const double val_acc = ensemble_accuracy(rep.ensemble, va);
  const std::vector<double> uniform(tr.n, 1.0 / static_cast<double>(tr.n));
  const double stump_acc = 1.0 - fit_stump(tr, uniform).weighted_error;
  const json summary = {{"name", config.name},
                        {"config", to_json(config)},
                        {"rounds_run", rep.rounds.size()},
                        {"stopped_early", rep.stopped_early},
                        {"stop_reason", rep.stop_reason},
                        {"train_acc", train_acc},
                        {"val_acc", val_acc},
                        {"single_stump_train_acc", stump_acc}};
  io::write_text_file(config.output_dir / "summary.json", dump(summary));
  out << "boost: rounds=" << rep.rounds.size() << " train_acc=" << num(train_acc)
      << " val_acc=" << num(val_acc) << " single_stump=" << num(stump_acc) << "\n";
  return kExitOk;
}

int verify_exit_code(const std::vector<CheckOutcome>& checks) {
  for (const auto& c : checks)
    if (c.hard && !c.passed) return kExitVerifyFailed;
  return kExitOk;
}

int cmd_verify(const ExperimentConfig& config, bool write_report, std::ostream& out,
               std::ostream& err) {
  SuiteOptions opts;
  opts.seed = config.seed;
  opts.on_check = [&](const CheckOutcome& c) {
    err << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << num(c.seconds) << " s) " << c.detail
        << "\n";
  };
  const auto checks = run_verification_suite(opts);
  const int code = verify_exit_code(checks);
  json list = json::array();
  for (const auto& c : checks) {
    list.push_back({{"name", c.name},
                    {"passed", c.passed},
                    {"hard", c.hard},
                    {"detail", c.detail},
                    {"seconds", c.seconds}});
  }
  const json verdict = {{"passed", code == kExitOk}, {"seed", config.seed}, {"checks", list}};
  out << dump(verdict);
  if (write_report) {
    ensure_dir(config.output_dir);
    io::write_text_file(config.output_dir / "verify.json", dump(verdict));
  }
  return code;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PENEX workbench: penalized exponential loss experiments", "penex"};
  app.require_subcommand(1);
  Overrides o;
  std::string config, outdir, loss, model;
  std::uint64_t seed = 0;
  double alpha = 0;
  int epochs = 0, rounds = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON experiment file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--out", outdir, "output directory");
    cmd->add_option("--loss", loss, "loss kind (penex, ce, ex, ...)");
    cmd->add_option("--alpha", alpha, "exponential-loss scale");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--rounds", rounds, "boosting rounds");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "train one model and write its reports");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on the experiment data");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train once per alpha value");
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "compare PENEX with the CONEX variants and EX");
  CLI::App* boost_cmd = app.add_subcommand("boost", "multiclass AdaBoost with decision stumps");
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the numerical oracle suite");
  for (CLI::App* cmd : {train_cmd, eval_cmd, sweep_cmd, ablate_cmd, boost_cmd, verify_cmd})
    add_common(cmd);
  eval_cmd->add_option("--model", model, "model.json to evaluate (default <out>/model.json)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  if (cmd->count("--config")) o.config = config;
  if (cmd->count("--seed")) o.seed = seed;
  if (cmd->count("--out")) o.out = outdir;
  if (cmd->count("--loss")) o.loss = loss;
  if (cmd->count("--alpha")) o.alpha = alpha;
  if (cmd->count("--epochs")) o.epochs = epochs;
  if (cmd->count("--rounds")) o.rounds = rounds;

  try {
    const ExperimentConfig c = resolve_config(o);
    if (cmd == train_cmd) return cmd_train(c, out, err);
    if (cmd == eval_cmd)
      return cmd_eval(c, model.empty() ? c.output_dir / "model.json" : fs::path(model), out, err);
    if (cmd == sweep_cmd) return cmd_sweep(c, out, err);
    if (cmd == ablate_cmd) return cmd_ablate(c, out, err);
    if (cmd == boost_cmd) return cmd_boost(c, out, err);
    return cmd_verify(c, o.out.has_value(), out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace penex::cli
