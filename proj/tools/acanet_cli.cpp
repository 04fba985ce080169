// acanet: generate data, pretrain the simulator, train, evaluate, ablate and
// export graphs. Exit codes: 0 ok, 2 config error, 3 missing or unreadable
// artifact, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <acanet/acanet.hpp>

namespace fs = std::filesystem;
using namespace aca;

namespace {

enum Exit { kOk = 0, kConfig = 2, kArtifact = 3, kNumeric = 4 };

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string data;
  std::string out;
  long long minutes = -1;
  std::string split;
  long long epochs = -1;
  long long seeds = -1;
  std::size_t sample = 0;
};

RunConfig load_config(const Options& o) {
  RunConfig rc = o.config.empty() ? default_run_config() : load_run_config(o.config);
  if (o.minutes >= 0) rc.minutes = static_cast<std::size_t>(o.minutes);
  if (!o.split.empty()) {
    std::vector<double> f;
    std::stringstream ss(o.split);
    std::string part;
    while (std::getline(ss, part, ',')) {
      try {
        f.push_back(std::stod(part));
      } catch (const std::exception&) {
        throw ConfigError("--split must be three comma-separated numbers");
      }
    }
    if (f.size() != 3) throw ConfigError("--split must be three comma-separated numbers");
    rc.split = {f[0], f[1], f[2]};
  }
  if (o.epochs >= 0) rc.train.epochs = static_cast<std::size_t>(o.epochs);
  if (o.seeds > 0) rc.ablation_seeds = static_cast<std::size_t>(o.seeds);
  if (!o.data.empty()) rc.data_dir = o.data;
  if (!o.out.empty()) rc.out_dir = o.out;
  rc.validate();
  return rc;
}

std::string split_path(const RunConfig& rc, const char* name) {
  return (fs::path(rc.data_dir) / (std::string(name) + ".jsonl")).string();
}

std::string sim_path(const RunConfig& rc) { return (fs::path(rc.out_dir) / "sim.ckpt").string(); }
std::string model_path(const RunConfig& rc) { return (fs::path(rc.out_dir) / "model.ckpt").string(); }

Dataset require_dataset(const RunConfig& rc, const char* name) {
  const auto path = split_path(rc, name);
  if (!fs::exists(path)) throw MissingArtifact("missing dataset " + path + " (run gen first)");
  return load_dataset(path);
}

Checkpoint require_checkpoint(const std::string& path, const std::string& what, const std::string& hint) {
  if (!fs::exists(path)) throw MissingArtifact("missing " + what + " " + path + " (run " + hint + " first)");
  return load_checkpoint(path);
}

struct Splits {
  Dataset train, val, test;
};

Splits require_splits(const RunConfig& rc) {
  return {require_dataset(rc, "train"), require_dataset(rc, "val"), require_dataset(rc, "test")};
}

SimParams load_sim(const Checkpoint& c, const DatasetHeader& h) {
  const auto cfg = parse_run_config(c.config);
  Initializer init(0);
  auto sim = SimParams::make(init, h.f_aoi, h.n_f, cfg.pretrain.hidden);
  restore_sim(c, sim);
  set_trainable(sim, false);
  return sim;
}

void ensure_out(const RunConfig& rc) { fs::create_directories(rc.out_dir); }

std::ofstream open_csv(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw MissingArtifact("cannot write " + path.string());
  os << std::setprecision(17);
  return os;
}

int cmd_gen(const Options& o) {
  auto rc = load_config(o);
  auto splits = make_dataset(rc.world, static_cast<std::int64_t>(rc.minutes), rc.split);
  fs::create_directories(rc.data_dir);
  save_dataset(split_path(rc, "train"), splits.train);
  save_dataset(split_path(rc, "val"), splits.val);
  save_dataset(split_path(rc, "test"), splits.test);
  const auto total = splits.train.size() + splits.val.size() + splits.test.size();
  std::cout << "labeled minutes " << total << " of " << splits.candidate_minutes << "\n"
            << "train " << splits.train.size() << "\nval " << splits.val.size() << "\ntest "
            << splits.test.size() << "\n";
  return kOk;
}

int cmd_pretrain(const Options& o) {
  auto rc = load_config(o);
  auto s = require_splits(rc);
  auto d = prepare_training_data(s.train, s.val, s.test, rc.model);
  auto r = pretrain_simulator(d.ctx.node_features, simulator_examples(d.train), simulator_examples(d.val),
                              d.header.n_f, rc.pretrain);
  ensure_out(rc);
  Checkpoint c;
  store_sim(c, r.params);
  c.config = to_json(rc).dump();
  save_checkpoint(sim_path(rc), c);
  auto csv = open_csv(fs::path(rc.out_dir) / "sim_curve.csv");
  csv << "epoch,train_mae,val_mae,best_val_mae\n";
  for (const auto& e : r.curve) csv << e.epoch << ',' << e.train_mae << ',' << e.val_mae << ',' << e.best_val_mae << '\n';
  const double test_mae = sim_mae(r.params, d.ctx.node_features, simulator_examples(d.test));
  std::cout << "simulator val MAE " << r.curve.back().best_val_mae << " s, test MAE " << test_mae << " s\n"
            << "wrote " << sim_path(rc) << "\n";
  return kOk;
}

int cmd_train(const Options& o) {
  auto rc = load_config(o);
  auto sim_ckpt = require_checkpoint(sim_path(rc), "simulator checkpoint", "pretrain-sim");
  auto s = require_splits(rc);
  auto d = prepare_training_data(s.train, s.val, s.test, rc.model);
  auto sim = load_sim(sim_ckpt, d.header);
  auto r = train(rc.train, rc.model, d, sim, [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " loss " << e.train_loss << " L_P " << e.train_pressure_loss
              << " L_graph " << e.train_graph_loss << " val MAE " << e.val_mae << "\n";
  });
  ensure_out(rc);
  Checkpoint c;
  store_model(c, r.params);
  store_sim(c, r.sim);
  store_stats(c, d.stats);
  c.config = to_json(rc).dump();
  save_checkpoint(model_path(rc), c);

  auto curves = open_csv(fs::path(rc.out_dir) / "curves.csv");
  curves << "epoch,train_loss,train_pressure_loss,train_graph_loss,val_mae,best_val_mae\n";
  for (const auto& e : r.curve)
    curves << e.epoch << ',' << e.train_loss << ',' << e.train_pressure_loss << ',' << e.train_graph_loss << ','
           << e.val_mae << ',' << e.best_val_mae << '\n';
  auto steps = open_csv(fs::path(rc.out_dir) / "steps.csv");
  steps << "step,total,pressure_loss,graph_loss,lambda\n";
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& st = r.steps[i];
    steps << i << ',' << st.total << ',' << st.pressure_loss << ',' << st.graph_loss << ',' << st.lambda << '\n';
  }
  // Final graph loss of the returned checkpoint for every test sample.
  auto gl = graph_losses(r.params, r.sim, d, d.test, rc.train.mask, rc.model);
  auto per = open_csv(fs::path(rc.out_dir) / "graph_loss.csv");
  per << "sample,minute,graph_loss\n";
  for (std::size_t i = 0; i < gl.size(); ++i) per << i << ',' << d.test[i].minute << ',' << gl[i] << '\n';
  std::cout << "best epoch " << r.best_epoch << " val MAE " << (r.curve.empty() ? 0.0 : r.curve.back().best_val_mae)
            << "\nwrote " << model_path(rc) << "\n";
  return kOk;
}

struct Loaded {
  RunConfig rc;
  TrainingData d;
  AcaNetParams params;
  SimParams sim;
};

Loaded load_trained(const Options& o) {
  auto rc = load_config(o);
  auto c = require_checkpoint(model_path(rc), "model checkpoint", "train");
  const auto saved = parse_run_config(c.config);
  auto s = require_splits(rc);
  Loaded l{rc, prepare_training_data(s.train, s.val, s.test, saved.model, restore_stats(c)), {}, {}};
  l.rc.model = saved.model;
  l.rc.train.mask = saved.train.mask;
  l.params = AcaNetParams::make(saved.model, l.d.header.f_aoi, l.d.header.n_f, 0);
  restore_model(c, l.params);
  set_trainable(l.params, false);
  l.sim = load_sim(c, l.d.header);
  return l;
}

int cmd_eval(const Options& o) {
  auto l = load_trained(o);
  auto m = evaluate(l.params, l.sim, l.d, l.d.test, l.rc.train.mask, l.rc.model, l.rc.train.batch_size, 20,
                    &l.d.raw_test);
  if (!std::isfinite(m.mae)) throw NumericError("non-finite test MAE");
  ensure_out(l.rc);
  auto csv = open_csv(fs::path(l.rc.out_dir) / "metrics.csv");
  csv << "model,mae,rmse,mape,runtime_per_batch_s,input_bytes\n"
      << "ACA-Net," << m.mae << ',' << m.rmse << ',' << m.mape << ',' << m.runtime_per_batch << ','
      << m.input_bytes << '\n';
  std::cout << std::fixed << std::setprecision(4) << std::left << std::setw(10) << "model" << std::right
            << std::setw(12) << "MAE(s)" << std::setw(12) << "RMSE(s)" << std::setw(10) << "MAPE" << std::setw(14)
            << "run time(s)" << std::setw(14) << "input bytes" << "\n"
            << std::left << std::setw(10) << "ACA-Net" << std::right << std::setw(12) << m.mae << std::setw(12)
            << m.rmse << std::setw(10) << m.mape << std::setw(14) << m.runtime_per_batch << std::setw(14)
            << m.input_bytes << "\n";
  return kOk;
}

int cmd_ablate(const Options& o) {
  auto rc = load_config(o);
  auto sim_ckpt = require_checkpoint(sim_path(rc), "simulator checkpoint", "pretrain-sim");
  auto s = require_splits(rc);
  auto d = prepare_training_data(s.train, s.val, s.test, rc.model);
  auto sim = load_sim(sim_ckpt, d.header);
  auto runs = ablate(rc.train, rc.model, d, sim, ablation_rows(), rc.model_seeds(),
                     [](const AblationMask& m, std::uint64_t seed, const MetricsReport& r) {
                       std::cerr << m.label() << " seed " << seed << " MAE " << r.mae << "\n";
                     });
  ensure_out(rc);
  auto csv = open_csv(fs::path(rc.out_dir) / "ablation.csv");
  csv << "ongoing,global,cross_attention,adaptive_learning,median_mae,median_rmse,median_mape\n";
  std::cout << std::fixed << std::setprecision(2) << std::left << std::setw(24) << "variant" << std::right
            << std::setw(10) << "MAE(s)" << std::setw(10) << "RMSE(s)" << std::setw(8) << "MAPE" << "\n";
  for (const auto& r : runs) {
    const auto& m = r.mask;
    csv << m.use_ongoing << ',' << m.use_global << ',' << m.use_cross_attention << ',' << m.use_adaptive_learning
        << ',' << r.median.mae << ',' << r.median.rmse << ',' << r.median.mape << '\n';
    std::cout << std::left << std::setw(24) << m.label() << std::right << std::setw(10) << r.median.mae
              << std::setw(10) << r.median.rmse << std::setw(8) << std::setprecision(4) << r.median.mape
              << std::setprecision(2) << "\n";
  }
  return kOk;
}

void write_matrix(const fs::path& path, const Tensor& t) {
  auto os = open_csv(path);
  const auto n = t.shape()[0], m = t.shape()[1];
  for (std::size_t j = 0; j < m; ++j) os << (j ? "," : "") << 'c' << j;
  os << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) os << (j ? "," : "") << t.at(i, j);
    os << '\n';
  }
}

int cmd_export(const Options& o) {
  auto l = load_trained(o);
  if (o.sample >= l.d.test.size())
    throw ConfigError("--sample " + std::to_string(o.sample) + " is out of range (test split has " +
                      std::to_string(l.d.test.size()) + " samples)");
  const auto& s = l.d.test[o.sample];
  auto e_global = encode_global(l.params, l.d.ctx, l.rc.train.mask);
  auto r = forward(l.params, l.sim, l.d.ctx, e_global, s, l.rc.train.mask, l.rc.model);
  ensure_out(l.rc);
  const auto tag = std::to_string(o.sample);
  write_matrix(fs::path(l.rc.out_dir) / ("a_future_" + tag + ".csv"), r.adjacency);
  write_matrix(fs::path(l.rc.out_dir) / ("a_truth_" + tag + ".csv"), s.truth);
  auto rows = open_csv(fs::path(l.rc.out_dir) / ("a_truth_rows_" + tag + ".csv"));
  rows << "row,supervised\n";
  for (std::size_t i = 0; i < s.truth_rows.size(); ++i) rows << i << ',' << (s.truth_rows[i] ? 1 : 0) << '\n';
  std::cout << std::setprecision(17) << "sample " << o.sample << " minute " << s.minute << " graph_loss "
            << r.graph_loss.item() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACA-Net demand-supply pressure forecaster"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "run config (JSON)")->check(CLI::ExistingFile);
    c->add_option("--data", o.data, "dataset directory (overrides paths.data_dir)");
    c->add_option("--out", o.out, "output directory (overrides paths.out_dir)");
  };
  auto* gen = app.add_subcommand("gen", "generate the synthetic train/val/test datasets");
  gen->add_option("--config", o.config, "run config (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--out", o.data, "dataset directory");
  gen->add_option("--minutes", o.minutes, "simulated minutes");
  gen->add_option("--split", o.split, "train,val,test fractions");
  auto* pre = app.add_subcommand("pretrain-sim", "pretrain the pressure simulator");
  common(pre);
  auto* tr = app.add_subcommand("train", "train ACA-Net against the frozen simulator");
  common(tr);
  tr->add_option("--epochs", o.epochs, "override train.epochs");
  auto* ev = app.add_subcommand("eval", "evaluate the trained model on the test split");
  common(ev);
  auto* ab = app.add_subcommand("ablate", "run the six-row ablation");
  common(ab);
  ab->add_option("--epochs", o.epochs, "override train.epochs");
  ab->add_option("--seeds", o.seeds, "number of model seeds");
  auto* ex = app.add_subcommand("export-graph", "write A_future and normalised A_truth for one test sample");
  common(ex);
  ex->add_option("--sample", o.sample, "test sample index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*pre) return cmd_pretrain(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*ab) return cmd_ablate(o);
    if (*ex) return cmd_export(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kArtifact;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kArtifact;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kArtifact;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kConfig;
}
