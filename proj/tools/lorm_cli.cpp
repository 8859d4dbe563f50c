#include "lorm/lorm.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace lorm;

namespace {

struct Context {
  RunConfig cfg;
  fs::path out;

  std::string path(const std::string& p) const { return resolve_path(out, p); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (!f) throw Error("write failed: " + path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  return f;
}

void log_epoch(const char* phase, const EpochRecord& e) {
  std::cerr << phase << " epoch " << e.epoch << " train_loss " << format_fixed(e.train_loss, 6) << " val_loss "
            << format_fixed(e.val_loss, 6) << '\n';
}

MultiChannelSeries read_series(const Context& ctx, const std::string& p) {
  return read_signal_csv(ctx.path(p), ctx.cfg.synth.sample_rate_hz);
}

int cmd_synth(const Context& ctx) {
  const SynthRun run = generate_run(ctx.cfg.synth);
  write_signal_csv(ctx.path(ctx.cfg.paths.signal_csv), run.series);
  auto wear = open_out(ctx.path(ctx.cfg.paths.wear_csv));
  write_wear_csv(wear, run.wear_table(ctx.cfg.windowing));
  std::cerr << "synth: " << run.series.length() << " samples x " << run.series.channels() << " channels, "
            << run.wear_um.size() << " cuts\n";
  return 0;
}

int cmd_fit_codebooks(const Context& ctx) {
  const auto data = prepare_training_data(read_series(ctx, ctx.cfg.paths.signal_csv), ctx.cfg);
  const auto codebooks = fit_pipeline_codebooks(data, ctx.cfg);
  save_codebooks(ctx.path(ctx.cfg.paths.codebooks), codebooks);
  std::cerr << "fit-codebooks: " << codebooks.channels() << " channels, K=" << codebooks.K() << ", "
            << data.train.size() << " windows, hash " << codebook_hash(codebooks) << '\n';
  return 0;
}

int cmd_pretrain(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto codebooks = load_codebooks(ctx.path(cfg.paths.codebooks));
  const auto main = prepare_training_data(read_series(ctx, cfg.paths.signal_csv), cfg);
  check_codebooks_match(codebooks, cfg, main.channel_names.size());

  const TrainingData corpus =
      cfg.paths.pretrain_csv.empty() ? main
                                     : align_corpus(prepare_training_data(read_series(ctx, cfg.paths.pretrain_csv), cfg), main);
  const auto result = pretrain_model(corpus, codebooks, cfg, [](const EpochRecord& e) { log_epoch("pretrain", e); });
  save_checkpoint(ctx.path(cfg.paths.pretrain_checkpoint), make_checkpoint(result.best, main, cfg, codebooks));
  auto rep = open_out(ctx.path("pretrain_report.csv"));
  write_train_report_csv(rep, result.report);
  std::cerr << "pretrain: best epoch " << result.report.best_epoch << " val_loss "
            << format_fixed(result.report.best_val_objective, 6) << '\n';
  return 0;
}

int cmd_train(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto codebooks = load_codebooks(ctx.path(cfg.paths.codebooks));
  const auto data = prepare_training_data(read_series(ctx, cfg.paths.signal_csv), cfg);
  check_codebooks_match(codebooks, cfg, data.channel_names.size());
  const BackboneConfig backbone = cfg.resolved_backbone(data.channel_names.size());

  ModelParameters init = init_model(backbone, cfg.seed);
  const std::string pre = ctx.path(cfg.paths.pretrain_checkpoint);
  if (!pre.empty() && fs::exists(pre)) {
    Checkpoint ck = load_checkpoint(pre);
    if (!(ck.params.config == backbone))
      throw ConfigError("pretrain checkpoint backbone differs from the configured backbone");
    verify_codebooks(ck, codebooks);
    init = std::move(ck.params);
    std::cerr << "train: starting from " << pre << '\n';
  }

  const std::uint64_t frozen_before = frozen_block_hash(init);
  const auto result = finetune_model(data, codebooks, std::move(init), cfg, [](const EpochRecord& e) { log_epoch("train", e); });
  save_checkpoint(ctx.path(cfg.paths.checkpoint), make_checkpoint(result.best, data, cfg, codebooks));
  auto rep = open_out(ctx.path("train_report.csv"));
  write_train_report_csv(rep, result.report);
  std::cerr << "train: best epoch " << result.report.best_epoch << " val_loss "
            << format_fixed(result.report.best_val_objective, 6) << ", frozen block " << hex64(frozen_before) << '\n';
  return 0;
}

int cmd_monitor(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.paths.checkpoint.empty()) throw ConfigError("paths.checkpoint is required for monitor");
  Checkpoint ck = load_checkpoint(ctx.path(cfg.paths.checkpoint));
  const WindowingConfig windowing{ck.windowing.window_len, ck.windowing.context_len, cfg.windowing.stride};
  if (cfg.windowing.window_len != ck.windowing.window_len || cfg.windowing.context_len != ck.windowing.context_len)
    throw ConfigError("windowing.window_len/context_len differ from the checkpoint");
  const std::size_t C = ck.params.config.C;
  WindowScorer scorer(std::move(ck), load_codebooks(ctx.path(cfg.paths.codebooks)));

  MonitorConfig mc = cfg.monitor;
  if (!cfg.paths.calibration.empty()) {
    std::ifstream in(ctx.path(cfg.paths.calibration));
    if (!in) throw Error("cannot open calibration file " + ctx.path(cfg.paths.calibration));
    mc.threshold = nlohmann::json::parse(in).at("tau").get<double>();
  }

  std::unique_ptr<ByteSource> source;
  StreamFormat format;
  if (!cfg.paths.stream.empty()) {
    const auto [host, port] = parse_endpoint(cfg.paths.stream);
    source = std::make_unique<SocketByteSource>(host, port);
    format = StreamFormat{false, C};
  } else {
    source = std::make_unique<FileByteSource>(ctx.path(cfg.paths.signal_csv));
  }
  WindowStream stream(std::move(source), windowing, format);
  HealthTracker tracker(mc);
  const auto records = run_monitor(stream, scorer, tracker, cfg.monitor_threaded, [&](const HealthRecord& r) {
    if (r.alarm) std::cout << alarm_line(r, mc.threshold) << '\n';
  });

  std::function<std::optional<int>(std::size_t)> cut_of;
  std::optional<WearTable> wear;
  const std::string wear_path = ctx.path(cfg.paths.wear_csv);
  if (cfg.paths.stream.empty() && !wear_path.empty() && fs::exists(wear_path)) {
    wear = load_wear_csv(wear_path);
    cut_of = [&](std::size_t k) -> std::optional<int> {
      const auto pos = wear->position_of_window(k);
      return pos ? std::optional<int>(wear->cuts[*pos].cut_id) : std::nullopt;
    };
  }
  auto out = open_out(ctx.path(cfg.paths.hi_csv));
  write_hi_csv(out, records, cut_of, cfg.hi_ma_window);
  std::size_t alarms = 0;
  for (const auto& r : records) alarms += r.alarm ? 1 : 0;
  std::cerr << "monitor: " << records.size() << " windows, " << alarms << " alarms, tau " << format_double(mc.threshold)
            << '\n';
  return 0;
}

std::vector<HiRow> read_hi(const Context& ctx) {
  std::ifstream in(ctx.path(ctx.cfg.paths.hi_csv), std::ios::binary);
  if (!in) throw Error("cannot open " + ctx.path(ctx.cfg.paths.hi_csv));
  return read_hi_csv(in);
}

int cmd_calibrate(const Context& ctx) {
  const auto rows = read_hi(ctx);
  const auto wear = load_wear_csv(ctx.path(ctx.cfg.paths.wear_csv));
  const auto cal = calibrate_threshold(hi_by_cut(rows, wear), wear, ctx.cfg.eval.wear_limit_um);
  const nlohmann::json j = {{"tau", cal.tau},
                            {"cut_id", cal.cut_id},
                            {"wear_um", cal.wear_um},
                            {"windows", cal.windows},
                            {"wear_limit_um", ctx.cfg.eval.wear_limit_um}};
  write_text(ctx.path("calibration.json"), j.dump(2) + "\n");
  std::cout << "tau=" << format_double(cal.tau) << " cut=" << cal.cut_id << " wear_um=" << format_double(cal.wear_um)
            << '\n';
  return 0;
}

int cmd_eval(const Context& ctx) {
  const auto rows = read_hi(ctx);
  const auto wear = load_wear_csv(ctx.path(ctx.cfg.paths.wear_csv));
  const auto report = evaluate_stream(rows, wear, ctx.cfg.eval.wear_limit_um);
  write_text(ctx.path("metrics.json"), to_json(report).dump(2) + "\n");
  const std::string table = metrics_table(report);
  write_text(ctx.path("metrics.txt"), table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised condition monitoring with a token-predicting transformer"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "Override a config value: section.key=value")->take_all();
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", out_dir, "Output directory");

  using Handler = int (*)(const Context&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"synth", "Generate a synthetic run (signal.csv, wear.csv)", cmd_synth},
      {"fit-codebooks", "Fit per-channel target codebooks", cmd_fit_codebooks},
      {"pretrain", "Train every parameter on the pretraining corpus", cmd_pretrain},
      {"train", "Fine-tune with the frozen attention and feed-forward block", cmd_train},
      {"monitor", "Stream windows through the model and write hi.csv", cmd_monitor},
      {"calibrate", "Derive the alarm threshold from a dev run", cmd_calibrate},
      {"eval", "Classification metrics and detection deviation", cmd_eval},
  };
  Handler chosen = nullptr;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, fn = fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Context ctx{load_run_config(config_path, overrides, seed), fs::path(out_dir)};
    fs::create_directories(ctx.out);
    return chosen(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "lorm: config error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "lorm: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lorm: error: " << e.what() << '\n';
    return 1;
  }
}
