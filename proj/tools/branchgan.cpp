// Command-line entry points. Exit codes: 0 success, 2 configuration error,
// 3 runtime failure.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "branchgan/checkpoint.hpp"
#include "branchgan/config.hpp"
#include "branchgan/data_io.hpp"
#include "branchgan/edit.hpp"
#include "branchgan/rng.hpp"
#include "branchgan/service.hpp"
#include "branchgan/spectral.hpp"
#include "branchgan/trainer.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace branchgan;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitDiverged = 4;

std::vector<std::string> g_argv;

json read_json(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Every command records what it ran with next to its outputs.
void write_manifest(const fs::path& out, const std::string& command, json config) {
  fs::create_directories(out);
  write_json(out / "manifest.json", {{"command", command}, {"argv", g_argv}, {"config", std::move(config)}});
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("'" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_doubles(s)) {
    if (v != std::floor(v)) throw ConfigError("expected integers, got " + s);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

BranchedLatent latent_from_file(const fs::path& path) { return read_json(path).get<BranchedLatent>(); }

/// --latent FILE or --seed N (all sub-vectors ~ U(-1,1)).
BranchedLatent resolve_latent(const Generator& g, const std::string& file, std::optional<std::uint64_t> seed) {
  if (!file.empty()) {
    auto z = latent_from_file(file);
    if (!z.matches(g.config().layout())) throw ConfigError(file + ": latent does not match the model");
    return z;
  }
  const auto layout = g.config().layout();
  return sample_latent(layout, SamplePolicy::all_uniform(layout.branches()), seed.value_or(0));
}

// ---------------------------------------------------------------------------
// Run-config flags shared by train and suppress

struct ConfigFlags {
  std::string profile = "desk";
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string steps;
  std::optional<double> epochs;
  std::optional<double> lr;
  std::optional<int> batch;
  std::string channels;
  std::string data_dir;
  std::optional<int> synthetic_count;
  std::optional<double> stage1_fraction;
  std::string ramp;

  void add(CLI::App* app) {
    app->add_option("--profile", profile, "paper256 | paper512 | paper400x300 | desk")->capture_default_str();
    app->add_option("--config", config_file, "JSON overrides applied on top of the profile");
    app->add_option("--seed", seed, "Run seed");
    app->add_option("--steps", steps, "Steps per stage, comma separated");
    app->add_option("--epochs", epochs, "Epochs per stage (used when no step counts are set)");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--batch", batch, "Batch size");
    app->add_option("--channels", channels, "Channel schedule, comma separated");
    app->add_option("--data-dir", data_dir, "Directory of PNG/JPEG training images");
    app->add_option("--synthetic-count", synthetic_count, "Synthetic corpus size");
    app->add_option("--stage1-fraction", stage1_fraction, "Fraction of each stage spent in Stage I");
    app->add_option("--ramp", ramp, "linear | cosine");
  }

  [[nodiscard]] RunConfig resolve() const {
    json file = config_file.empty() ? json(nullptr) : read_json(config_file);
    json flags = json::object();
    if (seed) flags["seed"] = *seed;
    if (!steps.empty()) flags["steps_per_stage"] = parse_ints(steps);
    if (epochs) {
      flags["epochs_per_stage"] = *epochs;
      if (steps.empty()) flags["steps_per_stage"] = json::array();
    }
    if (lr) flags["optim"]["learning_rate"] = *lr;
    if (batch) flags["optim"]["batch_size"] = *batch;
    if (!channels.empty()) flags["net"]["channel_schedule"] = parse_ints(channels);
    if (!data_dir.empty()) {
      flags["data"]["directory"] = data_dir;
      flags["data"]["synthetic"] = nullptr;
    }
    if (synthetic_count) flags["data"]["synthetic"]["count"] = *synthetic_count;
    if (stage1_fraction) flags["stage1_fraction"] = *stage1_fraction;
    if (!ramp.empty()) flags["ramp"] = ramp;
    return layered_config(profile, file, flags);
  }
};

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  ConfigFlags cfg;
  std::string out = "runs/train";
  std::string resume;
  bool joint = false;
  std::optional<std::int64_t> max_steps;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = a.cfg.resolve();
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    if (!resume->train_state) throw ConfigError(a.resume + " holds no training state to resume");
    if (resume->metadata.contains("run_config")) rc = resume->metadata.at("run_config").get<RunConfig>();
  }
  const fs::path out = a.out;
  write_manifest(out, a.joint ? "train --joint" : "train", {{"run", rc}, {"resume", a.resume}});

  const Dataset data = load_dataset(resolved_dataset(rc));
  const auto schedule = build_schedule(rc, data.size());
  std::ofstream csv(out / "loss.csv", resume ? std::ios::app : std::ios::trunc);
  if (!resume) csv << loss_csv_header() << "\n";
  std::ofstream events(out / "events.jsonl", resume ? std::ios::app : std::ios::trunc);
  const json meta{{"run_config", rc}};

  TrainHooks hooks;
  hooks.loss_csv = &csv;
  hooks.on_event = [&](const json& e) {
    events << e.dump() << "\n";
    events.flush();
    std::cerr << e.dump() << "\n";
  };
  hooks.on_stage_end = [&](const Checkpoint& ck, int stage) {
    Checkpoint c = ck;
    c.metadata = meta;
    save_checkpoint(out / ("stage" + std::to_string(stage) + ".bgck"), c);
  };

  if (a.joint) {
    std::int64_t total = 0;
    for (const auto& s : schedule) total += s.steps;
    Checkpoint ck = run_joint(rc.net, total, data, rc.optim, rc.seed, hooks);
    ck.metadata = meta;
    ck.metadata["baseline"] = "joint";
    save_checkpoint(out / "final.bgck", ck);
    return 0;
  }

  ProgressiveTrainer trainer = resume ? ProgressiveTrainer(*resume, schedule)
                                      : ProgressiveTrainer(rc.net, schedule, rc.optim, rc.seed);
  const bool done = trainer.run(data, hooks, a.max_steps);
  Checkpoint ck = trainer.checkpoint();
  ck.metadata = meta;
  save_checkpoint(out / (done ? "final.bgck" : "last.bgck"), ck);
  std::cerr << (done ? "training finished" : "stopped after max steps") << " at step " << trainer.state().step << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-encoder

int cmd_train_encoder(const std::string& model, const std::string& out, const EncoderTrainSpec& spec,
                      std::uint64_t seed) {
  Checkpoint ck = load_checkpoint(model);
  const Generator g = generator_from(ck);
  const fs::path out_path = out;
  fs::create_directories(out_path.parent_path().empty() ? fs::path(".") : out_path.parent_path());
  write_manifest(out_path.parent_path() / (out_path.stem().string() + "_encoder_run"), "train-encoder",
                 {{"model", model}, {"spec", spec}, {"seed", seed}});
  const auto r = train_encoder(g, spec, seed);
  ck.encoder = r.encoder.params();
  ck.metadata["encoder"] = {{"spec", spec}, {"seed", seed}};
  save_checkpoint(out_path, ck);
  std::string csv = "step,latent_error\n";
  for (const auto& [step, err] : r.curve) csv += std::to_string(step) + "," + std::to_string(err) + "\n";
  write_text(out_path.parent_path() / (out_path.stem().string() + "_encoder_curve.csv"), csv);
  std::cerr << "latent recovery error " << r.curve.front().second << " -> " << r.curve.back().second << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// vbs

int cmd_vbs(const std::string& model, const std::string& mode, const VbsOptions& opt, const std::string& out) {
  if (mode != "per-subvector" && mode != "per-dimension") {
    throw ConfigError("unknown VBS mode '" + mode + "' (expected per-subvector or per-dimension)");
  }
  const Generator g = generator_from(load_checkpoint(model));
  const auto layout = g.config().layout();
  std::vector<VbsTarget> targets;
  if (mode == "per-subvector") {
    targets = per_subvector_targets(layout);
  } else if (mode == "per-dimension") {
    targets = per_dimension_targets(layout);
  }
  VbsOptions o = opt;
  o.keep_samples = mode == "per-dimension";
  const fs::path dir = out;
  write_manifest(dir, "vbs",
                 {{"model", model}, {"mode", mode}, {"n_constants", o.n_constants}, {"n_samples", o.n_samples},
                  {"seed", o.seed}});
  const auto report = vbs_report(image_model(g), targets, BandSpec::five_band(), o);
  write_json(dir / "report.json", report);
  write_text(dir / "vbs.csv", vbs_csv(report));
  if (o.keep_samples) write_text(dir / "histogram.csv", vbs_histogram_csv(report));

  const int bands = static_cast<int>(report.bands.bands.size());
  if (mode == "per-subvector") {
    std::vector<plot::Series> series;
    for (std::size_t t = 0; t < report.targets.size(); ++t) {
      std::vector<double> v;
      for (int b = 0; b < bands; ++b) v.push_back(report.normalized[t][b].value_or(0.0));
      series.push_back(plot::colored(v, static_cast<int>(t)));
      std::cerr << report.targets[t] << " dominant band " << dominant_scale(report, static_cast<int>(t)) << "\n";
    }
    write_png(dir / "peaks.png", plot::line_chart(series));
  } else {
    for (int b = 0; b < bands; ++b) {
      write_png(dir / ("histogram_band" + std::to_string(b) + ".png"),
                plot::histogram(report.histogram_values(b), 30, 0.0, 3.0));
    }
    std::cerr << "normalized spread " << normalized_spread(report) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep / fuse / edit

int cmd_sweep(const std::string& model, const std::string& latent, std::optional<std::uint64_t> seed, int t,
              const std::string& p, const std::string& out) {
  const Generator g = generator_from(load_checkpoint(model));
  const auto base = resolve_latent(g, latent, seed);
  const auto ps = parse_doubles(p);
  const fs::path dir = out;
  write_manifest(dir, "sweep", {{"model", model}, {"latent", base}, {"t", t}, {"p_values", ps}});
  if (t < 0 || t >= base.branches()) throw ConfigError("sub-vector index out of range");
  const auto zs = constant_sweep(base, t, ps);
  const auto images = generate(g, zs);
  for (std::size_t i = 0; i < images.size(); ++i) write_png(dir / ("sweep_" + std::to_string(i) + ".png"), images[i]);
  const auto var = variance_image(images);
  Image display(var.height, var.width, 1);
  for (std::size_t i = 0; i < var.display.size(); ++i) display.pixels[i] = var.display[i] / 255.0f;
  write_png(dir / "variance.png", display);
  write_json(dir / "latents.json", zs);
  return 0;
}

int cmd_fuse(const std::string& model, const std::string& a_file, std::optional<std::uint64_t> seed_a,
             const std::string& b_file, std::optional<std::uint64_t> seed_b, const std::string& take,
             const std::string& out) {
  const Generator g = generator_from(load_checkpoint(model));
  const auto a = resolve_latent(g, a_file, seed_a);
  const auto b = resolve_latent(g, b_file, seed_b);
  std::set<int> take_set;
  if (!take.empty()) {
    for (int t : parse_ints(take)) take_set.insert(t);
  }
  const fs::path dir = out;
  write_manifest(dir, "fuse", {{"model", model}, {"a", a}, {"b", b}, {"take_from_a", take_set}});
  const auto z = fuse(a, b, take_set);
  write_png(dir / "fused.png", generate(g, z));
  write_json(dir / "latent.json", z);
  return 0;
}

int cmd_edit(const std::string& model, const std::string& case_dir, const std::string& init, std::optional<int> steps,
             std::optional<int> restarts, std::uint64_t seed, const std::string& out) {
  const Checkpoint ck = load_checkpoint(model);
  const Generator g = generator_from(ck);
  std::optional<Encoder> e;
  if (!ck.encoder.empty()) e = encoder_from(ck);
  auto [constraints, config] = load_edit_case(case_dir);
  if (!init.empty()) config.init = edit_init_from_string(init);
  if (steps) config.steps = *steps;
  if (restarts) config.restarts = *restarts;
  const fs::path dir = out;
  write_manifest(dir, "edit", {{"model", model}, {"case", case_dir}, {"config", config}, {"seed", seed}});
  const auto r = optimize_edit(g, e ? &*e : nullptr, constraints, config, seed);
  write_png(dir / "result.png", r.image);
  write_json(dir / "result.json", r);
  std::cerr << "loss " << r.initial_loss << " -> " << r.final_loss << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// suppress

int cmd_suppress(const ConfigFlags& cf, const SuppressionSpec& spec, const std::string& out) {
  const RunConfig rc = cf.resolve();
  const fs::path dir = out;
  write_manifest(dir, "suppress",
                 {{"run", rc},
                  {"kind", to_string(spec.kind)},
                  {"steps_per_phase", spec.steps_per_phase},
                  {"stage", spec.stage},
                  {"n_constants", spec.n_constants},
                  {"n_samples", spec.n_samples}});
  const Dataset data = load_dataset(resolved_dataset(rc));
  TrainHooks hooks;
  hooks.on_event = [](const json& e) { std::cerr << e.dump() << "\n"; };
  const auto report = suppression_experiment(spec, rc.net, data, rc.optim, rc.seed, hooks);
  write_json(dir / "report.json", report);
  for (std::size_t t = 0; t < report.variance_images.size(); ++t) {
    const auto& v = report.variance_images[t];
    Image display(v.height, v.width, 1);
    for (std::size_t i = 0; i < v.display.size(); ++i) display.pixels[i] = v.display[i] / 255.0f;
    write_png(dir / ("variance_branch" + std::to_string(t) + ".png"), display);
  }
  for (std::size_t t = 0; t < report.branch_variance.size(); ++t) {
    std::cerr << "branch " << t << " variance " << report.branch_variance[t] << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// synth-data

int cmd_synth(int n, std::uint64_t seed, int size, const std::string& recipe_file, const std::string& out) {
  SyntheticRecipe recipe = recipe_file.empty() ? SyntheticRecipe{} : read_json(recipe_file).get<SyntheticRecipe>();
  recipe.count = n;
  if (size > 0) recipe.resolution = {size, size};
  recipe.validate();
  const fs::path dir = out;
  write_manifest(dir, "synth-data", {{"recipe", recipe}, {"seed", seed}});
  write_json(dir / "recipe.json", recipe);
  write_image_directory(dir, generate_synthetic(recipe, seed));
  return 0;
}

// ---------------------------------------------------------------------------
// serve

std::atomic<Service*> g_service{nullptr};

int cmd_serve(const std::string& config, const std::vector<std::string>& models, const std::string& host, int port) {
  ServiceConfig sc = config.empty() ? ServiceConfig{} : load_service_config(config);
  for (const auto& m : models) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) {
      sc.models.push_back({fs::path(m).stem().string(), m});
    } else {
      sc.models.push_back({m.substr(0, eq), m.substr(eq + 1)});
    }
  }
  Service service(sc);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_service.load()) s->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (auto* s = g_service.load()) s->stop();
  });
  std::cerr << "serving " << sc.models.size() << " model(s) on " << host << ":" << port << "\n";
  service.listen(host, port);
  g_service = nullptr;
  return 0;
}

// ---------------------------------------------------------------------------
// benchmark

int cmd_benchmark(const std::vector<std::string>& models, int n_color, int n_edge, std::uint64_t data_seed,
                  const std::string& data_dir, const EditConfig& config, std::uint64_t seed, const std::string& out) {
  std::vector<Checkpoint> cks;
  std::vector<std::string> names;
  for (const auto& m : models) {
    const auto eq = m.find('=');
    names.push_back(eq == std::string::npos ? fs::path(m).stem().string() : m.substr(0, eq));
    cks.push_back(load_checkpoint(eq == std::string::npos ? m : m.substr(eq + 1)));
  }
  if (cks.empty()) throw ConfigError("benchmark needs at least one --model");
  std::vector<Generator> gens;
  std::vector<std::optional<Encoder>> encs;
  for (const auto& ck : cks) {
    gens.push_back(generator_from(ck));
    encs.push_back(ck.encoder.empty() ? std::nullopt : std::optional<Encoder>(encoder_from(ck)));
  }
  const Resolution res = gens.front().output_resolution();
  for (const auto& g : gens) {
    if (g.output_resolution() != res) throw ConfigError("benchmark models must share one output resolution");
  }
  DatasetSpec ds;
  if (data_dir.empty()) {
    ds.synthetic = SyntheticRecipe{};
    ds.synthetic->count = n_color + n_edge;
    ds.synthetic->resolution = res;
    ds.synthetic_seed = data_seed;
  } else {
    ds.directory = data_dir;
    ds.max_images = n_color + n_edge;
  }
  ds.target = res;
  ds.pyramid = {res};
  const Dataset data = load_dataset(ds);
  const auto cases = make_benchmark_cases(data.level(0), n_color, n_edge);
  std::vector<BenchmarkModel> bm;
  for (std::size_t i = 0; i < gens.size(); ++i) bm.push_back({names[i], &gens[i], encs[i] ? &*encs[i] : nullptr});
  const fs::path dir = out;
  write_manifest(dir, "benchmark",
                 {{"models", models}, {"n_color", n_color}, {"n_edge", n_edge}, {"data_seed", data_seed},
                  {"data_dir", data_dir}, {"config", config}, {"seed", seed}});
  const auto r = benchmark_manifold(bm, cases, config, seed);
  write_json(dir / "benchmark.json", r);
  for (const auto& [name, loss] : r.mean_loss) std::cerr << name << " mean loss " << loss << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"branchgan: branched progressive GAN toolkit"};
  app.require_subcommand(1);
  std::function<int()> run;

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Progressive (or --joint baseline) training");
  train.cfg.add(c_train);
  c_train->add_option("--out", train.out, "Output directory")->capture_default_str();
  c_train->add_option("--resume", train.resume, "Checkpoint with training state to continue from");
  c_train->add_flag("--joint", train.joint, "Train the non-progressive baseline instead");
  c_train->add_option("--max-steps", train.max_steps, "Stop after this many further steps");
  c_train->callback([&] { run = [&] { return cmd_train(train); }; });

  std::string enc_model, enc_out;
  EncoderTrainSpec enc_spec;
  std::uint64_t enc_seed = 1;
  auto* c_enc = app.add_subcommand("train-encoder", "Train an encoder for a generator checkpoint");
  c_enc->add_option("--model", enc_model, "Generator checkpoint")->required();
  c_enc->add_option("--out", enc_out, "Output checkpoint (generator + encoder)")->required();
  c_enc->add_option("--steps", enc_spec.steps)->capture_default_str();
  c_enc->add_option("--pixel-weight", enc_spec.pixel_weight)->capture_default_str();
  c_enc->add_option("--seed", enc_seed)->capture_default_str();
  c_enc->callback([&] { run = [&] { return cmd_train_encoder(enc_model, enc_out, enc_spec, enc_seed); }; });

  std::string vbs_model, vbs_mode = "per-subvector", vbs_out = "runs/vbs";
  VbsOptions vbs_opt;
  auto* c_vbs = app.add_subcommand("vbs", "Variance-by-scale report");
  c_vbs->add_option("--model", vbs_model)->required();
  c_vbs->add_option("--mode", vbs_mode, "per-subvector | per-dimension")->capture_default_str();
  c_vbs->add_option("--constants", vbs_opt.n_constants)->capture_default_str();
  c_vbs->add_option("--samples", vbs_opt.n_samples)->capture_default_str();
  c_vbs->add_option("--seed", vbs_opt.seed)->capture_default_str();
  c_vbs->add_option("--out", vbs_out)->capture_default_str();
  c_vbs->callback([&] { run = [&] { return cmd_vbs(vbs_model, vbs_mode, vbs_opt, vbs_out); }; });

  std::string sw_model, sw_latent, sw_p = "-1,-0.5,0,0.5,1", sw_out = "runs/sweep";
  std::optional<std::uint64_t> sw_seed;
  int sw_t = 0;
  auto* c_sweep = app.add_subcommand("sweep", "Constant sweep of one sub-vector with a variance image");
  c_sweep->add_option("--model", sw_model)->required();
  c_sweep->add_option("--latent", sw_latent, "Latent JSON file");
  c_sweep->add_option("--seed", sw_seed, "Sample the base latent from this seed");
  c_sweep->add_option("--t", sw_t, "Sub-vector index")->required();
  c_sweep->add_option("--p", sw_p, "Comma-separated constants")->capture_default_str();
  c_sweep->add_option("--out", sw_out)->capture_default_str();
  c_sweep->callback([&] { run = [&] { return cmd_sweep(sw_model, sw_latent, sw_seed, sw_t, sw_p, sw_out); }; });

  std::string fu_model, fu_a, fu_b, fu_take, fu_out = "runs/fuse";
  std::optional<std::uint64_t> fu_seed_a, fu_seed_b;
  auto* c_fuse = app.add_subcommand("fuse", "Cross-scale fusion of two latents");
  c_fuse->add_option("--model", fu_model)->required();
  c_fuse->add_option("--a", fu_a, "Latent JSON file for a");
  c_fuse->add_option("--seed-a", fu_seed_a);
  c_fuse->add_option("--b", fu_b, "Latent JSON file for b");
  c_fuse->add_option("--seed-b", fu_seed_b);
  c_fuse->add_option("--take", fu_take, "Sub-vector indices taken from a, comma separated");
  c_fuse->add_option("--out", fu_out)->capture_default_str();
  c_fuse->callback([&] {
    run = [&] { return cmd_fuse(fu_model, fu_a, fu_seed_a, fu_b, fu_seed_b, fu_take, fu_out); };
  });

  std::string ed_model, ed_case, ed_init, ed_out = "runs/edit";
  std::optional<int> ed_steps, ed_restarts;
  std::uint64_t ed_seed = 0;
  auto* c_edit = app.add_subcommand("edit", "Optimize a latent against colour/edge constraints");
  c_edit->add_option("--model", ed_model)->required();
  c_edit->add_option("--case", ed_case, "Case directory (color.png, mask.png, edge.png, config.json)")->required();
  c_edit->add_option("--init", ed_init, "encoder | given | random");
  c_edit->add_option("--steps", ed_steps);
  c_edit->add_option("--restarts", ed_restarts);
  c_edit->add_option("--seed", ed_seed)->capture_default_str();
  c_edit->add_option("--out", ed_out)->capture_default_str();
  c_edit->callback([&] {
    run = [&] { return cmd_edit(ed_model, ed_case, ed_init, ed_steps, ed_restarts, ed_seed, ed_out); };
  });

  ConfigFlags sup_cfg;
  SuppressionSpec sup_spec;
  std::string sup_kind = "pretrained_dominant", sup_out = "runs/suppress";
  auto* c_sup = app.add_subcommand("suppress", "Branch-suppression experiment");
  sup_cfg.add(c_sup);
  c_sup->add_option("--kind", sup_kind, "pretrained_dominant (a) | sequential_defreeze (b)")->capture_default_str();
  c_sup->add_option("--steps-per-phase", sup_spec.steps_per_phase)->capture_default_str();
  c_sup->add_option("--stage", sup_spec.stage, "Network stage to train at (0 = final)")->capture_default_str();
  c_sup->add_option("--constants", sup_spec.n_constants)->capture_default_str();
  c_sup->add_option("--samples", sup_spec.n_samples)->capture_default_str();
  c_sup->add_option("--out", sup_out)->capture_default_str();
  c_sup->callback([&] {
    run = [&] {
      sup_spec.kind = suppression_from_string(sup_kind);
      return cmd_suppress(sup_cfg, sup_spec, sup_out);
    };
  });

  int syn_n = 2000, syn_size = 0;
  std::uint64_t syn_seed = 7;
  std::string syn_recipe, syn_out = "runs/synth";
  auto* c_syn = app.add_subcommand("synth-data", "Write the synthetic corpus as PNG files");
  c_syn->add_option("--n", syn_n)->capture_default_str();
  c_syn->add_option("--seed", syn_seed)->capture_default_str();
  c_syn->add_option("--size", syn_size, "Square image size (default from the recipe)");
  c_syn->add_option("--recipe", syn_recipe, "Recipe JSON");
  c_syn->add_option("--out", syn_out)->capture_default_str();
  c_syn->callback([&] { run = [&] { return cmd_synth(syn_n, syn_seed, syn_size, syn_recipe, syn_out); }; });

  std::string sv_config, sv_host = "127.0.0.1";
  std::vector<std::string> sv_models;
  int sv_port = 8080;
  auto* c_serve = app.add_subcommand("serve", "HTTP service");
  c_serve->add_option("--config", sv_config, "Service config JSON");
  c_serve->add_option("--model", sv_models, "id=checkpoint (repeatable)");
  c_serve->add_option("--host", sv_host)->capture_default_str();
  c_serve->add_option("--port", sv_port)->capture_default_str();
  c_serve->callback([&] { run = [&] { return cmd_serve(sv_config, sv_models, sv_host, sv_port); }; });

  std::vector<std::string> bm_models;
  int bm_color = 20, bm_edge = 10;
  std::uint64_t bm_data_seed = 1001, bm_seed = 0;
  std::string bm_data_dir, bm_init = "random", bm_out = "runs/benchmark";
  EditConfig bm_config;
  auto* c_bm = app.add_subcommand("benchmark", "Minimum-loss manifold benchmark over edit cases");
  c_bm->add_option("--model", bm_models, "name=checkpoint (repeatable)")->required();
  c_bm->add_option("--color-cases", bm_color)->capture_default_str();
  c_bm->add_option("--edge-cases", bm_edge)->capture_default_str();
  c_bm->add_option("--data-seed", bm_data_seed, "Synthetic corpus seed for the cases")->capture_default_str();
  c_bm->add_option("--data-dir", bm_data_dir, "Take case images from this directory instead");
  c_bm->add_option("--init", bm_init, "random | encoder")->capture_default_str();
  c_bm->add_option("--steps", bm_config.steps)->capture_default_str();
  c_bm->add_option("--restarts", bm_config.restarts)->capture_default_str();
  c_bm->add_option("--seed", bm_seed)->capture_default_str();
  c_bm->add_option("--out", bm_out)->capture_default_str();
  c_bm->callback([&] {
    run = [&] {
      bm_config.init = edit_init_from_string(bm_init);
      return cmd_benchmark(bm_models, bm_color, bm_edge, bm_data_seed, bm_data_dir, bm_config, bm_seed, bm_out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  try {
    return run ? run() : 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
