#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "mvqa/errors.hpp"
#include "mvqa_tools/cli.hpp"

namespace mvqa::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

using Override = std::function<void(Settings&)>;

struct Paths {
  std::string config;
  std::string input;
  std::string output;
  std::string manifest;
  std::string checkpoint;
  std::string json_out;
  std::string sampler;
};

struct ErrorKind {
  const char* name;
  int code;
};

ErrorKind classify(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return {"ConfigError", 2};
  if (dynamic_cast<const IoError*>(&e)) return {"IoError", 3};
  if (dynamic_cast<const FormatError*>(&e)) return {"FormatError", 4};
  if (dynamic_cast<const TruncationError*>(&e)) return {"TruncationError", 4};
  if (dynamic_cast<const DimError*>(&e)) return {"DimError", 5};
  if (dynamic_cast<const DegenerateError*>(&e)) return {"DegenerateError", 6};
  if (dynamic_cast<const NumericError*>(&e)) return {"NumericError", 7};
  if (dynamic_cast<const ParamError*>(&e)) return {"ParamError", 8};
  return {"Error", 1};
}

// Registers a flag whose value is applied on top of the file config only when
// the flag was actually given.
template <typename V, typename F>
CLI::Option* flag(CLI::App* app, std::vector<Override>& overrides, const std::string& name,
                  const std::string& help, F apply) {
  auto value = std::make_shared<V>();
  CLI::Option* opt = app->add_option(name, *value, help);
  overrides.push_back([value, opt, apply](Settings& s) {
    if (opt->count() > 0) apply(s, *value);
  });
  return opt;
}

void add_model_flag(CLI::App* app, std::vector<Override>& ov) {
  flag<std::string>(app, ov, "--model", "Model preset: nano, tiny or middle",
                    [](Settings& s, const std::string& v) {
                      s.preset = v;
                      s.model = ModelConfig::preset(v);
                      s.model_from_user = true;
                    });
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_output(path);
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

fs::path make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

std::vector<LabeledClip> load_manifest_clips(const std::string& manifest) {
  return load_dataset(read_manifest(manifest));
}

// ---- gen-synth ----------------------------------------------------------------

int cmd_gen_synth(const Settings& s, const Paths& p, std::ostream& out) {
  const auto dir = make_dir(p.output);
  const auto clips =
      generate_synthetic_set(s.synth.count, s.synth.frames, s.synth.height, s.synth.width, s.seed);
  std::vector<ManifestEntry> entries;
  for (const auto& c : clips) {
    const auto path = dir / (c.score.clip_id + ".rvid");
    write_rvid(c.video, path);
    entries.push_back({c.score.clip_id, path, c.score.mos});
  }
  const auto manifest = dir / "manifest.csv";
  write_manifest(entries, manifest);
  out << "wrote " << clips.size() << " clips and " << manifest.string() << "\n";
  return 0;
}

// ---- sample ---------------------------------------------------------------------

json grid_json(const FragmentGrid& g) {
  json offsets = json::array();
  for (const auto& o : g.offsets) offsets.push_back({o.dy, o.dx});
  return {{"fragments_h", g.fragments_h}, {"fragments_w", g.fragments_w},
          {"fsize_h", g.fsize_h},         {"fsize_w", g.fsize_w},
          {"frames", g.frames},           {"aligned", g.aligned},
          {"cell_y", g.cell_y},           {"cell_x", g.cell_x},
          {"offsets", offsets}};
}

json provenance_json(const SampledClip& sc) {
  const int H = sc.clip.height(), W = sc.clip.width();
  json rows = json::array();
  std::size_t semantic = 0;
  for (int y = 0; y < H; ++y) {
    std::string row(static_cast<std::size_t>(W), 'F');
    for (int x = 0; x < W; ++x) {
      if (sc.provenance[static_cast<std::size_t>(y) * W + x] == Provenance::kSemantic) {
        row[static_cast<std::size_t>(x)] = 'S';
        ++semantic;
      }
    }
    rows.push_back(row);
  }
  const std::size_t total = static_cast<std::size_t>(H) * W;
  return {{"sampler", "usds"},
          {"height", H},
          {"width", W},
          {"semantic_pixels", semantic},
          {"fragment_pixels", total - semantic},
          {"semantic_fraction", sc.semantic_fraction()},
          {"mask_ones", sc.mask.ones()},
          {"fragment_grid", grid_json(sc.grid)},
          {"provenance", rows}};
}

int cmd_sample(const Settings& s, const Paths& p, std::ostream& out) {
  const SamplerKind kind = parse_sampler(p.sampler);
  const auto video = read_rvid(p.input);
  SamplerConfig cfg;
  cfg.fragments_h = cfg.fragments_w = s.sample.grid;
  cfg.fsize_h = cfg.fsize_w = s.sample.patch;
  cfg.aligned_offsets = s.sample.aligned_offsets;
  cfg.zero_offsets = s.sample.zero_offsets;
  cfg.seed = s.seed;

  const fs::path target(p.output);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  auto sidecar = target;
  sidecar.replace_extension(".provenance.json");

  VideoTensor result;
  if (kind == SamplerKind::kUsds) {
    const auto sc = usds(video, cfg);
    result = sc.clip;
    write_text(sidecar, provenance_json(sc).dump(1) + "\n");
    out << "semantic fraction " << sc.semantic_fraction() << "\n";
  } else if (kind == SamplerKind::kFragments) {
    const auto fr = fragments(video, cfg);
    result = fr.clip;
    write_text(sidecar, json{{"sampler", "fragments"},
                             {"semantic_fraction", 0.0},
                             {"fragment_grid", grid_json(fr.grid)}}
                                .dump(1) +
                            "\n");
  } else {
    result = sample_spatial(video, kind, cfg);
  }
  write_rvid(result, target);
  out << "wrote " << target.string() << " (" << result.channels() << "x" << result.frames()
      << "x" << result.height() << "x" << result.width() << ")\n";
  return 0;
}

// ---- train ------------------------------------------------------------------------

template <typename T>
int train_as(const Settings& s, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto dataset = load_manifest_clips(p.manifest);
  if (dataset.empty()) throw ConfigError("manifest " + p.manifest + " lists no clips");
  const auto dir = make_dir(p.output);
  TrainConfig cfg = s.train;
  cfg.seed = s.seed;

  err << "[mvqa] training " << s.preset << " on " << dataset.size() << " clips for "
      << cfg.steps << " steps (" << s.precision << ")\n";
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train<T>(dataset, s.model, cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint(cast_params<float>(result.params), dir / "model.mvqc");
  {
    auto f = open_output(dir / "loss.csv");
    f << "step,loss,lr\n" << std::setprecision(10);
    for (const auto& r : result.steps) f << r.step << "," << r.loss << "," << r.lr << "\n";
  }
  {
    auto f = open_output(dir / "metrics.csv");
    f << "epoch,train_srocc,train_plcc\n" << std::setprecision(10);
    for (const auto& r : result.epochs) {
      f << r.epoch << "," << r.train_srocc << "," << r.train_plcc << "\n";
    }
  }
  write_text(dir / "config.json", to_json(s).dump(2) + "\n");

  out << to_table(result.final_train);
  out << std::fixed << std::setprecision(4) << "final train SROCC " << result.final_train.srocc
      << " PLCC " << result.final_train.plcc << " after " << result.steps.size() << " steps in "
      << std::setprecision(1) << secs << " s\n";
  out.unsetf(std::ios::floatfield);
  out << "checkpoint " << (dir / "model.mvqc").string() << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------------

template <typename T>
int eval_as(const Settings& s, const Paths& p, std::ostream& out) {
  const auto dataset = load_manifest_clips(p.manifest);
  const auto stored = s.model_from_user ? load_checkpoint(p.checkpoint, s.model)
                                        : load_checkpoint(p.checkpoint);
  const auto params = cast_params<T>(stored);
  const auto pred = predict<T>(dataset, params, s.train, s.seed);
  std::vector<double> truth;
  for (const auto& c : dataset) truth.push_back(c.mos);
  const auto report = evaluate_metrics(pred, truth);
  const auto json_text = to_json(report);
  if (!p.json_out.empty()) write_text(p.json_out, json_text + "\n");
  out << to_table(report) << json_text << "\n";
  return 0;
}

// ---- bench --------------------------------------------------------------------------

template <typename T>
int bench_as(const Settings& s, const Paths& p, std::ostream& out, std::ostream& err) {
  const auto dir = make_dir(p.output);
  const int per_frame = s.model.tokens_per_frame();
  std::vector<double> lengths, seconds;
  std::ostringstream csv;
  csv << "length,tokens,seconds,macs,flops\n" << std::setprecision(10);
  for (int L : s.bench.lengths) {
    if (L % per_frame != 0) {
      throw ConfigError("bench length " + std::to_string(L) + " is not a multiple of " +
                        std::to_string(per_frame) + " tokens per frame");
    }
    ModelConfig cfg = s.model;
    cfg.frames = L / per_frame;
    const auto params = init_params<T>(cfg, s.seed);
    const int tokens = static_cast<int>(cfg.sequence_length());
    std::mt19937_64 rng(s.seed + static_cast<std::uint64_t>(L));
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<T> seq(static_cast<std::size_t>(tokens) * cfg.dim);
    for (auto& v : seq) v = static_cast<T>(n(rng));

    encode<T>(seq, tokens, params);  // warm-up
    std::vector<double> runs;
    for (int r = 0; r < s.bench.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto y = encode<T>(seq, tokens, params);
      runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (y.size() != seq.size()) throw DimError("encoder changed the sequence shape");
    }
    const double best = *std::min_element(runs.begin(), runs.end());
    const auto flops = estimate_flops(cfg);
    lengths.push_back(L);
    seconds.push_back(best);
    csv << L << "," << tokens << "," << best << "," << flops.macs() << "," << flops.flops()
        << "\n";
    err << "[mvqa] L=" << L << " " << best << " s\n";
  }
  write_text(dir / "bench.csv", csv.str());
  out << csv.str();
  if (lengths.size() >= 2) {
    const double k = fit_growth_exponent(lengths, seconds);
    write_text(dir / "bench.svg",
               loglog_svg(lengths, seconds, k, "Encoder wall time, " + s.preset));
    out << "growth exponent " << std::setprecision(4) << k << "\n";
  } else {
    out << "growth exponent needs at least two lengths\n";
  }
  return 0;
}

// ---- flops --------------------------------------------------------------------------

int cmd_flops(const Settings& s, std::ostream& out) {
  const auto f = estimate_flops(s.model);
  const json j{{"model", s.preset},
               {"tokens", s.model.sequence_length()},
               {"params", count_params(s.model)},
               {"embed_macs", f.embed_macs},
               {"encoder_macs", f.encoder_macs},
               {"head_macs", f.head_macs},
               {"macs", f.macs()},
               {"flops", f.flops()}};
  out << std::left << std::setw(14) << "model" << s.preset << "\n"
      << std::setw(14) << "tokens" << s.model.sequence_length() << "\n"
      << std::setw(14) << "params" << count_params(s.model) << "\n"
      << std::setprecision(4) << std::setw(14) << "GMACs" << f.macs() / 1e9 << "\n"
      << std::setw(14) << "GFLOPs" << f.flops() / 1e9 << "\n"
      << j.dump() << "\n";
  return 0;
}

// ---- grad-check ---------------------------------------------------------------------

int cmd_grad_check(const Settings& s, std::ostream& out) {
  const auto& g = s.grad_check;
  auto base = init_params<double>(s.model, s.seed);
  if (g.perturbation > 0) {
    std::mt19937_64 noise_rng(s.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, g.perturbation);
    for (auto& v : base.values) v += noise(noise_rng);
  }
  const auto synth = generate_synthetic_set(g.clips, s.model.frames, s.model.height,
                                            s.model.width, s.seed);
  std::vector<BasicClip<double>> clips;
  std::vector<double> truth;
  for (std::size_t i = 0; i < synth.size(); ++i) {
    clips.push_back(prepare_clip<double>(synth[i].video, s.model, s.train, s.seed + i));
    truth.push_back(synth[i].score.mos / 100.0);
  }
  const LossWeights weights = s.train.loss;
  DifferentiableFn fn = [&](std::span<const double> point, std::span<double> grad) {
    auto params = base;
    std::copy(point.begin(), point.end(), params.values.begin());
    std::vector<double> pred(clips.size()), dpred(clips.size());
    std::vector<ForwardCache<double>> caches(clips.size());
    const bool want = !grad.empty();
    for (std::size_t i = 0; i < clips.size(); ++i) {
      pred[i] = forward<double>(clips[i], params, want ? &caches[i] : nullptr);
    }
    const double loss = loss_total<double>({pred, truth}, weights, want ? std::span(dpred) : std::span<double>());
    if (want) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < clips.size(); ++i) backward<double>(caches[i], params, dpred[i], grad);
    }
    return loss;
  };

  std::vector<std::size_t> all(base.values.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rng(s.seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(g.params, all.size()));
  std::sort(all.begin(), all.end());

  const auto r = grad_check(fn, base.values, g.epsilon, all, DifferenceStencil::kCentral4);
  const bool pass = r.max_rel_error < g.tolerance;
  out << "checked " << r.checked << " parameters of " << base.values.size()
      << ", max relative error " << std::setprecision(3) << r.max_rel_error << " (index "
      << r.worst_index << ", analytic " << r.worst_analytic << ", numeric " << r.worst_numeric
      << ")\n"
      << (pass ? "PASS" : "FAIL") << " tolerance " << g.tolerance << "\n";
  return pass ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Video quality assessment with a bidirectional state-space model", "mvqa"};
  app.require_subcommand(1);
  app.fallthrough();

  Paths paths;
  std::vector<Override> ov;
  app.add_option("--config", paths.config, "JSON config file");
  flag<std::uint64_t>(&app, ov, "--seed", "Seed for every random choice",
                      [](Settings& s, std::uint64_t v) { s.seed = v; });
  flag<std::string>(&app, ov, "--precision", "f32 or f64",
                    [](Settings& s, const std::string& v) { s.precision = v; })
      ->check(CLI::IsMember({"f32", "f64"}));

  auto* gen = app.add_subcommand("gen-synth", "Write synthetic clips and a manifest");
  gen->add_option("--out", paths.output, "Output directory")->required();
  flag<std::size_t>(gen, ov, "--count", "Number of clips", [](Settings& s, std::size_t v) { s.synth.count = v; });
  flag<int>(gen, ov, "--frames", "Frames per clip", [](Settings& s, int v) { s.synth.frames = v; });
  flag<int>(gen, ov, "--height", "Frame height", [](Settings& s, int v) { s.synth.height = v; });
  flag<int>(gen, ov, "--width", "Frame width", [](Settings& s, int v) { s.synth.width = v; });

  auto* sample = app.add_subcommand("sample", "Apply one spatial sampler to an RVID clip");
  sample->add_option("--input", paths.input, "Source RVID")->required();
  sample->add_option("--out", paths.output, "Destination RVID")->required();
  sample->add_option("--sampler", paths.sampler, "resize, crop, fragments or usds")->required();
  flag<int>(sample, ov, "--grid", "Fragments per side", [](Settings& s, int v) { s.sample.grid = v; });
  flag<int>(sample, ov, "--patch", "Fragment size in pixels", [](Settings& s, int v) { s.sample.patch = v; });
  auto* zero = sample->add_flag("--zero-offsets", "Place every fragment at its cell origin");
  auto* unaligned = sample->add_flag("--unaligned", "Draw fresh offsets for every frame");
  ov.push_back([zero, unaligned](Settings& s) {
    if (zero->count() > 0) s.sample.zero_offsets = true;
    if (unaligned->count() > 0) s.sample.aligned_offsets = false;
  });

  auto* tr = app.add_subcommand("train", "Train a model on a manifest");
  tr->add_option("--manifest", paths.manifest, "Training manifest CSV")->required();
  tr->add_option("--out", paths.output, "Output directory")->required();
  add_model_flag(tr, ov);
  flag<std::size_t>(tr, ov, "--steps", "Optimizer steps", [](Settings& s, std::size_t v) { s.train.steps = v; });
  flag<double>(tr, ov, "--lr", "Initial learning rate", [](Settings& s, double v) { s.train.learning_rate = v; });
  flag<std::size_t>(tr, ov, "--batch-size", "Clips per step",
                    [](Settings& s, std::size_t v) { s.train.batch_size = v; });
  flag<std::string>(tr, ov, "--sampler", "Spatial sampler",
                    [](Settings& s, const std::string& v) { s.train.sampler = parse_sampler(v); });

  auto* ev = app.add_subcommand("eval", "Score a manifest with a checkpoint");
  ev->add_option("--manifest", paths.manifest, "Manifest CSV")->required();
  ev->add_option("--checkpoint", paths.checkpoint, "Checkpoint file")->required();
  ev->add_option("--json", paths.json_out, "Also write the JSON report here");
  add_model_flag(ev, ov);

  auto* bench = app.add_subcommand("bench", "Time the encoder across sequence lengths");
  bench->add_option("--out", paths.output, "Output directory")->required();
  add_model_flag(bench, ov);
  flag<std::vector<int>>(bench, ov, "--lengths", "Token counts", [](Settings& s, const std::vector<int>& v) {
    s.bench.lengths = v;
  })->delimiter(',');
  flag<int>(bench, ov, "--repeats", "Timed runs per length", [](Settings& s, int v) { s.bench.repeats = v; });

  auto* fl = app.add_subcommand("flops", "Parameter and operation counts");
  add_model_flag(fl, ov);

  auto* gc = app.add_subcommand("grad-check", "Compare analytic and numeric gradients");
  add_model_flag(gc, ov);
  flag<std::size_t>(gc, ov, "--params", "Sampled parameters", [](Settings& s, std::size_t v) { s.grad_check.params = v; });
  flag<double>(gc, ov, "--epsilon", "Difference step", [](Settings& s, double v) { s.grad_check.epsilon = v; });
  flag<double>(gc, ov, "--tolerance", "Largest accepted relative error",
               [](Settings& s, double v) { s.grad_check.tolerance = v; });
  flag<double>(gc, ov, "--perturbation", "Noise added to the initial weights",
               [](Settings& s, double v) { s.grad_check.perturbation = v; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    Settings s;
    if (!paths.config.empty()) apply_config_file(s, paths.config);
    for (const auto& o : ov) o(s);
    validate(s);
    err << "[mvqa] resolved config " << to_json(s).dump() << "\n";

    const bool f64 = s.precision == "f64";
    if (gen->parsed()) return cmd_gen_synth(s, paths, out);
    if (sample->parsed()) return cmd_sample(s, paths, out);
    if (tr->parsed()) return f64 ? train_as<double>(s, paths, out, err) : train_as<float>(s, paths, out, err);
    if (ev->parsed()) return f64 ? eval_as<double>(s, paths, out) : eval_as<float>(s, paths, out);
    if (bench->parsed()) return f64 ? bench_as<double>(s, paths, out, err) : bench_as<float>(s, paths, out, err);
    if (fl->parsed()) return cmd_flops(s, out);
    if (gc->parsed()) return cmd_grad_check(s, out);
    return 1;
  } catch (const Error& e) {
    const auto kind = classify(e);
    err << "error: " << kind.name << ": " << e.what() << "\n";
    return kind.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mvqa::cli
