#include "ifrp/dataset.hpp"
#include "ifrp/evalkit.hpp"
#include "ifrp/extractor.hpp"
#include "ifrp/style_selector.hpp"
#include "ifrp/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace ifrp;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string version_string() {
  std::ostringstream s;
  s << "ifrp " << kToolVersion << " (manifest v" << kManifestVersion << ", checkpoint v" << kCheckpointVersion
    << ", report schema " << kReportSchemaVersion << ")";
  return s.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* v = std::getenv("IFRP_SEED");
  if (!v || !*v) return fallback;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string("IFRP_SEED is not an unsigned integer: ") + v);
  }
}

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<const Stylizer*> borrow(const std::vector<std::unique_ptr<Stylizer>>& owned) {
  std::vector<const Stylizer*> out;
  for (const auto& s : owned) out.push_back(s.get());
  return out;
}

// ---------------------------------------------------------------- style selection

struct SelectionInput {
  std::map<std::string, std::vector<Image>> styles;
  std::vector<Image> faces;
};

nlohmann::json select_styles(const SelectionInput& in, Index k, Index size, const ExtractorSpec& spec) {
  if (in.styles.empty()) throw ValidationError("select-styles: no style images");
  if (in.faces.empty()) throw ValidationError("select-styles: no real faces");
  auto psi = make_extractor<double>(spec);
  auto descriptors = [&](const std::vector<Image>& imgs, const std::string& id) {
    std::vector<Image> resized;
    for (const auto& img : imgs) resized.push_back(img.width == size && img.height == size ? img : center_crop_resize(img, size));
    return describe(*psi, images_to_tensor<double>(resized), std::vector<std::string>(resized.size(), id));
  };
  std::vector<StyleDescriptor> styles;
  for (const auto& [id, imgs] : in.styles) styles.push_back({id, mean_grams(descriptors(imgs, id))});
  const auto faces = descriptors(in.faces, "real");
  const auto ranked = rank_styles(styles, faces, k);
  nlohmann::json report;
  report["ranking"] = nlohmann::json::array();
  for (const auto& s : score_styles(styles, mean_grams(faces)))
    report["ranking"].push_back({{"style_id", s.style_id}, {"distance", s.distance}});
  report["selected"] = ranked;
  report["k"] = k;
  report["image_size"] = size;
  report["extractor"] = {{"kind", spec.kind}, {"seed", spec.seed}, {"width", spec.width}, {"taps", psi->tap_names()}};
  report["real_faces"] = in.faces.size();
  return report;
}

SelectionInput selection_from_manifest(const DatasetManifest& m) {
  SelectionInput in;
  std::set<std::string> faces_seen;
  for (const auto* r : m.split("train")) {
    in.styles[r->style].push_back(load_png(m.resolve(r->sf_path)));
    if (faces_seen.insert(r->identity).second) in.faces.push_back(load_png(m.resolve(r->rf_path)));
  }
  return in;
}

SelectionInput selection_from_dirs(const fs::path& styles_dir, const fs::path& faces_dir) {
  SelectionInput in;
  for (const auto& p : png_files(styles_dir)) in.styles[p.stem().string()].push_back(load_png(p));
  for (const auto& p : png_files(faces_dir)) in.faces.push_back(load_png(p));
  return in;
}

std::vector<std::string> selected_styles(const fs::path& selection) {
  std::ifstream in(selection);
  if (!in) throw ConfigError("cannot open style selection " + selection.string());
  try {
    return nlohmann::json::parse(in).at("selected").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad style selection " + selection.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- train / recover

struct TrainFlags {
  fs::path manifest, out, config;
  std::optional<fs::path> resume, selection;
  std::optional<std::uint64_t> seed;
  std::optional<Index> epochs, max_steps, batch_size, base_channels, checkpoint_every;
  std::optional<double> learning_rate;
  std::optional<std::string> styles;
  bool no_adversarial = false, no_identity = false, no_stn = false;
};

TrainConfig resolve_config(const TrainFlags& f) {
  TrainConfig c;
  c.seed = env_seed(c.seed);
  if (!f.config.empty()) c = load_config(f.config, c);
  if (f.seed) c.seed = *f.seed;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.max_steps) c.max_steps = *f.max_steps;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.base_channels) c.base_channels = *f.base_channels;
  if (f.checkpoint_every) c.checkpoint_every = *f.checkpoint_every;
  if (f.learning_rate) c.learning_rate = *f.learning_rate;
  if (f.selection) c.train_styles = selected_styles(*f.selection);
  if (f.styles) c.train_styles = split_list(*f.styles);
  if (f.no_adversarial) c.adversarial = false;
  if (f.no_identity) c.identity = false;
  if (f.no_stn) c.use_stn = false;
  c.validate();
  return c;
}

void run_train(const TrainFlags& f) {
  const auto manifest = load_manifest(f.manifest);
  TrainConfig c = resolve_config(f);
  if (f.config.empty()) c.image_size = manifest.image_size;
  c.validate();
  spdlog::info("resolved config: {}", config_to_json(c).dump());
  fs::create_directories(f.out);
  write_json(config_to_json(c), f.out / "config.json");
  const auto result = train(manifest, c, f.out, f.resume);
  if (!result.metrics.empty()) {
    const auto& m = result.metrics.back();
    spdlog::info("final step {}: L_pix {:.6f} L_dis {:.6f} L_id {:.6f}", m.step, m.pix, m.dis, m.id);
  }
  spdlog::info("checkpoint written to {}", result.final_checkpoint.string());
}

void run_recover(const fs::path& checkpoint, const fs::path& input, const fs::path& output) {
  std::vector<fs::path> inputs = fs::is_directory(input) ? png_files(input) : std::vector<fs::path>{input};
  if (inputs.empty()) throw DatasetError("no PNG portraits under " + input.string());
  std::vector<Image> portraits;
  for (const auto& p : inputs) portraits.push_back(load_png(p));
  const auto out = recover(checkpoint, portraits);
  fs::create_directories(output);
  for (size_t i = 0; i < out.size(); ++i) save_png(out[i], output / inputs[i].filename());
  spdlog::info("wrote {} recovered portrait(s) to {}", out.size(), output.string());
}

// ---------------------------------------------------------------- smoke

struct SmokeFlags {
  fs::path out;
  std::uint64_t seed = 0;
  Index sources = 32;
  Index steps = 50;
  Index size = 32;
  Index select = 2;
};

void run_smoke(const SmokeFlags& f) {
  spdlog::info("smoke pipeline under {}", f.out.string());
  write_synthetic_faces(f.out / "sources", f.sources, f.seed);

  std::vector<std::unique_ptr<Stylizer>> owned;
  for (const auto& id : builtin_stylizers()) owned.push_back(make_stylizer(id));
  SynthesisOptions so;
  so.image_size = f.size;
  so.seed = f.seed;
  const auto manifest = synthesize_pairs(f.out / "sources", borrow(owned), f.out / "dataset", so);

  const auto selection = select_styles(selection_from_manifest(manifest), f.select, f.size, ExtractorSpec{});
  write_json(selection, f.out / "styles.json");

  TrainFlags tf;
  tf.manifest = f.out / "dataset" / "manifest.json";
  tf.out = f.out / "run";
  tf.seed = f.seed;
  tf.epochs = 1000000;
  tf.max_steps = f.steps;
  tf.checkpoint_every = 0;
  tf.selection = f.out / "styles.json";
  run_train(tf);

  std::vector<fs::path> test_sf;
  fs::create_directories(f.out / "test_sf");
  for (const auto* r : manifest.split("test")) {
    fs::copy_file(manifest.resolve(r->sf_path), f.out / "test_sf" / fs::path(r->sf_path).filename(),
                  fs::copy_options::overwrite_existing);
  }
  run_recover(f.out / "run" / "final.ckpt", f.out / "test_sf", f.out / "recovered");

  EvalOptions eo;
  eo.grid_path = f.out / "grid.png";
  const auto report = evaluate(manifest, f.out / "run" / "final.ckpt", f.out / "report.json", eo);
  spdlog::info("smoke report: {}", (f.out / "report.json").string());
  (void)report;
}

// ---------------------------------------------------------------- error categories

int fail(const char* category, const std::exception& e) {
  std::cerr << "error [" << category << "]: " << e.what() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale face recovery from stylized portraits", "ifrp"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off (default: $IFRP_LOG or info)");

  // gen-faces
  auto* gen = app.add_subcommand("gen-faces", "Write procedurally rendered source faces");
  fs::path gen_out;
  Index gen_count = 32;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of faces")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Seed (default: $IFRP_SEED or 0)");

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "Build paired stylized/real datasets");
  fs::path syn_sources, syn_out;
  std::string syn_styles = "candy,mosaic,sketch";
  Index syn_size = 32;
  double syn_test = 0.25;
  std::optional<std::uint64_t> syn_seed;
  bool syn_aligned = false;
  syn->add_option("--sources", syn_sources, "Directory of source face images")->required();
  syn->add_option("--out", syn_out, "Dataset directory")->required();
  syn->add_option("--styles", syn_styles, "Comma-separated built-in stylizers");
  syn->add_option("--size", syn_size, "Output image size")->check(CLI::PositiveNumber);
  syn->add_option("--test-fraction", syn_test, "Fraction of identities held out")->check(CLI::Range(0.0, 1.0));
  syn->add_option("--seed", syn_seed, "Seed (default: $IFRP_SEED or 0)");
  syn->add_flag("--no-misalignment", syn_aligned, "Disable the random similarity warps");

  // select-styles
  auto* sel = app.add_subcommand("select-styles", "Rank styles by Log-Euclidean Gram distance to real faces");
  fs::path sel_manifest, sel_styles_dir, sel_faces_dir, sel_out;
  Index sel_k = 3, sel_size = 64;
  sel->add_option("--manifest", sel_manifest, "Dataset manifest (styles from train SF images)");
  sel->add_option("--styles-dir", sel_styles_dir, "Style images, one style id per file stem");
  sel->add_option("--faces", sel_faces_dir, "Directory of real faces (with --styles-dir)");
  sel->add_option("--k", sel_k, "Styles to select")->check(CLI::PositiveNumber);
  sel->add_option("--size", sel_size, "Working resolution for --styles-dir inputs")->check(CLI::PositiveNumber);
  sel->add_option("--out", sel_out, "Report path")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train the style removal network");
  TrainFlags tflags;
  tr->add_option("--manifest", tflags.manifest, "Dataset manifest")->required();
  tr->add_option("--out", tflags.out, "Run directory")->required();
  tr->add_option("--config", tflags.config, "JSON config with TrainConfig keys");
  tr->add_option("--resume", tflags.resume, "Checkpoint to continue from");
  tr->add_option("--selection", tflags.selection, "select-styles report; trains on its selected styles");
  tr->add_option("--styles", tflags.styles, "Comma-separated training styles");
  tr->add_option("--seed", tflags.seed, "Seed");
  tr->add_option("--epochs", tflags.epochs, "Epochs");
  tr->add_option("--max-steps", tflags.max_steps, "Stop after this many steps (0: no limit)");
  tr->add_option("--batch-size", tflags.batch_size, "Mini-batch size");
  tr->add_option("--base-channels", tflags.base_channels, "Width of the first encoder stage");
  tr->add_option("--checkpoint-every", tflags.checkpoint_every, "Epochs between checkpoints (0: final only)");
  tr->add_option("--lr", tflags.learning_rate, "RMSprop learning rate");
  tr->add_flag("--no-adversarial", tflags.no_adversarial, "Drop the adversarial term");
  tr->add_flag("--no-identity", tflags.no_identity, "Drop the identity term");
  tr->add_flag("--no-stn", tflags.no_stn, "Build the generator without spatial transformers");

  // recover
  auto* rec = app.add_subcommand("recover", "Destylize portraits with a trained checkpoint");
  fs::path rec_ckpt, rec_in, rec_out;
  rec->add_option("--checkpoint", rec_ckpt, "Checkpoint")->required();
  rec->add_option("--input", rec_in, "PNG file or directory")->required();
  rec->add_option("--output", rec_out, "Output directory")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
  fs::path ev_manifest, ev_ckpt, ev_out, ev_grid;
  EvalOptions eopts;
  std::string ev_seen;
  ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--out", ev_out, "Report path")->required();
  ev->add_option("--embedder", eopts.embedder, "Identity embedder: conv|pixel");
  ev->add_option("--k", eopts.k, "Retrieval depth")->check(CLI::PositiveNumber);
  ev->add_option("--seen-styles", ev_seen, "Comma-separated styles treated as seen");
  ev->add_option("--grid", ev_grid, "Write a GT | SF | recovered PNG grid");

  // smoke
  auto* sm = app.add_subcommand("smoke", "End-to-end pipeline on bundled faces");
  SmokeFlags sflags;
  std::optional<std::uint64_t> sm_seed;
  sm->add_option("--out", sflags.out, "Working directory")->required();
  sm->add_option("--seed", sm_seed, "Seed (default: $IFRP_SEED or 0)");
  sm->add_option("--steps", sflags.steps, "Training steps")->check(CLI::PositiveNumber);
  sm->add_option("--sources", sflags.sources, "Number of source faces")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  if (log_level.empty())
    if (const char* env = std::getenv("IFRP_LOG")) log_level = env;
  if (!log_level.empty()) {
    const auto lvl = spdlog::level::from_str(log_level);
    if (lvl == spdlog::level::off && log_level != "off") {
      std::cerr << "error [usage]: unknown log level '" << log_level << "'\n";
      return 2;
    }
    spdlog::set_level(lvl);
  }

  try {
    if (*gen) {
      write_synthetic_faces(gen_out, gen_count, gen_seed.value_or(env_seed(0)));
      spdlog::info("wrote {} face(s) to {}", gen_count, gen_out.string());
    } else if (*syn) {
      std::vector<std::unique_ptr<Stylizer>> owned;
      for (const auto& id : split_list(syn_styles)) owned.push_back(make_stylizer(id));
      SynthesisOptions so;
      so.image_size = syn_size;
      so.seed = syn_seed.value_or(env_seed(0));
      so.split.test_fraction = syn_test;
      if (syn_aligned) so.ranges = MisalignmentRanges::none();
      const auto m = synthesize_pairs(syn_sources, borrow(owned), syn_out, so);
      spdlog::info("wrote {} record(s) to {}", m.records.size(), (syn_out / "manifest.json").string());
    } else if (*sel) {
      const bool from_manifest = !sel_manifest.empty();
      if (from_manifest == !sel_styles_dir.empty() || (!from_manifest && sel_faces_dir.empty())) {
        std::cerr << "error [usage]: give either --manifest or --styles-dir with --faces\n" << sel->help();
        return 2;
      }
      nlohmann::json report;
      if (from_manifest) {
        const auto m = load_manifest(sel_manifest);
        report = select_styles(selection_from_manifest(m), sel_k, m.image_size, ExtractorSpec{});
      } else {
        report = select_styles(selection_from_dirs(sel_styles_dir, sel_faces_dir), sel_k, sel_size, ExtractorSpec{});
      }
      write_json(report, sel_out);
      spdlog::info("selected styles: {}", report["selected"].dump());
    } else if (*tr) {
      run_train(tflags);
    } else if (*rec) {
      run_recover(rec_ckpt, rec_in, rec_out);
    } else if (*ev) {
      eopts.seen_styles = split_list(ev_seen);
      if (!ev_grid.empty()) eopts.grid_path = ev_grid;
      evaluate(load_manifest(ev_manifest), ev_ckpt, ev_out, eopts);
    } else if (*sm) {
      sflags.seed = sm_seed.value_or(env_seed(0));
      run_smoke(sflags);
    }
  } catch (const ConfigError& e) {
    return fail("config", e);
  } catch (const ValidationError& e) {
    return fail("validation", e);
  } catch (const DatasetError& e) {
    return fail("dataset", e);
  } catch (const DecodeError& e) {
    return fail("decode", e);
  } catch (const CheckpointError& e) {
    return fail("checkpoint", e);
  } catch (const TrainingError& e) {
    return fail("training", e);
  } catch (const EvalError& e) {
    return fail("evaluation", e);
  } catch (const ShapeError& e) {
    return fail("shape", e);
  } catch (const std::exception& e) {
    return fail("runtime", e);
  }
  return 0;
}
