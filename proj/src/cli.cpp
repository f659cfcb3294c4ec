#include "pcenet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "pcenet/checkpoint.hpp"
#include "pcenet/degradation.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/evaluation.hpp"
#include "pcenet/image_io.hpp"
#include "pcenet/pyramid.hpp"
#include "pcenet/rng.hpp"
#include "pcenet/training.hpp"

namespace pcenet::cli {
namespace {

namespace fs = std::filesystem;

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& input) {
  if (!fs::exists(input)) throw IoError("no such file or directory: " + input.string());
  if (!fs::is_directory(input)) return {input};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

// Flat `key = value` file; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_flat_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Splices config-file entries in front of the user's flags so that flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> user(args.begin() + 1, args.end());
  fs::path config;
  for (std::size_t i = 0; i < user.size(); ++i) {
    if (user[i] == "--config" && i + 1 < user.size()) {
      config = user[i + 1];
      user.erase(user.begin() + static_cast<std::ptrdiff_t>(i), user.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (user[i].rfind("--config=", 0) == 0) {
      config = user[i].substr(9);
      user.erase(user.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config.empty() || user.empty()) return args;

  std::vector<std::string> out{args[0], user[0]};
  for (const auto& [key, value] : read_flat_config(config)) {
    if (given_on_command_line(user, key)) continue;
    if (value == "true") {
      out.push_back("--" + key);
    } else if (value != "false") {
      out.push_back("--" + key + "=" + value);
    }
  }
  out.insert(out.end(), user.begin() + 1, user.end());
  return out;
}

struct DegradeArgs {
  std::string input;
  std::string out;
  int seq_len = 2;
  std::uint64_t seed = 0;
  int side = image_io::kDefaultSide;
  int workers = 1;
  bool no_blur = false;
  bool no_artifact = false;
  bool no_transmission = false;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string resume;
  training::TrainConfig cfg;
};

struct EnhanceArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
};

struct EvaluateArgs {
  std::string pred;
  std::string ref;
  std::string out;
  bool masks = false;
};

struct PyramidArgs {
  std::string input;
  std::string out = ".";
  int levels = 4;
  int side = image_io::kDefaultSide;
};

void add_degrade_flags(CLI::App& app, DegradeArgs& a) {
  app.add_option("--input", a.input, "Clean image file or directory")->required();
  app.add_option("--out", a.out, "Output directory")->required();
  app.add_option("--seq-len", a.seq_len, "Variants per image (K)")->check(CLI::PositiveNumber);
  app.add_option("--seed", a.seed, "Random seed");
  app.add_option("--side", a.side, "Working side length")->check(CLI::PositiveNumber);
  app.add_option("--workers", a.workers, "Parallel synthesis workers")->check(CLI::PositiveNumber);
  app.add_flag("--no-blur", a.no_blur, "Disable blur");
  app.add_flag("--no-artifact", a.no_artifact, "Disable light/dark artifacts");
  app.add_flag("--no-transmission", a.no_transmission, "Disable transmission disturbance");
}

void add_train_flags(CLI::App& app, TrainArgs& a) {
  auto& c = a.cfg;
  app.add_option("--data", a.data, "Directory of clean training images")->required();
  app.add_option("--out", a.out, "Output directory for checkpoints and metrics")->required();
  app.add_option("--epochs", c.epochs, "Number of epochs")->check(CLI::PositiveNumber);
  app.add_option("--decay-start", c.decay_start_epoch, "Epoch at which linear LR decay begins");
  app.add_option("--batch-size", c.batch_size, "SeqLC groups per step")->check(CLI::PositiveNumber);
  app.add_option("--lr", c.base_lr, "Base learning rate");
  app.add_option("--lambda-c", c.lambda_C, "Consistency loss weight");
  app.add_option("--seq-len", c.K, "Variants per SeqLC (K)")->check(CLI::PositiveNumber);
  app.add_option("--levels", c.L, "Laplacian pyramid depth L")->check(CLI::PositiveNumber);
  app.add_option("--side", c.side, "Training side length")->check(CLI::PositiveNumber);
  app.add_option("--base-channels", c.base_channels, "Channels of the first stage")->check(CLI::PositiveNumber);
  app.add_option("--channel-cap", c.channel_cap, "Maximum channels per stage")->check(CLI::PositiveNumber);
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--resume", a.resume, "Checkpoint to resume from");
  app.add_option("--checkpoint-every", c.checkpoint_every, "Checkpoint cadence in epochs (0 = only at the end)");
  app.add_option("--workers", c.workers, "Parallel data synthesis workers")->check(CLI::PositiveNumber);
}

// Preprocessed corpus cache keyed by path, size, mtime and side.
std::optional<fs::path> cache_path(const fs::path& file, int side) {
  const char* dir = std::getenv("PCE_CACHE_DIR");
  if (!dir || !*dir) return std::nullopt;
  std::error_code ec;
  const auto abs = fs::absolute(file, ec).string();
  const auto size = fs::file_size(file, ec);
  const auto mtime = fs::last_write_time(file, ec).time_since_epoch().count();
  std::uint64_t key = hash_id(abs);
  key = mix_seed(key, size, static_cast<std::uint64_t>(mtime), static_cast<std::uint64_t>(side));
  std::ostringstream name;
  name << std::hex << key << ".raster";
  return fs::path(dir) / name.str();
}

Image load_cached(const fs::path& file, int side) {
  const auto cached = cache_path(file, side);
  if (cached && fs::exists(*cached)) {
    std::ifstream in(*cached, std::ios::binary);
    Raster r(3, side, side);
    in.read(reinterpret_cast<char*>(r.data()), static_cast<std::streamsize>(r.size() * sizeof(double)));
    if (in) return Image(std::move(r));
  }
  Image img = image_io::load_image(file, side);
  if (cached) {
    fs::create_directories(cached->parent_path());
    std::ofstream out(*cached, std::ios::binary);
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size() * sizeof(double)));
  }
  return img;
}

int cmd_degrade(const DegradeArgs& a, std::ostream& out) {
  degradation::DegradationConfig cfg;
  cfg.seed = a.seed;
  cfg.enable_blur = !a.no_blur;
  cfg.enable_artifact = !a.no_artifact;
  cfg.enable_transmission = !a.no_transmission;
  cfg.validate();

  const auto files = list_images(a.input);
  if (files.empty()) throw ConfigError("no PNG/JPEG images under " + a.input);
  fs::create_directories(a.out);

  std::vector<degradation::SeqLC> results(files.size());
  auto work = [&](std::size_t i) {
    const Image clean = image_io::load_image(files[i], a.side);
    results[i] = degradation::make_seqlc(clean, cfg, a.seq_len, files[i].stem().string());
  };
  const auto workers = static_cast<std::size_t>(a.workers);
  if (workers <= 1) {
    for (std::size_t i = 0; i < files.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < files.size(); i += workers) work(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::ofstream log(fs::path(a.out) / "recipes.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot write recipe log in " + a.out);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    for (int k = 0; k < results[i].K(); ++k) {
      image_io::save_image(results[i].variants[k], fs::path(a.out) / (stem + "_k" + std::to_string(k) + ".png"));
      auto rec = degradation::recipe_to_json(results[i].recipes[k]);
      rec["run_seed"] = a.seed;
      log << rec.dump() << '\n';
    }
  }
  out << "wrote " << files.size() * static_cast<std::size_t>(a.seq_len) << " variants to " << a.out << '\n';
  return kOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  a.cfg.validate();
  const auto files = list_images(a.data);
  std::vector<training::Sample> corpus;
  for (const auto& f : files) corpus.push_back({f.filename().string(), load_cached(f, a.cfg.side)});
  if (corpus.empty()) throw ConfigError("training corpus is empty: " + a.data);

  training::TrainOptions opts;
  opts.out_dir = a.out;
  if (!a.resume.empty()) opts.resume = a.resume;
  int last_epoch = -1;
  double epoch_sum = 0.0;
  int epoch_steps = 0;
  auto flush_epoch = [&] {
    if (last_epoch >= 0 && epoch_steps > 0) {
      out << "epoch " << last_epoch << " mean L_total " << epoch_sum / epoch_steps << '\n';
    }
  };
  opts.on_step = [&](const training::StepRecord& r) {
    if (r.epoch != last_epoch) {
      flush_epoch();
      last_epoch = r.epoch;
      epoch_sum = 0.0;
      epoch_steps = 0;
    }
    epoch_sum += r.losses.L_total;
    ++epoch_steps;
  };
  const auto result = training::train_loop(corpus, a.cfg, degradation::DegradationConfig{}, opts);
  flush_epoch();
  out << "checkpoint " << result.checkpoint.string() << '\n';
  return kOk;
}

int cmd_enhance(const EnhanceArgs& a, std::ostream& out) {
  const auto ckpt = checkpoint::read_checkpoint(a.checkpoint);
  network::PyramidUNet model(ckpt.model);
  if (ckpt.params.tensors().size() != model.parameters().tensors().size()) {
    throw FormatError("checkpoint parameters do not match its model configuration");
  }
  model.parameters() = ckpt.params;
  const int side = ckpt.train_config.value("side", image_io::kDefaultSide);

  const auto files = list_images(a.input);
  if (files.empty()) throw ConfigError("no PNG/JPEG images under " + a.input);
  fs::create_directories(a.out);
  for (const auto& f : files) {
    const Image img = image_io::load_image(f, side);
    const auto result = model.forward(pyramid::laplacian_decompose(img, ckpt.pyramid_levels));
    fs::path name = f.filename();
    name.replace_extension(".png");
    image_io::save_image(Image(result.enhanced), fs::path(a.out) / name);
  }
  out << "enhanced " << files.size() << " images into " << a.out << '\n';
  return kOk;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const auto report = a.masks ? evaluation::evaluate_mask_pairs(a.pred, a.ref) : evaluation::evaluate_pairs(a.pred, a.ref);
  const std::string first = a.masks ? "iou" : "ssim";
  const std::string second = a.masks ? "dsc" : "psnr";
  if (a.out.empty()) {
    evaluation::write_report_csv(report, first, second, out);
  } else {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f) throw IoError("cannot write " + a.out);
    evaluation::write_report_csv(report, first, second, f);
  }
  for (const auto& name : report.unmatched) err << "unmatched: " << name << '\n';
  return kOk;
}

int cmd_wfqa(const std::string& labels, std::ostream& out) {
  const auto scores = evaluation::wfqa(evaluation::read_quality_labels(labels));
  out << "fiqa,wfqa\n" << std::setprecision(10) << scores.fiqa << ',' << scores.wfqa << '\n';
  return kOk;
}

int cmd_pyramid(const PyramidArgs& a, std::ostream& out) {
  const Image img = image_io::load_image(a.input, a.side);
  const auto stack = pyramid::laplacian_decompose(img, a.levels);
  fs::create_directories(a.out);
  std::ofstream manifest(fs::path(a.out) / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + a.out);
  for (int l = 0; l <= stack.depth; ++l) {
    Raster vis = stack.levels[l];
    const bool band = l < stack.depth;
    if (band)
      for (double& v : vis.values()) v += 0.5;
    const std::string name = "level_" + std::to_string(l) + ".png";
    image_io::save_raster(vis, fs::path(a.out) / name);
    manifest << "level=" << l << " side=" << vis.width() << " channels=" << vis.channels()
             << " kind=" << (band ? "band" : "residual") << " file=" << name << '\n';
  }
  out << "wrote " << stack.depth + 1 << " levels to " << a.out << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pyramid-constraint fundus image enhancement", "pcenet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PCENET_VERSION);

  DegradeArgs degrade_args;
  TrainArgs train_args;
  EnhanceArgs enhance_args;
  EvaluateArgs evaluate_args;
  PyramidArgs pyramid_args;
  std::string labels;
  std::string unused_config;

  auto* degrade = app.add_subcommand("degrade", "Synthesize degraded variants of clean images");
  add_degrade_flags(*degrade, degrade_args);
  auto* train = app.add_subcommand("train", "Train the enhancement network");
  add_train_flags(*train, train_args);
  auto* enhance = app.add_subcommand("enhance", "Enhance images with a trained checkpoint");
  enhance->add_option("--checkpoint", enhance_args.checkpoint, "Checkpoint file")->required();
  enhance->add_option("--input", enhance_args.input, "Image file or directory")->required();
  enhance->add_option("--out", enhance_args.out, "Output directory")->required();
  auto* evaluate = app.add_subcommand("evaluate", "SSIM/PSNR (or IoU/DSC with --masks) over matching files");
  evaluate->add_option("--pred", evaluate_args.pred, "Directory of predictions")->required();
  evaluate->add_option("--ref", evaluate_args.ref, "Directory of references")->required();
  evaluate->add_option("--out", evaluate_args.out, "CSV output path (default: stdout)");
  evaluate->add_flag("--masks", evaluate_args.masks, "Compare binary masks with IoU/DSC");
  auto* wfqa = app.add_subcommand("wfqa", "FIQA ratio and weighted quality score from a label CSV");
  wfqa->add_option("--labels", labels, "CSV with id,label rows")->required();
  auto* pyr = app.add_subcommand("pyramid", "Dump Laplacian pyramid levels of an image");
  pyr->add_option("--input", pyramid_args.input, "Input image")->required();
  pyr->add_option("--levels", pyramid_args.levels, "Pyramid depth L")->check(CLI::PositiveNumber);
  pyr->add_option("--side", pyramid_args.side, "Working side length")->check(CLI::PositiveNumber);
  pyr->add_option("--out", pyramid_args.out, "Output directory");
  for (auto* sub : {degrade, train, enhance, evaluate, wfqa, pyr}) {
    sub->add_option("--config", unused_config, "Flat key = value config file; flags override it");
  }

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const Error& e) {
    err << "error[" << e.kind() << "]: " << e.what() << '\n';
    return kRuntimeError;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << PCENET_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand --help is also delivered as a ParseError subclass with exit code 0.
    if (e.get_exit_code() == 0) {
      for (auto* sub : app.get_subcommands()) out << sub->help();
      return kOk;
    }
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error[usage]: " << msg << '\n';
    return kUsageError;
  }

  try {
    if (degrade->parsed()) return cmd_degrade(degrade_args, out);
    if (train->parsed()) return cmd_train(train_args, out);
    if (enhance->parsed()) return cmd_enhance(enhance_args, out);
    if (evaluate->parsed()) return cmd_evaluate(evaluate_args, out, err);
    if (wfqa->parsed()) return cmd_wfqa(labels, out);
    if (pyr->parsed()) return cmd_pyramid(pyramid_args, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error[" << e.kind() << "]: " << msg << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kRuntimeError;
  }
  err << "error[usage]: no subcommand\n";
  return kUsageError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace pcenet::cli
