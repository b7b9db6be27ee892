#include "decloss/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "decloss/image_io.hpp"
#include "decloss/loss.hpp"
#include "decloss/runconfig.hpp"
#include "decloss/srtoy.hpp"

namespace decloss {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

Index thread_cap() {
  const char* env = std::getenv("DECL_THREADS");
  if (!env) {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<Index>(hc);
  }
  const std::string s(env);
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 1)
    throw ConfigError("DECL_THREADS must be a positive integer, got '" + s + "'");
  return v;
}

// Work-stealing loop over [0, n); the first worker exception is rethrown in
// the caller once every thread has drained. Bodies must not share tapes.
void for_each_index(Index n, const std::function<void(Index)>& body) {
  const Index workers = std::min(n, thread_cap());
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::mutex mu;
  std::exception_ptr first;
  const auto run = [&] {
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (Index w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

bool image_extension(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

// Image files in dir, sorted by filename so reports and pools are stable.
std::vector<fs::path> list_images(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && image_extension(entry.path())) files.push_back(entry.path());
  }
  if (files.empty()) throw ContractError(dir + ": no images (.png, .ppm, .pgm) found");
  std::sort(files.begin(), files.end());
  return files;
}

std::map<std::string, fs::path> by_stem(const std::vector<fs::path>& files) {
  std::map<std::string, fs::path> out;
  for (const auto& f : files) {
    const auto [it, fresh] = out.emplace(f.stem().string(), f);
    if (!fresh)
      throw ContractError("ambiguous stem '" + it->first + "': " + it->second.string() + " vs " +
                          f.string());
  }
  return out;
}

// Pairs two directories by filename stem, order-independent. Any file left
// without a partner is an error naming that file.
std::vector<std::pair<fs::path, fs::path>> pair_dirs(const std::string& sr_dir,
                                                     const std::string& hr_dir) {
  const auto sr = by_stem(list_images(sr_dir));
  const auto hr = by_stem(list_images(hr_dir));
  for (const auto& [stem, path] : sr) {
    if (!hr.count(stem)) throw ContractError(path.string() + ": no matching stem in " + hr_dir);
  }
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& [stem, path] : hr) {
    const auto it = sr.find(stem);
    if (it == sr.end()) throw ContractError(path.string() + ": no matching stem in " + sr_dir);
    pairs.emplace_back(it->second, path);
  }
  return pairs;
}

Tensor as_batch(const Tensor& img) {
  return Tensor::from({1, img.extent(0), img.extent(1), img.extent(2)},
                      std::vector<double>(img.values().begin(), img.values().end()));
}

Tensor from_batch(const Tensor& batch) {
  return Tensor::from({batch.extent(1), batch.extent(2), batch.extent(3)},
                      std::vector<double>(batch.values().begin(), batch.values().end()));
}

RunConfig base_config(const std::string& config_path) {
  if (config_path.empty()) return RunConfig{};
  return load_run_config(config_path);
}

// Loads expand gray to three identical channels; collapse back when the
// output is .pgm. Channel-independent ops keep replicated channels equal.
void save_auto(const Tensor& image, const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0) {
    const Index h = image.extent(1), w = image.extent(2);
    const auto v = image.values();
    save_image(Tensor::from({1, h, w}, std::vector<double>(v.begin(), v.begin() + h * w)), path);
    return;
  }
  save_image(image, path);
}

void dump_json(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

// --- subcommand bodies ----------------------------------------------------

struct EnhanceArgs {
  std::string input, output, config, inverse;
  double alpha = 0.0, mu = 0.0;
  bool has_alpha = false, has_mu = false, has_inverse = false;
};

void cmd_enhance(const EnhanceArgs& a) {
  RunConfig cfg = base_config(a.config);
  if (a.has_alpha) cfg.enhance.alpha = a.alpha;
  if (a.has_mu) cfg.enhance.mu = a.mu;
  if (a.has_inverse) set_config_key(cfg, "enhance.inverse", a.inverse);
  cfg.enhance.validate();

  if (fs::is_directory(a.input)) {
    const auto files = list_images(a.input);
    fs::create_directories(a.output);
    for_each_index(static_cast<Index>(files.size()), [&](Index i) {
      const auto& file = files[static_cast<std::size_t>(i)];
      const ImageFile img = load_image(file.string());
      const Tensor enhanced = from_batch(enhance(as_batch(img.pixels), cfg.enhance));
      save_auto(enhanced, (fs::path(a.output) / file.filename()).string());
    });
    return;
  }
  const ImageFile img = load_image(a.input);
  save_auto(from_batch(enhance(as_batch(img.pixels), cfg.enhance)), a.output);
}

struct PrepArgs {
  std::string hr_dir, lr_dir;
  Index scale = 4;
};

void cmd_prep(const PrepArgs& a) {
  if (a.scale < 1) throw ConfigError("prep: --scale must be >= 1, got " + std::to_string(a.scale));
  const auto files = list_images(a.hr_dir);
  fs::create_directories(a.lr_dir);
  for_each_index(static_cast<Index>(files.size()), [&](Index i) {
    const auto& file = files[static_cast<std::size_t>(i)];
    const ImageFile img = load_image(file.string());
    const Tensor lr = bicubic_resize(img.pixels, 1.0 / static_cast<double>(a.scale));
    save_auto(lr, (fs::path(a.lr_dir) / file.filename()).string());
  });
}

struct LossArgs {
  std::string sr_dir, hr_dir, config;
  Index patch = 0;
  double eta = 0.0;
  bool has_patch = false, has_eta = false;
};

void cmd_loss(const LossArgs& a, std::ostream& out) {
  RunConfig cfg = base_config(a.config);
  if (a.has_patch) cfg.contrast.patch_size = a.patch;
  if (a.has_eta) cfg.contrast.eta = a.eta;
  cfg.enhance.validate();
  cfg.contrast.validate();
  cfg.weights.validate();
  if (cfg.weights.w2 > 0.0)
    throw ConfigError("loss: weights.w2 > 0 needs a perceptual hook, which the command line cannot supply");

  const auto pairs = pair_dirs(a.sr_dir, a.hr_dir);
  struct Row {
    std::string name;
    double l1 = 0.0, ld = 0.0, total = 0.0;
  };
  std::vector<Row> rows(pairs.size());
  for_each_index(static_cast<Index>(pairs.size()), [&](Index i) {
    const auto& [sr_path, hr_path] = pairs[static_cast<std::size_t>(i)];
    const Tensor sr = load_image(sr_path.string()).pixels;
    const Tensor hr = load_image(hr_path.string()).pixels;
    if (sr.shape() != hr.shape())
      throw ShapeError(sr_path.string() + " is " + shape_str(sr.shape()) + " but " +
                       hr_path.string() + " is " + shape_str(hr.shape()));
    Row& row = rows[static_cast<std::size_t>(i)];
    row.name = sr_path.stem().string();
    try {
      const Tensor srb = as_batch(sr), hrb = as_batch(hr);
      row.l1 = l1_loss(srb, hrb).value();
      row.ld = decloss(srb, hrb, cfg.enhance, cfg.contrast).value();
    } catch (const ValueError& e) {
      throw ValueError(row.name + ": " + e.what());
    }
    row.total = cfg.weights.w1 * row.l1 + cfg.weights.w3 * row.ld;
  });

  json report;
  report["config"] = config_echo(cfg);
  report["pairs"] = json::array();
  double m1 = 0.0, md = 0.0, mt = 0.0;
  for (const Row& r : rows) {
    report["pairs"].push_back({{"name", r.name}, {"l1", r.l1}, {"ld", r.ld}, {"total", r.total}});
    m1 += r.l1;
    md += r.ld;
    mt += r.total;
  }
  const double n = static_cast<double>(rows.size());
  report["mean"] = {{"l1", m1 / n}, {"ld", md / n}, {"total", mt / n}};
  dump_json(out, report);
}

struct IcooArgs {
  std::string sr_dir, hr_dir, config;
  std::uint64_t seed = 0;
  Index rounds = 0, patch = 0, nearest_k = 0;
  bool has_seed = false, has_rounds = false, has_patch = false, has_nearest = false;
};

std::vector<Tensor> load_dir(const std::string& dir) {
  const auto files = list_images(dir);
  std::vector<Tensor> images(files.size());
  for_each_index(static_cast<Index>(files.size()), [&](Index i) {
    images[static_cast<std::size_t>(i)] = load_image(files[static_cast<std::size_t>(i)].string()).pixels;
  });
  return images;
}

void cmd_icoo(const IcooArgs& a, std::ostream& out) {
  RunConfig cfg = base_config(a.config);
  if (a.has_seed) cfg.icoo.seed = a.seed;
  if (a.has_rounds) cfg.icoo.rounds = a.rounds;
  if (a.has_patch) cfg.icoo.patch_size = a.patch;
  if (a.has_nearest) cfg.icoo.nearest_k = a.nearest_k;
  cfg.icoo.validate();

  const IcooReport rep = icoo(load_dir(a.sr_dir), load_dir(a.hr_dir), cfg.icoo);
  json report;
  report["config"] = config_echo(cfg);
  report["score"] = rep.score;
  report["per_round"] = rep.per_round;
  report["sr_patch_count"] = rep.sr_patch_count;
  report["hr_patch_count"] = rep.hr_patch_count;
  report["seed"] = rep.seed;
  report["distance_clamp"] = rep.distance_clamp;
  dump_json(out, report);
}

struct TrainArgs {
  std::string data_dir, out_path, trace_path, config;
  Index synthetic = 0;
  Index steps = 0, batch = 0, scale = 0, lr_crop = 0, hr_crop = 0, patch = 0, hidden = 0;
  std::uint64_t seed = 0;
  double eta = 0.0;
  bool has_synthetic = false, has_steps = false, has_batch = false, has_scale = false;
  bool has_lr_crop = false, has_hr_crop = false, has_patch = false, has_hidden = false;
  bool has_seed = false, has_eta = false;
};

// Desk-scale crops for the synthetic set; a config file or flags still win.
void synthetic_defaults(RunConfig& cfg) {
  cfg.train.lr_crop = 12;
  cfg.train.hr_crop = 48;
  cfg.contrast.patch_size = 8;
  cfg.contrast.eta = 25.0;  // enhanced synthetic patches sit close together
}

void cmd_train_toy(const TrainArgs& a, std::ostream& out) {
  if (a.data_dir.empty() && !a.has_synthetic)
    throw ConfigError("train-toy: one of --data or --synthetic is required");

  RunConfig cfg;
  if (a.has_synthetic) synthetic_defaults(cfg);
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError(a.config + ": cannot open config file");
    apply_run_config(cfg, in, a.config);
  }
  if (a.has_steps) cfg.train.steps_per_epoch = a.steps;
  if (a.has_batch) cfg.train.batch = a.batch;
  if (a.has_scale) cfg.train.scale = a.scale;
  if (a.has_lr_crop) cfg.train.lr_crop = a.lr_crop;
  if (a.has_hr_crop) cfg.train.hr_crop = a.hr_crop;
  if (a.has_hidden) cfg.train.hidden = a.hidden;
  if (a.has_seed) cfg.train.seed = a.seed;
  if (a.has_patch) cfg.contrast.patch_size = a.patch;
  if (a.has_eta) cfg.contrast.eta = a.eta;

  const TrainConfig tc = cfg.train_config();
  tc.validate();

  std::vector<Tensor> dataset;
  if (a.has_synthetic) {
    if (a.synthetic < 1)
      throw ConfigError("train-toy: --synthetic needs at least 1 image, got " +
                        std::to_string(a.synthetic));
    dataset = synthetic_dataset(a.synthetic, 96, 96, derive(tc.seed, {9}));
  } else {
    dataset = load_dir(a.data_dir);
  }

  const TrainResult result = train(dataset, tc);
  save_checkpoint(result.params, a.out_path);
  const std::string trace_path = a.trace_path.empty() ? a.out_path + ".trace.csv" : a.trace_path;
  save_trace_csv(result.trace, trace_path);

  json report;
  report["config"] = config_echo(cfg);
  report["checkpoint"] = a.out_path;
  report["trace"] = trace_path;
  report["images"] = static_cast<Index>(dataset.size());
  report["steps"] = static_cast<Index>(result.trace.size());
  const TraceRow& last = result.trace.back();
  report["final"] = {{"step", last.step}, {"l1", last.l1}, {"ld", last.ld}, {"total", last.total}};
  dump_json(out, report);
}

struct GradcheckArgs {
  Index seeds = 5;
  double tolerance = 1e-4;
};

void cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.seeds < 1) throw ConfigError("gradcheck: --seeds must be >= 1");
  const EnhanceConfig ecfg;
  ContrastConfig ccfg;
  ccfg.patch_size = 4;

  double worst = 0.0;
  const auto report = [&](const std::string& name, double err) {
    out << name << " max_rel_err=" << std::scientific << std::setprecision(3) << err
        << std::defaultfloat << "\n";
    worst = std::max(worst, err);
  };

  for (Index seed = 0; seed < a.seeds; ++seed) {
    Rng rng(derive(0xDEC105500, {static_cast<std::uint64_t>(seed)}));
    const auto image = [&](Index n) {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (auto& x : v) x = rng.next_double();
      return v;
    };
    const Index numel = 2 * 3 * 8 * 8;
    const Tensor sr = Tensor::from({2, 3, 8, 8}, image(numel));
    const Tensor hr = Tensor::from({2, 3, 8, 8}, image(numel));
    const ScalarFn f = [&](Tape&, const Tensor& x) { return decloss(x, hr, ecfg, ccfg); };
    report("decloss/sr seed=" + std::to_string(seed), finite_diff_check(f, sr));
  }

  ToyModelParams params = ToyModelParams::init(2, 11, 3);
  Rng rng(derive(0xDEC105501, {}));
  std::vector<double> lrv(static_cast<std::size_t>(1 * 3 * 4 * 4));
  for (auto& x : lrv) x = rng.next_double();
  const Tensor lr = Tensor::from({1, 3, 4, 4}, lrv);
  const auto block_check = [&](const std::string& name, Tensor ToyModelParams::* block) {
    const ScalarFn f = [&, block](Tape&, const Tensor& x) {
      ToyModelParams p = params;
      p.*block = x;
      const Tensor up = toy_forward(p, lr);
      return reduce_sum(mul(up, up));
    };
    report("toy/" + name, finite_diff_check(f, params.*block));
  };
  block_check("w1", &ToyModelParams::w1);
  block_check("b1", &ToyModelParams::b1);
  block_check("w2", &ToyModelParams::w2);
  block_check("b2", &ToyModelParams::b2);

  if (worst >= a.tolerance) {
    std::ostringstream msg;
    msg << "gradcheck: max relative error " << std::scientific << std::setprecision(3) << worst
        << " exceeds tolerance " << a.tolerance;
    throw ValueError(msg.str());
  }
  out << "gradcheck: all checks passed (max " << std::scientific << std::setprecision(3) << worst
      << " < " << a.tolerance << ")" << std::defaultfloat << "\n";
}

void cmd_psnr(const std::string& a, const std::string& b, std::ostream& out) {
  const Tensor ta = load_image(a).pixels;
  const Tensor tb = load_image(b).pixels;
  if (ta.shape() != tb.shape())
    throw ShapeError(a + " is " + shape_str(ta.shape()) + " but " + b + " is " +
                     shape_str(tb.shape()));
  out << std::fixed << std::setprecision(6) << psnr(ta, tb) << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DECLoss toolkit: frequency-domain enhancement, mini-patch contrastive loss, "
               "the ICOO metric, and a toy super-resolution trainer"};
  app.require_subcommand(1);

  EnhanceArgs ea;
  auto* enh = app.add_subcommand("enhance", "High-frequency enhance an image or a directory");
  enh->add_option("input", ea.input, "input image or directory")->required();
  enh->add_option("output", ea.output, "output image or directory")->required();
  auto* alpha_opt = enh->add_option("--alpha", ea.alpha, "kernel amplitude");
  auto* mu_opt = enh->add_option("--mu", ea.mu, "kernel width (default: extent / 4)");
  auto* inv_opt = enh->add_option("--inverse", ea.inverse, "inverse mode: exact or real_matrix");
  enh->add_option("--config", ea.config, "run config file");

  PrepArgs pa;
  auto* prep = app.add_subcommand("prep", "Bicubic-downsample a directory of HR images");
  prep->add_option("hr_dir", pa.hr_dir, "source directory")->required();
  prep->add_option("lr_dir", pa.lr_dir, "destination directory")->required();
  prep->add_option("--scale", pa.scale, "downsampling factor")->required();

  LossArgs la;
  auto* loss = app.add_subcommand("loss", "Evaluate l1/ld/total over paired SR and HR directories");
  loss->add_option("--sr", la.sr_dir, "SR directory")->required();
  loss->add_option("--hr", la.hr_dir, "HR directory")->required();
  auto* patch_opt = loss->add_option("--patch", la.patch, "mini-patch size");
  auto* eta_opt = loss->add_option("--eta", la.eta, "positive-pair mask threshold (dB)");
  loss->add_option("--config", la.config, "run config file");

  IcooArgs ia;
  auto* ico = app.add_subcommand("icoo", "Score SR images against an HR pool");
  ico->add_option("--sr", ia.sr_dir, "SR directory")->required();
  ico->add_option("--hr", ia.hr_dir, "HR directory")->required();
  auto* seed_opt = ico->add_option("--seed", ia.seed, "sampling seed");
  auto* rounds_opt = ico->add_option("--rounds", ia.rounds, "sampling rounds");
  auto* ipatch_opt = ico->add_option("--patch", ia.patch, "mini-patch size");
  auto* nearest_opt = ico->add_option("--nearest-k", ia.nearest_k, "denominator pool size (0 = all)");
  ico->add_option("--config", ia.config, "run config file");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-toy", "Train the toy upsampler and write a checkpoint");
  auto* data_opt = tr->add_option("--data", ta.data_dir, "directory of HR training images");
  auto* synth_opt =
      tr->add_option("--synthetic", ta.synthetic, "train on N generated 96x96 images instead");
  tr->add_option("--out", ta.out_path, "checkpoint path")->required();
  tr->add_option("--trace", ta.trace_path, "trace CSV path (default: <out>.trace.csv)");
  tr->add_option("--config", ta.config, "run config file");
  auto* steps_opt = tr->add_option("--steps", ta.steps, "steps per epoch");
  auto* batch_opt = tr->add_option("--batch", ta.batch, "batch size");
  auto* scale_opt = tr->add_option("--scale", ta.scale, "upscaling factor");
  auto* lrc_opt = tr->add_option("--lr-crop", ta.lr_crop, "LR crop size");
  auto* hrc_opt = tr->add_option("--hr-crop", ta.hr_crop, "HR crop size");
  auto* tpatch_opt = tr->add_option("--patch", ta.patch, "mini-patch size");
  auto* hidden_opt = tr->add_option("--hidden", ta.hidden, "hidden channels");
  auto* tseed_opt = tr->add_option("--seed", ta.seed, "training seed");
  auto* teta_opt = tr->add_option("--eta", ta.eta, "positive-pair mask threshold (dB)");
  data_opt->excludes(synth_opt);
  synth_opt->excludes(data_opt);

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the recorded gradients");
  gc->add_option("--seeds", ga.seeds, "number of random instances");
  gc->add_option("--tolerance", ga.tolerance, "max relative error allowed");

  std::string psnr_a, psnr_b;
  auto* ps = app.add_subcommand("psnr", "Peak signal-to-noise ratio between two images, in dB");
  ps->add_option("a", psnr_a, "first image")->required();
  ps->add_option("b", psnr_b, "second image")->required();

  try {
    app.parse(argc, argv);
    if (*enh) {
      ea.has_alpha = alpha_opt->count() > 0;
      ea.has_mu = mu_opt->count() > 0;
      ea.has_inverse = inv_opt->count() > 0;
      cmd_enhance(ea);
    } else if (*prep) {
      cmd_prep(pa);
    } else if (*loss) {
      la.has_patch = patch_opt->count() > 0;
      la.has_eta = eta_opt->count() > 0;
      cmd_loss(la, out);
    } else if (*ico) {
      ia.has_seed = seed_opt->count() > 0;
      ia.has_rounds = rounds_opt->count() > 0;
      ia.has_patch = ipatch_opt->count() > 0;
      ia.has_nearest = nearest_opt->count() > 0;
      cmd_icoo(ia, out);
    } else if (*tr) {
      ta.has_synthetic = synth_opt->count() > 0;
      ta.has_steps = steps_opt->count() > 0;
      ta.has_batch = batch_opt->count() > 0;
      ta.has_scale = scale_opt->count() > 0;
      ta.has_lr_crop = lrc_opt->count() > 0;
      ta.has_hr_crop = hrc_opt->count() > 0;
      ta.has_patch = tpatch_opt->count() > 0;
      ta.has_hidden = hidden_opt->count() > 0;
      ta.has_seed = tseed_opt->count() > 0;
      ta.has_eta = teta_opt->count() > 0;
      cmd_train_toy(ta, out);
    } else if (*gc) {
      cmd_gradcheck(ga, out);
    } else if (*ps) {
      cmd_psnr(psnr_a, psnr_b, out);
    }
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("decloss");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(argv_store.size());
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace decloss
