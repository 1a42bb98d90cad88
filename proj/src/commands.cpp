#include "celeganser/commands.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "celeganser/checkpoint.hpp"
#include "celeganser/error.hpp"
#include "celeganser/gradcheck.hpp"
#include "celeganser/io.hpp"
#include "celeganser/models.hpp"
#include "celeganser/pipeline.hpp"
#include "celeganser/straightening.hpp"
#include "celeganser/training.hpp"

namespace celeganser::commands {

namespace fs = std::filesystem;
using config::RunConfig;
using models::HeadSet;
using models::NetConfig;
using models::UNet;

namespace {

struct GenField {
  const char* key;
  double synth::GenParams::*member;
};

constexpr GenField kGenFields[] = {
    {"gen.length_age0", &synth::GenParams::length_age0},
    {"gen.length_max_age", &synth::GenParams::length_max_age},
    {"gen.halfwidth_age0", &synth::GenParams::halfwidth_age0},
    {"gen.halfwidth_max_age", &synth::GenParams::halfwidth_max_age},
    {"gen.width_exponent", &synth::GenParams::width_exponent},
    {"gen.max_curvature", &synth::GenParams::max_curvature},
    {"gen.curvature_jitter", &synth::GenParams::curvature_jitter},
    {"gen.max_extent", &synth::GenParams::max_extent},
    {"gen.margin", &synth::GenParams::margin},
    {"gen.worm_level_age0", &synth::GenParams::worm_level_age0},
    {"gen.worm_level_max_age", &synth::GenParams::worm_level_max_age},
    {"gen.texture_freq_age0", &synth::GenParams::texture_freq_age0},
    {"gen.texture_freq_max_age", &synth::GenParams::texture_freq_max_age},
    {"gen.texture_contrast_age0", &synth::GenParams::texture_contrast_age0},
    {"gen.texture_contrast_max_age", &synth::GenParams::texture_contrast_max_age},
    {"gen.head_marker_depth", &synth::GenParams::head_marker_depth},
    {"gen.background_level", &synth::GenParams::background_level},
    {"gen.speckle_rate_age0", &synth::GenParams::speckle_rate_age0},
    {"gen.speckle_rate_max_age", &synth::GenParams::speckle_rate_max_age},
    {"gen.speckle_amplitude", &synth::GenParams::speckle_amplitude},
    {"gen.speckle_radius_min", &synth::GenParams::speckle_radius_min},
    {"gen.speckle_radius_max", &synth::GenParams::speckle_radius_max},
    {"gen.noise_sigma", &synth::GenParams::noise_sigma},
    {"gen.length_jitter", &synth::GenParams::length_jitter},
    {"gen.width_jitter", &synth::GenParams::width_jitter},
};

using Defaults = std::map<std::string, std::string>;

const Defaults kNetDefaults = {
    {"base_channels", "16"}, {"max_channels", "32"}, {"blocks", "1"}, {"scales", "5"}};

const Defaults kOptimDefaults = {
    {"epochs", "30"}, {"batch", "8"}, {"lr0", "0.0005"}, {"halve_every", "20"}};

Defaults merge(std::initializer_list<Defaults> parts) {
  Defaults out;
  for (const auto& p : parts) out.insert(p.begin(), p.end());
  return out;
}

void require_set(const RunConfig& cfg, const std::string& key) {
  require(cfg.is_set(key), ErrorCode::kConfig, "missing required key '" + key + "'");
}

NetConfig net_config(const RunConfig& cfg, HeadSet head, int input_size) {
  NetConfig n;
  n.head = head;
  n.num_scales = cfg.get_int("scales");
  n.base_channels = cfg.get_int("base_channels");
  n.max_channels = cfg.get_int("max_channels");
  n.blocks_per_stage = cfg.get_int("blocks");
  n.input_size = input_size;
  n.validate();
  return n;
}

training::TrainOptions train_options(const RunConfig& cfg, std::ostream& log,
                                     const std::string& tag) {
  training::TrainOptions opt;
  opt.epochs = cfg.get_int("epochs");
  opt.batch_size = cfg.get_int("batch");
  opt.lr0 = cfg.get_double("lr0");
  opt.halve_every = cfg.get_int("halve_every");
  opt.seed = cfg.get_u64("seed");
  require(opt.epochs >= 1 && opt.batch_size >= 1 && opt.lr0 > 0 && opt.halve_every >= 1,
          ErrorCode::kConfig, "epochs, batch, lr0 and halve_every must be positive");
  opt.on_epoch = [&log, tag](const training::EpochLog& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s epoch %d lr %.3g loss %.6f val %.6f", tag.c_str(),
                  e.epoch, e.lr, e.train_loss, e.val_metric);
    log << buf << '\n' << std::flush;
  };
  return opt;
}

struct Split {
  io::Manifest manifest;
  std::vector<synth::Sample> train;
  std::vector<synth::Sample> val;
};

Split load_split(const fs::path& root) {
  Split s;
  s.manifest = io::read_manifest(root);
  s.train = io::read_samples(root, s.manifest.train_ids, s.manifest.timepoints);
  s.val = io::read_samples(root, s.manifest.val_ids, s.manifest.timepoints);
  return s;
}

std::vector<synth::Sample> load_named_split(const fs::path& root, const std::string& split) {
  const io::Manifest m = io::read_manifest(root);
  if (split == "train") return io::read_samples(root, m.train_ids, m.timepoints);
  if (split == "val") return io::read_samples(root, m.val_ids, m.timepoints);
  fail(ErrorCode::kConfig, "split must be 'train' or 'val', got '" + split + "'");
}

checkpoint::Checkpoint load_checkpoint(const RunConfig& cfg, const std::string& key) {
  require_set(cfg, key);
  const fs::path path = cfg.get(key);
  require(fs::exists(path), ErrorCode::kMissingCheckpoint,
          "missing checkpoint for " + key + ": " + path.string());
  return checkpoint::load(path);
}

std::string config_value(const checkpoint::Checkpoint& ckpt, const std::string& key,
                         const std::string& fallback) {
  auto it = ckpt.config.find(key);
  return it == ckpt.config.end() ? fallback : it->second;
}

std::map<std::string, std::string> prefixed_echo(const RunConfig& cfg, const std::string& prefix) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : cfg.values()) out[prefix + k] = v;
  return out;
}

std::ofstream open_report(const fs::path& path, const RunConfig& cfg) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& line : cfg.echo_lines()) f << "# " << line << '\n';
  return f;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string sample_id(const synth::Sample& s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "worm_%04d/t%02d", s.worm_id, s.timepoint);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorCode::kIo, "cannot create directory " + dir.string());
}

straightening::CanonicalGrid grid_from(const RunConfig& cfg) {
  straightening::CanonicalGrid g;
  g.length_px = cfg.get_int("grid_length");
  g.halfwidth_px = cfg.get_int("grid_halfwidth");
  g.validate();
  return g;
}

// Straightened image from a UV field, or an all-zero canvas with a reason.
std::pair<ImageGrid, std::string> straighten_from_uv(const ImageGrid& image, const ImageGrid& u,
                                                     const ImageGrid& v, const ImageGrid& mask,
                                                     const straightening::CanonicalGrid& grid) {
  try {
    auto cl = straightening::centerline_from_uv(u, v, mask);
    cl = straightening::orient_head_tail(cl, u, mask);
    return {straightening::straighten(image, cl, mask, grid), "ok"};
  } catch (const Error& e) {
    return {ImageGrid(grid.rows(), grid.length_px, 0.0), std::string(error_code_name(e.code()))};
  }
}

}  // namespace

std::map<std::string, std::string> defaults_for(const std::string& command) {
  if (command == "synth") {
    Defaults d = {{"out", ""},        {"n_worms", "40"}, {"timepoints", "10"},
                  {"train_fraction", "0.8"}, {"seed", "1"}, {"canvas", "256"},
                  {"centerline_points", "256"}};
    const synth::GenParams p;
    for (const auto& f : kGenFields) d[f.key] = io::format_double(p.*f.member);
    return d;
  }
  if (command == "train")
    return merge({kNetDefaults, kOptimDefaults,
                  {{"data", ""}, {"out", ""}, {"log", ""}, {"model", "coarse"},
                   {"init", "scratch"}, {"init_ckpt", ""}, {"seed", "1"},
                   {"coarse_size", "64"}, {"crop_size", "128"}, {"age_input", "64"},
                   {"mask_mode", "raw_image"}, {"uv_masking", "predicted"},
                   {"noise_sigma", "0.1"}}});
  if (command == "eval")
    return {{"data", ""},      {"split", "val"}, {"coarse_ckpt", ""}, {"fine_ckpt", ""},
            {"age_ckpt", ""},  {"out", ""},      {"summary", ""},     {"threshold", "0.5"},
            {"seed", "1"}};
  if (command == "infer")
    return {{"image", ""},       {"coarse_ckpt", ""},    {"fine_ckpt", ""},
            {"age_ckpt", ""},    {"out_dir", ""},        {"threshold", "0.5"},
            {"seed", "1"},       {"grid_length", "160"}, {"grid_halfwidth", "12"}};
  if (command == "straighten")
    return {{"data", ""},        {"split", "val"},       {"fine_ckpt", ""},
            {"out_dir", ""},     {"limit", "0"},         {"threshold", "0.5"},
            {"grid_length", "160"}, {"grid_halfwidth", "12"}};
  if (command == "maskstudy")
    return merge({kNetDefaults, kOptimDefaults,
                  {{"data", ""}, {"out", ""}, {"work_dir", ""}, {"seed", "1"},
                   {"pretrain_epochs", "30"}, {"crop_size", "128"}, {"age_input", "64"},
                   {"noise_sigma", "0.1"}, {"uv_masking", "predicted"},
                   {"uvreg_ckpt", ""}, {"generic_ckpt", ""}}});
  if (command == "gradcheck") return {{"seed", "7"}, {"out", ""}};
  fail(ErrorCode::kConfig, "unknown command '" + command + "'");
}

synth::GenParams gen_params_from(const RunConfig& cfg) {
  synth::GenParams p;
  p.canvas_height = p.canvas_width = cfg.get_int("canvas");
  p.centerline_points = cfg.get_int("centerline_points");
  for (const auto& f : kGenFields) p.*f.member = cfg.get_double(f.key);
  p.validate();
  return p;
}

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  require_set(cfg, "out");
  synth::DatasetSpec spec;
  spec.params = gen_params_from(cfg);
  spec.n_worms = cfg.get_int("n_worms");
  spec.timepoints = cfg.get_int("timepoints");
  spec.seed = cfg.get_u64("seed");
  require(spec.n_worms >= 2 && spec.timepoints >= 1, ErrorCode::kConfig,
          "need n_worms >= 2 and timepoints >= 1");
  const double fraction = cfg.get_double("train_fraction");
  const fs::path root = cfg.get("out");
  ensure_dir(root);

  const auto samples = synth::generate_dataset(spec);
  std::vector<int> ids;
  for (int i = 0; i < spec.n_worms; ++i) ids.push_back(i);
  const auto split = synth::split_identities(ids, fraction, spec.seed);
  io::Manifest manifest{split.train_ids, split.val_ids, spec.timepoints};
  io::write_dataset(root, samples, manifest, cfg.echo_lines());
  log << "synth: wrote " << samples.size() << " samples (" << split.train_ids.size()
      << " train / " << split.val_ids.size() << " val identities) to " << root.string() << '\n';
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  require_set(cfg, "data");
  require_set(cfg, "out");
  const std::string model = cfg.get("model");
  const auto init = checkpoint::parse_init_mode(cfg.get("init"));
  const std::uint64_t seed = cfg.get_u64("seed");
  const int coarse_size = cfg.get_int("coarse_size");
  const int crop_size = cfg.get_int("crop_size");
  const int age_input = cfg.get_int("age_input");

  HeadSet head;
  int input_size;
  if (model == "coarse") head = HeadSet::Seg, input_size = coarse_size;
  else if (model == "fine") head = HeadSet::SegUV, input_size = crop_size;
  else if (model == "age") head = HeadSet::Age, input_size = age_input;
  else if (model == "denoise") head = HeadSet::Denoise, input_size = age_input;
  else fail(ErrorCode::kConfig, "model must be coarse, fine, age or denoise; got '" + model + "'");
  const NetConfig net_cfg = net_config(cfg, head, input_size);

  std::optional<checkpoint::Checkpoint> src;
  if (init != checkpoint::InitMode::Scratch) {
    require(cfg.is_set("init_ckpt"), ErrorCode::kMissingCheckpoint,
            "init=" + cfg.get("init") + " requires init_ckpt (a " +
                (init == checkpoint::InitMode::UvReg ? "fine" : "denoise") + "-net checkpoint)");
    src = load_checkpoint(cfg, "init_ckpt");
    const std::string expected = init == checkpoint::InitMode::UvReg ? "seg+uv" : "denoise";
    require(config_value(*src, "net.head", "") == expected, ErrorCode::kInvalidArgument,
            "incompatible init checkpoint: " + cfg.get("init") + " needs a " + expected +
                " network");
  }

  const Split split = load_split(cfg.get("data"));
  std::vector<training::Example> train_set, val_set;
  if (head == HeadSet::Seg) {
    train_set = training::coarse_examples(split.train, coarse_size);
    val_set = training::coarse_examples(split.val, coarse_size);
  } else if (head == HeadSet::SegUV) {
    train_set = training::fine_examples(split.train, crop_size);
    val_set = training::fine_examples(split.val, crop_size);
  } else if (head == HeadSet::Age) {
    const auto mode = pipeline::parse_mask_mode(cfg.get("mask_mode"));
    train_set = training::age_examples(split.train, crop_size, mode, age_input, seed);
    val_set = training::age_examples(split.val, crop_size, mode, age_input, seed);
  } else {
    const double sigma = cfg.get_double("noise_sigma");
    train_set = training::denoise_examples(split.train, crop_size, age_input, sigma, seed);
    val_set = training::denoise_examples(split.val, crop_size, age_input, sigma,
                                         synth::mix_seed(seed, 1));
  }

  UNet<float> net(net_cfg, seed);
  const auto report = checkpoint::transfer_encoder(src ? &*src : nullptr, net, init, seed);
  if (init != checkpoint::InitMode::Scratch) {
    log << "train: transferred " << report.transferred << "/" << report.encoder_tensors
        << " encoder tensors";
    for (const auto& name : report.skipped_shape_mismatch) log << " skipped:" << name;
    log << '\n';
  }

  auto opt = train_options(cfg, log, "train[" + model + "]");
  const std::string masking = cfg.get("uv_masking");
  if (masking == "predicted") opt.uv_masking = losses::UVMasking::Predicted;
  else if (masking == "none") opt.uv_masking = losses::UVMasking::None;
  else if (masking == "gt") opt.uv_masking = losses::UVMasking::GroundTruth;
  else fail(ErrorCode::kConfig, "uv_masking must be predicted, none or gt");

  const auto history = training::train(net, train_set, val_set, opt);

  const fs::path out = cfg.get("out");
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  checkpoint::save(out, checkpoint::to_checkpoint(net, prefixed_echo(cfg, "train.")));
  const fs::path log_path = cfg.is_set("log") ? fs::path(cfg.get("log"))
                                               : fs::path(out.string() + ".log.csv");
  std::ofstream csv = open_report(log_path, cfg);
  csv << "epoch,lr,train_loss,val_metric\n";
  for (const auto& e : history)
    csv << e.epoch << ',' << io::format_double(e.lr) << ',' << fmt(e.train_loss) << ','
        << fmt(e.val_metric) << '\n';
  log << "train: wrote " << out.string() << " and " << log_path.string() << '\n';
}

void cmd_eval(const RunConfig& cfg, std::ostream& log) {
  require_set(cfg, "data");
  require_set(cfg, "out");
  const double thr = cfg.get_double("threshold");
  const std::uint64_t seed = cfg.get_u64("seed");
  UNet<float> coarse = checkpoint::model_from_checkpoint(load_checkpoint(cfg, "coarse_ckpt"));
  UNet<float> fine = checkpoint::model_from_checkpoint(load_checkpoint(cfg, "fine_ckpt"));
  std::optional<UNet<float>> age;
  pipeline::MaskMode age_mode = pipeline::MaskMode::RawImage;
  if (cfg.is_set("age_ckpt")) {
    const auto ckpt = load_checkpoint(cfg, "age_ckpt");
    age.emplace(checkpoint::model_from_checkpoint(ckpt));
    age_mode = pipeline::parse_mask_mode(config_value(ckpt, "train.mask_mode", "raw_image"));
  }
  const int coarse_size = coarse.config().input_size;
  const int crop_size = fine.config().input_size;

  const auto samples = load_named_split(cfg.get("data"), cfg.get("split"));
  require(!samples.empty(), ErrorCode::kInvalidArgument, "split has no samples");

  std::ofstream csv = open_report(cfg.get("out"), cfg);
  csv << "sample_id,worm_id,age_gt,age_pred,iou_coarse,iou_fine,uv_abs_err\n";
  double sum_coarse = 0, sum_fine = 0, sum_uv = 0;
  std::vector<double> preds, gts;
  int not_found = 0;
  for (const auto& s : samples) {
    const auto coarse_img = pipeline::downsample_to_coarse(s.image, coarse_size);
    const ImageGrid prob = pipeline::predict_mask_probs(coarse, {&coarse_img.image}).front();
    pipeline::CropWindow window;
    try {
      window = pipeline::locate_crop(prob, thr, coarse_img.scale_row, coarse_img.scale_col,
                                     s.image.height(), s.image.width(), crop_size);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kWormNotFound) throw;
      ++not_found;
      window = pipeline::centered_window(s.image.height() / 2.0, s.image.width() / 2.0,
                                         crop_size, s.image.height(), s.image.width());
    }
    const ImageGrid crop = pipeline::crop_window(s.image, window);
    const ImageGrid gt_mask = pipeline::crop_window(s.mask, window);
    const ImageGrid coarse_up = pipeline::crop_window(
        pipeline::upsample_coarse_mask(prob, s.image.height(), s.image.width(), thr), window);
    const auto fine_pred = pipeline::predict_fine(fine, {&crop}, thr).front();
    const double iou_coarse = pipeline::evaluate_segmentation(coarse_up, gt_mask).iou;
    const double iou_fine = pipeline::evaluate_segmentation(fine_pred.mask, gt_mask).iou;
    double uv = std::nan("");
    if (gt_mask.count_nonzero() > 0)
      uv = pipeline::evaluate_uv(fine_pred.u, fine_pred.v, pipeline::crop_window(s.uv.u, window),
                                 pipeline::crop_window(s.uv.v, window), gt_mask);
    double age_pred = std::nan("");
    if (age) {
      const ImageGrid in = pipeline::prepare_age_input(crop, fine_pred.mask, age_mode,
                                                       synth::mix_seed(seed, s.seed),
                                                       age->config().input_size);
      age_pred = pipeline::predict_ages(*age, {&in}).front();
      preds.push_back(age_pred);
      gts.push_back(s.age_hours);
    }
    sum_coarse += iou_coarse;
    sum_fine += iou_fine;
    sum_uv += std::isfinite(uv) ? uv : 0.0;
    csv << sample_id(s) << ',' << s.worm_id << ',' << fmt(s.age_hours) << ',' << fmt(age_pred)
        << ',' << fmt(iou_coarse) << ',' << fmt(iou_fine) << ',' << fmt(uv) << '\n';
  }

  const double n = static_cast<double>(samples.size());
  const fs::path summary_path = cfg.is_set("summary")
                                    ? fs::path(cfg.get("summary"))
                                    : fs::path(cfg.get("out") + ".summary.csv");
  std::ofstream summary = open_report(summary_path, cfg);
  summary << "metric,value\n"
          << "samples," << samples.size() << '\n'
          << "worm_not_found," << not_found << '\n'
          << "mean_iou_coarse," << fmt(sum_coarse / n) << '\n'
          << "mean_iou_fine," << fmt(sum_fine / n) << '\n'
          << "mean_uv_abs_err," << fmt(sum_uv / n) << '\n';
  if (age) {
    const auto report = pipeline::evaluate_age(preds, gts);
    summary << "age_mae_hours," << fmt(report.mae) << '\n';
    std::ofstream hist = open_report(cfg.get("out") + ".age_hist.csv", cfg);
    hist << "bin_start_hours,gt_count,pred_count\n";
    for (std::size_t b = 0; b < report.hist_gt.size(); ++b)
      hist << fmt(b * report.bin_width) << ',' << report.hist_gt[b] << ','
           << report.hist_pred[b] << '\n';
  }
  log << "eval: " << samples.size() << " samples, coarse IoU " << fmt(sum_coarse / n)
      << ", fine IoU " << fmt(sum_fine / n) << '\n';
}

void cmd_infer(const RunConfig& cfg, std::ostream& log) {
  require_set(cfg, "image");
  require_set(cfg, "out_dir");
  UNet<float> coarse = checkpoint::model_from_checkpoint(load_checkpoint(cfg, "coarse_ckpt"));
  UNet<float> fine = checkpoint::model_from_checkpoint(load_checkpoint(cfg, "fine_ckpt"));
  const auto age_ckpt = load_checkpoint(cfg, "age_ckpt");
  UNet<float> age = checkpoint::model_from_checkpoint(age_ckpt);

  pipeline::PipelineConfig pc;
  pc.coarse_size = coarse.config().input_size;
  pc.crop_size = fine.config().input_size;
  pc.threshold = cfg.get_double("threshold");
  pc.age_mode = pipeline::parse_mask_mode(config_value(age_ckpt, "train.mask_mode", "raw_image"));
  pc.grid = grid_from(cfg);
  pc.seed = cfg.get_u64("seed");

  const ImageGrid image = io::read_pgm(cfg.get("image"));
  const auto r = pipeline::run_full_pipeline(image, coarse, fine, age, pc);

  const fs::path dir = cfg.get("out_dir");
  ensure_dir(dir);
  io::write_pgm16(dir / "coarse_prob.pgm", r.coarse_prob);
  io::write_pgm16(dir / "crop.pgm", r.crop);
  io::write_pgm16(dir / "fine_mask.pgm", r.fine.mask);
  io::write_cguv(dir / "u.cguv", r.fine.u);
  io::write_cguv(dir / "v.cguv", r.fine.v);
  if (r.straightened) io::write_pgm16(dir / "straightened.pgm", r.straightened->image);
  io::write_key_values(dir / "report.txt",
                       {{"window_top", std::to_string(r.window.top)},
                        {"window_left", std::to_string(r.window.left)},
                        {"window_side", std::to_string(r.window.side)},
                        {"age_hours", io::format_double(r.age_hours)},
                        {"straighten", r.straightened ? "ok" : r.straighten_error}},
                       cfg.echo_lines());
  log << "infer: age " << fmt(r.age_hours) << " h, crop at (" << r.window.top << ", "
      << r.window.left << ")\n";
}

void cmd_straighten(const RunConfig& cfg, std::ostream& log) {
  require_set(cfg, "data");
  require_set(cfg, "out_dir");
  UNet<float> fine = checkpoint::model_from_checkpoint(load_checkpoint(cfg, "fine_ckpt"));
  const int crop_size = fine.config().input_size;
  const auto grid = grid_from(cfg);
  const double thr = cfg.get_double("threshold");
  auto samples = load_named_split(cfg.get("data"), cfg.get("split"));
  const int limit = cfg.get_int("limit");
  if (limit > 0 && static_cast<std::size_t>(limit) < samples.size()) samples.resize(limit);

  const fs::path dir = cfg.get("out_dir");
  ensure_dir(dir);
  std::ofstream csv = open_report(dir / "straighten.csv", cfg);
  csv << "sample_id,gt_status,pred_status,mean_abs_diff\n";
  for (const auto& s : samples) {
    const auto w = pipeline::window_around_mask(s.mask, crop_size);
    const ImageGrid crop = pipeline::crop_window(s.image, w);
    const auto [gt_img, gt_status] =
        straighten_from_uv(crop, pipeline::crop_window(s.uv.u, w),
                           pipeline::crop_window(s.uv.v, w), pipeline::crop_window(s.mask, w), grid);
    const auto pred = pipeline::predict_fine(fine, {&crop}, thr).front();
    const auto [pred_img, pred_status] = straighten_from_uv(crop, pred.u, pred.v, pred.mask, grid);

    char stem[48];
    std::snprintf(stem, sizeof(stem), "worm_%04d_t%02d", s.worm_id, s.timepoint);
    io::write_pgm16(dir / (std::string(stem) + "_gt.pgm"), gt_img);
    io::write_pgm16(dir / (std::string(stem) + "_pred.pgm"), pred_img);

    double diff = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt_img.size(); ++i)
      if (gt_img[i] != 0.0 && pred_img[i] != 0.0) {
        diff += std::abs(gt_img[i] - pred_img[i]);
        ++n;
      }
    csv << sample_id(s) << ',' << gt_status << ',' << pred_status << ','
        << fmt(n ? diff / static_cast<double>(n) : std::nan("")) << '\n';
  }
  log << "straighten: " << samples.size() << " samples -> " << dir.string() << '\n';
}

MaskStudyTable cmd_maskstudy(const RunConfig& cfg, std::ostream& log) {
  require_set(cfg, "data");
  require_set(cfg, "out");
  const std::uint64_t seed = cfg.get_u64("seed");
  const int crop_size = cfg.get_int("crop_size");
  const int age_input = cfg.get_int("age_input");
  const fs::path work = cfg.get("work_dir");
  if (!work.empty()) ensure_dir(work);

  // Check every named source checkpoint before any training starts.
  for (const char* key : {"uvreg_ckpt", "generic_ckpt"})
    if (cfg.is_set(key) && !fs::exists(cfg.get(key)))
      fail(ErrorCode::kMissingCheckpoint,
           std::string("missing checkpoint for cell ") +
               (std::string(key) == "uvreg_ckpt" ? "uvreg" : "generic") + "/*: " + cfg.get(key));

  const Split split = load_split(cfg.get("data"));
  RunConfig pre_cfg = cfg;
  pre_cfg.set("epochs", cfg.get("pretrain_epochs"));

  checkpoint::Checkpoint generic;
  if (cfg.is_set("generic_ckpt")) {
    generic = checkpoint::load(cfg.get("generic_ckpt"));
  } else {
    const double sigma = cfg.get_double("noise_sigma");
    UNet<float> net(net_config(cfg, HeadSet::Denoise, age_input), seed);
    training::train(net,
                    training::denoise_examples(split.train, crop_size, age_input, sigma, seed),
                    training::denoise_examples(split.val, crop_size, age_input, sigma,
                                               synth::mix_seed(seed, 1)),
                    train_options(pre_cfg, log, "maskstudy[generic]"));
    generic = checkpoint::to_checkpoint(net, prefixed_echo(cfg, "maskstudy."));
    if (!work.empty()) checkpoint::save(work / "generic.cgsr", generic);
  }

  checkpoint::Checkpoint uvreg;
  if (cfg.is_set("uvreg_ckpt")) {
    uvreg = checkpoint::load(cfg.get("uvreg_ckpt"));
  } else {
    UNet<float> net(net_config(cfg, HeadSet::SegUV, crop_size), seed);
    auto opt = train_options(pre_cfg, log, "maskstudy[uvreg]");
    const std::string masking = cfg.get("uv_masking");
    opt.uv_masking = masking == "none" ? losses::UVMasking::None : losses::UVMasking::Predicted;
    training::train(net, training::fine_examples(split.train, crop_size),
                    training::fine_examples(split.val, crop_size), opt);
    uvreg = checkpoint::to_checkpoint(net, prefixed_echo(cfg, "maskstudy."));
    if (!work.empty()) checkpoint::save(work / "uvreg.cgsr", uvreg);
  }

  MaskStudyTable table;
  const checkpoint::InitMode inits[] = {checkpoint::InitMode::Scratch,
                                        checkpoint::InitMode::Generic,
                                        checkpoint::InitMode::UvReg};
  for (auto init : inits) table.inits.push_back(checkpoint::init_mode_name(init));
  for (auto mode : pipeline::kAllMaskModes) table.modes.push_back(pipeline::mask_mode_name(mode));
  table.mae.assign(3, std::vector<double>(table.modes.size(), 0.0));

  for (std::size_t m = 0; m < table.modes.size(); ++m) {
    const auto mode = pipeline::kAllMaskModes[m];
    const auto train_set = training::age_examples(split.train, crop_size, mode, age_input, seed);
    const auto val_set = training::age_examples(split.val, crop_size, mode, age_input, seed);
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string cell = table.inits[i] + "/" + table.modes[m];
      UNet<float> net(net_config(cfg, HeadSet::Age, age_input), seed);
      const checkpoint::Checkpoint* src =
          inits[i] == checkpoint::InitMode::Generic ? &generic
          : inits[i] == checkpoint::InitMode::UvReg ? &uvreg
                                                    : nullptr;
      checkpoint::transfer_encoder(src, net, inits[i], seed);
      training::train(net, train_set, {}, train_options(cfg, log, "maskstudy[" + cell + "]"));
      table.mae[i][m] = training::evaluate(net, val_set);
      log << "maskstudy: " << cell << " val MAE " << fmt(table.mae[i][m]) << " h\n" << std::flush;
    }
  }

  std::ofstream csv = open_report(cfg.get("out"), cfg);
  csv << "init";
  for (const auto& name : table.modes) csv << ',' << name;
  csv << '\n';
  for (std::size_t i = 0; i < table.inits.size(); ++i) {
    csv << table.inits[i];
    for (double v : table.mae[i]) csv << ',' << fmt(v);
    csv << '\n';
  }
  return table;
}

bool cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
  const auto results = gradcheck::standard_suite(cfg.get_u64("seed"));
  bool ok = true;
  std::ofstream report;
  if (cfg.is_set("out")) {
    report = open_report(cfg.get("out"), cfg);
    report << "check,entries,max_rel_error,tolerance,status\n";
  }
  for (const auto& r : results) {
    ok = ok && r.passed;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s entries=%-5zu max_rel_err=%.3e tol=%.0e %s",
                  r.name.c_str(), r.checked, r.max_error, r.tolerance,
                  r.passed ? "PASS" : "FAIL");
    log << buf << '\n';
    if (report.is_open())
      report << r.name << ',' << r.checked << ',' << r.max_error << ',' << r.tolerance << ','
             << (r.passed ? "pass" : "fail") << '\n';
  }
  return ok;
}

namespace {

constexpr const char* kUsage =
    "usage: celeganser <command> [config=<file>] [key=value ...]\n"
    "commands: synth train eval infer straighten maskstudy gradcheck\n";

void apply_thread_cap() {
  const char* env = std::getenv("CELEGANSER_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  require(end != env && *end == '\0' && n >= 1, ErrorCode::kConfig,
          std::string("CELEGANSER_THREADS must be a positive integer, got '") + env + "'");
  omp_set_num_threads(static_cast<int>(n));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << kUsage;
    return 2;
  }
  const std::string& command = args.front();
  if (command == "help" || command == "--help" || command == "-h") {
    out << kUsage;
    return 0;
  }
  try {
    apply_thread_cap();
    const RunConfig cfg(defaults_for(command),
                        std::vector<std::string>(args.begin() + 1, args.end()));
    if (command == "synth") cmd_synth(cfg, out);
    else if (command == "train") cmd_train(cfg, out);
    else if (command == "eval") cmd_eval(cfg, out);
    else if (command == "infer") cmd_infer(cfg, out);
    else if (command == "straighten") cmd_straighten(cfg, out);
    else if (command == "maskstudy") cmd_maskstudy(cfg, out);
    else if (command == "gradcheck") {
      if (!cmd_gradcheck(cfg, out)) {
        err << "error gradcheck_failed: at least one gradient check exceeded its tolerance\n";
        return 1;
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error " << error_code_name(e.code()) << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error internal: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace celeganser::commands
