// st3d — training and inference for spatio-temporal 3D residual networks.
//
// Subcommands: train, eval, predict, inspect, gradcheck.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure,
// 3 gradcheck (verification) failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "st3d/checkpoint.hpp"
#include "st3d/config.hpp"
#include "st3d/gradcheck.hpp"
#include "st3d/inference.hpp"
#include "st3d/kernels.hpp"

namespace fs = std::filesystem;
using namespace st3d;

namespace {

struct CommonFlags {
  std::string config_path;
  config::Overrides overrides;
  std::string lr_raw;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool with_train_flags) {
  cmd->add_option("--config", flags.config_path, "run config file");
  auto opt = [&](const char* name, auto& slot, const char* help) {
    cmd->add_option_function<std::decay_t<decltype(*slot)>>(
        name,
        [&slot](const auto& v) { slot = v; },
        help);
  };
  opt("--depth", flags.overrides.depth, "network depth: 18, 34, or custom");
  opt("--classes", flags.overrides.classes, "number of classes");
  opt("--root", flags.overrides.root, "dataset root directory");
  opt("--manifest", flags.overrides.manifest, "dataset manifest file");
  opt("--seed", flags.overrides.seed, "rng seed");
  opt("--out", flags.overrides.out_dir, "output directory");
  opt("--threads", flags.overrides.threads, "worker threads for bulk kernels");
  if (with_train_flags) opt("--lr", flags.overrides.lr, "initial learning rate");
}

config::RunConfig resolve_config(const CommonFlags& flags) {
  config::RunConfig cfg;
  if (!flags.config_path.empty())
    cfg = config::parse_config_file(flags.config_path);
  config::apply_overrides(cfg, flags.overrides);
  cfg.train.seed = cfg.seed;
  cfg.validate();
  kernels::set_num_threads(cfg.threads);
  return cfg;
}

void append_metrics(const std::string& path, int64_t epoch, double train_loss,
                    double train_acc, double val_loss, double val_acc,
                    double lr) {
  const bool fresh = !fs::exists(path);
  std::ofstream os(path, std::ios::app);
  ST3D_CHECK(os.good(), "metrics log: cannot open " << path);
  if (fresh)
    os << "# epoch\ttrain_loss\ttrain_clip_acc\tval_loss\tval_clip_acc\tlr\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%lld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n",
                static_cast<long long>(epoch), train_loss, train_acc, val_loss,
                val_acc, lr);
  os << line;
}

int cmd_train(const CommonFlags& flags, const std::string& resume_path) {
  config::RunConfig cfg = resolve_config(flags);
  ST3D_CONFIG_CHECK(!cfg.root.empty() && !cfg.manifest.empty(),
                    "train: --root and --manifest (or a config file) required");

  auto manifest = data::load_manifest(cfg.manifest, cfg.root);
  data::validate_frames(manifest, cfg.frame_height);
  ST3D_CONFIG_CHECK(manifest.num_classes() == cfg.classes,
                    "train: manifest lists " << manifest.num_classes()
                                             << " classes, config expects "
                                             << cfg.classes);
  cfg.aug.mean = manifest.mean;

  std::optional<data::DatasetManifest> val;
  if (!cfg.val_manifest.empty()) {
    val = data::load_manifest(cfg.val_manifest, cfg.root);
    data::validate_frames(*val, cfg.frame_height);
  }

  Rng rng(cfg.seed);
  resnet::Network<float> net(cfg.arch_spec(), rng);
  train::SgdOptimizer<float> opt(net, cfg.train);

  const auto summary = resnet::summarize(cfg.arch_spec());
  std::cout << "parameters: " << net.param_count() << " (table total "
            << summary.total_params << ")\n";

  fs::create_directories(cfg.out_dir);
  const std::string log_path = cfg.out_dir + "/metrics.tsv";
  const std::string ckpt_path = cfg.out_dir + "/last.ckpt";

  int64_t start_epoch = 0;
  if (!resume_path.empty()) {
    start_epoch = train::load_checkpoint(resume_path, net, opt, rng);
    std::cout << "resumed from " << resume_path << " at epoch " << start_epoch
              << "\n";
  }

  data::ClipPipeline pipeline(manifest, cfg.aug, cfg.train.batch_size);
  const data::AugmentConfig val_cfg = cfg.aug;  // training-set mean for both

  for (int64_t epoch = start_epoch; epoch < cfg.train.max_epochs; ++epoch) {
    auto stats = train::train_epoch(net, pipeline.epoch(rng), opt);

    // Without a validation split the schedule tracks the training loss.
    double val_loss = stats.loss, val_acc = stats.accuracy;
    if (val) {
      double loss_sum = 0.0;
      int64_t correct = 0, clips = 0;
      for (size_t vi = 0; vi < val->videos.size(); ++vi) {
        const auto& video = val->videos[vi];
        const auto windows =
            infer::split_windows(video.frame_count, val_cfg.clip_len);
        const auto fetch = data::file_frame_fetch(*val, static_cast<int64_t>(vi));
        for (int64_t s : windows) {
          Tensor<float> clip = data::center_clip(
              fetch, data::clip_indices(s, video.frame_count, val_cfg.clip_len),
              val_cfg);
          Shape bs{1};
          bs.insert(bs.end(), clip.shape().begin(), clip.shape().end());
          Tensor<float> batch(bs, std::vector<float>(
                                      clip.data(), clip.data() + clip.numel()));
          Tensor<float> logits = net.forward(batch, nn::Mode::eval);
          auto xent = nn::softmax_cross_entropy(logits, {video.class_idx});
          loss_sum += xent.loss;
          int64_t arg = 0;
          for (int64_t j = 1; j < logits.extent(1); ++j)
            if (logits[j] > logits[arg]) arg = j;
          if (arg == video.class_idx) correct++;
          clips++;
        }
      }
      val_loss = loss_sum / std::max<int64_t>(1, clips);
      val_acc = static_cast<double>(correct) / std::max<int64_t>(1, clips);
    }

    opt.observe_val_loss(val_loss);
    append_metrics(log_path, epoch + 1, stats.loss, stats.accuracy, val_loss,
                   val_acc, opt.lr());
    std::cout << "epoch " << epoch + 1 << ": train loss " << stats.loss
              << ", train clip acc " << stats.accuracy << ", lr " << opt.lr()
              << "\n";

    if ((epoch + 1) % cfg.checkpoint_every == 0 ||
        epoch + 1 == cfg.train.max_epochs)
      train::save_checkpoint(ckpt_path, net, opt, epoch + 1, rng);
  }
  std::cout << "training done; checkpoint at " << ckpt_path << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& ckpt_path) {
  config::RunConfig cfg = resolve_config(flags);
  ST3D_CONFIG_CHECK(!cfg.root.empty() && !cfg.manifest.empty(),
                    "eval: --root and --manifest (or a config file) required");
  ST3D_CONFIG_CHECK(!ckpt_path.empty(), "eval: --checkpoint required");

  auto manifest = data::load_manifest(cfg.manifest, cfg.root);
  data::validate_frames(manifest, cfg.frame_height);
  cfg.aug.mean = manifest.mean;

  Rng rng(cfg.seed);
  resnet::Network<float> net(cfg.arch_spec(), rng);
  train::SgdOptimizer<float> opt(net, cfg.train);
  train::load_checkpoint(ckpt_path, net, opt, rng);

  const auto m = infer::evaluate_split(net, manifest, cfg.aug);
  char line[160];
  std::snprintf(line, sizeof(line),
                "videos %lld  top-1 %.1f  top-5 %.1f  average %.1f\n",
                static_cast<long long>(m.videos), m.top1, m.top5, m.average);
  std::cout << line;
  return 0;
}

int cmd_predict(const CommonFlags& flags, const std::string& ckpt_path,
                const std::string& out_path) {
  config::RunConfig cfg = resolve_config(flags);
  ST3D_CONFIG_CHECK(!cfg.root.empty() && !cfg.manifest.empty(),
                    "predict: --root and --manifest (or a config file) required");
  ST3D_CONFIG_CHECK(!ckpt_path.empty(), "predict: --checkpoint required");

  auto manifest = data::load_manifest(cfg.manifest, cfg.root);
  data::validate_frames(manifest, cfg.frame_height);
  cfg.aug.mean = manifest.mean;

  Rng rng(cfg.seed);
  resnet::Network<float> net(cfg.arch_spec(), rng);
  train::SgdOptimizer<float> opt(net, cfg.train);
  train::load_checkpoint(ckpt_path, net, opt, rng);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    ST3D_CHECK(file.good(), "predict: cannot open " << out_path);
    os = &file;
  }
  // One record per video: id, clip count, then top-5 "class=prob" pairs.
  for (size_t vi = 0; vi < manifest.videos.size(); ++vi) {
    const auto pred =
        infer::predict_video(net, manifest, static_cast<int64_t>(vi), cfg.aug);
    *os << manifest.videos[vi].path << "\t" << pred.clip_count;
    for (const auto& [cls, p] : pred.topk) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "\t%s=%.6f",
                    manifest.classes[static_cast<size_t>(cls)].c_str(), p);
      *os << buf;
    }
    *os << "\n";
  }
  return 0;
}

int cmd_inspect(const CommonFlags& flags) {
  config::RunConfig cfg = resolve_config(flags);
  const auto summary = resnet::summarize(cfg.arch_spec());
  std::cout << format_summary(summary);
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
  config::RunConfig cfg = resolve_config(flags);
  gradcheck::Options opts;
  opts.seed = cfg.seed == 0 ? 1 : cfg.seed;
  const auto results = gradcheck::run_all(opts);
  std::cout << gradcheck::format_report(results);
  return gradcheck::all_passed(results) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal 3D residual network engine"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, predict_flags, inspect_flags,
      gradcheck_flags;
  std::string resume_path, eval_ckpt, predict_ckpt, predict_out;

  auto* train_cmd = app.add_subcommand("train", "train a network");
  add_common_flags(train_cmd, train_flags, true);
  train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common_flags(eval_cmd, eval_flags, false);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file");

  auto* predict_cmd = app.add_subcommand("predict", "write per-video predictions");
  add_common_flags(predict_cmd, predict_flags, false);
  predict_cmd->add_option("--checkpoint", predict_ckpt, "checkpoint file");
  predict_cmd->add_option("--out-file", predict_out, "prediction output file");

  auto* inspect_cmd = app.add_subcommand("inspect", "print the layer table");
  add_common_flags(inspect_cmd, inspect_flags, false);

  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common_flags(gradcheck_cmd, gradcheck_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags, resume_path);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_ckpt);
    if (predict_cmd->parsed())
      return cmd_predict(predict_flags, predict_ckpt, predict_out);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_flags);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_flags);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
