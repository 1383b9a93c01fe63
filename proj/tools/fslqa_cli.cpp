#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fslqa/harness.hpp"
#include "fslqa/png_io.hpp"
#include "fslqa/review_service.hpp"
#include "fslqa/synth.hpp"

namespace fs = std::filesystem;
using namespace fslqa;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

// Experiment flags shared by the stack-consuming subcommands; each overrides the config file.
struct ExperimentFlags {
  std::string stack;
  std::string model;
  std::string train_label;
  std::string rps_dir;
  std::string model_path;
  std::optional<int> workers;
  std::optional<int> repetitions;
  std::optional<int> reps;
  std::string kappas;
  bool write_noisy = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--stack", stack, "Stack directory");
    cmd->add_option("--model", model, "baseline | paresn | external");
    cmd->add_option("--train-label", train_label, "G1 | G2 | G1andG2");
    cmd->add_option("--rps-dir", rps_dir, "Directory of <id>.P{1,2,3}.png for the external model");
    cmd->add_option("--model-path", model_path, "Saved model to use instead of training");
    cmd->add_option("--workers", workers, "Worker threads");
  }
};

ExperimentConfig resolve(const GlobalOptions& g, const ExperimentFlags& f) {
  KeyValueConfig kv = g.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config);
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv.set(key, v);
  };
  put("stack", f.stack);
  put("model", f.model);
  put("train_label", f.train_label);
  put("rps_dir", f.rps_dir);
  put("model_path", f.model_path);
  put("out", g.out);
  put("kappas", f.kappas);
  if (g.seed) kv.set("seed", std::to_string(*g.seed));
  if (f.workers) kv.set("workers", std::to_string(*f.workers));
  if (f.repetitions) kv.set("repetitions", std::to_string(*f.repetitions));
  if (f.reps) kv.set("baseline_reps", std::to_string(*f.reps));
  if (f.write_noisy) kv.set("write_noisy", "true");
  return ExperimentConfig::from_config(kv);
}

void print_file(const fs::path& p) {
  std::ifstream in(p);
  std::cout << in.rdbuf();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot label quality assurance toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "key = value configuration file");
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--out", g.out, "Output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated stack");
  SynthConfig sc;
  synth->add_option("--images", sc.num_images, "Number of images")->capture_default_str();
  synth->add_option("--size", sc.image_size, "Image side in pixels")->capture_default_str();
  synth->add_option("--speckle", sc.speckle_sigma, "Speckle sigma")->capture_default_str();
  synth->add_option("--g1-dilate", sc.g1.dilate_px, "G1 annotator dilation (px)");
  synth->add_option("--g2-dilate", sc.g2.dilate_px, "G2 annotator dilation (px)");
  synth->add_option("--g1-miss", sc.g1.miss_small_below_px, "G1 misses cysts smaller than this area");
  synth->add_option("--g2-miss", sc.g2.miss_small_below_px, "G2 misses cysts smaller than this area");
  synth->add_option("--stack-id", sc.stack_id, "Stack id")->capture_default_str();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Write the preprocessed planes of every image");
  std::string pre_stack;
  int bh_sd = BottomHatParams{}.s_d;
  pre->add_option("--stack", pre_stack, "Stack directory")->required();
  pre->add_option("--bottom-hat-sd", bh_sd, "Largest bottom-hat radius")->capture_default_str();

  ExperimentFlags fit_flags, predict_flags, seg_flags, rcap_flags, select_flags;
  auto* fit = app.add_subcommand("fit", "Train a proposal model and save it");
  fit_flags.attach(fit);
  auto* predict = app.add_subcommand("predict", "Write regional proposals for every image");
  predict_flags.attach(predict);
  auto* seg = app.add_subcommand("eval-seg", "Segmentation metrics of P1..P3 against each label");
  seg_flags.attach(seg);
  seg->add_option("--reps", seg_flags.reps, "Baseline protocol: refit on one random training image per repetition");
  auto* ercap = app.add_subcommand("eval-rcap", "True label versus RCAP-corrupted label selection");
  rcap_flags.attach(ercap);
  ercap->add_option("--repetitions", rcap_flags.repetitions, "Repetitions per image");
  ercap->add_option("--kappas", rcap_flags.kappas, "Comma-separated kappa values");
  ercap->add_flag("--write-noisy", rcap_flags.write_noisy, "Write every corrupted label under <out>/noisy/");
  auto* select = app.add_subcommand("select", "Choose between G1 and G2 and build the manual queue");
  select_flags.attach(select);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the manual review queue");
  std::string queue_path, static_dir, log_path, host = "127.0.0.1";
  int port = kDefaultReviewPort;
  serve->add_option("--queue", queue_path, "queue.json written by select")->required();
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--static", static_dir, "Directory served at /");
  serve->add_option("--log", log_path, "Decision log (default: review_log.jsonl next to the queue)");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = g.out.empty() ? fs::path("out") : fs::path(g.out);

    if (*synth) {
      if (g.seed) sc.rng_seed = *g.seed;
      write_synthetic_stack(out, generate_synthetic_stack(sc));
      std::cout << "wrote " << sc.num_images << " images to " << out << "\n";
    } else if (*pre) {
      const auto records = load_stack(pre_stack);
      for (const auto& rec : records) {
        const auto p = preprocess(rec.image, BottomHatParams{bh_sd});
        write_gray_png(out / (rec.id + ".base.png"), p.base);
        write_gray_png(out / (rec.id + ".bottom_hat.png"), p.bottom_hat);
        write_gray_png(out / (rec.id + ".grad_mag.png"), p.grad_mag);
        write_gray_png(out / (rec.id + ".grad_dir.png"), p.grad_dir);
        write_mask_png(out / (rec.id + ".roi.png"), p.roi);
      }
      std::cout << "preprocessed " << records.size() << " images into " << out << "\n";
    } else if (*fit) {
      const ExperimentConfig cfg = resolve(g, fit_flags);
      const PreparedStack stack = prepare_stack(cfg.stack_dir, cfg.bottom_hat);
      const ProposalModel model = train_model(cfg, stack);
      const fs::path file = cfg.out_dir / (cfg.model == ModelKind::Baseline ? "baseline.json" : "model.paresn");
      model.save(file);
      write_text(cfg.out_dir / "model_summary.json", model.describe().dump(2) + "\n");
      write_run_manifest(cfg.out_dir, cfg, "fit", stack.dropped_ids);
      std::cout << "saved " << file << "\n";
    } else if (*predict) {
      const ExperimentConfig cfg = resolve(g, predict_flags);
      const PreparedStack stack = prepare_stack(cfg.stack_dir, cfg.bottom_hat);
      const ProposalModel model = obtain_model(cfg, stack);
      for (std::size_t i = 0; i < stack.records.size(); ++i) {
        const auto rps = model.propose(stack, i);
        for (int k = 0; k < 3; ++k)
          write_mask_png(cfg.out_dir / (stack.records[i].id + ".P" + std::to_string(k + 1) + ".png"), rps[k]);
      }
      write_run_manifest(cfg.out_dir, cfg, "predict", stack.dropped_ids);
      std::cout << "wrote proposals for " << stack.records.size() << " images to " << cfg.out_dir << "\n";
    } else if (*seg) {
      const ExperimentConfig cfg = resolve(g, seg_flags);
      run_segmentation_eval(cfg);
      print_file(cfg.out_dir / "tables.txt");
    } else if (*ercap) {
      const ExperimentConfig cfg = resolve(g, rcap_flags);
      run_rcap_eval(cfg);
      print_file(cfg.out_dir / "tables.txt");
    } else if (*select) {
      const ExperimentConfig cfg = resolve(g, select_flags);
      run_selection(cfg);
      print_file(cfg.out_dir / "tables.txt");
    } else if (*serve) {
      std::optional<fs::path> log = log_path.empty() ? std::nullopt : std::optional<fs::path>(log_path);
      std::optional<fs::path> stat = static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir);
      ReviewServer server(QueueStore::load(queue_path), log, stat);
      const int bound = server.start(host, port);
      std::cout << "serving " << server.pending().size() << " pending items on http://" << host << ":" << bound
                << "\n"
                << std::flush;
      server.wait();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
