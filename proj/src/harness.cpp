#include "fslqa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "fslqa/json_util.hpp"
#include "fslqa/metrics.hpp"
#include "fslqa/png_io.hpp"
#include "fslqa/review_service.hpp"

namespace fs = std::filesystem;

namespace fslqa {

namespace {

constexpr std::array<const char*, 3> kModelNames{"baseline", "paresn", "external"};
constexpr std::array<const char*, 3> kTrainLabelNames{"G1", "G2", "G1andG2"};

// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(1, workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

BinaryMask resize_mask(const BinaryMask& m, int side) {
  if (m.width() == side && m.height() == side) return m;
  return threshold_above(resize_bilinear(to_gray(m), side, side), 0.5 - 1e-12);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    KeyValueConfig one;
    one.set(key, item.substr(item.find_first_not_of(' ') == std::string::npos ? 0 : item.find_first_not_of(' ')));
    out.push_back(one.get_int(key, 0));
  }
  if (out.empty()) throw Error("config: empty list for '" + key + "'");
  return out;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

const BinaryMask& evaluation_roi(const PreprocessedPlanes& planes, BinaryMask& fallback) {
  if (count(planes.roi) > 0) return planes.roi;
  fallback = BinaryMask(planes.roi.width(), planes.roi.height(), 1);
  return fallback;
}

}  // namespace

std::string to_string(ModelKind k) { return kModelNames[static_cast<int>(k)]; }
ModelKind model_kind_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kModelNames.size(); ++i)
    if (s == kModelNames[i]) return static_cast<ModelKind>(i);
  throw Error("unknown model kind: " + s + " (expected baseline, paresn or external)");
}
std::string to_string(TrainLabel t) { return kTrainLabelNames[static_cast<int>(t)]; }
TrainLabel train_label_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kTrainLabelNames.size(); ++i)
    if (s == kTrainLabelNames[i]) return static_cast<TrainLabel>(i);
  throw Error("unknown train label: " + s + " (expected G1, G2 or G1andG2)");
}

void ExperimentConfig::validate() const {
  tlsa.validate();
  esn.validate();
  if (rcap) {
    RcapConfig probe = *rcap;
    probe.kappa = 1;
    probe.validate();
  }
  for (int k : kappas)
    if (k < 1 || k > 4) throw Error("kappa values must lie in 1..4");
  if (repetitions < 1) throw Error("repetitions must be >= 1");
  if (workers < 1) throw Error("workers must be >= 1");
  if (baseline_reps < 1) throw Error("baseline_reps must be >= 1");
  if (bottom_hat.s_d < 2) throw Error("bottom_hat_sd must be >= 2");
}

ExperimentConfig ExperimentConfig::from_config(const KeyValueConfig& kv) {
  kv.require_known({"stack", "model", "train_label", "delta1", "delta2", "delta3", "tlsa_w", "rcap_w",
                    "rcap_offset", "kappas", "repetitions", "out", "seed", "workers", "esn.m",
                    "esn.alpha", "esn.lambda", "esn.spectral_radius", "esn.sparsity", "esn.w_m",
                    "esn.branches", "esn.seed", "esn.stop_mean", "esn.stop_std", "esn.stop_window",
                    "esn.max_training_images", "bottom_hat_sd", "baseline_reps", "rps_dir", "model_path",
                    "write_noisy"});
  ExperimentConfig c;
  c.stack_dir = kv.get_string("stack", "");
  c.model = model_kind_from_string(kv.get_string("model", "paresn"));
  c.train_label = train_label_from_string(kv.get_string("train_label", "G1"));
  c.tlsa.delta1 = kv.get_double("delta1", c.tlsa.delta1);
  c.tlsa.delta2 = kv.get_double("delta2", c.tlsa.delta2);
  c.tlsa.delta3 = kv.get_double("delta3", c.tlsa.delta3);
  c.tlsa.w = kv.get_int("tlsa_w", c.tlsa.w);
  RcapConfig rc;
  rc.w = kv.get_int("rcap_w", rc.w);
  rc.offset_paste = kv.get_bool("rcap_offset", false);
  c.rcap = rc;
  if (kv.has("kappas")) c.kappas = parse_int_list("kappas", kv.get_string("kappas", ""));
  c.repetitions = kv.get_int("repetitions", c.repetitions);
  c.out_dir = kv.get_string("out", c.out_dir.string());
  c.rng_seed = kv.get_u64("seed", c.rng_seed);
  c.workers = kv.get_int("workers", c.workers);
  c.esn.reservoir_size = kv.get_int("esn.m", c.esn.reservoir_size);
  c.esn.alpha = kv.get_double("esn.alpha", c.esn.alpha);
  c.esn.lambda = kv.get_double("esn.lambda", c.esn.lambda);
  c.esn.spectral_radius = kv.get_double("esn.spectral_radius", c.esn.spectral_radius);
  c.esn.sparsity = kv.get_double("esn.sparsity", c.esn.sparsity);
  c.esn.window_side = kv.get_int("esn.w_m", c.esn.window_side);
  c.esn.branches = kv.get_int("esn.branches", c.esn.branches);
  c.esn.rng_seed = kv.get_u64("esn.seed", c.esn.rng_seed);
  c.esn.stop_mean = kv.get_double("esn.stop_mean", c.esn.stop_mean);
  c.esn.stop_std = kv.get_double("esn.stop_std", c.esn.stop_std);
  c.esn.stop_window = kv.get_int("esn.stop_window", c.esn.stop_window);
  c.esn.max_training_images = kv.get_int("esn.max_training_images", c.esn.max_training_images);
  c.bottom_hat.s_d = kv.get_int("bottom_hat_sd", c.bottom_hat.s_d);
  c.baseline_reps = kv.get_int("baseline_reps", c.baseline_reps);
  c.write_noisy = kv.get_bool("write_noisy", c.write_noisy);
  c.external_rps_dir = kv.get_string("rps_dir", "");
  c.model_path = kv.get_string("model_path", "");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

std::size_t PreparedStack::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].id == id) return i;
  throw Error("unknown image id: " + id);
}

PreparedStack prepare_stack(const fs::path& dir, const BottomHatParams& bh, int side) {
  auto annotated = drop_unannotated(load_stack(dir));
  PreparedStack out;
  out.dropped_ids = std::move(annotated.dropped_ids);
  out.records = std::move(annotated.kept);
  out.planes.resize(out.records.size());
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    auto& rec = out.records[i];
    out.planes[i] = preprocess(rec.image, bh, side);
    rec.image = out.planes[i].denoised;
    for (auto& [name, mask] : rec.labels) mask = resize_mask(mask, side);
    const fs::path gt = dir / (rec.id + ".GT.png");
    if (fs::exists(gt)) out.ground_truth.emplace(rec.id, resize_mask(read_mask_png(gt), side));
  }
  out.split = make_split(out.records);
  return out;
}

BinaryMask training_mask(const ImageRecord& rec, TrainLabel label) {
  switch (label) {
    case TrainLabel::G1: return rec.g1();
    case TrainLabel::G2: return rec.g2();
    case TrainLabel::G1andG2: return mask_and(rec.g1(), rec.g2());
  }
  throw Error("invalid train label");
}

std::map<std::string, RegionalProposals> ingest_external_rps(const fs::path& dir,
                                                             const std::vector<ImageRecord>& records) {
  std::map<std::string, RegionalProposals> out;
  for (const auto& rec : records) {
    RegionalProposals rps;
    for (int i = 0; i < 3; ++i) {
      const fs::path p = dir / (rec.id + ".P" + std::to_string(i + 1) + ".png");
      if (!fs::exists(p)) throw Error("missing proposal P" + std::to_string(i + 1) + " for id " + rec.id + ": " + p.string());
      rps[i] = read_mask_png(p);
      if (!rps[i].same_shape(rec.image))
        throw Error("proposal P" + std::to_string(i + 1) + " for id " + rec.id + " has size " +
                    std::to_string(rps[i].width()) + "x" + std::to_string(rps[i].height()) +
                    ", expected " + std::to_string(rec.image.width()) + "x" +
                    std::to_string(rec.image.height()));
    }
    out.emplace(rec.id, std::move(rps));
  }
  return out;
}

// ---------------------------------------------------------------------------

RegionalProposals ProposalModel::propose(const PreparedStack& stack, std::size_t index) const {
  switch (kind) {
    case ModelKind::Baseline: return predict_baseline(*baseline, stack.planes[index]);
    case ModelKind::ParEsn: return paresn->clone_for_inference().predict(stack.planes[index]);
    case ModelKind::External: {
      const auto it = external.find(stack.records[index].id);
      if (it == external.end()) throw Error("no external proposals for id " + stack.records[index].id);
      return it->second;
    }
  }
  throw Error("invalid model kind");
}

void ProposalModel::save(const fs::path& path) const {
  switch (kind) {
    case ModelKind::Baseline:
      write_text(path, to_json(*baseline).dump(2) + "\n");
      return;
    case ModelKind::ParEsn:
      paresn->save(path);
      return;
    case ModelKind::External:
      throw Error("external proposals are not a trainable model");
  }
}

nlohmann::json ProposalModel::describe() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  if (baseline) {
    j["s_d"] = baseline->s_d;
    j["theta"] = baseline->theta;
    j["auc"] = baseline->auc;
  }
  if (paresn) {
    j["ssim_history"] = paresn->ssim_history();
    j["windows_trained"] = paresn->windows_trained();
    j["images_consumed"] = paresn->images_consumed();
  }
  if (paresn_log) j["ssim_converged"] = paresn_log->ssim_converged;
  if (kind == ModelKind::External) j["images"] = external.size();
  return j;
}

ProposalModel train_model(const ExperimentConfig& cfg, const PreparedStack& stack) {
  ProposalModel m;
  m.kind = cfg.model;
  std::vector<BinaryMask> targets;
  std::vector<std::size_t> idx;
  for (const auto& id : stack.split.train_ids) {
    idx.push_back(stack.index_of(id));
    targets.push_back(training_mask(stack.records[idx.back()], cfg.train_label));
  }
  switch (cfg.model) {
    case ModelKind::Baseline: {
      std::vector<BaselineSample> samples;
      for (std::size_t k = 0; k < idx.size(); ++k) samples.push_back({stack.planes[idx[k]], targets[k]});
      m.baseline = fit_baseline(samples);
      break;
    }
    case ModelKind::ParEsn: {
      std::vector<TrainingImage> images;
      for (std::size_t k = 0; k < idx.size(); ++k) images.push_back({stack.planes[idx[k]], targets[k]});
      ParEsnTrainingLog log;
      m.paresn = fit_paresn(cfg.esn, images, &log);
      m.paresn_log = log;
      break;
    }
    case ModelKind::External:
      if (cfg.external_rps_dir.empty()) throw Error("model 'external' needs rps_dir");
      m.external = ingest_external_rps(cfg.external_rps_dir, stack.records);
      break;
  }
  return m;
}

ProposalModel load_model(const ExperimentConfig& cfg, const PreparedStack& stack) {
  ProposalModel m;
  m.kind = cfg.model;
  switch (cfg.model) {
    case ModelKind::Baseline: {
      std::ifstream in(cfg.model_path);
      if (!in) throw Error("cannot open baseline model: " + cfg.model_path.string());
      try {
        m.baseline = baseline_from_json(nlohmann::json::parse(in));
      } catch (const nlohmann::json::parse_error& e) {
        throw Error("malformed baseline model: " + std::string(e.what()));
      }
      break;
    }
    case ModelKind::ParEsn:
      m.paresn = ParEsn::load(cfg.model_path);
      break;
    case ModelKind::External:
      m.external = ingest_external_rps(cfg.model_path, stack.records);
      break;
  }
  return m;
}

ProposalModel obtain_model(const ExperimentConfig& cfg, const PreparedStack& stack) {
  return cfg.model_path.empty() ? train_model(cfg, stack) : load_model(cfg, stack);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t v : {a, b, c}) h = mix(h ^ mix(v));
  return h;
}

// ---------------------------------------------------------------------------
// Segmentation

SegmentationReport evaluate_segmentation(const ExperimentConfig& cfg, const PreparedStack& stack,
                                         const ProposalModel& model) {
  std::vector<std::size_t> test;
  for (const auto& id : stack.split.test_ids) test.push_back(stack.index_of(id));
  if (test.empty()) throw Error("no test images");

  std::vector<std::string> variants{"G1", "G2", "G1andG2"};
  const bool have_gt = std::all_of(test.begin(), test.end(), [&](std::size_t i) {
    return stack.ground_truth.count(stack.records[i].id) != 0;
  });
  if (have_gt) variants.push_back("GT");
  auto target_for = [&](std::size_t i, const std::string& v) -> BinaryMask {
    const auto& rec = stack.records[i];
    if (v == "GT") return stack.ground_truth.at(rec.id);
    return training_mask(rec, train_label_from_string(v));
  };

  const bool rep_protocol = cfg.model == ModelKind::Baseline && cfg.baseline_reps > 1;
  const int reps = rep_protocol ? cfg.baseline_reps : 1;
  constexpr int kMetrics = 5;
  // values[variant][proposal][metric] -> per-rep (or per-image) samples
  std::vector<std::array<std::array<std::vector<double>, kMetrics>, 3>> values(variants.size());

  SegmentationReport report;
  report.model = model.describe();
  for (int rep = 0; rep < reps; ++rep) {
    ProposalModel rep_model;
    const ProposalModel* active = &model;
    if (rep_protocol) {
      std::mt19937_64 rng(derive_seed(cfg.rng_seed, 0x5e6, static_cast<std::uint64_t>(rep)));
      const auto& ids = stack.split.train_ids;
      const std::size_t pick = stack.index_of(ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)]);
      const BinaryMask target = training_mask(stack.records[pick], cfg.train_label);
      const BaselineSample sample{stack.planes[pick], target};
      rep_model.kind = ModelKind::Baseline;
      rep_model.baseline = fit_baseline(std::span(&sample, 1));
      active = &rep_model;
    }
    // per_image[t][variant][proposal] = confusion
    std::vector<std::vector<std::array<Confusion, 3>>> per_image(test.size());
    parallel_for(test.size(), cfg.workers, [&](std::size_t t) {
      const std::size_t i = test[t];
      const RegionalProposals rps = active->propose(stack, i);
      BinaryMask fallback;
      const BinaryMask& roi = evaluation_roi(stack.planes[i], fallback);
      per_image[t].resize(variants.size());
      for (std::size_t v = 0; v < variants.size(); ++v) {
        const BinaryMask target = target_for(i, variants[v]);
        for (int p = 0; p < 3; ++p) per_image[t][v][p] = confusion(rps[p], target, roi);
      }
    });
    for (std::size_t v = 0; v < variants.size(); ++v) {
      for (int p = 0; p < 3; ++p) {
        std::array<double, kMetrics> sums{};
        for (std::size_t t = 0; t < test.size(); ++t) {
          const Confusion& c = per_image[t][v][p];
          const std::array<double, kMetrics> m{c.dc(), c.iou(), c.sen(), c.spec(), c.acc()};
          for (int k = 0; k < kMetrics; ++k) {
            if (rep_protocol) {
              sums[k] += m[k];
            } else {
              values[v][p][k].push_back(m[k]);
            }
          }
        }
        if (rep_protocol)
          for (int k = 0; k < kMetrics; ++k) values[v][p][k].push_back(sums[k] / static_cast<double>(test.size()));
      }
    }
  }

  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (int p = 0; p < 3; ++p) {
      SegmentationRow row;
      row.label = variants[v];
      row.proposal = p + 1;
      row.dc = summarize(values[v][p][0]);
      row.iou = summarize(values[v][p][1]);
      row.sen = summarize(values[v][p][2]);
      row.spec = summarize(values[v][p][3]);
      row.acc = summarize(values[v][p][4]);
      report.rows.push_back(row);
    }
  }
  report.test_images = static_cast<int>(test.size());
  report.repetitions = reps;
  return report;
}

// ---------------------------------------------------------------------------
// RCAP

namespace {

std::uint64_t rcap_seed(const ExperimentConfig& cfg, std::size_t image, int kappa, std::size_t rep) {
  return derive_seed(cfg.rng_seed, image, static_cast<std::uint64_t>(kappa), rep);
}

BinaryMask noisy_label(const ExperimentConfig& cfg, const BinaryMask& truth, std::uint64_t seed, int kappa) {
  RcapConfig rc = cfg.rcap.value_or(RcapConfig{});
  rc.kappa = kappa;
  rc.rng_seed = seed;
  return rcap(truth, rc);
}

}  // namespace

std::vector<RcapSummary> evaluate_rcap(const ExperimentConfig& cfg, const PreparedStack& stack,
                                       const ProposalModel& model) {
  std::vector<std::size_t> test;
  for (const auto& id : stack.split.test_ids) test.push_back(stack.index_of(id));
  if (test.empty()) throw Error("no test images");

  enum Outcome : std::uint8_t { kTrue, kNoisy, kManual };
  const std::size_t nk = cfg.kappas.size(), nr = static_cast<std::size_t>(cfg.repetitions);
  // outcomes[t][k * nr + r]
  std::vector<std::vector<Outcome>> outcomes(test.size(), std::vector<Outcome>(nk * nr, kManual));

  parallel_for(test.size(), cfg.workers, [&](std::size_t t) {
    const std::size_t i = test[t];
    const RegionalProposals rps = model.propose(stack, i);
    const BinaryMask truth = training_mask(stack.records[i], cfg.train_label);
    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t r = 0; r < nr; ++r) {
        const std::uint64_t seed = rcap_seed(cfg, i, cfg.kappas[k], r);
        const BinaryMask noisy = noisy_label(cfg, truth, seed, cfg.kappas[k]);
        const bool true_first = (derive_seed(seed, 0x51a7) & 1) == 0;
        const TlsaDecision d = true_first ? tlsa(rps, truth, noisy, stack.records[i].image, cfg.tlsa)
                                          : tlsa(rps, noisy, truth, stack.records[i].image, cfg.tlsa);
        Outcome o = kManual;
        if (d.tau != Tau::Manual) o = ((d.tau == Tau::G1) == true_first) ? kTrue : kNoisy;
        outcomes[t][k * nr + r] = o;
      }
    }
  });

  std::vector<RcapSummary> out;
  for (std::size_t k = 0; k < nk; ++k) {
    RcapSummary s;
    s.kappa = cfg.kappas[k];
    std::size_t n_true = 0, n_noisy = 0, n_manual = 0;
    std::vector<double> rep_acc;
    for (std::size_t r = 0; r < nr; ++r) {
      std::size_t c = 0, w = 0;
      for (std::size_t t = 0; t < test.size(); ++t) {
        switch (outcomes[t][k * nr + r]) {
          case kTrue: ++c; break;
          case kNoisy: ++w; break;
          case kManual: ++n_manual; break;
        }
      }
      n_true += c;
      n_noisy += w;
      if (c + w > 0) rep_acc.push_back(static_cast<double>(c) / static_cast<double>(c + w));
    }
    s.trials = static_cast<int>(test.size() * nr);
    s.frac_true = static_cast<double>(n_true) / s.trials;
    s.frac_noisy = static_cast<double>(n_noisy) / s.trials;
    s.frac_manual = static_cast<double>(n_manual) / s.trials;
    if (rep_acc.empty()) {
      s.mean_accuracy = s.std_accuracy = std::numeric_limits<double>::quiet_NaN();
    } else {
      const MetricSummary m = summarize(rep_acc);
      s.mean_accuracy = m.mean;
      s.std_accuracy = m.std;
    }
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selection

SelectionResult evaluate_selection(const ExperimentConfig& cfg, const PreparedStack& stack,
                                   const ProposalModel& model) {
  std::vector<std::size_t> test;
  for (const auto& id : stack.split.test_ids) test.push_back(stack.index_of(id));
  if (test.empty()) throw Error("no test images");

  SelectionResult res;
  res.decisions.resize(test.size());
  parallel_for(test.size(), cfg.workers, [&](std::size_t t) {
    const std::size_t i = test[t];
    const auto& rec = stack.records[i];
    res.decisions[t] = {rec.id, tlsa(model.propose(stack, i), rec.g1(), rec.g2(), rec.image, cfg.tlsa)};
  });

  std::size_t g1 = 0, g2 = 0, manual = 0, correct = 0, decided_with_gt = 0;
  for (const auto& [id, d] : res.decisions) {
    if (d.tau == Tau::G1) ++g1;
    if (d.tau == Tau::G2) ++g2;
    if (d.tau == Tau::Manual) ++manual;
    const auto gt = stack.ground_truth.find(id);
    if (d.tau != Tau::Manual && gt != stack.ground_truth.end()) {
      const auto& rec = stack.records[stack.index_of(id)];
      const double i1 = iou(rec.g1(), gt->second), i2 = iou(rec.g2(), gt->second);
      ++decided_with_gt;
      if ((d.tau == Tau::G1 && i1 >= i2) || (d.tau == Tau::G2 && i2 >= i1)) ++correct;
    }
  }
  const double n = static_cast<double>(res.decisions.size());
  res.summary.frac_g1 = g1 / n;
  res.summary.frac_g2 = g2 / n;
  res.summary.frac_manual = manual / n;
  // Accuracy needs ground truth: a decision is correct when the chosen label overlaps it at least as well.
  res.summary.mean_accuracy = decided_with_gt ? static_cast<double>(correct) / decided_with_gt
                                              : std::numeric_limits<double>::quiet_NaN();
  res.summary.std_accuracy = 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Runners

namespace {

struct Prepared {
  PreparedStack stack;
  ProposalModel model;
};

Prepared prepare_run(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.stack_dir.empty()) throw Error("no stack directory configured");
  Prepared p{prepare_stack(cfg.stack_dir, cfg.bottom_hat), {}};
  p.model = obtain_model(cfg, p.stack);
  return p;
}

}  // namespace

SegmentationReport run_segmentation_eval(const ExperimentConfig& cfg) {
  const Prepared p = prepare_run(cfg);
  SegmentationReport r = evaluate_segmentation(cfg, p.stack, p.model);
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "metrics.json", to_json(r).dump(2) + "\n");
  write_text(cfg.out_dir / "tables.txt", format_table(r));
  write_run_manifest(cfg.out_dir, cfg, "eval-seg", p.stack.dropped_ids);
  return r;
}

std::vector<RcapSummary> run_rcap_eval(const ExperimentConfig& cfg) {
  const Prepared p = prepare_run(cfg);
  auto rows = evaluate_rcap(cfg, p.stack, p.model);
  nlohmann::json j{{"model", p.model.describe()}, {"repetitions", cfg.repetitions}, {"kappas", nlohmann::json::array()}};
  for (const auto& s : rows) j["kappas"].push_back(to_json(s));
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "metrics.json", j.dump(2) + "\n");
  write_text(cfg.out_dir / "tables.txt", format_table(rows));
  if (cfg.write_noisy) {
    // Regenerated from the same seeds so that files are written by this thread only.
    fs::create_directories(cfg.out_dir / "noisy");
    const std::string label = to_string(cfg.train_label);
    for (const auto& id : p.stack.split.test_ids) {
      const std::size_t i = p.stack.index_of(id);
      const BinaryMask truth = training_mask(p.stack.records[i], cfg.train_label);
      for (int kappa : cfg.kappas)
        for (std::size_t r = 0; r < static_cast<std::size_t>(cfg.repetitions); ++r)
          write_mask_png(cfg.out_dir / "noisy" /
                             (id + "." + label + ".noisy.k" + std::to_string(kappa) + ".r" + std::to_string(r) + ".png"),
                         noisy_label(cfg, truth, rcap_seed(cfg, i, kappa, r), kappa));
    }
  }
  write_run_manifest(cfg.out_dir, cfg, "eval-rcap", p.stack.dropped_ids);
  return rows;
}

SelectionResult run_selection(const ExperimentConfig& cfg) {
  const Prepared p = prepare_run(cfg);
  SelectionResult res = evaluate_selection(cfg, p.stack, p.model);
  fs::create_directories(cfg.out_dir / "proposals");

  std::ostringstream lines;
  for (std::size_t t = 0; t < res.decisions.size(); ++t) {
    const auto& [id, d] = res.decisions[t];
    lines << decision_record(id, d, to_string(cfg.model)).dump() << "\n";
  }
  write_text(cfg.out_dir / "decisions.jsonl", lines.str());

  parallel_for(res.decisions.size(), cfg.workers, [&](std::size_t t) {
    const std::string& id = res.decisions[t].first;
    const RegionalProposals rps = p.model.propose(p.stack, p.stack.index_of(id));
    for (int k = 0; k < 3; ++k)
      write_mask_png(cfg.out_dir / "proposals" / (id + ".P" + std::to_string(k + 1) + ".png"), rps[k]);
  });

  nlohmann::json j{{"model", p.model.describe()}, {"selection", to_json(res.summary)}};
  write_text(cfg.out_dir / "metrics.json", j.dump(2) + "\n");
  write_text(cfg.out_dir / "tables.txt", format_table(res.summary));
  build_queue(cfg.out_dir / "decisions.jsonl", cfg.stack_dir, cfg.out_dir / "proposals", cfg.out_dir);
  write_run_manifest(cfg.out_dir, cfg, "select", p.stack.dropped_ids);
  return res;
}

// ---------------------------------------------------------------------------
// Output

nlohmann::json to_json(const SegmentationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  auto ms = [](const MetricSummary& m) { return nlohmann::json{{"mean", real_to_json(m.mean)}, {"std", real_to_json(m.std)}}; };
  for (const auto& row : r.rows)
    rows.push_back({{"label", row.label}, {"proposal", "P" + std::to_string(row.proposal)},
                    {"dc", ms(row.dc)}, {"iou", ms(row.iou)}, {"sen", ms(row.sen)},
                    {"spec", ms(row.spec)}, {"acc", ms(row.acc)}});
  return {{"model", r.model}, {"test_images", r.test_images}, {"repetitions", r.repetitions}, {"rows", rows}};
}

nlohmann::json to_json(const SelectionSummary& s) {
  return {{"frac_g1", s.frac_g1}, {"frac_g2", s.frac_g2}, {"frac_manual", s.frac_manual},
          {"mean_accuracy", real_to_json(s.mean_accuracy)}, {"std_accuracy", real_to_json(s.std_accuracy)}};
}

nlohmann::json to_json(const RcapSummary& s) {
  return {{"kappa", s.kappa},
          {"frac_true", s.frac_true},
          {"frac_noisy", s.frac_noisy},
          {"frac_manual", s.frac_manual},
          {"mean_accuracy", real_to_json(s.mean_accuracy)},
          {"std_accuracy", real_to_json(s.std_accuracy)},
          {"trials", s.trials}};
}

namespace {

std::string fixed(double v, int precision = 3) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(precision) << v;
  return o.str();
}

std::string mean_std(const MetricSummary& m) { return fixed(m.mean) + " (" + fixed(m.std) + ")"; }

}  // namespace

std::string format_table(const SegmentationReport& r) {
  std::ostringstream o;
  o << std::left << std::setw(9) << "label" << std::setw(5) << "RP";
  for (const char* h : {"DC", "IOU", "Sen", "Spec", "Acc"}) o << std::setw(16) << h;
  o << "\n";
  for (const auto& row : r.rows) {
    o << std::setw(9) << row.label << std::setw(5) << ("P" + std::to_string(row.proposal));
    for (const auto* m : {&row.dc, &row.iou, &row.sen, &row.spec, &row.acc}) o << std::setw(16) << mean_std(*m);
    o << "\n";
  }
  o << "test images: " << r.test_images << ", repetitions: " << r.repetitions << "\n";
  return o.str();
}

std::string format_table(const std::vector<RcapSummary>& rows) {
  std::ostringstream o;
  o << std::left << std::setw(7) << "kappa" << std::setw(18) << "accuracy" << std::setw(11) << "true"
    << std::setw(11) << "noisy" << std::setw(11) << "manual" << "trials\n";
  for (const auto& s : rows)
    o << std::setw(7) << s.kappa << std::setw(18) << (fixed(s.mean_accuracy) + " (" + fixed(s.std_accuracy) + ")")
      << std::setw(11) << fixed(s.frac_true) << std::setw(11) << fixed(s.frac_noisy) << std::setw(11)
      << fixed(s.frac_manual) << s.trials << "\n";
  return o.str();
}

std::string format_table(const SelectionSummary& s) {
  std::ostringstream o;
  o << std::left << std::setw(10) << "G1" << std::setw(10) << "G2" << std::setw(10) << "manual"
    << "accuracy\n";
  o << std::setw(10) << fixed(s.frac_g1) << std::setw(10) << fixed(s.frac_g2) << std::setw(10)
    << fixed(s.frac_manual) << (std::isnan(s.mean_accuracy) ? std::string("n/a") : fixed(s.mean_accuracy)) << "\n";
  return o.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void write_run_manifest(const fs::path& out_dir, const ExperimentConfig& cfg, const std::string& command,
                        const std::vector<std::string>& dropped_ids) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm utc{};
  gmtime_r(&tt, &utc);
  std::ostringstream ts;
  ts << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  nlohmann::json j{{"command", command},
                   {"timestamp", ts.str()},
                   {"workers", cfg.workers},
                   {"seed", cfg.rng_seed},
                   {"model", to_string(cfg.model)},
                   {"train_label", to_string(cfg.train_label)},
                   {"stack_dir", cfg.stack_dir.string()},
                   {"dropped_ids", dropped_ids}};
  write_text(out_dir / "run_manifest.json", j.dump(2) + "\n");
}

}  // namespace fslqa
