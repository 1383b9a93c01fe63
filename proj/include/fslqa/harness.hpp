#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fslqa/baseline.hpp"
#include "fslqa/config.hpp"
#include "fslqa/dataset.hpp"
#include "fslqa/paresn.hpp"
#include "fslqa/rcap.hpp"
#include "fslqa/tlsa.hpp"
#include "json.hpp"

namespace fslqa {

enum class ModelKind { Baseline, ParEsn, External };
enum class TrainLabel { G1, G2, G1andG2 };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(TrainLabel t);
TrainLabel train_label_from_string(const std::string& s);

struct ExperimentConfig {
  std::filesystem::path stack_dir;
  ModelKind model = ModelKind::ParEsn;
  TrainLabel train_label = TrainLabel::G1;
  TlsaConfig tlsa;
  std::optional<RcapConfig> rcap;  // w and offset mode; kappa is swept over `kappas`
  std::vector<int> kappas{1, 2, 3, 4};
  int repetitions = 20;
  std::filesystem::path out_dir = "out";
  std::uint64_t rng_seed = 1;
  int workers = 1;

  EsnHyperParams esn;
  BottomHatParams bottom_hat;
  int baseline_reps = 1;  // >1: refit on one random training image per repetition
  std::filesystem::path external_rps_dir;  // `<id>.P{1,2,3}.png`, for ModelKind::External
  std::filesystem::path model_path;        // reuse a saved model instead of training
  bool write_noisy = false;  // eval-rcap: keep every corrupted label under out/noisy/

  void validate() const;
  // Keys: stack, model, train_label, delta1..3, tlsa_w, rcap_w, rcap_offset, kappas,
  // repetitions, out, seed, workers, esn.*, bottom_hat_sd, baseline_reps, rps_dir, model_path,
  // write_noisy.
  static ExperimentConfig from_config(const KeyValueConfig& kv);
};

// Stack resized to the working side, with both-blank images removed and planes computed.
struct PreparedStack {
  std::vector<ImageRecord> records;
  std::vector<PreprocessedPlanes> planes;  // parallel to records
  std::map<std::string, BinaryMask> ground_truth;  // optional `<id>.GT.png`
  StackSplit split;
  std::vector<std::string> dropped_ids;

  std::size_t index_of(const std::string& id) const;
};

PreparedStack prepare_stack(const std::filesystem::path& dir, const BottomHatParams& bh = {},
                            int side = kWorkingSide);

// Training mask for one record under the configured label choice.
BinaryMask training_mask(const ImageRecord& rec, TrainLabel label);

std::map<std::string, RegionalProposals> ingest_external_rps(const std::filesystem::path& dir,
                                                             const std::vector<ImageRecord>& records);

// A trained (or ingested) proposal source.
struct ProposalModel {
  ModelKind kind = ModelKind::ParEsn;
  std::optional<BaselineModel> baseline;
  std::optional<ParEsn> paresn;
  std::map<std::string, RegionalProposals> external;
  std::optional<ParEsnTrainingLog> paresn_log;

  RegionalProposals propose(const PreparedStack& stack, std::size_t index) const;
  void save(const std::filesystem::path& path) const;
  nlohmann::json describe() const;
};

ProposalModel train_model(const ExperimentConfig& cfg, const PreparedStack& stack);
ProposalModel load_model(const ExperimentConfig& cfg, const PreparedStack& stack);
// Loads `cfg.model_path` when set, otherwise trains.
ProposalModel obtain_model(const ExperimentConfig& cfg, const PreparedStack& stack);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct SegmentationRow {
  std::string label;  // G1, G2, G1andG2, GT
  int proposal = 1;   // 1..3
  MetricSummary dc, iou, sen, spec, acc;
};

struct SegmentationReport {
  std::vector<SegmentationRow> rows;
  int test_images = 0;
  int repetitions = 1;
  nlohmann::json model;
};

struct SelectionSummary {
  double frac_g1 = 0.0;
  double frac_g2 = 0.0;
  double frac_manual = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

// RCAP evaluation for one kappa. frac_true + frac_noisy + frac_manual = 1.
struct RcapSummary {
  int kappa = 1;
  double frac_true = 0.0;
  double frac_noisy = 0.0;
  double frac_manual = 0.0;
  double mean_accuracy = 0.0;  // true selected among decided, averaged over repetitions
  double std_accuracy = 0.0;
  int trials = 0;
};

struct SelectionResult {
  SelectionSummary summary;
  std::vector<std::pair<std::string, TlsaDecision>> decisions;  // test ids in stack order
};

SegmentationReport run_segmentation_eval(const ExperimentConfig& cfg);
std::vector<RcapSummary> run_rcap_eval(const ExperimentConfig& cfg);
SelectionResult run_selection(const ExperimentConfig& cfg);

// Variants taking an already prepared stack and model; they write nothing.
SegmentationReport evaluate_segmentation(const ExperimentConfig& cfg, const PreparedStack& stack,
                                         const ProposalModel& model);
std::vector<RcapSummary> evaluate_rcap(const ExperimentConfig& cfg, const PreparedStack& stack,
                                       const ProposalModel& model);
SelectionResult evaluate_selection(const ExperimentConfig& cfg, const PreparedStack& stack,
                                   const ProposalModel& model);

// Seed for (image, kappa, repetition) derived from the run seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

nlohmann::json to_json(const SegmentationReport& r);
nlohmann::json to_json(const SelectionSummary& s);
nlohmann::json to_json(const RcapSummary& s);
std::string format_table(const SegmentationReport& r);
std::string format_table(const std::vector<RcapSummary>& rows);
std::string format_table(const SelectionSummary& s);

void write_run_manifest(const std::filesystem::path& out_dir, const ExperimentConfig& cfg,
                        const std::string& command, const std::vector<std::string>& dropped_ids);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fslqa
