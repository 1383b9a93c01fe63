#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fslqa/preprocess.hpp"
#include "fslqa/proposals.hpp"

namespace fslqa {

struct EsnHyperParams {
  int reservoir_size = 100;  // m
  int input_planes = 4;      // n
  int classes = 2;           // c
  double alpha = 0.95;       // leak rate
  double lambda = 1e-5;      // ridge coefficient
  double spectral_radius = 0.9;
  double sparsity = 0.1;  // probability that a reservoir connection exists
  int window_side = 100;  // w_m
  int branches = 3;
  std::uint64_t rng_seed = 7;

  // Training stops once the last `stop_window` Gram-matrix SSIM values have
  // mean >= stop_mean and std <= stop_std, or after max_training_images images.
  double stop_mean = 0.8;
  double stop_std = 0.1;
  int stop_window = 3;
  int max_training_images = 5;

  void validate() const;
  int extended_size() const { return 1 + input_planes + reservoir_size; }
};

struct ReservoirBranch {
  Eigen::MatrixXd w_in;             // m x (1+n)
  Eigen::SparseMatrix<double> w;    // m x m, scaled to the target spectral radius
  Eigen::MatrixXd state;            // m x d', one column per window pixel
  Eigen::MatrixXd acc_a;            // sum z z^T, (1+n+m) x (1+n+m)
  Eigen::MatrixXd acc_b;            // sum z y^T, (1+n+m) x c
  Eigen::MatrixXd w_out;            // c x (1+n+m); empty until finalized
};

// Masked w_m x w_m crop of the four planes. Crops clipped by the image border
// are bilinearly resized up to w_m x w_m.
struct SubWindow {
  int origin_row = 0;
  int origin_col = 0;
  int source_rows = 0;
  int source_cols = 0;
  std::array<GrayImage, 4> planes;  // base, bottom-hat, gradient magnitude, gradient direction
  std::optional<BinaryMask> target;

  int side() const { return planes[0].width(); }
  bool resized() const { return source_rows != side() || source_cols != side(); }
};

std::vector<SubWindow> extract_subwindows(const PreprocessedPlanes& planes,
                                          const BinaryMask* target, int side);

// (1+n) x d' matrix: a row of ones followed by the plane values, pixels row-major.
Eigen::MatrixXd window_inputs(const SubWindow& win);

// x_new = (1 - alpha) x_prev + alpha tanh(W_in [1;u] + W x_prev), column-wise.
Eigen::MatrixXd leaky_state_update(const Eigen::MatrixXd& w_in, const Eigen::SparseMatrix<double>& w,
                                   const Eigen::MatrixXd& prev_state, const Eigen::MatrixXd& inputs,
                                   double alpha);

// Largest eigenvalue modulus (dense eigen-decomposition).
double spectral_radius(const Eigen::MatrixXd& m);

class ParEsn {
 public:
  static ParEsn init(const EsnHyperParams& hp);

  const EsnHyperParams& hyper_params() const { return hp_; }
  const std::vector<ReservoirBranch>& branches() const { return branches_; }
  bool trained() const { return trained_; }
  const std::vector<double>& ssim_history() const { return ssim_history_; }
  int windows_trained() const { return windows_trained_; }
  int images_consumed() const { return images_consumed_; }

  // One recurrence step over the window's pixels plus readout accumulation;
  // also appends the Gram-matrix SSIM against the previous window.
  void train_on_window(const SubWindow& win);
  // Same step on raw data: inputs (1+n) x w_m^2 with a leading row of ones, targets c x w_m^2.
  void train_on_inputs(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);
  void mark_image_consumed() { ++images_consumed_; }
  bool check_stopping() const;
  // w_out = ((acc_a + lambda I)^-1 acc_b)^T per branch.
  void finalize();

  // Copy carrying the post-training state; prediction never mutates `*this`.
  ParEsn clone_for_inference() const { return *this; }

  std::vector<BinaryMask> predict_branches(const PreprocessedPlanes& planes) const;
  // Requires exactly three branches.
  RegionalProposals predict(const PreprocessedPlanes& planes) const;

  // Branch-averaged, min-max normalized X X^T of the current states.
  Eigen::MatrixXd normalized_gram() const;

  void save(const std::filesystem::path& path) const;
  static ParEsn load(const std::filesystem::path& path);

 private:
  EsnHyperParams hp_;
  std::vector<ReservoirBranch> branches_;
  bool trained_ = false;
  std::vector<double> ssim_history_;
  Eigen::MatrixXd last_gram_;
  int windows_trained_ = 0;
  int images_consumed_ = 0;
};

struct TrainingImage {
  const PreprocessedPlanes& planes;
  const BinaryMask& target;
};

struct ParEsnTrainingLog {
  int windows = 0;
  int images = 0;
  bool ssim_converged = false;
};

// Trains window by window until the stopping criterion fires, then finalizes.
ParEsn fit_paresn(const EsnHyperParams& hp, std::span<const TrainingImage> images,
                  ParEsnTrainingLog* log = nullptr);

}  // namespace fslqa
