#include "fslqa/paresn.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "fslqa/json_util.hpp"
#include "fslqa/ssim.hpp"

namespace fslqa {

void EsnHyperParams::validate() const {
  if (input_planes < 1) throw Error("paresn: at least one input plane is required");
  if (reservoir_size <= input_planes) throw Error("paresn: reservoir size m must exceed n");
  if (classes < 2) throw Error("paresn: at least two classes are required");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("paresn: alpha must lie in (0, 1]");
  if (!(lambda > 0.0)) throw Error("paresn: lambda must be positive");
  if (!(spectral_radius > 0.0 && spectral_radius <= 1.0))
    throw Error("paresn: spectral radius must lie in (0, 1]");
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw Error("paresn: sparsity must lie in (0, 1]");
  if (window_side < 1) throw Error("paresn: window side must be positive");
  if (branches < 2) throw Error("paresn: at least two branches are required");
  if (stop_window < 1) throw Error("paresn: stop_window must be >= 1");
  if (max_training_images < 1) throw Error("paresn: max_training_images must be >= 1");
}

// ---------------------------------------------------------------------------
// Sub-windows

namespace {

struct Region {
  int r0, c0, rows, cols;
};

GrayImage crop(const GrayImage& img, const Region& reg) {
  GrayImage out(reg.cols, reg.rows);
  for (int r = 0; r < reg.rows; ++r)
    for (int c = 0; c < reg.cols; ++c) out.at(r, c) = img.at(reg.r0 + r, reg.c0 + c);
  return out;
}

// Window origins along one axis: a grid of stride `side` anchored so that one
// window is centered on `center`, covering [lo, hi].
std::vector<int> grid_origins(double center, int lo, int hi, int side) {
  const long anchor = std::lround(center - side / 2.0);
  const long k_first = static_cast<long>(std::ceil(static_cast<double>(lo - anchor - side + 1) / side));
  const long k_last = static_cast<long>(std::floor(static_cast<double>(hi - anchor) / side));
  std::vector<int> out;
  for (long k = k_first; k <= k_last; ++k) out.push_back(static_cast<int>(anchor + k * side));
  return out;
}

}  // namespace

std::vector<SubWindow> extract_subwindows(const PreprocessedPlanes& planes, const BinaryMask* target,
                                          int side) {
  if (side < 1) throw Error("extract_subwindows: side must be positive");
  const BinaryMask& roi = planes.roi;
  if (target) require_same_shape(roi, *target, "extract_subwindows");

  double sum_r = 0, sum_c = 0;
  std::size_t n = 0;
  int rmin = roi.height(), rmax = -1, cmin = roi.width(), cmax = -1;
  for (int r = 0; r < roi.height(); ++r) {
    for (int c = 0; c < roi.width(); ++c) {
      if (!roi.at(r, c)) continue;
      sum_r += r;
      sum_c += c;
      ++n;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  std::vector<SubWindow> out;
  if (n == 0) return out;

  const std::array<const GrayImage*, 4> sources{&planes.base, &planes.bottom_hat, &planes.grad_mag,
                                                &planes.grad_dir};
  for (int row : grid_origins(sum_r / n, rmin, rmax, side)) {
    for (int col : grid_origins(sum_c / n, cmin, cmax, side)) {
      const int r0 = std::max(row, 0), r1 = std::min(row + side, roi.height());
      const int c0 = std::max(col, 0), c1 = std::min(col + side, roi.width());
      if (r1 <= r0 || c1 <= c0) continue;
      const Region reg{r0, c0, r1 - r0, c1 - c0};

      bool any_roi = false;
      for (int r = r0; r < r1 && !any_roi; ++r)
        for (int c = c0; c < c1 && !any_roi; ++c) any_roi = roi.at(r, c) != 0;
      if (!any_roi) continue;

      SubWindow win;
      win.origin_row = r0;
      win.origin_col = c0;
      win.source_rows = reg.rows;
      win.source_cols = reg.cols;
      for (int p = 0; p < 4; ++p) win.planes[p] = resize_bilinear(crop(*sources[p], reg), side, side);
      if (target) {
        const GrayImage t = resize_bilinear(crop(to_gray(*target), reg), side, side);
        win.target = threshold_above(t, 0.5 - 1e-12);
      }
      out.push_back(std::move(win));
    }
  }
  return out;
}

Eigen::MatrixXd window_inputs(const SubWindow& win) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(win.planes[0].size());
  Eigen::MatrixXd u(1 + 4, pixels);
  u.row(0).setOnes();
  for (int p = 0; p < 4; ++p) {
    const auto values = win.planes[p].pixels();
    for (Eigen::Index k = 0; k < pixels; ++k) u(1 + p, k) = values[k];
  }
  return u;
}

// ---------------------------------------------------------------------------
// Reservoir algebra

Eigen::MatrixXd leaky_state_update(const Eigen::MatrixXd& w_in, const Eigen::SparseMatrix<double>& w,
                                   const Eigen::MatrixXd& prev_state, const Eigen::MatrixXd& inputs,
                                   double alpha) {
  Eigen::MatrixXd pre = w_in * inputs;
  pre += w * prev_state;
  return (1.0 - alpha) * prev_state + alpha * pre.array().tanh().matrix();
}

double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  if (solver.info() != Eigen::Success) throw Error("spectral_radius: eigen-decomposition failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

Eigen::MatrixXd extended_states(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& states) {
  Eigen::MatrixXd z(inputs.rows() + states.rows(), inputs.cols());
  z.topRows(inputs.rows()) = inputs;
  z.bottomRows(states.rows()) = states;
  return z;
}

Eigen::MatrixXd min_max_normalized(Eigen::MatrixXd m) {
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi - lo > 0.0) {
    m = (m.array() - lo) / (hi - lo);
  } else {
    m.setZero();
  }
  return m;
}

}  // namespace

ParEsn ParEsn::init(const EsnHyperParams& hp) {
  hp.validate();
  ParEsn model;
  model.hp_ = hp;
  std::mt19937_64 rng(hp.rng_seed);
  std::uniform_real_distribution<double> weight(-0.5, 0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int m = hp.reservoir_size;
  const int d = hp.window_side * hp.window_side;
  const int ext = hp.extended_size();

  for (int b = 0; b < hp.branches; ++b) {
    ReservoirBranch br;
    br.w_in.resize(m, 1 + hp.input_planes);
    for (Eigen::Index j = 0; j < br.w_in.cols(); ++j)
      for (Eigen::Index i = 0; i < m; ++i) br.w_in(i, j) = weight(rng);

    Eigen::MatrixXd dense;
    double radius = 0.0;
    for (int attempt = 0; attempt < 1000 && !(radius > 1e-12); ++attempt) {
      dense = Eigen::MatrixXd::Zero(m, m);
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
          if (unit(rng) < hp.sparsity) dense(i, j) = weight(rng);
      radius = spectral_radius(dense);
    }
    if (!(radius > 1e-12)) throw Error("paresn: could not draw a reservoir with nonzero spectral radius");
    dense *= hp.spectral_radius / radius;
    br.w = dense.sparseView(0.0, 0.0);
    br.w.makeCompressed();

    br.state = Eigen::MatrixXd::Zero(m, d);
    br.acc_a = Eigen::MatrixXd::Zero(ext, ext);
    br.acc_b = Eigen::MatrixXd::Zero(ext, hp.classes);
    model.branches_.push_back(std::move(br));
  }
  return model;
}

Eigen::MatrixXd ParEsn::normalized_gram() const {
  const int m = hp_.reservoir_size;
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(m, m);
  for (const auto& br : branches_) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
    g.selfadjointView<Eigen::Lower>().rankUpdate(br.state);
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    avg += min_max_normalized(std::move(g));
  }
  return avg / static_cast<double>(branches_.size());
}

void ParEsn::train_on_window(const SubWindow& win) {
  if (!win.target) throw Error("paresn: training window has no target");
  if (win.side() != hp_.window_side) throw Error("paresn: window side does not match the model");
  if (hp_.input_planes != 4 || hp_.classes != 2)
    throw Error("paresn: image windows need n = 4 input planes and c = 2 classes");

  const Eigen::MatrixXd u = window_inputs(win);
  Eigen::MatrixXd y(hp_.classes, u.cols());
  const auto target = win.target->pixels();
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    y(0, k) = target[k] ? 0.0 : 1.0;
    y(1, k) = target[k] ? 1.0 : 0.0;
  }
  train_on_inputs(u, y);
}

void ParEsn::train_on_inputs(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  if (trained_) throw Error("paresn: model already finalized");
  const Eigen::Index d = static_cast<Eigen::Index>(hp_.window_side) * hp_.window_side;
  if (inputs.rows() != 1 + hp_.input_planes || inputs.cols() != d)
    throw Error("paresn: inputs must be (1+n) x w_m^2");
  if (targets.rows() != hp_.classes || targets.cols() != d) throw Error("paresn: targets must be c x w_m^2");

  for (auto& br : branches_) {
    br.state = leaky_state_update(br.w_in, br.w, br.state, inputs, hp_.alpha);
    const Eigen::MatrixXd z = extended_states(inputs, br.state);
    br.acc_a.selfadjointView<Eigen::Lower>().rankUpdate(z);
    br.acc_a.triangularView<Eigen::StrictlyUpper>() = br.acc_a.transpose();
    br.acc_b.noalias() += z * targets.transpose();
  }
  ++windows_trained_;

  Eigen::MatrixXd gram = normalized_gram();
  if (last_gram_.size() != 0) ssim_history_.push_back(ssim(gram, last_gram_));
  last_gram_ = std::move(gram);
}

bool ParEsn::check_stopping() const {
  if (images_consumed_ >= hp_.max_training_images) return true;
  if (windows_trained_ < 2 || static_cast<int>(ssim_history_.size()) < hp_.stop_window) return false;
  const auto tail = std::span(ssim_history_).last(static_cast<std::size_t>(hp_.stop_window));
  const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / tail.size();
  double var = 0.0;
  for (double v : tail) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / tail.size());
  return mean >= hp_.stop_mean && sd <= hp_.stop_std;
}

void ParEsn::finalize() {
  if (trained_) throw Error("paresn: model already finalized");
  if (windows_trained_ < 1) throw Error("paresn: finalize needs at least one trained window");
  for (auto& br : branches_) {
    Eigen::MatrixXd a = br.acc_a;
    a.diagonal().array() += hp_.lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw Error("paresn: readout factorization failed");
    Eigen::MatrixXd sol = ldlt.solve(br.acc_b);
    // The system is poorly conditioned (~1e7 at lambda = 1e-5); refine against
    // residuals accumulated in extended precision.
    using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const LongMatrix a_long = a.cast<long double>(), b_long = br.acc_b.cast<long double>();
    for (int step = 0; step < 3; ++step) {
      const Eigen::MatrixXd residual = (b_long - a_long * sol.cast<long double>()).cast<double>();
      sol += ldlt.solve(residual);
    }
    if (!sol.allFinite()) throw Error("paresn: readout solve produced non-finite weights");
    br.w_out = sol.transpose();
  }
  trained_ = true;
}

std::vector<BinaryMask> ParEsn::predict_branches(const PreprocessedPlanes& planes) const {
  if (!trained_) throw Error("paresn: model is not trained");
  if (hp_.input_planes != 4 || hp_.classes != 2)
    throw Error("paresn: image prediction needs n = 4 input planes and c = 2 classes");
  const int h = planes.roi.height(), w = planes.roi.width();
  std::vector<BinaryMask> out(branches_.size(), BinaryMask(w, h));
  const auto windows = extract_subwindows(planes, nullptr, hp_.window_side);
  if (windows.empty()) return out;

  std::vector<Eigen::MatrixXd> states;
  for (const auto& br : branches_) states.push_back(br.state);

  const int side = hp_.window_side;
  BinaryMask classes(side, side);
  for (const auto& win : windows) {
    const Eigen::MatrixXd u = window_inputs(win);
    for (std::size_t b = 0; b < branches_.size(); ++b) {
      const auto& br = branches_[b];
      states[b] = leaky_state_update(br.w_in, br.w, states[b], u, hp_.alpha);
      const Eigen::MatrixXd scores = br.w_out * extended_states(u, states[b]);
      for (Eigen::Index k = 0; k < scores.cols(); ++k) classes[k] = scores(1, k) > scores(0, k) ? 1 : 0;

      // Nearest-neighbour map back onto the (possibly clipped) source region.
      for (int r = 0; r < win.source_rows; ++r) {
        const int sr = std::min(side - 1, static_cast<int>((r + 0.5) * side / win.source_rows));
        for (int c = 0; c < win.source_cols; ++c) {
          const int sc = std::min(side - 1, static_cast<int>((c + 0.5) * side / win.source_cols));
          out[b].at(win.origin_row + r, win.origin_col + c) = classes.at(sr, sc);
        }
      }
    }
  }
  for (auto& m : out) m = mask_and(m, planes.roi);
  return out;
}

RegionalProposals ParEsn::predict(const PreprocessedPlanes& planes) const {
  if (branches_.size() != 3) throw Error("paresn: regional proposals need exactly three branches");
  auto masks = predict_branches(planes);
  return RegionalProposals{{std::move(masks[0]), std::move(masks[1]), std::move(masks[2])}};
}

// ---------------------------------------------------------------------------
// Serialization: "PARESN1\n", u64 header length, JSON header, then per branch
// w_in, w (dense), w_out, state as (u64 rows, u64 cols, row-major f64) blocks.
// All integers and floats are little-endian.

namespace {

constexpr char kMagic[8] = {'P', 'A', 'R', 'E', 'S', 'N', '1', '\n'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw Error("paresn model file truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_u64(out, std::bit_cast<std::uint64_t>(m(r, c)));
}

Eigen::MatrixXd get_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  const auto r = get_u64(in), c = get_u64(in);
  if (static_cast<Eigen::Index>(r) != rows || static_cast<Eigen::Index>(c) != cols)
    throw Error("paresn model file: unexpected matrix shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(get_u64(in));
  return m;
}

nlohmann::json hyper_params_json(const EsnHyperParams& hp) {
  return {{"m", hp.reservoir_size},       {"n", hp.input_planes},
          {"c", hp.classes},              {"alpha", hp.alpha},
          {"lambda", hp.lambda},          {"spectral_radius", hp.spectral_radius},
          {"sparsity", hp.sparsity},      {"w_m", hp.window_side},
          {"branches", hp.branches},      {"rng_seed", hp.rng_seed},
          {"stop_mean", hp.stop_mean},    {"stop_std", hp.stop_std},
          {"stop_window", hp.stop_window}, {"max_training_images", hp.max_training_images}};
}

EsnHyperParams hyper_params_from_json(const nlohmann::json& j) {
  EsnHyperParams hp;
  hp.reservoir_size = j.at("m").get<int>();
  hp.input_planes = j.at("n").get<int>();
  hp.classes = j.at("c").get<int>();
  hp.alpha = j.at("alpha").get<double>();
  hp.lambda = j.at("lambda").get<double>();
  hp.spectral_radius = j.at("spectral_radius").get<double>();
  hp.sparsity = j.at("sparsity").get<double>();
  hp.window_side = j.at("w_m").get<int>();
  hp.branches = j.at("branches").get<int>();
  hp.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  hp.stop_mean = j.at("stop_mean").get<double>();
  hp.stop_std = j.at("stop_std").get<double>();
  hp.stop_window = j.at("stop_window").get<int>();
  hp.max_training_images = j.at("max_training_images").get<int>();
  return hp;
}

}  // namespace

void ParEsn::save(const std::filesystem::path& path) const {
  if (!trained_) throw Error("paresn: only trained models can be saved");
  nlohmann::json header{{"format", "PARESN1"},
                        {"hyper_params", hyper_params_json(hp_)},
                        {"windows_trained", windows_trained_},
                        {"images_consumed", images_consumed_},
                        {"ssim_history", ssim_history_}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& br : branches_) {
    put_matrix(out, br.w_in);
    put_matrix(out, Eigen::MatrixXd(br.w));
    put_matrix(out, br.w_out);
    put_matrix(out, br.state);
  }
  if (!out) throw Error("cannot write paresn model: " + path.string());
}

ParEsn ParEsn::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open paresn model: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error("not a PARESN1 model file: " + path.string());
  const auto len = get_u64(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("paresn model file truncated");

  ParEsn model;
  try {
    const auto header = nlohmann::json::parse(text);
    model.hp_ = hyper_params_from_json(header.at("hyper_params"));
    model.windows_trained_ = header.at("windows_trained").get<int>();
    model.images_consumed_ = header.at("images_consumed").get<int>();
    model.ssim_history_ = header.at("ssim_history").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed paresn header: ") + e.what());
  }
  model.hp_.validate();
  const int m = model.hp_.reservoir_size;
  const int ext = model.hp_.extended_size();
  const int d = model.hp_.window_side * model.hp_.window_side;
  for (int b = 0; b < model.hp_.branches; ++b) {
    ReservoirBranch br;
    br.w_in = get_matrix(in, m, 1 + model.hp_.input_planes);
    br.w = get_matrix(in, m, m).sparseView(0.0, 0.0);
    br.w.makeCompressed();
    br.w_out = get_matrix(in, model.hp_.classes, ext);
    br.state = get_matrix(in, m, d);
    model.branches_.push_back(std::move(br));
  }
  model.trained_ = true;
  return model;
}

// ---------------------------------------------------------------------------

ParEsn fit_paresn(const EsnHyperParams& hp, std::span<const TrainingImage> images, ParEsnTrainingLog* log) {
  ParEsn model = ParEsn::init(hp);
  // The criterion is evaluated once per image, so training never stops mid-image.
  bool stop = false;
  for (const auto& img : images) {
    for (const auto& win : extract_subwindows(img.planes, &img.target, hp.window_side))
      model.train_on_window(win);
    model.mark_image_consumed();
    stop = model.check_stopping();
    if (stop) break;
  }
  const bool converged = stop && model.images_consumed() < hp.max_training_images;
  model.finalize();
  if (log) *log = {model.windows_trained(), model.images_consumed(), converged};
  return model;
}

}  // namespace fslqa
