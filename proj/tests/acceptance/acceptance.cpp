// Acceptance criteria, one test per criterion. Prints a PASS/FAIL line for each.
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "fslqa/baseline.hpp"
#include "fslqa/harness.hpp"
#include "fslqa/metrics.hpp"
#include "fslqa/paresn.hpp"
#include "fslqa/rcap.hpp"
#include "fslqa/synth.hpp"
#include "fslqa/tlsa.hpp"

using namespace fslqa;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fslqa_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double p) {
  std::bernoulli_distribution fg(p);
  BinaryMask m(w, h);
  for (auto& v : m.pixels()) v = fg(rng) ? 1 : 0;
  return m;
}

BinaryMask rect(int side, int r0, int c0, int rows, int cols) {
  BinaryMask m(side, side);
  for (int r = r0; r < r0 + rows; ++r)
    for (int c = c0; c < c0 + cols; ++c) m.at(r, c) = 1;
  return m;
}

Eigen::MatrixXd random_inputs(std::mt19937_64& rng, int n, int d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(1 + n, d);
  x.row(0).setOnes();
  for (int r = 1; r <= n; ++r)
    for (int c = 0; c < d; ++c) x(r, c) = u(rng);
  return x;
}

Eigen::MatrixXd random_one_hot(std::mt19937_64& rng, int d) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, d);
  for (int c = 0; c < d; ++c) y(std::uniform_int_distribution<int>(0, 1)(rng), c) = 1.0;
  return y;
}

// Power iteration on the matrix itself: ||W^k||^(1/k) with k = 2^squarings,
// normalised at every squaring. Unlike a vector iteration it also converges
// when the dominant eigenvalues are a complex pair.
double power_radius(const Eigen::MatrixXd& w, int squarings = 40) {
  Eigen::MatrixXd m = w;
  double log_norm = std::log(m.norm());
  m /= m.norm();
  for (int i = 0; i < squarings; ++i) {
    m = m * m;
    const double n = m.norm();
    if (n == 0.0) return 0.0;
    log_norm = 2.0 * log_norm + std::log(n);
    m /= n;
  }
  return std::exp(log_norm / std::ldexp(1.0, squarings));
}

// Prints one line per criterion after its test finishes.
class CriterionPrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    std::cout << (info.result()->Passed() ? "PASS  " : "FAIL  ") << info.name() << std::endl;
  }
};

// Shared synthetic experiment for the segmentation floor and the RCAP trend.
struct SyntheticExperiment {
  ExperimentConfig cfg;
  PreparedStack stack;
  ProposalModel model;
  double setup_seconds = 0.0;
};

const SyntheticExperiment& synthetic_experiment() {
  static const SyntheticExperiment e = [] {
    const auto t0 = Clock::now();
    SyntheticExperiment x;
    const auto dir = scratch("stack40");
    SynthConfig sc;  // 40 images, zero annotator bias
    write_synthetic_stack(dir, generate_synthetic_stack(sc));
    x.cfg.stack_dir = dir;
    x.cfg.model = ModelKind::ParEsn;
    x.cfg.train_label = TrainLabel::G1;
    x.cfg.rcap = RcapConfig{};
    x.cfg.kappas = {1, 4};
    x.cfg.repetitions = 20;
    x.cfg.workers = 1;
    x.stack = prepare_stack(dir, x.cfg.bottom_hat);
    x.model = train_model(x.cfg, x.stack);
    x.setup_seconds = seconds_since(t0);
    return x;
  }();
  return e;
}

}  // namespace

TEST(Acceptance, RidgeReadoutOracle) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    EsnHyperParams hp;
    hp.reservoir_size = std::uniform_int_distribution<int>(4, 10)(rng);
    hp.input_planes = std::uniform_int_distribution<int>(1, 3)(rng);
    hp.window_side = std::uniform_int_distribution<int>(2, 14)(rng);
    hp.sparsity = 0.5;
    hp.rng_seed = rng();
    auto m = ParEsn::init(hp);
    const int d = hp.window_side * hp.window_side;
    m.train_on_inputs(random_inputs(rng, hp.input_planes, d), random_one_hot(rng, d));
    const auto acc = m.branches();
    m.finalize();
    const int ext = hp.extended_size();
    for (std::size_t b = 0; b < acc.size(); ++b) {
      // Inverted in extended precision; a double inverse carries ~1e-8 error on its own here.
      using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
      const LongMatrix a = (acc[b].acc_a + hp.lambda * Eigen::MatrixXd::Identity(ext, ext)).cast<long double>();
      const Eigen::MatrixXd oracle = (a.inverse() * acc[b].acc_b.cast<long double>()).cast<double>().transpose();
      worst = std::max(worst, (m.branches()[b].w_out - oracle).cwiseAbs().maxCoeff());
    }
  }
  const double secs = seconds_since(t0);
  std::cout << "  max abs error " << worst << ", " << secs << " s" << std::endl;
  EXPECT_LE(worst, 1e-8);
  EXPECT_LT(secs, 5.0);
}

TEST(Acceptance, LeakyStateUpdateAlgebra) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    EsnHyperParams hp;
    hp.window_side = 5;
    hp.rng_seed = 500 + seed;
    const auto m = ParEsn::init(hp);
    const auto& br = m.branches()[0];
    const Eigen::MatrixXd u = random_inputs(rng, 4, 25);
    std::uniform_real_distribution<double> s(-0.99, 0.99);
    const Eigen::MatrixXd prev = Eigen::MatrixXd::NullaryExpr(100, 25, [&]() { return s(rng); });
    EXPECT_EQ(leaky_state_update(br.w_in, br.w, prev, u, 0.0), prev) << seed;
    const Eigen::MatrixXd pure = (br.w_in * u + Eigen::MatrixXd(br.w) * prev).array().tanh().matrix();
    EXPECT_LE((leaky_state_update(br.w_in, br.w, prev, u, 1.0) - pure).cwiseAbs().maxCoeff(), 1e-13) << seed;
    const Eigen::MatrixXd first = leaky_state_update(br.w_in, br.w, Eigen::MatrixXd::Zero(100, 25), u, hp.alpha);
    EXPECT_LT(first.cwiseAbs().maxCoeff(), 1.0) << seed;
  }
}

TEST(Acceptance, ReservoirSpectralRadius) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    EsnHyperParams hp;
    hp.window_side = 1;
    hp.rng_seed = 7000 + seed;
    const auto model = ParEsn::init(hp);
    for (const auto& br : model.branches())
      worst = std::max(worst, std::abs(power_radius(Eigen::MatrixXd(br.w)) - 0.9));
  }
  std::cout << "  max |rho - 0.9| " << worst << std::endl;
  EXPECT_LE(worst, 1e-6);
}

TEST(Acceptance, MetricIdentities) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  const BinaryMask full(20, 20, 1);
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_mask(rng, 20, 20, p(rng));
    const auto b = random_mask(rng, 20, 20, p(rng));
    const double j = iou(a, b);
    EXPECT_NEAR(confusion(a, b, full).dc(), 2 * j / (1 + j), 1e-12) << t;
    EXPECT_EQ(j, iou(b, a)) << t;

    const RegionalProposals rps{{a, b, random_mask(rng, 20, 20, p(rng))}};
    const double i12 = iou(rps[0], rps[1]), i13 = iou(rps[0], rps[2]), i23 = iou(rps[1], rps[2]);
    const bool equal = i12 == i13 && i13 == i23;
    EXPECT_EQ(proposal_dispersion(rps) == 0.0, equal && i12 > 0.0) << t;
  }
  const auto a = random_mask(rng, 20, 20, 0.4);
  EXPECT_EQ(proposal_dispersion({{a, a, a}}), 0.0);
}

TEST(Acceptance, SelectionBranchCoverage) {
  constexpr int n = 60;
  const GrayImage flat(n, n, 0.5);
  const BinaryMask empty(n, n);
  auto check = [](const TlsaDecision& d, Tau tau, TlsaBranch branch) {
    EXPECT_EQ(d.tau, tau) << to_string(d.branch_taken);
    EXPECT_EQ(d.branch_taken, branch) << to_string(d.branch_taken);
  };
  const auto a = rect(n, 5, 5, 12, 12), b = rect(n, 35, 35, 12, 12);

  // Both labels blank.
  check(tlsa({{a, a, a}}, empty, empty, flat), Tau::Manual, TlsaBranch::BothBlank);
  // Labels differ by fewer than w pixels, proposals mutually disjoint.
  const auto t1 = rect(n, 10, 10, 10, 10), t2 = mask_or(t1, rect(n, 20, 10, 1, 10));
  check(tlsa({{rect(n, 0, 0, 5, 5), rect(n, 40, 40, 5, 5), rect(n, 0, 50, 5, 5)}}, t1, t2, flat), Tau::Manual,
        TlsaBranch::ProposalDisagreement);
  // No proposal overlaps either label.
  const auto far = rect(n, 50, 50, 8, 8);
  check(tlsa({{far, far, far}}, rect(n, 0, 0, 12, 12), rect(n, 0, 30, 12, 12), flat), Tau::Manual,
        TlsaBranch::NoOverlap);
  // Proposals equal to one label.
  check(tlsa({{a, a, a}}, a, b, flat), Tau::G1, TlsaBranch::MeanRatioG1);
  check(tlsa({{b, b, b}}, a, b, flat), Tau::G2, TlsaBranch::MeanRatioG2);
  // Equal overlaps, one label covering a noisy region.
  const auto p = rect(n, 10, 10, 20, 20);
  const auto l1 = mask_or(rect(n, 10, 10, 20, 10), rect(n, 40, 0, 10, 20));
  const auto l2 = mask_or(rect(n, 10, 20, 20, 10), rect(n, 40, 30, 10, 20));
  auto noisy = [&](int c0) {
    GrayImage img(n, n, 0.5);
    for (int r = 10; r < 30; ++r)
      for (int c = c0; c < c0 + 10; ++c) img.at(r, c) = ((r + c) % 2) ? 0.2 : 0.8;
    return img;
  };
  check(tlsa({{p, p, p}}, l1, l2, noisy(20)), Tau::G1, TlsaBranch::VarianceRatioG1);
  check(tlsa({{p, p, p}}, l1, l2, noisy(10)), Tau::G2, TlsaBranch::VarianceRatioG2);
  // Balanced evidence, same closest proposal.
  check(tlsa({{p, p, p}}, l1, l2, flat), Tau::G1, TlsaBranch::ProposalTie);
  // Balanced evidence, different closest proposals.
  check(tlsa({{a, b, empty}}, a, b, flat), Tau::Manual, TlsaBranch::ProposalMismatch);
}

TEST(Acceptance, RcapLocality) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> side(20, 120), wdist(1, 99), kdist(1, 4);
  std::uniform_real_distribution<double> dens(0.0, 0.6);
  for (int t = 0; t < 200; ++t) {
    const int width = side(rng), height = side(rng);
    const auto m = random_mask(rng, width, height, dens(rng));
    const RcapConfig cfg{wdist(rng), kdist(rng), rng(), false};
    const auto res = rcap_traced(m, cfg);
    std::size_t diff = 0;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        if (m.at(r, c) == res.mask.at(r, c)) continue;
        ++diff;
        bool inside = false;
        for (const auto& w : res.windows)
          inside |= r >= w.paste_row && r < w.paste_row + cfg.w && c >= w.paste_col && c < w.paste_col + cfg.w;
        EXPECT_TRUE(inside) << t;
      }
    }
    EXPECT_LE(res.windows.size(), static_cast<std::size_t>(cfg.kappa));
    EXPECT_LE(diff, static_cast<std::size_t>(cfg.kappa) * cfg.w * cfg.w) << t;
    EXPECT_EQ(rcap(m, cfg), res.mask) << t;
  }
}

TEST(Acceptance, SyntheticRcapSelectionTrend) {
  const auto t0 = Clock::now();
  const auto& e = synthetic_experiment();
  const auto rows = evaluate_rcap(e.cfg, e.stack, e.model);
  const double secs = e.setup_seconds + seconds_since(t0);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows)
    std::cout << "  kappa " << r.kappa << ": accuracy " << r.mean_accuracy << " (std " << r.std_accuracy
              << "), manual " << r.frac_manual << ", trials " << r.trials << std::endl;
  std::cout << "  " << secs << " s" << std::endl;
  EXPECT_GE(rows[1].mean_accuracy, rows[0].mean_accuracy);
  EXPECT_GE(rows[1].mean_accuracy, 0.80);
  EXPECT_LE(rows[1].frac_manual, 0.35);
  EXPECT_LT(secs, 600.0);
}

TEST(Acceptance, SyntheticSegmentationFloor) {
  const auto& e = synthetic_experiment();
  ASSERT_TRUE(e.model.paresn_log.has_value());
  EXPECT_LE(e.model.paresn_log->images, 5);
  const auto report = evaluate_segmentation(e.cfg, e.stack, e.model);
  EXPECT_GE(report.test_images, 20);
  int rows = 0;
  for (const auto& row : report.rows) {
    if (row.label != "GT") continue;
    ++rows;
    std::cout << "  P" << row.proposal << " DC " << row.dc.mean << " (std " << row.dc.std << ")" << std::endl;
    EXPECT_GE(row.dc.mean, 0.5);
  }
  EXPECT_EQ(rows, 3);
}

TEST(Acceptance, BaselineSeparability) {
  SynthConfig sc;
  sc.num_images = 5;
  sc.rng_seed = 11;
  const auto stack = generate_synthetic_stack(sc);
  std::vector<PreprocessedPlanes> planes;
  std::vector<BinaryMask> targets;
  for (const auto& r : stack.records) {
    planes.push_back(preprocess(r.image));
    targets.push_back(mask_and(threshold_above(planes.back().bottom_hat, 0.5), planes.back().roi));
  }
  std::vector<BaselineSample> samples;
  for (std::size_t i = 0; i < planes.size(); ++i) samples.push_back({planes[i], targets[i]});
  const auto model = fit_baseline(samples);
  const auto& op = model.roc[operating_point(model.roc)];
  std::cout << "  AUC " << model.auc << ", sensitivity " << op.tpr << " at theta " << model.theta << std::endl;
  EXPECT_GE(model.auc, 0.99);
  EXPECT_GE(op.tpr, 0.9);
}

TEST(Acceptance, StoppingCriterion) {
  std::mt19937_64 rng(6);
  EsnHyperParams hp;
  hp.window_side = 30;
  auto m = ParEsn::init(hp);
  const Eigen::MatrixXd u = random_inputs(rng, 4, 900);
  const Eigen::MatrixXd y = random_one_hot(rng, 900);
  // The first window sets the reference Gram matrix; SSIM values start with the second.
  for (int i = 0; i < 4; ++i) m.train_on_inputs(u, y);
  ASSERT_EQ(m.ssim_history().size(), 3u);
  std::cout << "  SSIM history";
  for (double s : m.ssim_history()) std::cout << " " << s;
  std::cout << std::endl;
  EXPECT_GE(m.ssim_history().back(), 0.99);

  EsnHyperParams never;
  never.window_side = 4;
  never.stop_mean = 2.0;
  auto capped = ParEsn::init(never);
  int images = 0;
  while (!capped.check_stopping() && images < 100) {
    capped.train_on_inputs(random_inputs(rng, 4, 16), random_one_hot(rng, 16));
    capped.mark_image_consumed();
    ++images;
  }
  EXPECT_EQ(images, 5);
}

TEST(Acceptance, EndToEndDeterminism) {
  const auto root = scratch("determinism");
  const std::string cli = FSLQA_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + (root / "log.txt").string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  ASSERT_EQ(run("--seed 3 --out \"" + (root / "stack").string() + "\" synth --images 12 --g2-miss 120"), 0);
  for (const char* out : {"a", "b"})
    ASSERT_EQ(run("--seed 5 --out \"" + (root / out).string() + "\" select --stack \"" + (root / "stack").string() + "\""), 0);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  const std::string a = slurp(root / "a" / "decisions.jsonl"), b = slurp(root / "b" / "decisions.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new CriterionPrinter);
  return RUN_ALL_TESTS();
}
