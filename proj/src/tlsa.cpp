#include "fslqa/tlsa.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "fslqa/json_util.hpp"

namespace fslqa {

void TlsaConfig::validate() const {
  if (!(delta1 > 0.0)) throw Error("tlsa: delta1 must be positive");
  if (!(delta2 > 1.0)) throw Error("tlsa: delta2 must exceed 1");
  if (!(delta3 > 1.0)) throw Error("tlsa: delta3 must exceed 1");
  if (w <= 0) throw Error("tlsa: w must be positive");
}

double safe_ratio(double num, double den) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (std::isinf(num) && std::isinf(den)) return 1.0;
  if (den == 0.0) return num == 0.0 ? 1.0 : inf;
  return num / den;
}

TlsaDecision tlsa(const RegionalProposals& rps, const BinaryMask& t1, const BinaryMask& t2,
                  const GrayImage& img, const TlsaConfig& cfg) {
  cfg.validate();
  require_same_shape(t1, t2, "tlsa");
  require_same_shape(t1, img, "tlsa");
  for (int i = 0; i < 3; ++i) require_same_shape(t1, rps[i], "tlsa");

  TlsaDecision d;
  const std::size_t n1 = count(t1), n2 = count(t2);
  if (n1 == 0 && n2 == 0) {
    d.branch_taken = TlsaBranch::BothBlank;
    d.report = overlap_report(rps, t1, t2, img);
    d.ratio_mu = 1.0;
    d.ratio_v = 1.0;
    return d;
  }

  const std::size_t both = count(mask_and(t1, t2));
  d.eta = (std::min(n1, n2) - both) < static_cast<std::size_t>(cfg.w) ? 1 : 0;
  d.report = overlap_report(rps, t1, t2, img);
  const auto& r = d.report;
  d.ratio_mu = safe_ratio(r.mu_iou[0], r.mu_iou[1]);
  d.ratio_v = safe_ratio(r.phi[1], r.phi[0]);

  if (d.eta == 1 && r.phi_pi > cfg.delta1) {
    d.branch_taken = TlsaBranch::ProposalDisagreement;
    return d;
  }
  if (r.mu_iou[0] == 0.0 && r.mu_iou[1] == 0.0) {
    d.branch_taken = TlsaBranch::NoOverlap;
    return d;
  }
  auto decide = [&](Tau t, TlsaBranch b) {
    d.tau = t;
    d.branch_taken = b;
    return d;
  };
  if (d.ratio_mu > cfg.delta2) return decide(Tau::G1, TlsaBranch::MeanRatioG1);
  if (d.ratio_v > cfg.delta3) return decide(Tau::G1, TlsaBranch::VarianceRatioG1);
  if (d.ratio_mu < 1.0 / cfg.delta2) return decide(Tau::G2, TlsaBranch::MeanRatioG2);
  if (d.ratio_v < 1.0 / cfg.delta3) return decide(Tau::G2, TlsaBranch::VarianceRatioG2);
  if (r.psi_star[0] == r.psi_star[1])
    return decide(d.ratio_mu >= 1.0 ? Tau::G1 : Tau::G2, TlsaBranch::ProposalTie);
  return decide(Tau::Manual, TlsaBranch::ProposalMismatch);
}

namespace {

constexpr std::array<const char*, 3> kTauNames{"Manual", "G1", "G2"};
constexpr std::array<const char*, 9> kBranchNames{
    "both_blank",         "proposal_disagreement", "no_overlap",
    "mean_ratio_g1",      "variance_ratio_g1",     "mean_ratio_g2",
    "variance_ratio_g2",  "proposal_tie",          "proposal_mismatch"};

template <std::size_t N>
int lookup(const std::array<const char*, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<int>(i);
  throw Error(std::string("unknown ") + what + ": " + s);
}

}  // namespace

std::string to_string(Tau t) { return kTauNames[static_cast<int>(t)]; }
Tau tau_from_string(const std::string& s) { return static_cast<Tau>(lookup(kTauNames, s, "tau")); }
std::string to_string(TlsaBranch b) { return kBranchNames[static_cast<int>(b)]; }
TlsaBranch branch_from_string(const std::string& s) {
  return static_cast<TlsaBranch>(lookup(kBranchNames, s, "branch"));
}

nlohmann::json decision_record(const std::string& id, const TlsaDecision& d, const std::string& model_source) {
  nlohmann::json j;
  j["id"] = id;
  j["tau"] = to_string(d.tau);
  j["ratio_mu"] = real_to_json(d.ratio_mu);
  j["ratio_v"] = real_to_json(d.ratio_v);
  j["eta"] = d.eta;
  j["phi_pi"] = real_to_json(d.report.phi_pi);
  j["psi_star"] = d.report.psi_star;
  j["branch_taken"] = to_string(d.branch_taken);
  j["model_source"] = model_source;
  return j;
}

}  // namespace fslqa
