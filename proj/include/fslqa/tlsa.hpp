#pragma once

#include <string>

#include "fslqa/metrics.hpp"
#include "json.hpp"

namespace fslqa {

struct TlsaConfig {
  double delta1 = 0.4;   // proposal-dispersion limit
  double delta2 = 1.1;   // mean-overlap ratio margin
  double delta3 = 1.02;  // spread ratio margin
  int w = 100;           // small-variation threshold in pixels

  void validate() const;
};

enum class Tau { Manual, G1, G2 };

enum class TlsaBranch {
  BothBlank,             // neither label has foreground
  ProposalDisagreement,  // near-identical labels, proposals disagree
  NoOverlap,             // both mean overlaps zero
  MeanRatioG1,
  VarianceRatioG1,
  MeanRatioG2,
  VarianceRatioG2,
  ProposalTie,       // both labels closest to the same proposal
  ProposalMismatch,  // undecided, different closest proposals
};

struct TlsaDecision {
  Tau tau = Tau::Manual;
  double ratio_mu = 0.0;
  double ratio_v = 0.0;
  int eta = 0;
  OverlapReport report;
  TlsaBranch branch_taken = TlsaBranch::BothBlank;
};

// Ratio convention: x/0 = +INF for x > 0, INF/INF = 1, 0/0 = 1.
double safe_ratio(double num, double den);

TlsaDecision tlsa(const RegionalProposals& rps, const BinaryMask& t1, const BinaryMask& t2,
                  const GrayImage& img, const TlsaConfig& cfg = {});

std::string to_string(Tau t);
Tau tau_from_string(const std::string& s);
std::string to_string(TlsaBranch b);
TlsaBranch branch_from_string(const std::string& s);

// One decisions.jsonl record.
nlohmann::json decision_record(const std::string& id, const TlsaDecision& d, const std::string& model_source);

}  // namespace fslqa
