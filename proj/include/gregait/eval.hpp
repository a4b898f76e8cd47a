#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gregait/model.hpp"

namespace gregait {

struct GaitEmbedding {
  std::string id, condition, view, seq;
  TensorF emb;  // [P, D] pre-BN part embeddings
};

// Conjunction of per-field membership tests; an empty list is a wildcard.
struct RulePredicate {
  std::vector<std::string> splits, conditions, views, seqs;
  bool matches(const SequenceRecord& r) const;
};

struct ConditionGroup {
  std::string name;
  std::vector<std::string> conditions;
};

// Declarative gallery/probe partition. Bundled protocol files live in
// protocols/; the rules must select disjoint sequence sets per subject.
struct ProtocolConfig {
  std::string name;
  RulePredicate gallery, probe;
  bool view_exclusion = true;  // never match a probe against its own view
  bool view_average = true;    // average views, not sequences
  std::vector<ConditionGroup> per_condition;
};

ProtocolConfig parse_protocol(const std::string& json_text,
                              const std::string& origin);
ProtocolConfig load_protocol(const std::string& path);

struct EvalCoverage {
  int64_t dropped_probes = 0;  // no same-subject gallery after exclusions
  std::vector<std::string> errors;  // per-sequence extraction failures
};

struct ConditionResult {
  std::string name;
  double rank1 = 0;               // percent
  std::vector<double> cmc;        // ranks 1..20, percent
  std::map<std::string, double> per_view;  // probe view -> rank-1 percent
  int64_t probes = 0;
};

struct EvalReport {
  std::string protocol;
  std::string checkpoint_id;
  std::string train_domain, eval_domain;
  std::string distance = "mean";
  std::vector<ConditionResult> conditions;
  double mean_rank1 = 0;  // mean over condition groups
  EvalCoverage coverage;
};

// probe index -> chosen gallery index, for the view-exclusion assertion
using MatchTrace = std::vector<std::pair<int64_t, int64_t>>;

// Deterministic eval-mode embeddings over the full (non-subsampled) frame
// list of every matching sequence. Extraction failures are collected into
// `cov` and the run continues.
std::vector<GaitEmbedding> extract_embeddings(const DatasetManifest& manifest,
                                              const RulePredicate& rule,
                                              GaitModel& model,
                                              EvalCoverage* cov);

// Part-wise Euclidean distance aggregated over parts: mean | min | sum.
double embedding_distance(const TensorF& a, const TensorF& b,
                          const std::string& agg);

EvalReport rank1(const std::vector<GaitEmbedding>& gallery,
                 const std::vector<GaitEmbedding>& probe,
                 const ProtocolConfig& proto, const std::string& dist_agg,
                 MatchTrace* trace = nullptr);

// Self-domain runner: extract both sides from one manifest and score.
EvalReport run_protocol(GaitModel& model, const DatasetManifest& manifest,
                        const ProtocolConfig& proto);

// Zero-shot transfer: identical pipeline, the report records the domain
// pair (training dataset name -> evaluation dataset name).
EvalReport cross_domain_run(GaitModel& model, const std::string& train_domain,
                            const DatasetManifest& eval_manifest,
                            const ProtocolConfig& proto);

std::string report_to_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

// One embedding per file: JSON meta line + little-endian f32 [P,D] payload;
// round-trips bit-exactly.
void write_embedding(const std::string& path, const GaitEmbedding& e);
GaitEmbedding read_embedding(const std::string& path);

}  // namespace gregait
