#include "gregait/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace gregait {

using nlohmann::json;

namespace {
bool contains(const std::vector<std::string>& xs, const std::string& v) {
  return std::find(xs.begin(), xs.end(), v) != xs.end();
}

std::vector<std::string> string_list(const json& j, const std::string& key,
                                     const std::string& origin) {
  GG_CHECK(j.is_array(), origin << ": '" << key << "' must be a string array");
  std::vector<std::string> out;
  for (const auto& v : j) {
    GG_CHECK(v.is_string(), origin << ": '" << key << "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

RulePredicate parse_rule(const json& j, const std::string& what,
                         const std::string& origin) {
  GG_CHECK(j.is_object(), origin << ": " << what << " rule must be an object");
  RulePredicate r;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "splits")
      r.splits = string_list(it.value(), it.key(), origin);
    else if (it.key() == "conditions")
      r.conditions = string_list(it.value(), it.key(), origin);
    else if (it.key() == "views")
      r.views = string_list(it.value(), it.key(), origin);
    else if (it.key() == "seqs")
      r.seqs = string_list(it.value(), it.key(), origin);
    else
      fail(origin + ": unknown " + what + " rule key '" + it.key() + "'");
  }
  return r;
}
}  // namespace

bool RulePredicate::matches(const SequenceRecord& r) const {
  if (!splits.empty() && !contains(splits, r.split)) return false;
  if (!conditions.empty() && !contains(conditions, r.condition)) return false;
  if (!views.empty() && !contains(views, r.view)) return false;
  if (!seqs.empty() && !contains(seqs, r.seq)) return false;
  return true;
}

ProtocolConfig parse_protocol(const std::string& json_text,
                              const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    fail(origin + ": protocol is not valid JSON: " + e.what());
  }
  GG_CHECK(j.is_object(), origin << ": protocol must be a JSON object");
  ProtocolConfig p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "name") {
      p.name = it.value().get<std::string>();
    } else if (it.key() == "gallery") {
      p.gallery = parse_rule(it.value(), "gallery", origin);
    } else if (it.key() == "probe") {
      p.probe = parse_rule(it.value(), "probe", origin);
    } else if (it.key() == "view_exclusion") {
      p.view_exclusion = it.value().get<bool>();
    } else if (it.key() == "view_average") {
      p.view_average = it.value().get<bool>();
    } else if (it.key() == "per_condition") {
      GG_CHECK(it.value().is_array(), origin << ": per_condition must be an array");
      for (const auto& g : it.value()) {
        ConditionGroup cg;
        cg.name = g.at("name").get<std::string>();
        cg.conditions = string_list(g.at("conditions"), "conditions", origin);
        p.per_condition.push_back(std::move(cg));
      }
    } else {
      fail(origin + ": unknown protocol key '" + it.key() + "'");
    }
  }
  GG_CHECK(!p.name.empty(), origin << ": protocol needs a name");
  return p;
}

ProtocolConfig load_protocol(const std::string& path) {
  std::ifstream in(path);
  GG_CHECK(in.good(), "cannot open protocol file " << path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_protocol(ss.str(), path);
}

std::vector<GaitEmbedding> extract_embeddings(const DatasetManifest& manifest,
                                              const RulePredicate& rule,
                                              GaitModel& model,
                                              EvalCoverage* cov) {
  std::vector<GaitEmbedding> out;
  for (const SequenceRecord& rec : manifest.entries) {
    if (!rule.matches(rec)) continue;
    try {
      TensorF fc = model.sequence_features(rec, {});
      auto fwd = model.forward(fc, /*b=*/1, fc.shape(0), /*training=*/false);
      GaitEmbedding e;
      e.id = rec.id;
      e.condition = rec.condition;
      e.view = rec.view;
      e.seq = rec.seq;
      e.emb = fwd.head.emb;
      e.emb.reshape({e.emb.shape(1), e.emb.shape(2)});  // [1,P,D] -> [P,D]
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      if (cov)
        cov->errors.push_back(rec.id + "/" + rec.condition + "/" + rec.view +
                              "/" + rec.seq + ": " + ex.what());
      else
        throw;
    }
  }
  return out;
}

double embedding_distance(const TensorF& a, const TensorF& b,
                          const std::string& agg) {
  GG_CHECK(a.same_shape(b) && a.ndim() == 2, "embedding shape mismatch");
  GG_CHECK(agg == "mean" || agg == "min" || agg == "sum",
           "unknown distance aggregation '" << agg << "'");
  const int64_t p = a.shape(0), d = a.shape(1);
  double acc = agg == "min" ? std::numeric_limits<double>::infinity() : 0.0;
  for (int64_t s = 0; s < p; ++s) {
    double sq = 0;
    for (int64_t k = 0; k < d; ++k) {
      const double diff = static_cast<double>(a(s, k)) - b(s, k);
      sq += diff * diff;
    }
    const double dist = std::sqrt(sq);
    if (agg == "min")
      acc = std::min(acc, dist);
    else
      acc += dist;
  }
  if (agg == "mean") acc /= static_cast<double>(p);
  return acc;
}

EvalReport rank1(const std::vector<GaitEmbedding>& gallery,
                 const std::vector<GaitEmbedding>& probe,
                 const ProtocolConfig& proto, const std::string& dist_agg,
                 MatchTrace* trace) {
  constexpr int64_t kMaxRank = 20;
  EvalReport rep;
  rep.protocol = proto.name;
  rep.distance = dist_agg;

  // default group: every condition seen in the probe set
  std::vector<ConditionGroup> groups = proto.per_condition;
  if (groups.empty()) {
    std::set<std::string> conds;
    for (const auto& e : probe) conds.insert(e.condition);
    for (const auto& c : conds) groups.push_back({c, {c}});
  }

  // per probe: correct@rank flags relative to the filtered gallery
  struct ProbeScore {
    int64_t rank = 0;  // 1-based rank of the first same-id gallery entry
    bool dropped = true;
  };
  std::vector<ProbeScore> scores(probe.size());
  for (size_t i = 0; i < probe.size(); ++i) {
    const GaitEmbedding& q = probe[i];
    double best_d = 0;
    int64_t best_j = -1;
    // rank of the first correct entry = 1 + number of strictly closer or
    // tie-earlier wrong entries before it
    double correct_d = std::numeric_limits<double>::infinity();
    int64_t correct_j = -1;
    std::vector<std::pair<double, int64_t>> order;
    bool any_gallery = false, any_same_id = false;
    for (size_t j = 0; j < gallery.size(); ++j) {
      const GaitEmbedding& g = gallery[j];
      if (proto.view_exclusion && g.view == q.view) continue;
      any_gallery = true;
      const double d = embedding_distance(q.emb, g.emb, dist_agg);
      order.emplace_back(d, static_cast<int64_t>(j));
      if (g.id == q.id) {
        any_same_id = true;
        if (d < correct_d) {
          correct_d = d;
          correct_j = static_cast<int64_t>(j);
        }
      }
      if (best_j < 0 || d < best_d) {
        best_d = d;
        best_j = static_cast<int64_t>(j);
      }
    }
    if (!any_gallery || !any_same_id) {
      rep.coverage.dropped_probes++;
      continue;
    }
    (void)correct_j;
    scores[i].dropped = false;
    // ties resolve by gallery position so results are order-stable
    std::sort(order.begin(), order.end());
    int64_t rank = 0;
    for (size_t k = 0; k < order.size(); ++k) {
      if (gallery[static_cast<size_t>(order[k].second)].id == q.id) {
        rank = static_cast<int64_t>(k) + 1;
        break;
      }
    }
    scores[i].rank = rank;
    if (trace) trace->emplace_back(static_cast<int64_t>(i), best_j);
  }

  double mean_acc = 0;
  int64_t groups_scored = 0;
  for (const ConditionGroup& grp : groups) {
    ConditionResult res;
    res.name = grp.name;
    res.cmc.assign(kMaxRank, 0.0);
    // bucket probes of this group by view
    std::map<std::string, std::vector<size_t>> by_view;
    for (size_t i = 0; i < probe.size(); ++i) {
      if (scores[i].dropped) continue;
      if (!contains(grp.conditions, probe[i].condition)) continue;
      by_view[probe[i].view].push_back(i);
      res.probes++;
    }
    if (by_view.empty()) {
      rep.conditions.push_back(std::move(res));
      continue;
    }
    std::vector<double> cmc_acc(kMaxRank, 0.0);
    double r1_acc = 0;
    int64_t denom = 0;
    if (proto.view_average) {
      for (const auto& [view, idxs] : by_view) {
        double hit = 0;
        std::vector<double> cmc_v(kMaxRank, 0.0);
        for (size_t i : idxs) {
          if (scores[i].rank == 1) hit += 1;
          for (int64_t r = scores[i].rank; r <= kMaxRank; ++r)
            cmc_v[static_cast<size_t>(r - 1)] += 1;
        }
        const double n = static_cast<double>(idxs.size());
        res.per_view[view] = 100.0 * hit / n;
        r1_acc += hit / n;
        for (int64_t r = 0; r < kMaxRank; ++r)
          cmc_acc[static_cast<size_t>(r)] += cmc_v[static_cast<size_t>(r)] / n;
        denom++;
      }
    } else {
      for (const auto& [view, idxs] : by_view) {
        double hit = 0;
        for (size_t i : idxs) {
          if (scores[i].rank == 1) hit += 1;
          for (int64_t r = scores[i].rank; r <= kMaxRank; ++r)
            cmc_acc[static_cast<size_t>(r - 1)] += 1;
        }
        res.per_view[view] = 100.0 * hit / static_cast<double>(idxs.size());
        r1_acc += hit;
        denom += static_cast<int64_t>(idxs.size());
      }
    }
    res.rank1 = 100.0 * r1_acc / static_cast<double>(denom);
    for (int64_t r = 0; r < kMaxRank; ++r)
      res.cmc[static_cast<size_t>(r)] =
          100.0 * cmc_acc[static_cast<size_t>(r)] / static_cast<double>(denom);
    mean_acc += res.rank1;
    groups_scored++;
    rep.conditions.push_back(std::move(res));
  }
  rep.mean_rank1 = groups_scored ? mean_acc / groups_scored : 0.0;
  return rep;
}

EvalReport run_protocol(GaitModel& model, const DatasetManifest& manifest,
                        const ProtocolConfig& proto) {
  EvalCoverage cov;
  auto gallery = extract_embeddings(manifest, proto.gallery, model, &cov);
  auto probe = extract_embeddings(manifest, proto.probe, model, &cov);
  MatchTrace trace;
  EvalReport rep = rank1(gallery, probe, proto, model.config().distance, &trace);
  rep.coverage.errors = std::move(cov.errors);
  rep.coverage.dropped_probes += cov.dropped_probes;
  rep.train_domain = manifest.dataset;
  rep.eval_domain = manifest.dataset;
  return rep;
}

EvalReport cross_domain_run(GaitModel& model, const std::string& train_domain,
                            const DatasetManifest& eval_manifest,
                            const ProtocolConfig& proto) {
  EvalReport rep = run_protocol(model, eval_manifest, proto);
  rep.train_domain = train_domain;
  rep.eval_domain = eval_manifest.dataset;
  return rep;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["protocol"] = r.protocol;
  j["checkpoint"] = r.checkpoint_id;
  j["train_domain"] = r.train_domain;
  j["eval_domain"] = r.eval_domain;
  j["distance"] = r.distance;
  j["mean_rank1"] = r.mean_rank1;
  j["coverage"] = {{"dropped_probes", r.coverage.dropped_probes},
                   {"errors", r.coverage.errors}};
  json conds = json::array();
  for (const auto& c : r.conditions) {
    json jc;
    jc["name"] = c.name;
    jc["rank1"] = c.rank1;
    jc["probes"] = c.probes;
    jc["cmc"] = c.cmc;
    jc["per_view"] = c.per_view;
    conds.push_back(std::move(jc));
  }
  j["conditions"] = std::move(conds);
  return j.dump(2);
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  os << "protocol: " << r.protocol << "   distance: " << r.distance;
  if (!r.train_domain.empty())
    os << "   domains: " << r.train_domain << " -> " << r.eval_domain;
  os << "\n";
  if (!r.checkpoint_id.empty()) os << "checkpoint: " << r.checkpoint_id << "\n";

  // collect the union of probe views for the matrix columns
  std::set<std::string> views;
  for (const auto& c : r.conditions)
    for (const auto& [v, _] : c.per_view) views.insert(v);

  char buf[64];
  os << "condition |  rank-1 | probes |";
  for (const auto& v : views) {
    std::snprintf(buf, sizeof(buf), " %8s |", v.c_str());
    os << buf;
  }
  os << "\n";
  for (const auto& c : r.conditions) {
    std::snprintf(buf, sizeof(buf), "%-9s | %7.2f | %6lld |", c.name.c_str(),
                  c.rank1, static_cast<long long>(c.probes));
    os << buf;
    for (const auto& v : views) {
      auto it = c.per_view.find(v);
      if (it == c.per_view.end())
        std::snprintf(buf, sizeof(buf), " %8s |", "-");
      else
        std::snprintf(buf, sizeof(buf), " %8.2f |", it->second);
      os << buf;
    }
    os << "\n";
  }
  std::snprintf(buf, sizeof(buf), "mean rank-1: %.2f\n", r.mean_rank1);
  os << buf;
  if (r.coverage.dropped_probes > 0)
    os << "coverage warning: " << r.coverage.dropped_probes
       << " probe(s) without a same-subject gallery entry were dropped\n";
  if (!r.coverage.errors.empty())
    os << "coverage warning: " << r.coverage.errors.size()
       << " sequence(s) failed to extract\n";
  return os.str();
}

void write_embedding(const std::string& path, const GaitEmbedding& e) {
  json meta;
  meta["id"] = e.id;
  meta["condition"] = e.condition;
  meta["view"] = e.view;
  meta["seq"] = e.seq;
  meta["shape"] = e.emb.shape();
  meta["dtype"] = "f32";
  std::ofstream os(path, std::ios::binary);
  GG_CHECK(os.good(), "cannot write embedding file " << path);
  os << meta.dump() << "\n";
  os.write(reinterpret_cast<const char*>(e.emb.data()),
           static_cast<std::streamsize>(e.emb.numel() * sizeof(float)));
  GG_CHECK(os.good(), "write failed for embedding file " << path);
}

GaitEmbedding read_embedding(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  GG_CHECK(is.good(), "cannot open embedding file " << path);
  std::string line;
  std::getline(is, line);
  json meta;
  try {
    meta = json::parse(line);
  } catch (const std::exception& e) {
    fail(path + ": bad embedding meta: " + e.what());
  }
  GaitEmbedding e;
  e.id = meta.at("id").get<std::string>();
  e.condition = meta.at("condition").get<std::string>();
  e.view = meta.at("view").get<std::string>();
  e.seq = meta.at("seq").get<std::string>();
  GG_CHECK(meta.at("dtype").get<std::string>() == "f32",
           path << ": unsupported embedding dtype");
  const auto shape = meta.at("shape").get<std::vector<int64_t>>();
  e.emb = TensorF(shape);
  is.read(reinterpret_cast<char*>(e.emb.data()),
          static_cast<std::streamsize>(e.emb.numel() * sizeof(float)));
  GG_CHECK(is.good(), path << ": embedding payload truncated");
  return e;
}

}  // namespace gregait
