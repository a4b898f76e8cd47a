#include "gregait/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gregait/common.hpp"
#include "gregait/synth.hpp"
#include "json.hpp"

namespace gregait {

namespace {
const std::set<std::string> kSplits = {"train", "gallery", "probe"};
}

std::vector<const SequenceRecord*> DatasetManifest::split_entries(
    const std::string& split) const {
  std::vector<const SequenceRecord*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

std::vector<std::string> DatasetManifest::train_ids() const {
  std::set<std::string> ids;
  for (const auto& e : entries)
    if (e.split == "train") ids.insert(e.id);
  return {ids.begin(), ids.end()};
}

DatasetManifest parse_manifest(const std::string& json_text, bool lazy,
                               const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail("manifest parse error in " + origin + ": " + e.what());
  }
  GG_CHECK(j.is_object() && j.contains("dataset") && j.contains("entries"),
           "manifest " << origin << " must be {\"dataset\", \"entries\"}");
  DatasetManifest m;
  m.dataset = j.at("dataset").get<std::string>();
  std::set<std::string> seen_keys;
  for (size_t i = 0; i < j.at("entries").size(); ++i) {
    const auto& je = j.at("entries")[i];
    SequenceRecord r;
    try {
      r.id = je.at("id").get<std::string>();
      r.condition = je.at("condition").get<std::string>();
      r.view = je.at("view").get<std::string>();
      r.seq = je.at("seq").get<std::string>();
      r.split = je.at("split").get<std::string>();
      r.frames = je.at("frames").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      fail("manifest " + origin + " entry " + std::to_string(i) +
           ": missing/ill-typed field: " + e.what());
    }
    GG_CHECK(!r.frames.empty(),
             "manifest " << origin << " entry " << i << " has no frames");
    GG_CHECK(kSplits.count(r.split), "manifest " << origin << " entry " << i
                                                 << ": unknown split '"
                                                 << r.split << "'");
    const std::string key = r.id + "\x1f" + r.condition + "\x1f" + r.view +
                            "\x1f" + r.seq;
    GG_CHECK(seen_keys.insert(key).second,
             "duplicate sequence key (id=" << r.id << ", condition="
                                           << r.condition << ", view=" << r.view
                                           << ", seq=" << r.seq << ")");
    if (!lazy) {
      for (const auto& f : r.frames) {
        if (synth_uri(f)) continue;
        GG_CHECK(std::filesystem::exists(f),
                 "manifest " << origin << ": missing frame file " << f);
      }
    }
    m.entries.push_back(std::move(r));
  }
  return m;
}

DatasetManifest load_manifest(const std::string& path, bool lazy) {
  std::ifstream in(path);
  GG_CHECK(in, "cannot open manifest: " << path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), lazy, path);
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["dataset"] = m.dataset;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"id", e.id},
                            {"condition", e.condition},
                            {"view", e.view},
                            {"seq", e.seq},
                            {"split", e.split},
                            {"frames", e.frames}});
  }
  std::ofstream out(path);
  GG_CHECK(out, "cannot write manifest: " << path);
  out << j.dump(1) << "\n";
}

ImageF load_frame(const std::string& frame_path) {
  if (synth_uri(frame_path)) return render_synth_frame(frame_path);
  return read_image(frame_path);
}

}  // namespace gregait
