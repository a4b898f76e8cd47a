#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gregait/image.hpp"

namespace gregait {

struct SequenceRecord {
  std::string id;
  std::string condition;  // e.g. CL/UP/DN/BG/NM
  std::string view;
  std::string seq;        // sequence index within (id, condition, view)
  std::string split;      // train | gallery | probe
  std::vector<std::string> frames;
};

struct DatasetManifest {
  std::string dataset;
  std::vector<SequenceRecord> entries;

  std::vector<const SequenceRecord*> split_entries(const std::string& split) const;
  std::vector<std::string> train_ids() const;  // sorted unique ids in train split
};

// Parses and validates a manifest JSON file. With lazy=false every frame
// path must exist on disk (synth:// URIs are always considered present).
DatasetManifest load_manifest(const std::string& path, bool lazy = true);
DatasetManifest parse_manifest(const std::string& json_text, bool lazy,
                               const std::string& origin);
void save_manifest(const DatasetManifest& m, const std::string& path);

// Loads one frame, routing synth:// URIs to the procedural renderer and
// everything else to the image reader. Output is [3,H,W] in [0,1].
ImageF load_frame(const std::string& frame_path);

}  // namespace gregait
