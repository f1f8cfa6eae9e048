#pragma once

#include "s2v/dataset.hpp"
#include "s2v/run_config.hpp"

namespace s2v::cli {

struct PrepOptions {
  RunConfig cfg;
  std::filesystem::path input;
  std::filesystem::path out;
  std::filesystem::path canonical_path;  // empty -> built-in canonical face
  bool skip_bad = false;
};

struct PrepResult {
  data::Manifest manifest;
  size_t tracks_ok = 0;
  size_t tracks_failed = 0;
};

// Full data preparation: per input track, shot splitting, similarity
// registration of every frame to the canonical face, target/identity
// sampling and packed-sample output under out/tracks/, plus the manifest.
PrepResult run_prep(const PrepOptions& opts);

// Table-1 style dataset summary.
std::string format_stats_table(const data::Manifest& manifest);

std::string format_thousands(uint64_t v);

}  // namespace s2v::cli
