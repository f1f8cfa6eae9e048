#include "s2v/run_config.hpp"

#include <fstream>

namespace s2v::cli {

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  ckpt::json j = ckpt::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError("config file is not valid JSON: " + path.string());
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path.string());
  out << to_json().dump(2) << "\n";
}

}  // namespace s2v::cli
