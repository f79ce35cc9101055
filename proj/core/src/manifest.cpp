#include "asc/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "asc/error.hpp"

namespace asc {

std::vector<std::string> DatasetManifest::vocabulary() const {
  std::set<std::string> scenes;
  for (const auto& r : records) scenes.insert(r.scene);
  return {scenes.begin(), scenes.end()};
}

int DatasetManifest::label_index(const std::string& scene) const {
  const auto vocab = vocabulary();
  const auto it = std::lower_bound(vocab.begin(), vocab.end(), scene);
  if (it == vocab.end() || *it != scene) throw DataError("manifest: unknown scene " + scene);
  return static_cast<int>(it - vocab.begin());
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.path.empty()) throw DataError("manifest: empty path");
    if (r.scene.empty()) throw DataError("manifest: empty scene for " + r.path);
    if (r.fold < 1) throw DataError("manifest: fold must be >= 1 for " + r.path);
    if (!seen.insert(r.path).second) throw DataError("manifest: duplicate path " + r.path);
  }
}

DatasetManifest DatasetManifest::load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("manifest: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,scene,fold") {
    throw DataError("manifest: expected header 'path,scene,fold' in " + path.string());
  }
  DatasetManifest m;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    if (c1 == std::string::npos || c2 == c1) {
      throw DataError("manifest: malformed line " + std::to_string(line_no) + " in " + path.string());
    }
    ManifestRecord r;
    r.path = line.substr(0, c1);
    r.scene = line.substr(c1 + 1, c2 - c1 - 1);
    try {
      r.fold = std::stoi(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw DataError("manifest: bad fold on line " + std::to_string(line_no) + " in " +
                      path.string());
    }
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void DatasetManifest::save_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("manifest: cannot write " + path.string());
  os << "path,scene,fold\n";
  for (const auto& r : records) os << r.path << "," << r.scene << "," << r.fold << "\n";
  if (!os) throw DataError("manifest: write failed for " + path.string());
}

}  // namespace asc
