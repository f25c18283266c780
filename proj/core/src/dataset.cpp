#include "mstn/dataset.hpp"

#include <filesystem>

#include "mstn/image_io.hpp"

namespace mstn {

namespace fs = std::filesystem;

Dataset Dataset::load(const std::string& dir) {
  Dataset ds;
  ds.manifest = manifest_from_file((fs::path(dir) / "manifest.json").string());
  ds.samples.reserve(ds.manifest.samples.size());
  for (const auto& rec : ds.manifest.samples) {
    PairSample s;
    s.record = rec;
    s.hazy = read_png_rgb((fs::path(dir) / rec.hazy_path).string())
                 .cast<float>();
    s.clear = read_png_rgb((fs::path(dir) / rec.clear_path).string())
                  .cast<float>();
    if (!(s.hazy.shape() == s.clear.shape())) {
      throw IoError("dataset " + dir + ": pair " + rec.id +
                    " has mismatched shapes " + s.hazy.shape().str() + " vs " +
                    s.clear.shape().str());
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace mstn
