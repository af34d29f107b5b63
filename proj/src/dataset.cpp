#include "volseg/dataset.hpp"

#include <algorithm>
#include <cstdio>

#include "volseg/errors.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

namespace fs = std::filesystem;

namespace {
constexpr std::string_view kVolumeSuffix = ".vol.svol";
constexpr std::string_view kMaskSuffix = ".mask.svol";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string> stems(const fs::path& dir, std::string_view suffix) {
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && ends_with(name, suffix)) {
      out.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace

std::string case_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%03zu", index);
  return buf;
}

std::vector<Case> generate_dataset(const DatasetSpec& spec) {
  std::vector<Case> out;
  const auto specs = sample_phantom_specs(spec);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto p = generate_phantom(specs[i]);
    out.push_back({case_name(i), std::move(p.volume), std::move(p.label)});
  }
  return out;
}

void write_dataset(const std::vector<Case>& cases, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& c : cases) {
    write_volume(c.volume, dir / (c.name + std::string(kVolumeSuffix)));
    write_mask(c.label, dir / (c.name + std::string(kMaskSuffix)));
  }
}

std::vector<Case> read_dataset(const fs::path& dir) {
  std::vector<Case> out;
  for (const auto& stem : stems(dir, kVolumeSuffix)) {
    const fs::path mask_path = dir / (stem + std::string(kMaskSuffix));
    if (!fs::exists(mask_path)) throw ValidationError("missing mask for " + stem);
    Case c{stem, read_volume(dir / (stem + std::string(kVolumeSuffix))), read_mask(mask_path)};
    if (c.volume.shape() != c.label.shape()) {
      throw ValidationError(stem + ": volume and mask differ in shape");
    }
    out.push_back(std::move(c));
  }
  if (out.empty()) throw ValidationError("no cases found in " + dir.string());
  return out;
}

std::vector<std::pair<std::string, LabelMask>> read_masks(const fs::path& dir) {
  std::vector<std::pair<std::string, LabelMask>> out;
  for (const auto& stem : stems(dir, kMaskSuffix)) {
    out.emplace_back(stem, read_mask(dir / (stem + std::string(kMaskSuffix))));
  }
  return out;
}

void read_dataset_spec(ConfigReader& r, DatasetSpec& s) {
  r.get("phantom.seed", s.seed);
  r.get("phantom.cases", s.cases);
  r.get("phantom.depth", s.shape.depth);
  r.get("phantom.height", s.shape.height);
  r.get("phantom.width", s.shape.width);
  r.get("phantom.classes", s.classes);
  r.get("phantom.radius_y", s.radius_y);
  r.get("phantom.radius_x", s.radius_x);
  r.get("phantom.radius_jitter", s.radius_jitter);
  r.get("phantom.drift_y", s.drift_y);
  r.get("phantom.drift_x", s.drift_x);
  r.get("phantom.growth", s.growth);
  r.get("phantom.center_jitter", s.center_jitter);
  r.get("phantom.noise", s.noise);
}

std::vector<std::pair<std::string, std::string>> dataset_spec_entries(const DatasetSpec& s) {
  auto d = format_config_value;
  return {{"phantom.seed", std::to_string(s.seed)},
          {"phantom.cases", std::to_string(s.cases)},
          {"phantom.depth", std::to_string(s.shape.depth)},
          {"phantom.height", std::to_string(s.shape.height)},
          {"phantom.width", std::to_string(s.shape.width)},
          {"phantom.classes", std::to_string(s.classes)},
          {"phantom.radius_y", d(s.radius_y)},
          {"phantom.radius_x", d(s.radius_x)},
          {"phantom.radius_jitter", d(s.radius_jitter)},
          {"phantom.drift_y", d(s.drift_y)},
          {"phantom.drift_x", d(s.drift_x)},
          {"phantom.growth", d(s.growth)},
          {"phantom.center_jitter", d(s.center_jitter)},
          {"phantom.noise", d(s.noise)}};
}

}  // namespace volseg
