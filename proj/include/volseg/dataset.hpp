#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "volseg/config.hpp"
#include "volseg/phantom.hpp"
#include "volseg/volume.hpp"

namespace volseg {

struct Case {
  std::string name;  // e.g. case_007
  Volume volume;
  LabelMask label;
};

std::string case_name(std::size_t index);
std::vector<Case> generate_dataset(const DatasetSpec& spec);

/// <dir>/<name>.vol.svol and <dir>/<name>.mask.svol per case.
void write_dataset(const std::vector<Case>& cases, const std::filesystem::path& dir);
/// Every *.vol.svol in dir with its mask, sorted by name.
std::vector<Case> read_dataset(const std::filesystem::path& dir);
/// Masks only: <dir>/<name>.mask.svol, sorted by name.
std::vector<std::pair<std::string, LabelMask>> read_masks(const std::filesystem::path& dir);

/// phantom.* keys.
void read_dataset_spec(ConfigReader& reader, DatasetSpec& spec);
std::vector<std::pair<std::string, std::string>> dataset_spec_entries(const DatasetSpec& spec);

}  // namespace volseg
