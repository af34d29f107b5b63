#include "volseg/report.hpp"

#include <algorithm>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "volseg/errors.hpp"
#include "volseg/metrics.hpp"

namespace volseg {

namespace fs = std::filesystem;

std::size_t write_report(const fs::path& runs, const fs::path& out) {
  if (!fs::is_directory(runs)) throw ValidationError("not a directory: " + runs.string());
  std::vector<fs::path> records;
  for (const auto& e : fs::recursive_directory_iterator(runs)) {
    if (e.is_regular_file() && e.path().filename() == "record.json") records.push_back(e.path());
  }
  std::sort(records.begin(), records.end());
  if (records.empty()) throw ValidationError("no record.json under " + runs.string());

  fs::create_directories(out);
  std::ofstream summary(out / "summary.csv");
  std::ofstream curves(out / "curves.csv");
  if (!summary || !curves) throw ValidationError("cannot write report to " + out.string());
  summary << "run,seed,epochs,best_epoch,dice,iou,hd95,nsd\n";
  curves << "run,epoch,seg,srpp,bd,total,lr,val_dice\n";

  using metrics::format_number;
  for (const auto& path : records) {
    std::ifstream in(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    std::string name = fs::relative(path.parent_path(), runs).generic_string();
    if (name == ".") name = path.parent_path().filename().string();
    const auto& v = j.at("validation");
    summary << name << ',' << j.at("seed").get<std::uint64_t>() << ',' << j.at("epochs").size()
            << ',' << j.at("best_epoch").get<std::size_t>() << ','
            << format_number(v.at("dice").get<double>()) << ','
            << format_number(v.at("iou").get<double>()) << ','
            << format_number(v.at("hd95").get<double>()) << ','
            << format_number(v.at("nsd").get<double>()) << '\n';
    for (const auto& e : j.at("epochs")) {
      curves << name << ',' << e.at("epoch").get<std::size_t>();
      for (const char* key : {"seg", "srpp", "bd", "total", "lr", "val_dice"}) {
        curves << ',' << format_number(e.at(key).get<double>());
      }
      curves << '\n';
    }
  }
  return records.size();
}

}  // namespace volseg
