#pragma once

#include <filesystem>

namespace volseg {

/// Scans `runs` (recursively) for record.json files and writes
///   summary.csv  run,seed,epochs,best_epoch,dice,iou,hd95,nsd
///   curves.csv   run,epoch,seg,srpp,bd,total,lr,val_dice
/// to `out`. Run names are paths relative to `runs`. Returns the run count.
std::size_t write_report(const std::filesystem::path& runs, const std::filesystem::path& out);

}  // namespace volseg
