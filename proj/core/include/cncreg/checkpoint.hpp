#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "cncreg/networks.hpp"

namespace cncreg {

// Checkpoint directory layout: a manifest.txt describing the architecture in
// `key = value` form plus one CNCT tensor per trainable array, named after
// its parameter path (theta1.b0.main.cnct, theta2.inner.head.cnct, ...).
// Weights are stored as float32, so save/load/save is byte-stable.

struct LoadedCheckpoint {
    RegularizerCnc params;
    std::string kind; // "acncr" or "ar"
    std::map<std::string, std::string> extra;
};

void save_checkpoint(const std::filesystem::path& dir, const RegularizerCnc& r,
                     const std::string& kind,
                     const std::map<std::string, std::string>& extra,
                     bool overwrite);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace cncreg
