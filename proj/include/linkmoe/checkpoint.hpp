#pragma once

#include <filesystem>
#include <string>

#include "linkmoe/experts.hpp"
#include "linkmoe/gate.hpp"

namespace linkmoe {

/// Checkpoints are versioned little-endian binaries: magic "LMOE", format
/// version, a kind tag, layer dimensions, then raw 64-bit float parameters
/// in layer order. save_* additionally writes "<path>.meta", a small text
/// sidecar describing the model; loading never reads the sidecar.

void save_feature_mlp_checkpoint(const FeatureMlpExpert& expert,
                                 const std::filesystem::path& path,
                                 const std::string& sidecar_text);

FeatureMlpExpert load_feature_mlp_checkpoint(const std::filesystem::path& path);

void save_gate_checkpoint(const GateNetwork& gn,
                          const std::filesystem::path& path,
                          const std::string& sidecar_text);

GateNetwork load_gate_checkpoint(const std::filesystem::path& path);

}  // namespace linkmoe
