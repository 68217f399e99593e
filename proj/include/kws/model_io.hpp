#pragma once

#include "kws/network.hpp"

#include <string>

namespace kws {

// "kwsmodel v1": KWSM magic, version, every front-end constant, layer
// dimension list, phoneme inventory, then row-major float32 weights and
// biases layer by layer, all little-endian. load(save(m)) == m bit-exactly.
void save_model(const std::string& path, const ModelParameters<float>& model);
ModelParameters<float> load_model(const std::string& path);

}  // namespace kws
