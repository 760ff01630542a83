#pragma once

#include <string>

#include "stjm/laplace.hpp"
#include "stjm/model.hpp"

namespace stjm {

// Stores the grid (internal thetas, weights, modes); precisions are
// re-assembled deterministically from (theta, mode) when the fit is used.
void save_fit(const std::string& path, const FitResult& fit);
FitResult load_fit(const std::string& path, const ModelDefinition& model);

}  // namespace stjm
