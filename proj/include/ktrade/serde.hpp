#pragma once

#include "ktrade/kernels.hpp"
#include "ktrade/mean_variance.hpp"
#include "ktrade/path.hpp"
#include "ktrade/pnl_kernel.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>

namespace ktrade {

using json = nlohmann::json;

json to_json(const Path& p);
Path path_from_json(const json& j);

json to_json(const PathBatch& b);
PathBatch batch_from_json(const json& j);

json to_json(const KernelSpec& k);
KernelSpec kernel_spec_from_json(const json& j);

json to_json(const EmbeddingSpec& e);
EmbeddingSpec embedding_spec_from_json(const json& j);

json to_json(const OperatorLift& lift);
OperatorLift lift_from_json(const json& j);

json to_json(const GramMatrix& g);
GramMatrix gram_from_json(const json& j);

json to_json(const FitConfig& c);
FitConfig fit_config_from_json(const json& j);

json to_json(const FittedWeights& w);
FittedWeights weights_from_json(const json& j);

json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const json& j);

/// Throws when `j` holds keys outside `allowed`; context names the object.
void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& context);

} // namespace ktrade
