#pragma once

#include <string>
#include <vector>

#include "stshn/datapipe.hpp"
#include "stshn/model.hpp"
#include "stshn/training.hpp"

namespace stshn {

// Everything the CLI needs, parsed from key=value lines ('#' comments) with
// repeatable command-line overrides. Unknown keys are rejected.
struct RunConfig {
    Hyperparams hyper;
    TrainConfig train;
    GridSpec grid;
    std::vector<std::string> categories;
    std::size_t window = 30;
    unsigned ratio_train = 7, ratio_test = 1;
    std::size_t protocol_cap = 90;

    // Applies one key=value assignment; throws ConfigError on unknown keys
    // or malformed values.
    void set(const std::string& key, const std::string& value);
};

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);
RunConfig config_from_overrides(const std::vector<std::string>& overrides);

// The documented default for every key, as config-file text.
std::string default_config_text();

}  // namespace stshn
