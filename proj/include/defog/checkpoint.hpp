#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "defog/autodiff.hpp"

namespace defog {

// Single-file tensor archive: magic + format version, a JSON metadata header,
// then named shape-tagged float arrays. Used for checkpoints, exported
// feature-extractor weights, and optimizer state.
struct Archive {
    nlohmann::json meta;
    std::vector<std::pair<std::string, ad::TensorT<float>>> tensors;

    static constexpr uint32_t kFormatVersion = 1;

    void add(const std::string& name, const ad::TensorT<float>& t) {
        tensors.emplace_back(name, t);
    }
    const ad::TensorT<float>& find(const std::string& name) const;
    bool contains(const std::string& name) const;
};

void save_archive(const Archive& a, const std::string& path);
Archive load_archive(const std::string& path);

} // namespace defog
