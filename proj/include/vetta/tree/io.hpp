#pragma once

#include <filesystem>
#include <string>

#include "vetta/tree/tree.hpp"

namespace vetta::tree {

inline constexpr const char* kTreeSchema = "vetta-tree/1";

/// Parse or schema failure; the message starts with a JSON path such as "$.nodes[2].pos".
class TreeFormatError : public TreeError {
 public:
  using TreeError::TreeError;
};

std::string save_tree_json(const VesselTree& tree);
VesselTree load_tree_json(const std::string& text);

void save_tree(const VesselTree& tree, const std::filesystem::path& path);
VesselTree load_tree(const std::filesystem::path& path);

/// 2D trees only: the unit square maps to a 512 x 512 viewBox with y pointing up.
std::string tree_to_svg(const VesselTree& tree);

}  // namespace vetta::tree
