#pragma once

#include <filesystem>

#include "incdyn/incmodel.hpp"
#include "incdyn/sac.hpp"

namespace incdyn {

// Flat little-endian checkpoints. Every file starts with an 8-byte tag, then
// uint64 header fields, then the parameters as float64 (per layer: weight
// row-major, then bias). Layouts are documented in the README.

void save_model(const std::filesystem::path& path, const IncrementalModel& model);
IncrementalModel load_model(const std::filesystem::path& path);

void save_policy(const std::filesystem::path& path, const GaussianPolicy& policy);
GaussianPolicy load_policy(const std::filesystem::path& path);

void save_critic(const std::filesystem::path& path, const Critic& critic);
Critic load_critic(const std::filesystem::path& path);

}  // namespace incdyn
