#pragma once

#include <filesystem>
#include <string>

#include "ddgan/training.hpp"

namespace ddgan {

// Flat `key = value` text with '#' comments. Unknown keys are rejected so
// typos cannot silently change an experiment.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

// Canonical echo: every field, one per line, doubles at full precision.
// parse(serialize(c)) reproduces c exactly.
std::string serialize_train_config(const TrainConfig& cfg);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ddgan
