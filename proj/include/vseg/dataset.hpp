#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vseg {

/// Three-way disjoint partition of case identifiers.
struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  std::vector<std::string> test_ids;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Random disjoint split, deterministic given `seed`. Counts must sum to
/// ids.size(); duplicate identifiers are rejected.
DatasetSplit split_dataset(const std::vector<std::string>& ids, SplitCounts counts, std::uint64_t seed);

void write_split(const DatasetSplit& s, const std::filesystem::path& path);
DatasetSplit read_split(const std::filesystem::path& path);

}  // namespace vseg
