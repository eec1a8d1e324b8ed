#include "vseg/dataset.hpp"

#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <json.hpp>

#include "vseg/error.hpp"

namespace vseg {

DatasetSplit split_dataset(const std::vector<std::string>& ids, SplitCounts counts, std::uint64_t seed) {
  if (counts.train + counts.validation + counts.test != ids.size()) {
    throw ValidationError("split counts sum to " +
                          std::to_string(counts.train + counts.validation + counts.test) + " but there are " +
                          std::to_string(ids.size()) + " ids");
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw ValidationError("case ids must be unique");
  }
  std::vector<std::string> order = ids;
  std::mt19937_64 rng(seed);
  // Fisher-Yates with rejection sampling so the permutation only depends on
  // the (standardised) mt19937_64 stream.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r = rng();
    while (r >= limit) r = rng();
    std::swap(order[i - 1], order[static_cast<std::size_t>(r % bound)]);
  }
  DatasetSplit s;
  auto it = order.begin();
  s.train_ids.assign(it, it + static_cast<std::ptrdiff_t>(counts.train));
  it += static_cast<std::ptrdiff_t>(counts.train);
  s.validation_ids.assign(it, it + static_cast<std::ptrdiff_t>(counts.validation));
  it += static_cast<std::ptrdiff_t>(counts.validation);
  s.test_ids.assign(it, order.end());
  return s;
}

void write_split(const DatasetSplit& s, const std::filesystem::path& path) {
  nlohmann::json j;
  j["train"] = s.train_ids;
  j["validation"] = s.validation_ids;
  j["test"] = s.test_ids;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write split file '" + path.string() + "'");
  f << j.dump(1) << '\n';
}

DatasetSplit read_split(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("missing split file '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(f);
    DatasetSplit s;
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.validation_ids = j.at("validation").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed split file '" + path.string() + "': " + e.what());
  }
}

}  // namespace vseg
