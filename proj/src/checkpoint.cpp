#include "vseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "vseg/error.hpp"

namespace vseg {

namespace {

constexpr char magic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::string& path, Network& net) {
  nlohmann::json h;
  h["fingerprint"] = net.fingerprint();
  h["tensors"] = nlohmann::json::array();
  const auto tensors = net.state_tensors();
  for (const auto& t : tensors) h["tensors"].push_back({{"name", t.name}, {"shape", t.tensor->shape()}});
  const std::string header = h.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const std::uint64_t len = header.size();
  f.write(magic, sizeof magic);
  f.write(reinterpret_cast<const char*>(&len), sizeof len);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& t : tensors) {
    f.write(reinterpret_cast<const char*>(t.tensor->data()), static_cast<std::streamsize>(t.tensor->size() * 4));
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

void load_checkpoint(const std::string& path, Network& net) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  char m[8];
  std::uint64_t len = 0;
  f.read(m, sizeof m);
  f.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!f || std::memcmp(m, magic, sizeof m) != 0) throw IoError("'" + path + "' is not a checkpoint");
  if (len > (std::uint64_t{1} << 30)) throw IoError("checkpoint header too large");
  std::string header(len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(len));
  if (!f) throw IoError("truncated checkpoint header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (h.value("fingerprint", std::string{}) != net.fingerprint()) {
    throw ValidationError("checkpoint architecture '" + h.value("fingerprint", std::string{}) +
                          "' does not match '" + net.fingerprint() + "'");
  }
  const auto tensors = net.state_tensors();
  const auto& list = h.at("tensors");
  if (list.size() != tensors.size()) throw ValidationError("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (list[i].at("name").get<std::string>() != tensors[i].name ||
        list[i].at("shape").get<Shape>() != tensors[i].tensor->shape()) {
      throw ValidationError("checkpoint tensor " + std::to_string(i) + " does not match '" + tensors[i].name + "'");
    }
  }
  for (const auto& t : tensors) {
    f.read(reinterpret_cast<char*>(t.tensor->data()), static_cast<std::streamsize>(t.tensor->size() * 4));
    if (!f) throw IoError("truncated checkpoint data");
  }
  if (f.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in checkpoint");
}

}  // namespace vseg
