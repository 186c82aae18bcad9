#include "ewmlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ewmlab/errors.hpp"

namespace ewmlab {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  auto p = stem;
  p += suffix;
  return p;
}

std::string encode_shape(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& stem) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  const auto bin_path = with_suffix(stem, ".bin");
  const auto manifest_path = with_suffix(stem, ".manifest");
  std::ofstream bin(bin_path, std::ios::binary);
  std::ofstream manifest(manifest_path);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  if (!manifest) throw IoError("cannot write " + manifest_path.string());
  manifest << "ewmlab-checkpoint v" << kCheckpointVersion << '\n';
  std::size_t offset = 0;
  for (const auto& p : store.entries()) {
    const auto values = p.tensor.data();
    bin.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    manifest << p.name << ' ' << encode_shape(p.tensor.shape()) << ' ' << offset << ' ' << values.size()
             << '\n';
    offset += values.size();
  }
  if (!bin || !manifest) throw IoError("write failed for checkpoint " + stem.string());
}

void load_checkpoint(ParameterStore& store, const std::filesystem::path& stem) {
  const auto bin_path = with_suffix(stem, ".bin");
  const auto manifest_path = with_suffix(stem, ".manifest");
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot read " + manifest_path.string());
  std::string header;
  std::getline(manifest, header);
  if (header != "ewmlab-checkpoint v" + std::to_string(kCheckpointVersion)) {
    throw IoError("unsupported checkpoint header in " + manifest_path.string() + ": " + header);
  }
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot read " + bin_path.string());
  std::string line;
  std::size_t seen = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name, shape;
    std::size_t offset = 0, count = 0;
    if (!(is >> name >> shape >> offset >> count)) {
      throw IoError("malformed manifest line in " + manifest_path.string() + ": " + line);
    }
    auto& entry = store.entry(name);
    if (encode_shape(entry.tensor.shape()) != shape || entry.tensor.size() != count) {
      throw IoError("shape mismatch for '" + name + "' in " + manifest_path.string());
    }
    auto dst = entry.tensor.mutable_data();
    bin.seekg(static_cast<std::streamoff>(offset * sizeof(double)));
    bin.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!bin) throw IoError("truncated checkpoint data in " + bin_path.string());
    ++seen;
  }
  if (seen != store.entries().size()) {
    throw IoError("checkpoint " + stem.string() + " holds " + std::to_string(seen) + " of " +
                  std::to_string(store.entries().size()) + " parameters");
  }
}

}  // namespace ewmlab
