#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "celeganser/image.hpp"
#include "celeganser/synthgen.hpp"

namespace celeganser::io {

namespace fs = std::filesystem;

/// Binary PGM (P5), 16-bit big-endian samples, maxval 65535. Values in [0, 1]
/// are scaled and rounded; out-of-range values are clamped.
void write_pgm16(const fs::path& path, const ImageGrid& image);
/// Reads 8- or 16-bit P5 and returns values divided by maxval.
ImageGrid read_pgm(const fs::path& path);

/// Raw float raster: "CGUV", u32 height, u32 width, u32 reserved (all
/// little-endian), then height*width IEEE-754 float32 little-endian values.
void write_cguv(const fs::path& path, const ImageGrid& field);
ImageGrid read_cguv(const fs::path& path);

using KeyValues = std::map<std::string, std::string>;

/// "key=value" per line; '#' starts a comment line.
void write_key_values(const fs::path& path, const KeyValues& kv,
                      const std::vector<std::string>& header_comments = {});
KeyValues read_key_values(const fs::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

struct Manifest {
  std::vector<int> train_ids;
  std::vector<int> val_ids;
  int timepoints = 0;
};

fs::path sample_stem(const fs::path& root, int worm_id, int timepoint);

/// One directory per worm id plus manifest.txt holding the identity split.
void write_dataset(const fs::path& root, const std::vector<synth::Sample>& samples,
                   const Manifest& manifest,
                   const std::vector<std::string>& config_echo = {});
Manifest read_manifest(const fs::path& root);
/// Samples for the given ids (ordered by id, then timepoint). Centerlines are
/// not stored on disk, so the returned samples carry an empty centerline.
std::vector<synth::Sample> read_samples(const fs::path& root, const std::vector<int>& ids,
                                        int timepoints);

}  // namespace celeganser::io
