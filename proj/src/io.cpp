#include "celeganser/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "celeganser/error.hpp"

namespace celeganser::io {

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot read " + path.string());
  return in;
}

void put_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(const unsigned char* b) {
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int parse_int(const std::string& s, const fs::path& path) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), ErrorCode::kCorruptFile,
          "bad integer '" + s + "' in " + path.string());
  return v;
}

}  // namespace

void write_pgm16(const fs::path& path, const ImageGrid& image) {
  std::ofstream out = open_out(path);
  out << "P5\n" << image.width() << ' ' << image.height() << "\n65535\n";
  std::vector<unsigned char> buf(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double x = std::clamp(image[i], 0.0, 1.0);
    const auto v = static_cast<std::uint16_t>(std::lround(x * 65535.0));
    buf[2 * i] = static_cast<unsigned char>(v >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

ImageGrid read_pgm(const fs::path& path) {
  std::ifstream in = open_in(path);
  require(pgm_token(in) == "P5", ErrorCode::kBadMagic, "not a binary PGM: " + path.string());
  const int width = parse_int(pgm_token(in), path);
  const int height = parse_int(pgm_token(in), path);
  const int maxval = parse_int(pgm_token(in), path);
  require(width > 0 && height > 0 && maxval > 0 && maxval <= 65535, ErrorCode::kCorruptFile,
          "bad PGM header in " + path.string());
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * bytes_per);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(static_cast<std::size_t>(in.gcount()) == buf.size(), ErrorCode::kCorruptFile,
          "truncated PGM " + path.string());
  ImageGrid image(height, width);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const unsigned v = bytes_per == 2 ? (unsigned(buf[2 * i]) << 8) | buf[2 * i + 1] : buf[i];
    image[i] = static_cast<double>(v) / maxval;
  }
  return image;
}

void write_cguv(const fs::path& path, const ImageGrid& field) {
  static_assert(std::endian::native == std::endian::little,
                "CGUV writer assumes a little-endian host");
  std::ofstream out = open_out(path);
  out.write("CGUV", 4);
  put_u32_le(out, static_cast<std::uint32_t>(field.height()));
  put_u32_le(out, static_cast<std::uint32_t>(field.width()));
  put_u32_le(out, 0);
  std::vector<float> values(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) values[i] = static_cast<float>(field[i]);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

ImageGrid read_cguv(const fs::path& path) {
  std::ifstream in = open_in(path);
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  require(in.gcount() == 16, ErrorCode::kCorruptFile, "truncated CGUV " + path.string());
  require(std::memcmp(header, "CGUV", 4) == 0, ErrorCode::kBadMagic,
          "bad CGUV magic in " + path.string());
  const std::uint32_t height = get_u32_le(header + 4);
  const std::uint32_t width = get_u32_le(header + 8);
  require(height > 0 && width > 0 && height < (1u << 16) && width < (1u << 16),
          ErrorCode::kCorruptFile, "bad CGUV dimensions in " + path.string());
  std::vector<float> values(static_cast<std::size_t>(height) * width);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  require(static_cast<std::size_t>(in.gcount()) == values.size() * sizeof(float),
          ErrorCode::kCorruptFile, "truncated CGUV " + path.string());
  ImageGrid field(static_cast<int>(height), static_cast<int>(width));
  for (std::size_t i = 0; i < values.size(); ++i) field[i] = values[i];
  return field;
}

std::string format_double(double value) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, p);
}

void write_key_values(const fs::path& path, const KeyValues& kv,
                      const std::vector<std::string>& header_comments) {
  std::ofstream out = open_out(path);
  for (const std::string& line : header_comments) out << "# " << line << '\n';
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in = open_in(path);
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kCorruptFile,
            "malformed line '" + line + "' in " + path.string());
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

fs::path sample_stem(const fs::path& root, int worm_id, int timepoint) {
  char dir[32], stem[32];
  std::snprintf(dir, sizeof(dir), "worm_%04d", worm_id);
  std::snprintf(stem, sizeof(stem), "t%02d", timepoint);
  return root / dir / stem;
}

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(ids[i]);
  }
  return s;
}

std::vector<int> parse_ids(const std::string& s, const fs::path& path) {
  std::vector<int> ids;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) ids.push_back(parse_int(tok, path));
  return ids;
}

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  return stem.string() + suffix;
}

}  // namespace

void write_dataset(const fs::path& root, const std::vector<synth::Sample>& samples,
                   const Manifest& manifest, const std::vector<std::string>& config_echo) {
  fs::create_directories(root);
  for (const synth::Sample& s : samples) {
    const fs::path stem = sample_stem(root, s.worm_id, s.timepoint);
    write_pgm16(with_suffix(stem, "_image.pgm"), s.image);
    write_pgm16(with_suffix(stem, "_mask.pgm"), s.mask);
    write_cguv(with_suffix(stem, "_u.cguv"), s.uv.u);
    write_cguv(with_suffix(stem, "_v.cguv"), s.uv.v);
    write_key_values(with_suffix(stem, "_meta.txt"),
                     {{"age_hours", format_double(s.age_hours)},
                      {"seed", std::to_string(s.seed)},
                      {"worm_id", std::to_string(s.worm_id)},
                      {"timepoint", std::to_string(s.timepoint)},
                      {"representation",
                       std::string(geometry::representation_name(s.uv.representation))},
                      {"body_length", format_double(s.centerline.length())},
                      {"max_halfwidth", format_double(s.max_halfwidth)},
                      {"speckle_count", std::to_string(s.speckle_count)}});
  }
  write_key_values(root / "manifest.txt",
                   {{"format", "celeganser-dataset-1"},
                    {"timepoints", std::to_string(manifest.timepoints)},
                    {"train", join_ids(manifest.train_ids)},
                    {"val", join_ids(manifest.val_ids)}},
                   config_echo);
}

Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.txt";
  require(fs::exists(path), ErrorCode::kIo, "no dataset manifest at " + path.string());
  const KeyValues kv = read_key_values(path);
  require(kv.count("format") && kv.at("format") == "celeganser-dataset-1",
          ErrorCode::kCorruptFile, "unrecognized manifest format in " + path.string());
  Manifest m;
  m.timepoints = parse_int(kv.at("timepoints"), path);
  m.train_ids = parse_ids(kv.at("train"), path);
  m.val_ids = parse_ids(kv.at("val"), path);
  return m;
}

std::vector<synth::Sample> read_samples(const fs::path& root, const std::vector<int>& ids,
                                        int timepoints) {
  std::vector<synth::Sample> out;
  for (int id : ids) {
    for (int t = 0; t < timepoints; ++t) {
      const fs::path stem = sample_stem(root, id, t);
      synth::Sample s;
      s.image = read_pgm(with_suffix(stem, "_image.pgm"));
      s.mask = threshold(read_pgm(with_suffix(stem, "_mask.pgm")), 0.5);
      s.uv.u = read_cguv(with_suffix(stem, "_u.cguv"));
      s.uv.v = read_cguv(with_suffix(stem, "_v.cguv"));
      s.uv.valid = s.mask;
      const fs::path meta_path = with_suffix(stem, "_meta.txt");
      const KeyValues meta = read_key_values(meta_path);
      s.uv.representation = geometry::parse_representation(meta.at("representation"));
      s.age_hours = std::stod(meta.at("age_hours"));
      s.seed = std::stoull(meta.at("seed"));
      s.worm_id = parse_int(meta.at("worm_id"), meta_path);
      s.timepoint = parse_int(meta.at("timepoint"), meta_path);
      s.max_halfwidth = std::stod(meta.at("max_halfwidth"));
      require(s.image.same_dims(s.mask) && s.image.same_dims(s.uv.u) &&
                  s.image.same_dims(s.uv.v),
              ErrorCode::kCorruptFile, "sample rasters disagree in size at " + stem.string());
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace celeganser::io
