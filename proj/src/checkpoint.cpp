#include "celeganser/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "celeganser/error.hpp"

namespace celeganser::checkpoint {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'S', 'R'};

template <typename U>
void put(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string_view rest() const { return bytes_.substr(pos_); }

 private:
  void need(std::size_t n) const {
    require(bytes_.size() - pos_ >= n, ErrorCode::kCorruptFile, "checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::string encode(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint16_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    require(t.name.size() <= 0xFFFF && t.shape.size() <= 0xFF, ErrorCode::kInvalidArgument,
            "tensor name or rank too large for the checkpoint format");
    require(ad::numel(t.shape) == t.data.size(), ErrorCode::kShapeMismatch,
            "tensor " + t.name + " data does not match its shape");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, 0);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (int d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float f : t.data) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  for (const auto& [k, v] : ckpt.config) out += k + "=" + v + "\n";
  return out;
}

Checkpoint decode(std::string_view bytes) {
  require(bytes.size() >= 4 || std::memcmp(bytes.data(), kMagic, bytes.size()) != 0,
          ErrorCode::kCorruptFile, "truncated checkpoint");
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::kBadMagic,
          "not a CGSR checkpoint (bad magic)");
  Reader r(bytes.substr(4));
  const auto version = r.get<std::uint16_t>();
  require(version == kFormatVersion, ErrorCode::kCorruptFile,
          "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Checkpoint ckpt;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(r.take(r.get<std::uint16_t>()));
    require(seen.insert(t.name).second, ErrorCode::kCorruptFile,
            "duplicate tensor name " + t.name);
    require(r.get<std::uint8_t>() == 0, ErrorCode::kCorruptFile,
            "unsupported dtype for tensor " + t.name);
    const int rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint32_t>();
      require(dim <= (1u << 28), ErrorCode::kCorruptFile, "implausible dimension in " + t.name);
      t.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    require(n <= r.rest().size() / 4, ErrorCode::kCorruptFile, "checkpoint truncated");
    t.data.resize(n);
    for (auto& f : t.data) f = std::bit_cast<float>(r.get<std::uint32_t>());
    ckpt.tensors.push_back(std::move(t));
  }
  std::istringstream echo{std::string(r.rest())};
  std::string line;
  while (std::getline(echo, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kCorruptFile, "malformed config echo line");
    ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return ckpt;
}

void save(const fs::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::kIo, "cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorCode::kIo, "write failed for " + path.string());
}

Checkpoint load(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::kMissingCheckpoint, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode(ss.str());
}

Checkpoint to_checkpoint(const models::UNet<float>& net,
                         const std::map<std::string, std::string>& extra_config) {
  Checkpoint ckpt;
  for (const auto& [name, t] : net.state())
    ckpt.tensors.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  ckpt.config = extra_config;
  for (const auto& [k, v] : net.config().echo()) ckpt.config[k] = v;
  return ckpt;
}

void load_state(models::UNet<float>& net, const Checkpoint& ckpt) {
  require(ckpt.tensors.size() == net.state().size(), ErrorCode::kShapeMismatch,
          "checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, network has " +
              std::to_string(net.state().size()));
  for (auto& [name, t] : net.state()) {
    const NamedTensor* src = ckpt.find(name);
    require(src != nullptr, ErrorCode::kShapeMismatch, "checkpoint lacks tensor " + name);
    require(src->shape == t.shape(), ErrorCode::kShapeMismatch,
            "tensor " + name + " has shape " + ad::shape_string(src->shape) + ", expected " +
                ad::shape_string(t.shape()));
    std::copy(src->data.begin(), src->data.end(), t.mutable_data().begin());
  }
}

models::UNet<float> model_from_checkpoint(const Checkpoint& ckpt) {
  models::UNet<float> net(models::NetConfig::from_echo(ckpt.config));
  load_state(net, ckpt);
  return net;
}

std::string init_mode_name(InitMode mode) {
  switch (mode) {
    case InitMode::Scratch: return "scratch";
    case InitMode::Generic: return "generic";
    case InitMode::UvReg: return "uvreg";
  }
  return "unknown";
}

InitMode parse_init_mode(const std::string& name) {
  for (InitMode m : {InitMode::Scratch, InitMode::Generic, InitMode::UvReg})
    if (init_mode_name(m) == name) return m;
  fail(ErrorCode::kInvalidArgument, "unknown init mode '" + name + "'");
}

TransferReport transfer_encoder(const Checkpoint* src, models::UNet<float>& dst, InitMode mode,
                                std::uint64_t seed) {
  dst.init_he_uniform(seed);
  TransferReport report;
  for (const auto& [name, t] : dst.state())
    if (name.starts_with("enc.")) ++report.encoder_tensors;
  if (mode == InitMode::Scratch) return report;

  require(src != nullptr, ErrorCode::kMissingCheckpoint,
          init_mode_name(mode) + " init requires a source checkpoint");
  for (auto& [name, t] : dst.state()) {
    if (!name.starts_with("enc.")) continue;
    const NamedTensor* s = src->find(name);
    if (s == nullptr) continue;
    if (s->shape != t.shape()) {
      report.skipped_shape_mismatch.push_back(name);
      continue;
    }
    std::copy(s->data.begin(), s->data.end(), t.mutable_data().begin());
    ++report.transferred;
  }
  require(report.transferred > 0, ErrorCode::kShapeMismatch,
          "no encoder tensor of the source checkpoint matches the destination");
  return report;
}

}  // namespace celeganser::checkpoint
