#include "lbla/weights.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace lbla {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic = {'L', 'B', 'L', 'A', 'W', 'T', 'S', '\0'};

class ByteWriter {
 public:
  void bytes(const std::uint8_t* data, std::size_t n) { out_.insert(out_.end(), data, data + n); }
  void u32(std::uint32_t v) { little_endian(v, 4); }
  void u64(std::uint64_t v) { little_endian(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void little_endian(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw WeightTruncatedError(std::string("weight file truncated while reading ") + what);
    }
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t little_endian(int n, const char* what) {
    const std::uint8_t* p = take(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(little_endian(4, what)); }
  std::uint64_t u64(const char* what) { return little_endian(8, what); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

struct IndexEntry {
  std::string name;
  std::uint64_t rows, cols;
};

template <typename Blocks, typename Visitor>
void for_each_model_tensor(Blocks& blocks, Visitor&& visit) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i) + ".";
    for_each_tensor(blocks[i], [&](const std::string& name, auto& t) { visit(prefix + name, t); });
  }
}

std::uint32_t narrow(Eigen::Index v, const char* what) {
  if (v < 0 || static_cast<std::uint64_t>(v) > 0xffffffffULL) {
    throw ConfigError(std::string(what) + " does not fit the weight header");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const std::vector<ConformerBlockParams>& blocks,
                                            const ModelConfig& cfg) {
  cfg.validate();
  if (static_cast<Eigen::Index>(blocks.size()) != cfg.num_layers) {
    throw ConfigError("config says " + std::to_string(cfg.num_layers) + " layers but " +
                      std::to_string(blocks.size()) + " blocks were given");
  }
  for (const auto& b : blocks) validate_block(b, cfg);

  ByteWriter w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kWeightFormatVersion);
  w.u32(narrow(cfg.num_layers, "num_layers"));
  w.u32(narrow(cfg.d_model, "d_model"));
  w.u32(narrow(cfg.d_ff, "d_ff"));
  w.u32(narrow(cfg.heads, "heads"));
  w.u32(narrow(cfg.conv_kernel, "conv_kernel"));
  w.u32(static_cast<std::uint32_t>(cfg.attn_kind));
  w.u32(static_cast<std::uint32_t>(cfg.kernel));
  w.u32(cfg.use_reweight ? 1u : 0u);
  w.u32(narrow(cfg.reweight_horizon, "reweight_horizon"));

  std::uint32_t count = 0;
  for_each_model_tensor(blocks, [&](const std::string&, const auto&) { ++count; });
  w.u32(count);
  for_each_model_tensor(blocks, [&](const std::string& name, const auto& t) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(reinterpret_cast<const std::uint8_t*>(name.data()), name.size());
    w.u64(static_cast<std::uint64_t>(t.rows()));
    w.u64(static_cast<std::uint64_t>(t.cols()));
  });
  for_each_model_tensor(blocks, [&](const std::string&, const auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) w.f64(t(r, c));
    }
  });
  return w.take();
}

EncoderModel deserialize_weights(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  const std::uint8_t* magic = r.take(kMagic.size(), "magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), magic)) {
    throw WeightFormatError("not a weight file (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kWeightFormatVersion) {
    throw WeightVersionError("weight file version " + std::to_string(version) +
                             ", this build reads version " +
                             std::to_string(kWeightFormatVersion));
  }
  ModelConfig cfg;
  cfg.num_layers = r.u32("config");
  cfg.d_model = r.u32("config");
  cfg.d_ff = r.u32("config");
  cfg.heads = r.u32("config");
  cfg.conv_kernel = r.u32("config");
  const std::uint32_t attn_kind = r.u32("config");
  const std::uint32_t kernel = r.u32("config");
  const std::uint32_t use_reweight = r.u32("config");
  cfg.reweight_horizon = r.u32("config");
  if (attn_kind > 1 || kernel > 3 || use_reweight > 1) {
    throw WeightFormatError("weight header has an unknown enum value");
  }
  cfg.attn_kind = static_cast<AttnKind>(attn_kind);
  cfg.kernel = static_cast<KernelKind>(kernel);
  cfg.use_reweight = use_reweight == 1;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw WeightFormatError(std::string("weight header config invalid: ") + e.what());
  }

  const std::uint32_t count = r.u32("tensor count");
  std::vector<IndexEntry> index;
  index.reserve(std::min<std::size_t>(count, r.remaining()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("tensor index");
    const std::uint8_t* name = r.take(len, "tensor index");
    IndexEntry e{std::string(reinterpret_cast<const char*>(name), len), 0, 0};
    e.rows = r.u64("tensor index");
    e.cols = r.u64("tensor index");
    index.push_back(std::move(e));
  }

  std::uint64_t values = 0;
  for (const IndexEntry& e : index) {
    if (e.cols != 0 && e.rows > (~std::uint64_t{0} >> 4) / e.cols) {
      throw WeightShapeIndexError(e.name, "implausible shape in index");
    }
    values += e.rows * e.cols;
    if (values > r.remaining() / 8) {
      throw WeightTruncatedError("weight file truncated: index describes more data than present");
    }
  }

  EncoderModel model;
  model.config = cfg;
  model.blocks.assign(static_cast<std::size_t>(cfg.num_layers), shaped_block(cfg));

  std::size_t expected = 0;
  for_each_model_tensor(model.blocks, [&](const std::string&, const auto&) { ++expected; });
  if (expected != index.size()) {
    throw WeightShapeIndexError(index.size() > expected ? index[expected].name : "<missing>",
                                "index has " + std::to_string(index.size()) +
                                    " tensors, config implies " + std::to_string(expected));
  }
  std::size_t next = 0;
  for_each_model_tensor(model.blocks, [&](const std::string& name, const auto& t) {
    const IndexEntry& e = index[next++];
    if (e.name != name) {
      throw WeightShapeIndexError(e.name, "expected tensor '" + name + "' at this position");
    }
    if (e.rows != static_cast<std::uint64_t>(t.rows()) ||
        e.cols != static_cast<std::uint64_t>(t.cols())) {
      throw WeightShapeIndexError(
          name, "index shape " + std::to_string(e.rows) + "x" + std::to_string(e.cols) +
                    " disagrees with header config " + shape_string(t.rows(), t.cols()));
    }
  });
  for_each_model_tensor(model.blocks, [&](const std::string&, auto& t) {
    for (Eigen::Index row = 0; row < t.rows(); ++row) {
      for (Eigen::Index col = 0; col < t.cols(); ++col) t(row, col) = r.f64("tensor data");
    }
  });
  if (r.remaining() != 0) throw WeightFormatError("trailing bytes after tensor data");
  return model;
}

void save_weights(const std::filesystem::path& path,
                  const std::vector<ConformerBlockParams>& blocks, const ModelConfig& cfg) {
  const std::vector<std::uint8_t> bytes = serialize_weights(blocks, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightFileError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightFileError("write failed for " + path.string());
}

EncoderModel load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

Eigen::Index parse_count(std::string_view key, std::string_view value) {
  long long parsed = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
  if (ec != std::errc() || ptr != value.data() + value.size() || parsed < 0) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  return static_cast<Eigen::Index>(parsed);
}

}  // namespace

ModelConfig parse_config(std::string_view text) {
  ModelConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("config key '" + std::string(key) + "' given twice");
    }
    if (key == "num_layers") {
      cfg.num_layers = parse_count(key, value);
    } else if (key == "d_model") {
      cfg.d_model = parse_count(key, value);
    } else if (key == "d_ff") {
      cfg.d_ff = parse_count(key, value);
    } else if (key == "heads") {
      cfg.heads = parse_count(key, value);
    } else if (key == "conv_kernel") {
      cfg.conv_kernel = parse_count(key, value);
    } else if (key == "reweight_horizon") {
      cfg.reweight_horizon = parse_count(key, value);
    } else if (key == "attn_kind") {
      if (value == "softmax") {
        cfg.attn_kind = AttnKind::kSoftmax;
      } else if (value == "lbla") {
        cfg.attn_kind = AttnKind::kLbla;
      } else {
        throw ConfigError("attn_kind must be softmax or lbla, got '" + std::string(value) + "'");
      }
    } else if (key == "kernel") {
      const auto kernel = parse_kernel(value);
      if (!kernel) throw ConfigError("unknown kernel '" + std::string(value) + "'");
      cfg.kernel = *kernel;
    } else if (key == "use_reweight") {
      if (value == "true" || value == "1") {
        cfg.use_reweight = true;
      } else if (value == "false" || value == "0") {
        cfg.use_reweight = false;
      } else {
        throw ConfigError("use_reweight must be true or false, got '" + std::string(value) + "'");
      }
    } else {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string format_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "num_layers = " << cfg.num_layers << "\n"
      << "d_model = " << cfg.d_model << "\n"
      << "d_ff = " << cfg.d_ff << "\n"
      << "heads = " << cfg.heads << "\n"
      << "conv_kernel = " << cfg.conv_kernel << "\n"
      << "attn_kind = " << (cfg.attn_kind == AttnKind::kSoftmax ? "softmax" : "lbla") << "\n"
      << "kernel = " << kernel_name(cfg.kernel) << "\n"
      << "use_reweight = " << (cfg.use_reweight ? "true" : "false") << "\n"
      << "reweight_horizon = " << cfg.reweight_horizon << "\n";
  return out.str();
}

}  // namespace lbla
