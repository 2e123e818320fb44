#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "movietour/errors.hpp"
#include "movietour/model.hpp"

namespace movietour {

namespace {

constexpr std::string_view kMagic = "MTCK";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw TruncatedError(fmt::format("checkpoint truncated while reading {} at byte {}", what, pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelParams<float>& params) {
  params.validate();
  std::string out;
  out.reserve(64 + params.parameter_count() * 4);
  out.append(kMagic);
  put_u32(out, kCheckpointVersion);
  const ArchitectureConfig& c = params.config;
  for (std::uint32_t v : {c.input_size, c.input_channels, c.conv1_filters, c.conv2_filters, c.kernel, c.pool,
                          c.num_classes}) {
    put_u32(out, v);
  }
  const auto ts = params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(kParamNames[i].size()));
    out.append(kParamNames[i]);
    put_u32(out, static_cast<std::uint32_t>(ts[i]->rank()));
    for (std::size_t d : ts[i]->shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : ts[i]->data()) put_f32(out, v);
  }
  return out;
}

ModelParams<float> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.remaining() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw MagicError("not a checkpoint: magic bytes are not \"MTCK\"");
  }
  in.take(kMagic.size(), "magic");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionError(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
  }
  ArchitectureConfig config;
  for (std::uint32_t* field : {&config.input_size, &config.input_channels, &config.conv1_filters,
                               &config.conv2_filters, &config.kernel, &config.pool, &config.num_classes}) {
    *field = in.u32("config");
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ConsistencyError(fmt::format("checkpoint config is invalid: {}", e.what()));
  }

  const auto shapes = param_shapes(config);
  ModelParams<float> params;
  params.config = config;
  const auto ts = params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::uint32_t name_len = in.u32("tensor name length");
    const std::string_view name = in.take(name_len, "tensor name");
    if (name != kParamNames[i]) {
      throw ConsistencyError(fmt::format("tensor record {} is named \"{}\", expected \"{}\"", i, name, kParamNames[i]));
    }
    const std::uint32_t rank = in.u32("tensor rank");
    if (rank != shapes[i].size()) {
      throw ConsistencyError(fmt::format("{} has rank {} but the config implies {}", name, rank, shapes[i].size()));
    }
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = in.u32("tensor dims");
    if (shape != shapes[i]) {
      throw ConsistencyError(fmt::format("{} has shape {} but the embedded config implies {}", name,
                                         shape_str(shape), shape_str(shapes[i])));
    }
    std::vector<float> data(shape_numel(shape));
    for (float& v : data) v = in.f32("tensor payload");
    *ts[i] = Tensor<float>(std::move(shape), std::move(data));
  }
  if (in.remaining() != 0) {
    throw ConsistencyError(fmt::format("checkpoint has {} unexpected trailing bytes", in.remaining()));
  }
  return params;
}

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("failed writing checkpoint {}", path.string()));
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace movietour
