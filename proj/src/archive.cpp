#include "txsp/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <boost/crc.hpp>

namespace txsp {
namespace {

static_assert(std::endian::native == std::endian::little,
              "archive payloads are written in host order, which must be little-endian");

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  std::memcpy(&v, in.data() + at, 8);
  return v;
}

template <typename S, typename T>
Tensor<T> read_tensor(const char* src, Shape shape) {
  std::vector<S> raw(shape.count());
  std::memcpy(raw.data(), src, raw.size() * sizeof(S));
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < raw.size(); ++i) t[i] = static_cast<T>(raw[i]);
  return t;
}

}  // namespace

template <typename T>
std::string encode_archive(const ParamSet<T>& params, const json& extra) {
  json header = extra.is_object() ? extra : json::object();
  header["version"] = kArchiveVersion;
  header["dtype"] = dtype_name<T>();
  json names = json::array();
  std::size_t offset = 0;
  for (const auto& name : params.names()) {
    const Shape s = params.at(name).shape();
    names.push_back({{"name", name},
                     {"dims", {s.n, s.c, s.h, s.w}},
                     {"byte_offset", offset},
                     {"trainable", params.trainable(name)}});
    offset += s.count() * sizeof(T);
  }
  header["names"] = std::move(names);
  const std::string h = header.dump();

  std::string out;
  out.reserve(8 + h.size() + offset);
  put_u64(out, h.size());
  out += h;
  for (const auto& name : params.names()) {
    const Tensor<T>& t = params.at(name);
    out.append(reinterpret_cast<const char*>(t.ptr()), t.size() * sizeof(T));
  }
  return out;
}

template <typename T>
ParamSet<T> decode_archive(std::string_view bytes, json* header_out) {
  if (bytes.size() < 8) throw ArchiveError("archive truncated before header length");
  const std::uint64_t hlen = get_u64(bytes, 0);
  if (hlen > bytes.size() - 8) throw ArchiveError("archive header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(8, hlen));
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("archive header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("names") || !header.contains("dtype"))
    throw ArchiveError("archive header lacks 'names' or 'dtype'");
  if (header.value("version", 0) != kArchiveVersion)
    throw ArchiveError("unsupported archive version " + header.value("version", json()).dump());
  const std::string dtype = header["dtype"].get<std::string>();
  if (dtype != "f32" && dtype != "f64") throw ArchiveError("unsupported dtype '" + dtype + "'");
  const std::size_t width = dtype == "f32" ? 4 : 8;
  const std::string_view payload = bytes.substr(8 + hlen);

  ParamSet<T> params;
  std::size_t expected_offset = 0;
  for (const auto& entry : header["names"]) {
    const std::string name = entry.at("name").get<std::string>();
    const auto dims = entry.at("dims").get<std::vector<int>>();
    if (dims.size() != 4) throw ArchiveError("tensor '" + name + "' does not have 4 dims");
    for (int d : dims)
      if (d < 0) throw ArchiveError("tensor '" + name + "' has a negative extent");
    const Shape shape{dims[0], dims[1], dims[2], dims[3]};
    const std::size_t offset = entry.at("byte_offset").get<std::size_t>();
    if (offset != expected_offset)
      throw ArchiveError("tensor '" + name + "' is not contiguous with its predecessor");
    const std::size_t len = shape.count() * width;
    if (offset + len > payload.size())
      throw ArchiveError("tensor '" + name + "' extends past the end of the payload");
    const char* src = payload.data() + offset;
    Tensor<T> t = width == 4 ? read_tensor<float, T>(src, shape) : read_tensor<double, T>(src, shape);
    params.add(name, std::move(t), entry.value("trainable", true));
    expected_offset = offset + len;
  }
  if (expected_offset != payload.size())
    throw ArchiveError("archive payload has " + std::to_string(payload.size() - expected_offset) +
                       " trailing bytes");
  if (header_out) *header_out = std::move(header);
  return params;
}

template <typename T>
void save_archive(const std::filesystem::path& path, const ParamSet<T>& params, const json& extra) {
  write_file_atomic(path, encode_archive(params, extra));
}

template <typename T>
ParamSet<T> load_archive(const std::filesystem::path& path, json* header) {
  return decode_archive<T>(read_file(path), header);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArchiveError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArchiveError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t crc64(std::string_view bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

#define TXSP_INSTANTIATE(T)                                                             \
  template std::string encode_archive(const ParamSet<T>&, const json&);                \
  template ParamSet<T> decode_archive(std::string_view, json*);                        \
  template void save_archive(const std::filesystem::path&, const ParamSet<T>&, const json&); \
  template ParamSet<T> load_archive(const std::filesystem::path&, json*);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp
