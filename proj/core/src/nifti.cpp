#include "apl/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "apl/error.hpp"

namespace apl::nifti {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kMinVoxOffset = 352;
constexpr std::int32_t kCommentExtension = 6;
constexpr const char* kExtensionKey = "apl";

// Byte offsets of the NIfTI-1 header fields used here.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t intent_code = 68;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace off

template <typename T>
T byteswap(T value) noexcept {
  auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T value;
    std::memcpy(&value, bytes_.data() + offset, sizeof(T));
    return swap_ ? byteswap(value) : value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, std::size_t offset, T value) {
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  std::memcpy(out.data() + offset, &value, sizeof(T));
}

std::size_t bytes_per_voxel(DataType t) {
  switch (t) {
    case DataType::uint8: return 1;
    case DataType::int16: return 2;
    case DataType::int32: return 4;
    case DataType::float32: return 4;
    case DataType::float64: return 8;
  }
  return 0;
}

std::optional<DataType> datatype_from_code(std::int16_t code) {
  switch (code) {
    case 2: return DataType::uint8;
    case 4: return DataType::int16;
    case 8: return DataType::int32;
    case 16: return DataType::float32;
    case 64: return DataType::float64;
    default: return std::nullopt;
  }
}

template <typename T>
void decode_payload(std::span<const std::uint8_t> raw, bool swap, std::vector<double>& out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    if (swap) v = byteswap(v);
    out[i] = static_cast<double>(v);
  }
}

struct Extension {
  std::optional<Vec3> spacing;
  std::optional<Matrix4> affine;
  std::optional<int> axial_axis;
  Palette palette;
};

Extension parse_extensions(std::span<const std::uint8_t> bytes, const ByteReader& rd,
                           std::size_t vox_offset) {
  Extension ext;
  if (bytes.size() < kMinVoxOffset || bytes[kHeaderSize] == 0) return ext;
  std::size_t pos = kMinVoxOffset;
  while (pos + 8 <= std::min(vox_offset, bytes.size())) {
    const auto esize = rd.get<std::int32_t>(pos);
    const auto ecode = rd.get<std::int32_t>(pos + 4);
    if (esize < 16 || esize % 16 != 0 || pos + static_cast<std::size_t>(esize) > vox_offset) break;
    if (ecode == kCommentExtension) {
      const auto* first = reinterpret_cast<const char*>(bytes.data() + pos + 8);
      std::string text(first, static_cast<std::size_t>(esize) - 8);
      text.erase(std::find(text.begin(), text.end(), '\0'), text.end());
      const auto doc = nlohmann::json::parse(text, nullptr, false);
      if (doc.is_object() && doc.contains(kExtensionKey)) {
        const auto& a = doc[kExtensionKey];
        try {
          if (a.contains("spacing")) ext.spacing = a["spacing"].get<Vec3>();
          if (a.contains("affine")) ext.affine = a["affine"].get<Matrix4>();
          if (a.contains("axial_axis")) ext.axial_axis = a["axial_axis"].get<int>();
          if (a.contains("palette")) {
            for (const auto& [k, v] : a["palette"].items()) {
              ext.palette[static_cast<Label>(std::stoul(k))] = v.get<std::string>();
            }
          }
        } catch (const std::exception&) {
          ext = Extension{};
        }
      }
    }
    pos += static_cast<std::size_t>(esize);
  }
  return ext;
}

std::string extension_json(const VolumeGeometry& g, const Palette* palette) {
  nlohmann::json a;
  a["spacing"] = g.spacing;
  a["affine"] = g.affine;
  a["axial_axis"] = g.axial_axis;
  if (palette) {
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [label, label_name] : *palette) p[std::to_string(label)] = label_name;
    a["palette"] = p;
  }
  nlohmann::json doc;
  doc[kExtensionKey] = a;
  return doc.dump();
}

bool float_equal(double stored, double header) {
  return static_cast<float>(stored) == static_cast<float>(header);
}

struct Decoded {
  VolumeGeometry geometry;
  std::vector<double> values;
  std::int16_t intent = 0;
  Palette palette;
};

Decoded decode(std::span<const std::uint8_t> file_bytes) {
  std::vector<std::uint8_t> inflated;
  std::span<const std::uint8_t> bytes = file_bytes;
  if (gzip::is_compressed(bytes)) {
    inflated = gzip::inflate(bytes);
    bytes = inflated;
  }
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::corrupt, "file shorter than the 348-byte NIfTI-1 header");
  }
  const char* magic = reinterpret_cast<const char*>(bytes.data() + off::magic);
  if (std::memcmp(magic, "n+1\0", 4) != 0) {
    if (std::memcmp(magic, "ni1\0", 4) == 0) {
      throw Error(ErrorCode::unsupported, "two-file (.hdr/.img) NIfTI pairs are not supported");
    }
    if (bytes.size() >= 8 && std::memcmp(bytes.data() + 4, "n+2\0", 4) == 0) {
      throw Error(ErrorCode::unsupported, "NIfTI-2 files are not supported");
    }
    throw Error(ErrorCode::format, "bad magic: not a single-file NIfTI-1 volume");
  }

  const bool native_little = std::endian::native == std::endian::little;
  const ByteReader as_little(bytes, !native_little);
  bool swap = !native_little;
  const auto ndim_le = as_little.get<std::int16_t>(off::dim);
  if (ndim_le < 1 || ndim_le > 7) {
    const ByteReader as_big(bytes, native_little);
    const auto ndim_be = as_big.get<std::int16_t>(off::dim);
    if (ndim_be < 1 || ndim_be > 7) throw Error(ErrorCode::format, "dim[0] outside [1,7] in either byte order");
    swap = native_little;
  }
  const ByteReader rd(bytes, swap);
  if (rd.get<std::int32_t>(off::sizeof_hdr) != static_cast<std::int32_t>(kHeaderSize)) {
    throw Error(ErrorCode::format, "sizeof_hdr is not 348");
  }

  const auto ndim = rd.get<std::int16_t>(off::dim);
  Decoded out;
  VolumeGeometry& g = out.geometry;
  for (int i = 1; i <= 7; ++i) {
    const auto d = rd.get<std::int16_t>(off::dim + 2 * i);
    if (i <= ndim && i <= 3) {
      if (d < 1) throw Error(ErrorCode::format, "dim[" + std::to_string(i) + "] must be >= 1");
      g.dims[i - 1] = d;
    } else if (i <= ndim && d > 1) {
      throw Error(ErrorCode::unsupported, "volumes with more than three dimensions are not supported");
    }
  }

  const auto code = rd.get<std::int16_t>(off::datatype);
  const auto datatype = datatype_from_code(code);
  if (!datatype) throw Error(ErrorCode::unsupported, "unsupported datatype code " + std::to_string(code));

  for (int i = 0; i < 3; ++i) {
    const double p = std::fabs(static_cast<double>(rd.get<float>(off::pixdim + 4 * (i + 1))));
    g.spacing[i] = (p > 0.0 && std::isfinite(p)) ? p : 1.0;
  }

  const auto sform = rd.get<std::int16_t>(off::sform_code);
  const auto qform = rd.get<std::int16_t>(off::qform_code);
  if (sform > 0) {
    g.affine = identity_affine();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) g.affine[r][c] = rd.get<float>(off::srow_x + 16 * r + 4 * c);
    }
  } else if (qform > 0) {
    const double b = rd.get<float>(off::quatern_b);
    const double c = rd.get<float>(off::quatern_b + 4);
    const double d = rd.get<float>(off::quatern_b + 8);
    const Vec3 offset{rd.get<float>(off::qoffset_x), rd.get<float>(off::qoffset_x + 4),
                      rd.get<float>(off::qoffset_x + 8)};
    const double qfac = rd.get<float>(off::pixdim) < 0.0F ? -1.0 : 1.0;
    g.affine = quaternion_to_affine(b, c, d, offset, g.spacing, qfac);
  } else {
    g.affine = diagonal_affine(g.spacing);
  }

  const double vox_offset_f = rd.get<float>(off::vox_offset);
  if (!(vox_offset_f >= 0.0) || vox_offset_f > static_cast<double>(bytes.size())) {
    throw Error(ErrorCode::corrupt, "vox_offset lies beyond the end of the file");
  }
  const auto vox_offset = std::max<std::size_t>(static_cast<std::size_t>(vox_offset_f), kHeaderSize);

  const Extension ext = parse_extensions(bytes, rd, vox_offset);
  if (ext.spacing && std::equal(ext.spacing->begin(), ext.spacing->end(), g.spacing.begin(), float_equal)) {
    g.spacing = *ext.spacing;
  }
  if (ext.affine) {
    bool consistent = true;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) consistent = consistent && float_equal((*ext.affine)[r][c], g.affine[r][c]);
    }
    if (consistent) g.affine = *ext.affine;
  }
  if (ext.axial_axis && *ext.axial_axis >= 0 && *ext.axial_axis <= 2) g.axial_axis = *ext.axial_axis;
  out.palette = ext.palette;
  g.validate();

  const std::size_t n = g.voxel_count();
  const std::size_t payload = n * bytes_per_voxel(*datatype);
  if (vox_offset + payload > bytes.size()) {
    throw Error(ErrorCode::corrupt, "payload truncated: expected " + std::to_string(payload) +
                                        " bytes after offset " + std::to_string(vox_offset));
  }
  const auto raw = bytes.subspan(vox_offset, payload);
  out.values.resize(n);
  switch (*datatype) {
    case DataType::uint8: decode_payload<std::uint8_t>(raw, swap, out.values); break;
    case DataType::int16: decode_payload<std::int16_t>(raw, swap, out.values); break;
    case DataType::int32: decode_payload<std::int32_t>(raw, swap, out.values); break;
    case DataType::float32: decode_payload<float>(raw, swap, out.values); break;
    case DataType::float64: decode_payload<double>(raw, swap, out.values); break;
  }

  const double slope = rd.get<float>(off::scl_slope);
  const double inter = rd.get<float>(off::scl_inter);
  if (slope != 0.0 && std::isfinite(slope) && std::isfinite(inter) && (slope != 1.0 || inter != 0.0)) {
    for (double& v : out.values) v = slope * v + inter;
  }
  out.intent = rd.get<std::int16_t>(off::intent_code);
  return out;
}

LabelVolume labels_from_values(VolumeGeometry g, const std::vector<double>& values, Palette palette) {
  std::vector<Label> labels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!(v >= 0.0) || v > std::numeric_limits<Label>::max() || std::floor(v) != v) {
      throw Error(ErrorCode::format, "label volume holds a non-integral or out-of-range value");
    }
    labels[i] = static_cast<Label>(v);
  }
  return LabelVolume(g, std::move(labels), std::move(palette));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
void encode_values(std::vector<std::uint8_t>& out, std::size_t offset, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if constexpr (std::is_integral_v<T>) {
      if (std::floor(v) != v || v < static_cast<double>(std::numeric_limits<T>::min()) ||
          v > static_cast<double>(std::numeric_limits<T>::max())) {
        throw Error(ErrorCode::write, "value " + std::to_string(v) + " not representable in the chosen datatype");
      }
    }
    put<T>(out, offset + i * sizeof(T), static_cast<T>(v));
  }
}

std::vector<std::uint8_t> encode(const VolumeGeometry& g, std::span<const double> values, DataType type,
                                 bool label_intent, const Palette* palette, bool compress) {
  g.validate();
  std::string ext = extension_json(g, palette);
  std::size_t esize = 8 + ext.size() + 1;
  esize = (esize + 15) / 16 * 16;
  const std::size_t vox_offset = kMinVoxOffset + esize;
  const std::size_t bpv = bytes_per_voxel(type);
  std::vector<std::uint8_t> out(vox_offset + values.size() * bpv, 0);

  for (int i = 0; i < 3; ++i) {
    if (g.dims[i] > std::numeric_limits<std::int16_t>::max()) {
      throw Error(ErrorCode::write, "dimension exceeds the NIfTI-1 int16 limit");
    }
  }
  put<std::int32_t>(out, off::sizeof_hdr, static_cast<std::int32_t>(kHeaderSize));
  put<std::int16_t>(out, off::dim, 3);
  for (int i = 0; i < 3; ++i) put<std::int16_t>(out, off::dim + 2 * (i + 1), static_cast<std::int16_t>(g.dims[i]));
  for (int i = 4; i <= 7; ++i) put<std::int16_t>(out, off::dim + 2 * i, 1);
  put<std::int16_t>(out, off::intent_code, label_intent ? kIntentLabel : 0);
  put<std::int16_t>(out, off::datatype, static_cast<std::int16_t>(type));
  put<std::int16_t>(out, off::bitpix, static_cast<std::int16_t>(bpv * 8));
  put<float>(out, off::pixdim, 1.0F);
  for (int i = 0; i < 3; ++i) put<float>(out, off::pixdim + 4 * (i + 1), static_cast<float>(g.spacing[i]));
  put<float>(out, off::vox_offset, static_cast<float>(vox_offset));
  put<float>(out, off::scl_slope, 1.0F);
  put<float>(out, off::scl_inter, 0.0F);
  out[off::xyzt_units] = 2;  // mm
  const char descrip[] = "apl";
  std::memcpy(out.data() + off::descrip, descrip, sizeof(descrip));
  put<std::int16_t>(out, off::qform_code, 0);
  put<std::int16_t>(out, off::sform_code, 1);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) put<float>(out, off::srow_x + 16 * r + 4 * c, static_cast<float>(g.affine[r][c]));
  }
  std::memcpy(out.data() + off::magic, "n+1\0", 4);

  out[kHeaderSize] = 1;
  put<std::int32_t>(out, kMinVoxOffset, static_cast<std::int32_t>(esize));
  put<std::int32_t>(out, kMinVoxOffset + 4, kCommentExtension);
  std::memcpy(out.data() + kMinVoxOffset + 8, ext.data(), ext.size());

  switch (type) {
    case DataType::uint8: encode_values<std::uint8_t>(out, vox_offset, values); break;
    case DataType::int16: encode_values<std::int16_t>(out, vox_offset, values); break;
    case DataType::int32: encode_values<std::int32_t>(out, vox_offset, values); break;
    case DataType::float32: encode_values<float>(out, vox_offset, values); break;
    case DataType::float64: encode_values<double>(out, vox_offset, values); break;
  }
  return compress ? gzip::deflate(out) : out;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::write, "cannot open " + tmp.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error(ErrorCode::write, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::write, "cannot move file into place at " + path.string());
  }
}

bool wants_gzip(const std::filesystem::path& path, const WriteOptions& options) {
  if (options.gzip) return *options.gzip;
  return path.extension() == ".gz";
}

}  // namespace

Matrix4 quaternion_to_affine(double b, double c, double d, const Vec3& offset, const Vec3& spacing,
                             double qfac) {
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1.0e-7) {
    const double norm = 1.0 / std::sqrt(b * b + c * c + d * d);
    b *= norm;
    c *= norm;
    d *= norm;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  const double xd = spacing[0];
  const double yd = spacing[1];
  const double zd = (qfac < 0.0 ? -1.0 : 1.0) * spacing[2];

  Matrix4 m = identity_affine();
  m[0][0] = (a * a + b * b - c * c - d * d) * xd;
  m[0][1] = 2.0 * (b * c - a * d) * yd;
  m[0][2] = 2.0 * (b * d + a * c) * zd;
  m[1][0] = 2.0 * (b * c + a * d) * xd;
  m[1][1] = (a * a + c * c - b * b - d * d) * yd;
  m[1][2] = 2.0 * (c * d - a * b) * zd;
  m[2][0] = 2.0 * (b * d - a * c) * xd;
  m[2][1] = 2.0 * (c * d + a * b) * yd;
  m[2][2] = (a * a + d * d - c * c - b * b) * zd;
  for (int r = 0; r < 3; ++r) m[r][3] = offset[r];
  return m;
}

AnyVolume parse_volume(std::span<const std::uint8_t> bytes) {
  Decoded d = decode(bytes);
  if (d.intent == kIntentLabel) return labels_from_values(d.geometry, d.values, std::move(d.palette));
  std::vector<float> samples(d.values.begin(), d.values.end());
  return ImageVolume(d.geometry, std::move(samples));
}

AnyVolume read_volume(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_volume(bytes);
}

ImageVolume to_image(AnyVolume vol) {
  if (auto* img = std::get_if<ImageVolume>(&vol)) return std::move(*img);
  const auto& lab = std::get<LabelVolume>(vol);
  return ImageVolume(lab.geometry(), std::vector<float>(lab.labels().begin(), lab.labels().end()));
}

LabelVolume to_labels(AnyVolume vol) {
  if (auto* lab = std::get_if<LabelVolume>(&vol)) return std::move(*lab);
  const auto& img = std::get<ImageVolume>(vol);
  const std::vector<double> values(img.samples().begin(), img.samples().end());
  return labels_from_values(img.geometry(), values, {});
}

ImageVolume read_image(const std::filesystem::path& path) { return to_image(read_volume(path)); }
LabelVolume read_labels(const std::filesystem::path& path) { return to_labels(read_volume(path)); }

std::vector<std::uint8_t> encode_volume(const ImageVolume& vol, const WriteOptions& options) {
  const std::vector<double> values(vol.samples().begin(), vol.samples().end());
  return encode(vol.geometry(), values, options.datatype.value_or(DataType::float32), false, nullptr,
                options.gzip.value_or(false));
}

std::vector<std::uint8_t> encode_volume(const LabelVolume& vol, const WriteOptions& options) {
  DataType type = DataType::int32;
  const Label top = vol.max_label();
  if (top <= 255) {
    type = DataType::uint8;
  } else if (top <= 32767) {
    type = DataType::int16;
  }
  const std::vector<double> values(vol.labels().begin(), vol.labels().end());
  return encode(vol.geometry(), values, options.datatype.value_or(type), true, &vol.palette(),
                options.gzip.value_or(false));
}

void write_volume(const ImageVolume& vol, const std::filesystem::path& path, const WriteOptions& options) {
  WriteOptions o = options;
  o.gzip = wants_gzip(path, options);
  write_file(path, encode_volume(vol, o));
}

void write_volume(const LabelVolume& vol, const std::filesystem::path& path, const WriteOptions& options) {
  WriteOptions o = options;
  o.gzip = wants_gzip(path, options);
  write_file(path, encode_volume(vol, o));
}

namespace gzip {

bool is_compressed(std::span<const std::uint8_t> bytes) noexcept {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> inflate(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error(ErrorCode::corrupt, "zlib initialisation failed");
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (true) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = ::inflate(&zs, Z_NO_FLUSH);
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_STREAM_END) {
      // Concatenated gzip members are legal.
      if (zs.avail_in == 0) break;
      if (inflateReset(&zs) != Z_OK) break;
      continue;
    }
    if (rc != Z_OK) break;
    if (zs.avail_in == 0 && zs.avail_out != 0) break;
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::corrupt, "truncated or damaged gzip stream");
  return out;
}

std::vector<std::uint8_t> deflate(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorCode::write, "zlib initialisation failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = ::deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::write, "gzip compression failed");
  return out;
}

}  // namespace gzip

}  // namespace apl::nifti
