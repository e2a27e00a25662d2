#include "ppm/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ppm/errors.hpp"

namespace ppm {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;  // must be 348
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

// Datatype codes from the NIfTI-1 standard.
constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

std::uint16_t bswap16(std::uint16_t v) { return static_cast<std::uint16_t>((v >> 8) | (v << 8)); }
std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}
std::uint64_t bswap64(std::uint64_t v) {
  return (static_cast<std::uint64_t>(bswap32(static_cast<std::uint32_t>(v))) << 32) |
         bswap32(static_cast<std::uint32_t>(v >> 32));
}

void swap16(std::int16_t& v) { v = std::bit_cast<std::int16_t>(bswap16(std::bit_cast<std::uint16_t>(v))); }
void swap32(std::int32_t& v) { v = std::bit_cast<std::int32_t>(bswap32(std::bit_cast<std::uint32_t>(v))); }
void swapf(float& v) { v = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(v))); }

void swap_header(Nifti1Header& h) {
  swap32(h.sizeof_hdr);
  swap32(h.extents);
  swap16(h.session_error);
  for (auto& d : h.dim) swap16(d);
  swapf(h.intent_p1);
  swapf(h.intent_p2);
  swapf(h.intent_p3);
  swap16(h.intent_code);
  swap16(h.datatype);
  swap16(h.bitpix);
  swap16(h.slice_start);
  for (auto& p : h.pixdim) swapf(p);
  swapf(h.vox_offset);
  swapf(h.scl_slope);
  swapf(h.scl_inter);
  swap16(h.slice_end);
  swapf(h.cal_max);
  swapf(h.cal_min);
  swapf(h.slice_duration);
  swapf(h.toffset);
  swap32(h.glmax);
  swap32(h.glmin);
  swap16(h.qform_code);
  swap16(h.sform_code);
  swapf(h.quatern_b);
  swapf(h.quatern_c);
  swapf(h.quatern_d);
  swapf(h.qoffset_x);
  swapf(h.qoffset_y);
  swapf(h.qoffset_z);
  for (auto& v : h.srow_x) swapf(v);
  for (auto& v : h.srow_y) swapf(v);
  for (auto& v : h.srow_z) swapf(v);
}

Affine affine_from_qform(const Nifti1Header& h, const std::array<double, 3>& spacing) {
  const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
  const double a2 = 1.0 - (b * b + c * c + d * d);
  const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
  const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
  Affine m = identity_affine();
  const double r[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
      {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
      {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c}};
  const double scale[3] = {spacing[0], spacing[1], qfac * spacing[2]};
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) m[row][col] = r[row][col] * scale[col];
  m[0][3] = h.qoffset_x;
  m[1][3] = h.qoffset_y;
  m[2][3] = h.qoffset_z;
  return m;
}

class GzReader {
 public:
  explicit GzReader(const std::filesystem::path& path) : path_(path.string()) {
    file_ = gzopen(path_.c_str(), "rb");
    if (!file_) throw ValidationError("cannot open '" + path_ + "'");
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read_exact(void* dst, std::size_t n) {
    const int rc = gzread(file_, dst, static_cast<unsigned>(n));
    if (rc < 0 || static_cast<std::size_t>(rc) != n)
      throw ValidationError("truncated or unreadable NIfTI file '" + path_ + "'");
  }

  void skip_to(std::size_t offset) {
    if (gzseek(file_, static_cast<z_off_t>(offset), SEEK_SET) < 0)
      throw ValidationError("cannot seek to voxel data in '" + path_ + "'");
  }

 private:
  std::string path_;
  gzFile file_ = nullptr;
};

// Deterministic gzip container: fixed header fields, no timestamp.
void write_gzip_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  z_stream strm{};
  if (deflateInit2(&strm, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw IoError("zlib deflate init failed");
  gz_header gzh{};
  gzh.time = 0;
  gzh.os = 3;
  deflateSetHeader(&strm, &gzh);

  std::vector<char> out(deflateBound(&strm, static_cast<uLong>(bytes.size())) + 64);
  strm.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  strm.avail_in = static_cast<uInt>(bytes.size());
  strm.next_out = reinterpret_cast<Bytef*>(out.data());
  strm.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&strm, Z_FINISH);
  const std::size_t produced = out.size() - strm.avail_out;
  deflateEnd(&strm);
  if (rc != Z_STREAM_END) throw IoError("gzip compression failed");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(produced));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

bool has_gz_suffix(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

template <typename Raw>
void convert_data(const std::vector<char>& raw, std::vector<float>& out, bool swap,
                  float slope, float inter, bool apply_scl) {
  const std::size_t n = out.size();
  const Raw* src = reinterpret_cast<const Raw*>(raw.data());
  for (std::size_t i = 0; i < n; ++i) {
    Raw v = src[i];
    if (swap) {
      if constexpr (sizeof(Raw) == 2) {
        v = std::bit_cast<Raw>(bswap16(std::bit_cast<std::uint16_t>(v)));
      } else if constexpr (sizeof(Raw) == 4) {
        v = std::bit_cast<Raw>(bswap32(std::bit_cast<std::uint32_t>(v)));
      } else if constexpr (sizeof(Raw) == 8) {
        v = std::bit_cast<Raw>(bswap64(std::bit_cast<std::uint64_t>(v)));
      }
    }
    double x = static_cast<double>(v);
    if (apply_scl) x = static_cast<double>(slope) * x + static_cast<double>(inter);
    out[i] = static_cast<float>(x);
  }
}

}  // namespace

ScalarVolume load_nifti(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ValidationError("file does not exist: '" + path.string() + "'");
  GzReader reader(path);

  Nifti1Header h{};
  reader.read_exact(&h, sizeof(h));
  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348)
      throw ValidationError("'" + path.string() + "' is not a NIfTI-1 file (bad sizeof_hdr)");
  }

  if (std::strncmp(h.magic, "n+1", 3) != 0) {
    if (std::strncmp(h.magic, "ni1", 3) == 0)
      throw ValidationError("two-file NIfTI (.hdr/.img) is not supported: '" + path.string() + "'");
    throw ValidationError("'" + path.string() + "' has a malformed NIfTI magic");
  }

  const int nd = h.dim[0];
  if (nd < 1 || nd > 7)
    throw ValidationError("'" + path.string() + "' has invalid dim[0]=" + std::to_string(nd));
  std::array<int, 3> dims{h.dim[1], nd >= 2 ? h.dim[2] : 1, nd >= 3 ? h.dim[3] : 1};
  for (int d = 0; d < 3 && d < nd; ++d)
    if (dims[d] < 1)
      throw ValidationError("'" + path.string() + "' has non-positive dimension " + std::to_string(dims[d]));
  for (int d = 4; d <= nd; ++d) {
    if (h.dim[d] > 1)
      throw ValidationError("'" + path.string() + "' has " + std::to_string(h.dim[d]) +
                            " timepoints; only 3D volumes are supported");
  }

  std::size_t elem_size = 0;
  switch (h.datatype) {
    case kDtUint8: elem_size = 1; break;
    case kDtInt16: elem_size = 2; break;
    case kDtInt32: elem_size = 4; break;
    case kDtFloat32: elem_size = 4; break;
    case kDtFloat64: elem_size = 8; break;
    default:
      throw ValidationError("'" + path.string() + "' has unsupported datatype code " +
                            std::to_string(h.datatype));
  }

  ScalarVolume vol;
  vol.dims = dims;
  for (int d = 0; d < 3; ++d) {
    const double s = std::abs(static_cast<double>(h.pixdim[d + 1]));
    if (!(s > 0.0))
      throw ValidationError("'" + path.string() + "' has non-positive pixdim[" +
                            std::to_string(d + 1) + "]");
    vol.spacing[d] = s;
  }

  if (h.sform_code > 0) {
    Affine m = identity_affine();
    for (int c = 0; c < 4; ++c) {
      m[0][c] = h.srow_x[c];
      m[1][c] = h.srow_y[c];
      m[2][c] = h.srow_z[c];
    }
    vol.affine = m;
  } else if (h.qform_code > 0) {
    vol.affine = affine_from_qform(h, vol.spacing);
  } else {
    vol.affine = diagonal_affine(vol.spacing);
  }

  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const std::size_t offset = static_cast<std::size_t>(h.vox_offset);
  if (h.vox_offset < 348.0f)
    throw ValidationError("'" + path.string() + "' has vox_offset < 348");
  reader.skip_to(offset);

  std::vector<char> raw(n * elem_size);
  reader.read_exact(raw.data(), raw.size());

  const bool apply_scl =
      h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  vol.data.resize(n);
  switch (h.datatype) {
    case kDtUint8:
      convert_data<std::uint8_t>(raw, vol.data, false, h.scl_slope, h.scl_inter, apply_scl);
      break;
    case kDtInt16:
      convert_data<std::int16_t>(raw, vol.data, swapped, h.scl_slope, h.scl_inter, apply_scl);
      break;
    case kDtInt32:
      convert_data<std::int32_t>(raw, vol.data, swapped, h.scl_slope, h.scl_inter, apply_scl);
      break;
    case kDtFloat32:
      convert_data<float>(raw, vol.data, swapped, h.scl_slope, h.scl_inter, apply_scl);
      break;
    case kDtFloat64:
      convert_data<double>(raw, vol.data, swapped, h.scl_slope, h.scl_inter, apply_scl);
      break;
  }

  std::size_t bad = 0;
  for (float v : vol.data)
    if (!std::isfinite(v)) ++bad;
  if (bad > 0)
    throw ValidationError("'" + path.string() + "' contains " + std::to_string(bad) +
                          " non-finite voxel(s)");
  vol.validate();
  return vol;
}

void save_nifti(const ScalarVolume& vol, const std::filesystem::path& path) {
  vol.validate();

  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(vol.dims[0]);
  h.dim[2] = static_cast<std::int16_t>(vol.dims[1]);
  h.dim[3] = static_cast<std::int16_t>(vol.dims[2]);
  for (int d = 4; d < 8; ++d) h.dim[d] = 1;
  h.datatype = kDtFloat32;
  h.bitpix = 32;
  h.pixdim[0] = 1.0f;
  for (int d = 0; d < 3; ++d) h.pixdim[d + 1] = static_cast<float>(vol.spacing[d]);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // NIFTI_UNITS_MM
  std::strncpy(h.descrip, "ppm toolkit", sizeof(h.descrip) - 1);
  h.qform_code = 0;
  h.sform_code = 1;
  for (int c = 0; c < 4; ++c) {
    h.srow_x[c] = static_cast<float>(vol.affine[0][c]);
    h.srow_y[c] = static_cast<float>(vol.affine[1][c]);
    h.srow_z[c] = static_cast<float>(vol.affine[2][c]);
  }
  std::memcpy(h.magic, "n+1", 4);

  std::vector<char> bytes(352 + vol.data.size() * sizeof(float), 0);
  std::memcpy(bytes.data(), &h, sizeof(h));
  std::memcpy(bytes.data() + 352, vol.data.data(), vol.data.size() * sizeof(float));

  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  if (has_gz_suffix(path)) {
    write_gzip_file(path, bytes);
  } else {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + path.string() + "'");
  }
}

}  // namespace ppm
