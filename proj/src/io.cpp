#include "ganseg/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace ganseg {

void save_tensor(const fs::path& bin_path, const torch::Tensor& t, const json& meta) {
  auto ft = t.to(torch::kFloat32).contiguous();
  fs::create_directories(bin_path.parent_path());
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw StageError("cannot open for write: " + bin_path.string());
  out.write(reinterpret_cast<const char*>(ft.data_ptr<float>()),
            static_cast<std::streamsize>(ft.numel() * sizeof(float)));
  if (!out) throw StageError("short write: " + bin_path.string());

  json side = meta;
  side["shape"] = std::vector<std::int64_t>(ft.sizes().begin(), ft.sizes().end());
  side["dtype"] = "float32";
  fs::path side_path = bin_path;
  side_path.replace_extension(".json");
  write_json(side_path, side);
}

torch::Tensor load_tensor(const fs::path& bin_path, json* meta_out) {
  fs::path side_path = bin_path;
  side_path.replace_extension(".json");
  json side = read_json(side_path);
  if (side.value("dtype", "float32") != "float32")
    throw StageError("unsupported cached dtype in " + side_path.string());
  auto shape = side.at("shape").get<std::vector<std::int64_t>>();
  std::int64_t numel = 1;
  for (auto d : shape) numel *= d;

  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw StageError("cannot open: " + bin_path.string());
  auto t = torch::empty(shape, torch::kFloat32);
  in.read(reinterpret_cast<char*>(t.data_ptr<float>()),
          static_cast<std::streamsize>(numel * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(numel * sizeof(float)))
    throw StageError("truncated tensor file: " + bin_path.string());
  if (meta_out) *meta_out = side;
  return t;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StageError("cannot open: " + path.string());
  json j;
  in >> j;
  return j;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw StageError("cannot open for write: " + path.string());
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// NIfTI-1
// ---------------------------------------------------------------------------

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
  std::int32_t sizeof_hdr;
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
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)

static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

std::vector<char> read_all_maybe_gz(const fs::path& path) {
  // gzread handles both gzip streams and plain files.
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw StageError("volume not found: " + path.string());
  std::vector<char> buf;
  char chunk[1 << 16];
  int n;
  while ((n = gzread(f, chunk, sizeof(chunk))) > 0) buf.insert(buf.end(), chunk, chunk + n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw StageError("failed to decompress: " + path.string());
  return buf;
}

}  // namespace

torch::Tensor read_nifti(const fs::path& path) {
  auto bytes = read_all_maybe_gz(path);
  if (bytes.size() < sizeof(NiftiHeader))
    throw StageError("not a NIfTI-1 file (too short): " + path.string());
  NiftiHeader hdr{};
  std::memcpy(&hdr, bytes.data(), sizeof(hdr));
  if (std::strncmp(hdr.magic, "n+1", 3) != 0 && std::strncmp(hdr.magic, "ni1", 3) != 0)
    throw StageError("not a NIfTI-1 file (bad magic): " + path.string());
  if (hdr.dim[0] < 3 || hdr.dim[0] > 4 || (hdr.dim[0] == 4 && hdr.dim[4] > 1))
    throw StageError("expected a 3D NIfTI volume: " + path.string());

  const std::int64_t nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
  const std::int64_t numel = nx * ny * nz;
  const std::size_t offset = static_cast<std::size_t>(hdr.vox_offset);
  const char* data = bytes.data() + offset;

  auto need = [&](std::size_t elem) {
    if (bytes.size() < offset + static_cast<std::size_t>(numel) * elem)
      throw StageError("truncated NIfTI data: " + path.string());
  };

  auto t = torch::empty({nz, ny, nx}, torch::kFloat32);
  float* out = t.data_ptr<float>();
  // NIfTI stores x fastest; (nz, ny, nx) output keeps axial slices on dim 0.
  switch (hdr.datatype) {
    case 2: {  // uint8
      need(1);
      const auto* p = reinterpret_cast<const unsigned char*>(data);
      for (std::int64_t i = 0; i < numel; ++i) out[i] = static_cast<float>(p[i]);
      break;
    }
    case 4: {  // int16
      need(2);
      const auto* p = reinterpret_cast<const std::int16_t*>(data);
      for (std::int64_t i = 0; i < numel; ++i) out[i] = static_cast<float>(p[i]);
      break;
    }
    case 8: {  // int32
      need(4);
      const auto* p = reinterpret_cast<const std::int32_t*>(data);
      for (std::int64_t i = 0; i < numel; ++i) out[i] = static_cast<float>(p[i]);
      break;
    }
    case 16: {  // float32
      need(4);
      std::memcpy(out, data, static_cast<std::size_t>(numel) * sizeof(float));
      break;
    }
    case 64: {  // float64
      need(8);
      const auto* p = reinterpret_cast<const double*>(data);
      for (std::int64_t i = 0; i < numel; ++i) out[i] = static_cast<float>(p[i]);
      break;
    }
    default:
      throw StageError("unsupported NIfTI datatype " + std::to_string(hdr.datatype) + ": " +
                       path.string());
  }

  if (hdr.scl_slope != 0.0f && (hdr.scl_slope != 1.0f || hdr.scl_inter != 0.0f)) {
    t = t * hdr.scl_slope + hdr.scl_inter;
  }
  return t;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw StageError("cannot open for write: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void write_svg_lines(const fs::path& path, const std::string& title,
                     const std::vector<double>& x,
                     const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const int W = 640, H = 420, ML = 60, MR = 20, MT = 40, MB = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (double v : x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
  for (const auto& [name, ys] : series)
    for (double v : ys) {
      if (std::isfinite(v)) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double v) { return ML + (v - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto py = [&](double v) { return H - MB - (v - ymin) / (ymax - ymin) * (H - MT - MB); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
  out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", ymin);
  out << "<text x='8' y='" << H - MB << "' font-size='11'>" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", ymax);
  out << "<text x='8' y='" << MT + 4 << "' font-size='11'>" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", xmin);
  out << "<text x='" << ML << "' y='" << H - 12 << "' font-size='11'>" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", xmax);
  out << "<text x='" << W - MR - 30 << "' y='" << H - 12 << "' font-size='11'>" << buf
      << "</text>\n";

  int ci = 0;
  for (const auto& [name, ys] : series) {
    const char* color = colors[ci % 6];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < ys.size() && i < x.size(); ++i) {
      if (!std::isfinite(ys[i])) continue;
      out << px(x[i]) << "," << py(ys[i]) << " ";
    }
    out << "'/>\n";
    out << "<text x='" << W - MR - 150 << "' y='" << MT + 16 * ci << "' font-size='12' fill='"
        << color << "'>" << name << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

}  // namespace ganseg
