#include "scfusion/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string_view>

#include "scfusion/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and this code writes host bytes");

namespace scf {

void validate_finite(const Tensor3f& t, const char* what) {
  for (float x : t.v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace scf

namespace scf::io {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw IoError("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw IoError("cannot open for reading: " + path);
  return f;
}

// Round-trip-exact decimal rendering of a double, independent of locale.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json load_json(const std::string& path) {
  auto f = open_in(path);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw IoError("malformed JSON in " + path);
  return j;
}

void dump_json(const std::string& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& path, size_t line_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ":" + std::to_string(line_no) + ": expected a number, got '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& path, size_t line_no) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ":" + std::to_string(line_no) + ": expected an integer, got '" + s + "'");
  }
}

// Reads a CSV with the exact expected header; returns field rows.
std::vector<std::vector<std::string>> read_csv(const std::string& path, const std::string& header) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw IoError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header)
    throw IoError(path + ": expected header '" + header + "', got '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    const size_t expected = split_csv_line(header).size();
    if (fields.size() != expected)
      throw IoError(path + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(expected) + " fields");
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

void write_bevf(const std::string& path, const Tensor3f& t) {
  validate_finite(t, path.c_str());
  auto f = open_out(path, std::ios::binary);
  f.write("BEVF", 4);
  const uint32_t dims[3] = {static_cast<uint32_t>(t.c), static_cast<uint32_t>(t.h),
                            static_cast<uint32_t>(t.w)};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(t.v.data()),
          static_cast<std::streamsize>(t.v.size() * sizeof(float)));
  if (!f) throw IoError("write failed: " + path);
}

Tensor3f read_bevf(const std::string& path) {
  auto f = open_in(path, std::ios::binary);
  char magic[4];
  uint32_t dims[3];
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!f || std::string_view(magic, 4) != "BEVF")
    throw IoError(path + ": not a BEVF tensor file");
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 ||
      dims[0] > (1u << 20) || dims[1] > (1u << 20) || dims[2] > (1u << 20))
    throw IoError(path + ": implausible tensor dims");
  Tensor3f t = Tensor3f::zeros(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                               static_cast<int>(dims[2]));
  f.read(reinterpret_cast<char*>(t.v.data()),
         static_cast<std::streamsize>(t.v.size() * sizeof(float)));
  if (!f) throw IoError(path + ": truncated tensor payload");
  char extra;
  if (f.read(&extra, 1)) throw IoError(path + ": trailing bytes after tensor payload");
  validate_finite(t, path.c_str());
  return t;
}

void write_calibration(const std::string& path, const std::vector<geom::CameraModel>& cams) {
  json root;
  root["cameras"] = json::array();
  for (const auto& cam : cams) {
    json c;
    c["id"] = cam.id;
    c["width"] = cam.image_w;
    c["height"] = cam.image_h;
    json k = json::array(), r = json::array(), t = json::array();
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) {
        k.push_back(cam.K(row, col));
        r.push_back(cam.R(row, col));
      }
    for (int i = 0; i < 3; ++i) t.push_back(cam.t(i));
    c["K"] = k;
    c["R"] = r;
    c["t"] = t;
    root["cameras"].push_back(c);
  }
  dump_json(path, root);
}

std::vector<geom::CameraModel> read_calibration(const std::string& path) {
  const json root = load_json(path);
  if (!root.contains("cameras") || !root["cameras"].is_array())
    throw IoError(path + ": missing 'cameras' array");
  std::vector<geom::CameraModel> cams;
  for (const json& c : root["cameras"]) {
    for (const char* key : {"id", "K", "R", "t", "width", "height"})
      if (!c.contains(key)) throw IoError(path + ": camera entry missing '" + key + "'");
    if (c["K"].size() != 9 || c["R"].size() != 9 || c["t"].size() != 3)
      throw IoError(path + ": K/R/t have wrong lengths");
    Eigen::Matrix3d k, r;
    Eigen::Vector3d t;
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) {
        k(row, col) = c["K"][3 * row + col].get<double>();
        r(row, col) = c["R"][3 * row + col].get<double>();
      }
    for (int i = 0; i < 3; ++i) t(i) = c["t"][i].get<double>();
    cams.push_back(geom::CameraModel::make(c["id"].get<int>(), k, r, t, c["width"].get<int>(),
                                           c["height"].get<int>()));
  }
  return cams;
}

void write_gt_csv(const std::string& path, const std::vector<metrics::TrackPoint>& rows) {
  auto f = open_out(path);
  f << "frame,walker_id,x_world,y_world\n";
  for (const auto& r : rows)
    f << r.frame << ',' << r.id << ',' << fmt(r.x) << ',' << fmt(r.y) << '\n';
  if (!f) throw IoError("write failed: " + path);
}

std::vector<metrics::TrackPoint> read_gt_csv(const std::string& path) {
  std::vector<metrics::TrackPoint> out;
  size_t line_no = 1;
  for (const auto& fields : read_csv(path, "frame,walker_id,x_world,y_world")) {
    ++line_no;
    out.push_back(metrics::TrackPoint{parse_int(fields[0], path, line_no),
                                      parse_int(fields[1], path, line_no),
                                      parse_double(fields[2], path, line_no),
                                      parse_double(fields[3], path, line_no)});
  }
  return out;
}

void write_tracks_csv(const std::string& path,
                      const std::vector<std::pair<int, track::TrackState>>& rows) {
  auto f = open_out(path);
  f << "frame,track_id,x_world,y_world,score\n";
  for (const auto& [id, s] : rows)
    f << s.frame << ',' << id << ',' << fmt(s.x) << ',' << fmt(s.y) << ',' << fmt(s.score) << '\n';
  if (!f) throw IoError("write failed: " + path);
}

std::vector<metrics::TrackPoint> read_tracks_csv(const std::string& path) {
  std::vector<metrics::TrackPoint> out;
  size_t line_no = 1;
  for (const auto& fields : read_csv(path, "frame,track_id,x_world,y_world,score")) {
    ++line_no;
    out.push_back(metrics::TrackPoint{parse_int(fields[0], path, line_no),
                                      parse_int(fields[1], path, line_no),
                                      parse_double(fields[2], path, line_no),
                                      parse_double(fields[3], path, line_no)});
  }
  return out;
}

void write_detections_csv(const std::string& path, const std::vector<Detection>& dets) {
  auto f = open_out(path);
  f << "frame,x_world,y_world,score\n";
  for (const auto& d : dets)
    f << d.frame << ',' << fmt(d.x) << ',' << fmt(d.y) << ',' << fmt(d.score) << '\n';
  if (!f) throw IoError("write failed: " + path);
}

std::vector<Detection> read_detections_csv(const std::string& path) {
  std::vector<Detection> out;
  size_t line_no = 1;
  for (const auto& fields : read_csv(path, "frame,x_world,y_world,score")) {
    ++line_no;
    Detection d;
    d.frame = parse_int(fields[0], path, line_no);
    d.x = parse_double(fields[1], path, line_no);
    d.y = parse_double(fields[2], path, line_no);
    d.score = parse_double(fields[3], path, line_no);
    out.push_back(d);
  }
  return out;
}

void write_head_params(const std::string& json_path, const std::string& bin_path,
                       const head::HeadParams& params, uint64_t seed) {
  json j;
  j["schema_version"] = 1;
  j["in_channels"] = params.in_c;
  j["hidden"] = params.hidden;
  j["kernel_size"] = head::kKernel;
  j["dilation"] = head::kDilation;
  j["layout"] = {"w1", "b1", "w2", "b2"};
  j["param_count"] = params.param_count();
  j["seed"] = seed;
  j["blob"] = std::filesystem::path(bin_path).filename().string();
  dump_json(json_path, j);

  auto f = open_out(bin_path, std::ios::binary);
  auto put = [&f](const double* p, size_t n) {
    f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  };
  put(params.w1.data(), params.w1.size());
  put(params.b1.data(), params.b1.size());
  put(params.w2.data(), params.w2.size());
  put(&params.b2, 1);
  if (!f) throw IoError("write failed: " + bin_path);
}

head::HeadParams read_head_params(const std::string& json_path) {
  const json j = load_json(json_path);
  for (const char* key : {"schema_version", "in_channels", "hidden", "blob", "param_count"})
    if (!j.contains(key)) throw IoError(json_path + ": missing '" + key + "'");
  head::HeadParams p =
      head::HeadParams::zeros(j["in_channels"].get<int>(), j["hidden"].get<int>());
  if (j["param_count"].get<size_t>() != p.param_count())
    throw IoError(json_path + ": param_count does not match declared shapes");

  const std::string bin_path =
      (std::filesystem::path(json_path).parent_path() / j["blob"].get<std::string>()).string();
  auto f = open_in(bin_path, std::ios::binary);
  auto get = [&f, &bin_path](double* out, size_t n) {
    f.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw IoError(bin_path + ": truncated parameter blob");
  };
  get(p.w1.data(), p.w1.size());
  get(p.b1.data(), p.b1.size());
  get(p.w2.data(), p.w2.size());
  get(&p.b2, 1);
  char extra;
  if (f.read(&extra, 1)) throw IoError(bin_path + ": trailing bytes after parameters");
  for (double v : p.w1)
    if (!std::isfinite(v)) throw NumericError(bin_path + ": non-finite parameter");
  return p;
}

namespace {

json opt_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

void write_metrics_json(const std::string& path, const metrics::MetricsReport& r) {
  json j;
  j["schema_version"] = 1;
  j["moda"] = opt_number(r.moda);
  j["modp"] = r.modp;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["mota"] = opt_number(r.mota);
  j["motp"] = r.motp;
  j["idf1"] = opt_number(r.idf1);
  j["mt"] = r.mt;
  j["ml"] = r.ml;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["gt_total"] = r.gt_total;
  j["id_switches"] = r.id_switches;
  dump_json(path, j);
}

metrics::MetricsReport read_metrics_json(const std::string& path) {
  const json j = load_json(path);
  metrics::MetricsReport r;
  r.moda = opt_from(j, "moda");
  r.mota = opt_from(j, "mota");
  r.idf1 = opt_from(j, "idf1");
  r.modp = j.value("modp", 0.0);
  r.motp = j.value("motp", 0.0);
  r.precision = j.value("precision", 0.0);
  r.recall = j.value("recall", 0.0);
  r.mt = j.value("mt", 0.0);
  r.ml = j.value("ml", 0.0);
  r.tp = j.value("tp", 0L);
  r.fp = j.value("fp", 0L);
  r.fn = j.value("fn", 0L);
  r.gt_total = j.value("gt_total", 0L);
  r.id_switches = j.value("id_switches", 0);
  return r;
}

void write_pgm_normalized(const std::string& path, int h, int w,
                          const std::vector<double>& values) {
  if (h <= 0 || w <= 0 || values.size() != static_cast<size_t>(h) * w)
    throw ValidationError("image dims do not match value count");
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  std::vector<uint8_t> bytes(values.size(), 0);
  if (peak > 0.0)
    for (size_t i = 0; i < values.size(); ++i)
      bytes[i] = static_cast<uint8_t>(std::lround(255.0 * std::clamp(values[i] / peak, 0.0, 1.0)));
  auto f = open_out(path, std::ios::binary);
  f << "P5\n" << w << ' ' << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

void write_trajectory_svg(const std::string& path, const std::vector<metrics::TrackPoint>& rows,
                          const geom::BevGrid& grid) {
  // Group by id, then order each polyline by frame.
  std::map<int, std::vector<metrics::TrackPoint>> by_id;
  for (const auto& r : rows) by_id[r.id].push_back(r);
  for (auto& [id, pts] : by_id)
    std::sort(pts.begin(), pts.end(),
              [](const metrics::TrackPoint& a, const metrics::TrackPoint& b) {
                return a.frame < b.frame;
              });

  const double ex = grid.extent_x();
  const double ey = grid.extent_y();
  auto f = open_out(path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << fmt(ex) << ' ' << fmt(ey)
    << "\" width=\"720\">\n";
  f << "  <rect x=\"0\" y=\"0\" width=\"" << fmt(ex) << "\" height=\"" << fmt(ey)
    << "\" fill=\"white\" stroke=\"black\" stroke-width=\"0.05\"/>\n";
  for (const auto& [id, pts] : by_id) {
    const int hue = (id * 137) % 360;
    f << "  <polyline data-track-id=\"" << id << "\" fill=\"none\" stroke=\"hsl(" << hue
      << ",70%,45%)\" stroke-width=\"0.15\" points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      const double px = pts[i].x - grid.origin_x;
      const double py = (grid.origin_y + ey) - pts[i].y;  // world y up, svg y down
      f << (i ? " " : "") << fmt(px) << ',' << fmt(py);
    }
    f << "\"/>\n";
  }
  f << "</svg>\n";
  if (!f) throw IoError("write failed: " + path);
}

uint64_t fnv1a_file(const std::string& path) {
  auto f = open_in(path, std::ios::binary);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!f) break;
  }
  return h;
}

std::string hex64(uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace scf::io
