#include "freescan/dataio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace freescan::dataio {

namespace fs = std::filesystem;

namespace {

constexpr const char* kScanFormatVersion = "1.0";
constexpr char kArchiveMagic[8] = {'F', 'S', 'A', 'R', 'C', 'H', '0', '1'};

int version_major(const std::string& v) {
  const auto dot = v.find('.');
  try {
    return std::stoi(dot == std::string::npos ? v : v.substr(0, dot));
  } catch (const std::exception&) {
    throw DataError("unparseable format_version '" + v + "'");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_bytes(const fs::path& path, const void* data, std::size_t len) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<std::byte> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open: " + path.string());
  const auto len = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::byte> buf(len);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(len));
  if (!f) throw DataError("read failed: " + path.string());
  return buf;
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "float32") return 4;
  if (dtype == "float64") return 8;
  if (dtype == "uint8") return 1;
  throw DataError("unknown dtype '" + dtype + "'");
}

}  // namespace

void Scan::validate() const {
  if (frames.size() < 2) throw DataError("scan needs at least 2 frames");
  if (frames.size() != world_from_tool.size()) {
    throw DataError("frame count does not match pose count");
  }
  const int h = frames.front().height;
  const int w = frames.front().width;
  if (h < 2 || w < 2) throw DataError("frame dimensions must be >= 2");
  if (!(fps > 0.0)) throw DataError("fps must be positive");
  if (!(pixel_spacing > 0.0)) throw DataError("pixel_spacing must be positive");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    if (f.height != h || f.width != w) {
      throw DataError("frame dimensions vary within the scan");
    }
    if (f.index != static_cast<int>(i)) {
      throw DataError("frame indices must be 0,1,2,... in order");
    }
    if (f.pixels.size() != static_cast<std::size_t>(h) * w) {
      throw DataError("frame pixel payload does not match dimensions");
    }
    for (float v : f.pixels) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw DataError("intensity outside [0,1] in frame " +
                        std::to_string(i));
      }
    }
  }
}

void write_scan(const Scan& scan, const fs::path& dir) {
  scan.validate();
  fs::create_directories(dir);

  const std::size_t px_per_frame =
      static_cast<std::size_t>(scan.height()) * scan.width();
  std::vector<float> fpayload;
  fpayload.reserve(scan.frames.size() * px_per_frame);
  for (const auto& f : scan.frames) {
    fpayload.insert(fpayload.end(), f.pixels.begin(), f.pixels.end());
  }
  std::vector<double> ppayload;
  ppayload.reserve(scan.frames.size() * 16);
  for (const auto& t : scan.world_from_tool) {
    const Eigen::Matrix4d m = t.matrix();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) ppayload.push_back(m(r, c));
  }

  write_bytes(dir / "frames.f32", fpayload.data(),
              fpayload.size() * sizeof(float));
  write_bytes(dir / "poses.f64", ppayload.data(),
              ppayload.size() * sizeof(double));

  json meta;
  meta["format_version"] = kScanFormatVersion;
  meta["subject_id"] = scan.subject_id;
  meta["scan_label"] = scan.scan_label;
  meta["fps"] = scan.fps;
  meta["pixel_spacing"] = scan.pixel_spacing;
  meta["height"] = scan.height();
  meta["width"] = scan.width();
  meta["n_frames"] = scan.frames.size();
  meta["calib"] = transform_to_json(scan.calib);
  meta["trajectory_shape"] = scan.trajectory_shape;
  meta["orientation"] = scan.orientation;
  meta["checksum_frames"] =
      hex64(fnv1a64(fpayload.data(), fpayload.size() * sizeof(float)));
  meta["checksum_poses"] =
      hex64(fnv1a64(ppayload.data(), ppayload.size() * sizeof(double)));
  write_json_file(dir / "meta.json", meta);
}

Scan read_scan(const fs::path& dir) {
  const json meta = read_json_file(dir / "meta.json");
  const auto version = meta.at("format_version").get<std::string>();
  if (version_major(version) != 1) {
    throw DataError("unsupported scan format major version in " +
                    dir.string() + ": " + version);
  }
  Scan scan;
  scan.subject_id = meta.at("subject_id").get<std::string>();
  scan.scan_label = meta.at("scan_label").get<std::string>();
  scan.fps = meta.at("fps").get<double>();
  scan.pixel_spacing = meta.at("pixel_spacing").get<double>();
  scan.calib = transform_from_json(meta.at("calib"));
  scan.trajectory_shape = meta.value("trajectory_shape", "");
  scan.orientation = meta.value("orientation", "");
  const int h = meta.at("height").get<int>();
  const int w = meta.at("width").get<int>();
  const auto n = meta.at("n_frames").get<std::size_t>();

  const auto fbytes = read_bytes(dir / "frames.f32");
  const auto pbytes = read_bytes(dir / "poses.f64");
  if (hex64(fnv1a64(fbytes.data(), fbytes.size())) !=
      meta.at("checksum_frames").get<std::string>()) {
    throw DataError("frames.f32 checksum mismatch in " + dir.string());
  }
  if (hex64(fnv1a64(pbytes.data(), pbytes.size())) !=
      meta.at("checksum_poses").get<std::string>()) {
    throw DataError("poses.f64 checksum mismatch in " + dir.string());
  }
  const std::size_t px_per_frame = static_cast<std::size_t>(h) * w;
  if (fbytes.size() != n * px_per_frame * sizeof(float)) {
    throw DataError("frames.f32 size does not match metadata in " +
                    dir.string());
  }
  if (pbytes.size() != n * 16 * sizeof(double)) {
    throw DataError("poses.f64 size does not match metadata in " +
                    dir.string());
  }

  scan.frames.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Frame& f = scan.frames[i];
    f.height = h;
    f.width = w;
    f.index = static_cast<int>(i);
    f.pixels.resize(px_per_frame);
    std::memcpy(f.pixels.data(), fbytes.data() + i * px_per_frame * 4,
                px_per_frame * 4);
  }
  scan.world_from_tool.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Matrix4d m;
    const double* src =
        reinterpret_cast<const double*>(pbytes.data()) + i * 16;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = src[r * 4 + c];
    scan.world_from_tool[i] = geometry::RigidTransform::from_matrix(m);
  }
  scan.validate();
  return scan;
}

std::vector<fs::path> list_scan_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw DataError("not a directory: " + root.string());
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) {
      dirs.push_back(e.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

DatasetSplit split_dataset(const std::vector<ScanInfo>& scans,
                           const std::array<double, 3>& ratios,
                           std::uint64_t rng_seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  }
  std::vector<std::string> subjects;
  for (const auto& s : scans) {
    if (std::find(subjects.begin(), subjects.end(), s.subject_id) ==
        subjects.end()) {
      subjects.push_back(s.subject_id);
    }
  }
  std::sort(subjects.begin(), subjects.end());
  if (subjects.size() < 3) {
    throw DataError("need at least 3 subjects to form 3 disjoint splits, got " +
                    std::to_string(subjects.size()));
  }

  Rng rng(rng_seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  // Largest-remainder apportionment, then guarantee one subject per split.
  const double total = ratios[0] + ratios[1] + ratios[2];
  const std::size_t n = subjects.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = n * ratios[k] / total;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    frac[k] = exact - std::floor(exact);
    assigned += counts[k];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]]++;
  for (int k = 0; k < 3; ++k) {
    while (counts[k] == 0) {
      int donor = counts[0] >= counts[1]
                      ? (counts[0] >= counts[2] ? 0 : 2)
                      : (counts[1] >= counts[2] ? 1 : 2);
      counts[donor]--;
      counts[k]++;
    }
  }

  std::array<std::set<std::string>, 3> subject_sets;
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i) {
      subject_sets[k].insert(subjects[pos++]);
    }
  }

  DatasetSplit split;
  for (const auto& s : scans) {
    if (subject_sets[0].count(s.subject_id)) {
      split.train.push_back(s.id());
    } else if (subject_sets[1].count(s.subject_id)) {
      split.validation.push_back(s.id());
    } else {
      split.test.push_back(s.id());
    }
  }
  return split;
}

json split_to_json(const DatasetSplit& split) {
  json j;
  j["format_version"] = kScanFormatVersion;
  j["train"] = split.train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  return j;
}

DatasetSplit split_from_json(const json& j) {
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

json transform_to_json(const geometry::RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

geometry::RigidTransform transform_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw DataError("transform JSON must be a 4x4 nested array");
  }
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) {
      throw DataError("transform JSON must be a 4x4 nested array");
    }
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return geometry::RigidTransform::from_matrix(m);
}

void write_archive(const BlobArchive& a, const fs::path& path) {
  json header;
  header["meta"] = a.meta;
  json blob_index = json::array();
  std::size_t payload_len = 0;
  for (const auto& [name, blob] : a.blobs) {
    std::size_t expect = dtype_size(blob.dtype);
    for (auto d : blob.shape) expect *= static_cast<std::size_t>(d);
    if (expect != blob.data.size()) {
      throw DataError("blob '" + name + "' payload does not match its shape");
    }
    json b;
    b["name"] = name;
    b["dtype"] = blob.dtype;
    b["shape"] = blob.shape;
    b["offset"] = payload_len;
    b["nbytes"] = blob.data.size();
    blob_index.push_back(b);
    payload_len += blob.data.size();
  }
  header["blobs"] = blob_index;
  const std::string header_str = header.dump();

  std::vector<std::byte> payload;
  payload.reserve(payload_len);
  for (const auto& [name, blob] : a.blobs) {
    payload.insert(payload.end(), blob.data.begin(), blob.data.end());
  }

  std::uint64_t checksum = fnv1a64(header_str.data(), header_str.size());
  checksum = fnv1a64(payload.data(), payload.size(), checksum);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(kArchiveMagic, sizeof(kArchiveMagic));
  const std::uint64_t hlen = header_str.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(reinterpret_cast<const char*>(&checksum), 8);
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

BlobArchive read_archive(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 24 ||
      std::memcmp(bytes.data(), kArchiveMagic, sizeof(kArchiveMagic)) != 0) {
    throw DataError("not a blob archive (bad magic): " + path.string());
  }
  std::uint64_t hlen = 0, checksum = 0;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  std::memcpy(&checksum, bytes.data() + 16, 8);
  if (bytes.size() < 24 + hlen) {
    throw DataError("archive truncated (header): " + path.string());
  }
  const char* hstart = reinterpret_cast<const char*>(bytes.data()) + 24;
  const std::string header_str(hstart, hlen);
  const std::byte* payload = bytes.data() + 24 + hlen;
  const std::size_t payload_len = bytes.size() - 24 - hlen;

  std::uint64_t expect = fnv1a64(header_str.data(), header_str.size());
  expect = fnv1a64(payload, payload_len, expect);
  if (expect != checksum) {
    throw DataError("archive checksum mismatch (corrupt file): " +
                    path.string());
  }

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw DataError("archive header parse error: " + std::string(e.what()));
  }
  BlobArchive a;
  a.meta = header.at("meta");
  for (const auto& b : header.at("blobs")) {
    BlobArchive::Blob blob;
    blob.dtype = b.at("dtype").get<std::string>();
    blob.shape = b.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = b.at("offset").get<std::size_t>();
    const auto nbytes = b.at("nbytes").get<std::size_t>();
    if (offset + nbytes > payload_len) {
      throw DataError("archive truncated (payload): " + path.string());
    }
    blob.data.assign(payload + offset, payload + offset + nbytes);
    a.blobs.emplace(b.at("name").get<std::string>(), std::move(blob));
  }
  return a;
}

void write_text_file(const fs::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << contents;
  if (!f) throw DataError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("JSON parse error in " + path.string() + ": " + e.what());
  }
}

}  // namespace freescan::dataio
