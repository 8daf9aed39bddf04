#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "freescan/dataio.hpp"
#include "support/test_support.hpp"

using namespace freescan;
using namespace freescan::dataio;
namespace fs = std::filesystem;
namespace ts = freescan::testsupport;

namespace {

Scan make_scan(int n_frames, int h, int w, std::uint64_t seed,
               const std::string& subject = "s0",
               const std::string& label = "00_line_perpendicular") {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Scan scan;
  scan.subject_id = subject;
  scan.scan_label = label;
  scan.trajectory_shape = "line";
  scan.orientation = "perpendicular";
  scan.calib = ts::random_transform(rng, 0.2, 20.0);
  for (int k = 0; k < n_frames; ++k) {
    Frame f;
    f.height = h;
    f.width = w;
    f.index = k;
    f.pixels.resize(static_cast<std::size_t>(h) * w);
    for (auto& p : f.pixels) p = u(rng);
    scan.frames.push_back(std::move(f));
    scan.world_from_tool.push_back(ts::random_transform(rng));
  }
  return scan;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "freescan_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE_BEGIN("dataio");

TEST_CASE("scan round trip is bit exact") {
  const fs::path dir = temp_dir("roundtrip");
  const Scan scan = make_scan(2, 4, 4, 42);
  write_scan(scan, dir / "scan");
  const Scan back = read_scan(dir / "scan");

  REQUIRE(back.n_frames() == scan.n_frames());
  CHECK(back.subject_id == scan.subject_id);
  CHECK(back.scan_label == scan.scan_label);
  CHECK(back.trajectory_shape == "line");
  CHECK(back.orientation == "perpendicular");
  CHECK(back.fps == scan.fps);
  CHECK(back.pixel_spacing == scan.pixel_spacing);
  CHECK(std::memcmp(back.calib.matrix().data(), scan.calib.matrix().data(),
                    16 * sizeof(double)) == 0);
  for (std::size_t k = 0; k < scan.n_frames(); ++k) {
    CHECK(std::memcmp(back.frames[k].pixels.data(),
                      scan.frames[k].pixels.data(),
                      scan.frames[k].pixels.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(back.world_from_tool[k].matrix().data(),
                      scan.world_from_tool[k].matrix().data(),
                      16 * sizeof(double)) == 0);
  }
  CHECK(back.frames[1].timestamp(back.fps) ==
        doctest::Approx(1.0 / 20.0).epsilon(1e-12));
}

TEST_CASE("upper-bound scan size is accepted") {
  const fs::path dir = temp_dir("big");
  Scan scan;
  scan.subject_id = "s0";
  scan.scan_label = "big";
  const int frames = 430, h = 480, w = 640;
  scan.frames.reserve(frames);
  for (int k = 0; k < frames; ++k) {
    Frame f;
    f.height = h;
    f.width = w;
    f.index = k;
    f.pixels.assign(static_cast<std::size_t>(h) * w,
                    static_cast<float>(k % 97) / 97.0f);
    scan.frames.push_back(std::move(f));
    geometry::RigidTransform t;
    t.translation = Eigen::Vector3d(0, 0, 0.4 * k);
    scan.world_from_tool.push_back(t);
  }
  write_scan(scan, dir / "scan");
  const Scan back = read_scan(dir / "scan");
  CHECK(back.n_frames() == 430);
  CHECK(back.height() == 480);
  CHECK(back.width() == 640);
  CHECK(back.frames[429].pixels[123] == scan.frames[429].pixels[123]);
  fs::remove_all(dir);
}

TEST_CASE("metadata/payload shape mismatch is rejected") {
  const fs::path dir = temp_dir("shape");
  write_scan(make_scan(9, 6, 8, 1), dir / "scan");
  auto meta = read_json_file(dir / "scan" / "meta.json");
  meta["n_frames"] = 10;
  write_json_file(dir / "scan" / "meta.json", meta);
  CHECK_THROWS_AS(read_scan(dir / "scan"), DataError);
}

TEST_CASE("payload corruption is caught by the checksum") {
  const fs::path dir = temp_dir("corrupt");
  write_scan(make_scan(3, 6, 8, 2), dir / "scan");
  {
    std::fstream f(dir / "scan" / "frames.f32",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(17);
    const char byte = 0x5a;
    f.write(&byte, 1);
  }
  CHECK_THROWS_AS(read_scan(dir / "scan"), DataError);
}

TEST_CASE("unknown major version is rejected") {
  const fs::path dir = temp_dir("version");
  write_scan(make_scan(2, 4, 4, 3), dir / "scan");
  auto meta = read_json_file(dir / "scan" / "meta.json");
  meta["format_version"] = "2.0";
  write_json_file(dir / "scan" / "meta.json", meta);
  CHECK_THROWS_AS(read_scan(dir / "scan"), DataError);
}

TEST_CASE("scan validation rejects out-of-range intensities") {
  Scan scan = make_scan(2, 4, 4, 4);
  scan.frames[1].pixels[5] = 1.5f;
  CHECK_THROWS_AS(scan.validate(), DataError);
}

TEST_CASE("split matches 3:1:1 on five subjects") {
  std::vector<ScanInfo> scans;
  for (int s = 0; s < 5; ++s) {
    for (int c = 0; c < 4; ++c) {
      scans.push_back({"subj" + std::to_string(s), "scan" + std::to_string(c)});
    }
  }
  const DatasetSplit split = split_dataset(scans, {3, 1, 1}, 0);
  std::set<std::string> train_subjects, val_subjects, test_subjects;
  for (const auto& id : split.train) {
    train_subjects.insert(id.substr(0, id.find('/')));
  }
  for (const auto& id : split.validation) {
    val_subjects.insert(id.substr(0, id.find('/')));
  }
  for (const auto& id : split.test) {
    test_subjects.insert(id.substr(0, id.find('/')));
  }
  CHECK(train_subjects.size() == 3);
  CHECK(val_subjects.size() == 1);
  CHECK(test_subjects.size() == 1);
  CHECK(split.train.size() == 12);
  CHECK(split.validation.size() == 4);
  CHECK(split.test.size() == 4);
}

TEST_CASE("split errors and determinism") {
  std::vector<ScanInfo> one = {{"only", "a"}, {"only", "b"}};
  CHECK_THROWS_AS(split_dataset(one, {3, 1, 1}, 0), DataError);

  std::vector<ScanInfo> scans;
  for (int s = 0; s < 11; ++s) {
    scans.push_back({"subj" + std::to_string(s), "scan"});
  }
  const DatasetSplit a = split_dataset(scans, {3, 1, 1}, 99);
  const DatasetSplit b = split_dataset(scans, {3, 1, 1}, 99);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);
}

TEST_CASE("splits are subject-disjoint for many seeds") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    std::uniform_int_distribution<int> ns(3, 12);
    std::uniform_int_distribution<int> nc(1, 5);
    std::vector<ScanInfo> scans;
    const int subjects = ns(rng);
    for (int s = 0; s < subjects; ++s) {
      const int per = nc(rng);
      for (int c = 0; c < per; ++c) {
        scans.push_back(
            {"subj" + std::to_string(s), "scan" + std::to_string(c)});
      }
    }
    const DatasetSplit split = split_dataset(scans, {3, 1, 1}, rng());
    std::map<std::string, int> where;
    int bucket = 0;
    for (const auto* list : {&split.train, &split.validation, &split.test}) {
      ++bucket;
      for (const auto& id : *list) {
        const std::string subject = id.substr(0, id.find('/'));
        const auto it = where.find(subject);
        if (it == where.end()) {
          where[subject] = bucket;
        } else {
          CHECK(it->second == bucket);
        }
      }
    }
    CHECK(split.train.size() + split.validation.size() + split.test.size() ==
          scans.size());
  }
}

TEST_CASE("blob archive round trip and corruption detection") {
  const fs::path dir = temp_dir("archive");
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> dim(1, 17);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 10; ++trial) {
    BlobArchive a;
    a.meta = {{"trial", trial}, {"note", "payload"}};
    const int blobs = 1 + trial % 4;
    for (int b = 0; b < blobs; ++b) {
      BlobArchive::Blob blob;
      blob.dtype = "float64";
      const std::int64_t r = dim(rng), c = dim(rng);
      blob.shape = {r, c};
      std::vector<double> payload(static_cast<std::size_t>(r * c));
      for (auto& x : payload) x = u(rng);
      blob.data.resize(payload.size() * sizeof(double));
      std::memcpy(blob.data.data(), payload.data(), blob.data.size());
      a.blobs.emplace("blob" + std::to_string(b), std::move(blob));
    }
    const fs::path file = dir / ("a" + std::to_string(trial) + ".fsa");
    write_archive(a, file);
    const BlobArchive back = read_archive(file);
    CHECK(back.meta == a.meta);
    REQUIRE(back.blobs.size() == a.blobs.size());
    for (const auto& [name, blob] : a.blobs) {
      const auto& rb = back.blobs.at(name);
      CHECK(rb.dtype == blob.dtype);
      CHECK(rb.shape == blob.shape);
      CHECK(rb.data == blob.data);
    }
  }

  // Truncation must be reported as corruption, not garbage data.
  BlobArchive a;
  a.meta = {{"x", 1}};
  BlobArchive::Blob blob;
  blob.dtype = "float64";
  blob.shape = {4, 4};
  blob.data.resize(128);
  a.blobs.emplace("t", std::move(blob));
  const fs::path file = dir / "trunc.fsa";
  write_archive(a, file);
  const auto size = fs::file_size(file);
  fs::resize_file(file, size - 40);
  CHECK_THROWS_AS(read_archive(file), DataError);
}

TEST_SUITE_END();
