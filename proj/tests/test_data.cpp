#include <filesystem>
#include <fstream>
#include <queue>

#include <opencv2/imgcodecs.hpp>

#include "doctest.h"
#include "scgseg/data.hpp"

using namespace scgseg;
namespace fs = std::filesystem;

namespace {
fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("scgseg_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_gray_png(const fs::path& p, int size, std::uint8_t base,
                    bool plateau = false) {
  cv::Mat m(size, size, CV_8UC1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(
          (base + 7 * x + 13 * y) % 251);
  if (plateau)
    for (int y = 0; y < size / 2; ++y)
      for (int x = 0; x < size / 2; ++x) m.at<std::uint8_t>(y, x) = 255;
  REQUIRE(cv::imwrite(p.string(), m));
}

int component_count(const Tensor<double>& mask) {
  const int H = mask.dim(0), W = mask.dim(1);
  std::vector<char> seen(static_cast<std::size_t>(H) * W, 0);
  int comps = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (mask.at(y, x) != 1.0 || seen[y * W + x]) continue;
      ++comps;
      std::queue<std::pair<int, int>> q;
      q.push({y, x});
      seen[y * W + x] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int ny = cy + dy[d], nx = cx + dx[d];
          if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
          if (mask.at(ny, nx) != 1.0 || seen[ny * W + nx]) continue;
          seen[ny * W + nx] = 1;
          q.push({ny, nx});
        }
      }
    }
  return comps;
}
}  // namespace

TEST_CASE("sample loading normalizes and binarizes") {
  auto dir = fresh_dir("load");
  write_gray_png(dir / "a.png", 40, 3, /*plateau=*/true);
  {
    cv::Mat mm(40, 40, CV_8UC1, cv::Scalar(0));
    for (int y = 10; y < 30; ++y)
      for (int x = 10; x < 30; ++x) mm.at<std::uint8_t>(y, x) = 255;
    REQUIRE(cv::imwrite((dir / "a_mask.png").string(), mm));
  }

  auto s = load_sample((dir / "a.png").string(),
                       (dir / "a_mask.png").string(), 32);
  CHECK(s.image.shape == Shape{32, 32});
  CHECK(s.mask.shape == Shape{32, 32});
  CHECK(s.id == "a");
  double mn = 1e9, mx = -1e9;
  for (std::int64_t i = 0; i < s.image.size(); ++i) {
    mn = std::min(mn, s.image.data[i]);
    mx = std::max(mx, s.image.data[i]);
    CHECK((s.mask.data[i] == 0.0 || s.mask.data[i] == 1.0));
  }
  CHECK(mn >= 0.0);
  CHECK(mx <= 1.0);
  CHECK(mx == 1.0);  // the 255 plateau survives the downscale

  // same-size load is an exact pixel-by-pixel division by 255
  auto exact = load_sample((dir / "a.png").string(),
                           (dir / "a_mask.png").string(), 40);
  cv::Mat src = cv::imread((dir / "a.png").string(), cv::IMREAD_GRAYSCALE);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      CHECK(exact.image.at(y, x) == src.at<std::uint8_t>(y, x) / 255.0);

  // all-zero mask file loads as all zeros
  {
    cv::Mat zm(40, 40, CV_8UC1, cv::Scalar(0));
    REQUIRE(cv::imwrite((dir / "z_mask.png").string(), zm));
  }
  auto z = load_sample((dir / "a.png").string(),
                       (dir / "z_mask.png").string(), 32);
  for (std::int64_t i = 0; i < z.mask.size(); ++i)
    CHECK(z.mask.data[i] == 0.0);

  CHECK_THROWS_AS(load_sample((dir / "missing.png").string(),
                              (dir / "a_mask.png").string(), 32),
                  IoError);
}

TEST_CASE("manifest parsing and directory pairing") {
  auto dir = fresh_dir("manifest");
  fs::create_directories(dir / "img");
  fs::create_directories(dir / "msk");
  write_gray_png(dir / "img/s1.png", 32, 1);
  write_gray_png(dir / "img/s2.png", 32, 2);
  write_gray_png(dir / "msk/s1.png", 32, 0);
  write_gray_png(dir / "msk/s2.jpg", 32, 0);

  {
    std::ofstream mf(dir / "manifest.tsv");
    mf << "img/s1.png\tmsk/s1.png\ts1\n";
    mf << "\n";  // blank lines are skipped
    mf << (dir / "img/s2.png").string() << "\t"
       << (dir / "msk/s2.jpg").string() << "\ts2\n";
  }
  auto entries = read_manifest((dir / "manifest.tsv").string());
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].id == "s1");
  CHECK(fs::path(entries[0].image_path).is_absolute());
  CHECK(fs::exists(entries[0].image_path));
  CHECK(fs::exists(entries[1].mask_path));

  {
    std::ofstream mf(dir / "bad.tsv");
    mf << "only_one_field\n";
  }
  CHECK_THROWS_AS(read_manifest((dir / "bad.tsv").string()), ValidationError);
  CHECK_THROWS_AS(read_manifest((dir / "nope.tsv").string()), IoError);

  auto paired = pair_directories((dir / "img").string(),
                                 (dir / "msk").string());
  REQUIRE(paired.size() == 2);
  CHECK(paired[0].id == "s1");
  CHECK(paired[1].id == "s2");
  CHECK(paired[1].mask_path == (dir / "msk/s2.jpg").string());

  write_gray_png(dir / "img/s3.png", 32, 3);
  CHECK_THROWS_AS(
      pair_directories((dir / "img").string(), (dir / "msk").string()),
      ValidationError);
}

TEST_CASE("dataset split arithmetic and determinism") {
  auto make = [](int n) {
    std::vector<ImageSample> v;
    for (int i = 0; i < n; ++i) {
      ImageSample s;
      s.image = Tensor<double>({2, 2});
      s.mask = Tensor<double>({2, 2});
      char buf[16];
      std::snprintf(buf, sizeof(buf), "s%04d", i);
      s.id = buf;
      v.push_back(std::move(s));
    }
    return v;
  };

  auto split = split_dataset(make(318), 268.0 / 318.0, 99);
  CHECK(split.train.size() == 268);
  CHECK(split.test.size() == 50);

  auto tiny = split_dataset(make(2), 0.5, 1);
  CHECK(tiny.train.size() == 1);
  CHECK(tiny.test.size() == 1);

  auto a = split_dataset(make(40), 0.75, 7);
  auto b = split_dataset(make(40), 0.75, 7);
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i].id == b.train[i].id);
  for (std::size_t i = 0; i < a.test.size(); ++i)
    CHECK(a.test[i].id == b.test[i].id);

  // union of ids is the input set, intersection empty
  std::vector<std::string> ids;
  for (const auto& s : a.train) ids.push_back(s.id);
  for (const auto& s : a.test) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  CHECK(ids.size() == 40);
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  for (int i = 0; i < 40; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%04d", i);
    CHECK(std::binary_search(ids.begin(), ids.end(), std::string(buf)));
  }

  // a different seed moves samples across the cut
  auto c = split_dataset(make(40), 0.75, 8);
  bool moved = false;
  for (std::size_t i = 0; i < a.train.size(); ++i)
    moved |= (a.train[i].id != c.train[i].id);
  CHECK(moved);

  CHECK_THROWS_AS(split_dataset(make(1), 0.5, 0), ValidationError);
  auto dup = make(3);
  dup[2].id = dup[0].id;
  CHECK_THROWS_AS(split_dataset(std::move(dup), 0.5, 0), ValidationError);
}

TEST_CASE("synthetic dataset: blobs, determinism, exact supports") {
  auto ds = make_synthetic_dataset(8, 128, 0);
  REQUIRE(ds.size() == 8);
  for (const auto& s : ds) {
    CHECK(s.image.shape == Shape{128, 128});
    double mn = 1e9, mx = -1e9;
    for (std::int64_t i = 0; i < s.image.size(); ++i) {
      mn = std::min(mn, s.image.data[i]);
      mx = std::max(mx, s.image.data[i]);
      CHECK((s.mask.data[i] == 0.0 || s.mask.data[i] == 1.0));
    }
    CHECK(mn >= 0.0);
    CHECK(mx <= 1.0);
    const int comps = component_count(s.mask);
    CHECK(comps >= 1);
    CHECK(comps <= 3);
  }

  auto again = make_synthetic_dataset(8, 128, 0);
  for (int i = 0; i < 8; ++i) {
    for (std::int64_t j = 0; j < ds[i].image.size(); ++j) {
      CHECK(ds[i].image.data[j] == again[i].image.data[j]);
      CHECK(ds[i].mask.data[j] == again[i].mask.data[j]);
    }
  }

  // re-derive the supports from the seed by replaying the documented draw
  // order: count, then (cx, cy, rx, ry, angle, amp) per blob
  for (int i = 0; i < 3; ++i) {
    Rng rng(mix_seed(0, static_cast<std::uint64_t>(i)));
    const int k = 1 + static_cast<int>(rng.uniform_int(3));
    struct E {
      double cx, cy, rx, ry, ca, sa;
    };
    std::vector<E> es;
    for (int bi = 0; bi < k; ++bi) {
      E e;
      e.cx = rng.uniform(0.2, 0.8) * 128;
      e.cy = rng.uniform(0.2, 0.8) * 128;
      e.rx = rng.uniform(0.06, 0.18) * 128;
      e.ry = rng.uniform(0.06, 0.18) * 128;
      const double ang = rng.uniform(0.0, 3.141592653589793);
      e.ca = std::cos(ang);
      e.sa = std::sin(ang);
      rng.uniform(0.6, 0.95);  // amp, not needed for the support
      es.push_back(e);
    }
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) {
        bool inside = false;
        for (const auto& e : es) {
          const double dx = x + 0.5 - e.cx, dy = y + 0.5 - e.cy;
          const double u = (dx * e.ca + dy * e.sa) / e.rx;
          const double v = (-dx * e.sa + dy * e.ca) / e.ry;
          if (u * u + v * v <= 1.0) inside = true;
        }
        CHECK(ds[i].mask.at(y, x) == (inside ? 1.0 : 0.0));
      }
  }

  CHECK_THROWS_AS(make_synthetic_dataset(0, 128, 0), ValidationError);
  CHECK_THROWS_AS(make_synthetic_dataset(4, 16, 0), ValidationError);
}

TEST_CASE("batching shapes and order") {
  auto ds = make_synthetic_dataset(50, 32, 5);
  auto batches = make_batches(ds, 8);
  REQUIRE(batches.size() == 7);
  for (int i = 0; i < 6; ++i) CHECK(batches[i].images.dim(0) == 8);
  CHECK(batches[6].images.dim(0) == 2);
  CHECK(batches[0].images.shape == Shape{8, 1, 32, 32});
  CHECK(batches[0].ids[0] == ds[0].id);  // unshuffled keeps source order
  CHECK(batches[0].images.data[5] == ds[0].image.data[5]);

  auto one = make_batches({ds[3]}, 1);
  REQUIRE(one.size() == 1);
  for (std::int64_t i = 0; i < ds[3].image.size(); ++i)
    CHECK(one[0].images.data[i] == ds[3].image.data[i]);

  auto sh1 = make_batches(ds, 8, 42);
  auto sh2 = make_batches(ds, 8, 42);
  bool permuted = false;
  for (std::size_t b = 0; b < sh1.size(); ++b)
    for (std::size_t i = 0; i < sh1[b].ids.size(); ++i) {
      CHECK(sh1[b].ids[i] == sh2[b].ids[i]);
      permuted |= (sh1[b].ids[i] != batches[b].ids[i]);
    }
  CHECK(permuted);

  CHECK_THROWS_AS(make_batches({}, 4), ValidationError);
  CHECK_THROWS_AS(make_batches(ds, 0), ValidationError);
}
