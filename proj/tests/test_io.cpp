#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "nadjust/csv.hpp"
#include "nadjust/idx.hpp"
#include "nadjust/rng.hpp"
#include "nadjust/svg.hpp"

using namespace nadjust;

namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("nadjust_io_" + name);
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

// minimal big-endian IDX image/label pair
void write_idx_pair(const fs::path& img, const fs::path& lab, std::uint32_t n_img,
                    std::uint32_t n_lab, std::uint32_t img_magic = 0x803,
                    std::uint32_t lab_magic = 0x801, bool truncate_pixels = false) {
  auto be = [](std::ofstream& o, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 8), (unsigned char)v};
    o.write(reinterpret_cast<char*>(b), 4);
  };
  std::ofstream oi(img, std::ios::binary);
  be(oi, img_magic);
  be(oi, n_img);
  be(oi, 2);  // rows
  be(oi, 2);  // cols
  const std::size_t want = std::size_t(n_img) * 4 - (truncate_pixels ? 1 : 0);
  for (std::size_t j = 0; j < want; ++j) {
    unsigned char px = (unsigned char)(j * 51 % 256);
    oi.write(reinterpret_cast<char*>(&px), 1);
  }
  std::ofstream ol(lab, std::ios::binary);
  be(ol, lab_magic);
  be(ol, n_lab);
  for (std::uint32_t j = 0; j < n_lab; ++j) {
    unsigned char l = (unsigned char)(j % 3);
    ol.write(reinterpret_cast<char*>(&l), 1);
  }
}

}  // namespace

TEST_CASE("regression CSV round-trips exactly", "[io]") {
  ExpRegData d;
  RngStream rng(50, 0);
  for (int i = 0; i < 40; ++i) {
    d.x1.push_back(rng.normal());
    d.x2.push_back(rng.normal());
    d.y.push_back(rng.exponential(1.0));
  }
  const fs::path p = temp_file("expreg.csv");
  save_expreg_csv(p.string(), d);
  const ExpRegData back = load_expreg_csv(p.string());
  CHECK(back.x1 == d.x1);
  CHECK(back.x2 == d.x2);
  CHECK(back.y == d.y);
  fs::remove(p);
}

TEST_CASE("regression CSV rejects malformed input", "[io]") {
  CHECK_THROWS_AS(load_expreg_csv("/nonexistent/no.csv"), IoError);

  const fs::path p = temp_file("expreg_bad.csv");
  write_text(p, "a,b,c\n1,2,3\n");
  CHECK_THROWS_AS(load_expreg_csv(p.string()), ParseError);

  write_text(p, "x1,x2,y\n1,2,3\n1,oops,3\n");
  try {
    load_expreg_csv(p.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
    CHECK(std::string(e.what()).find("oops") != std::string::npos);
  }

  write_text(p, "x1,x2,y\n1,2\n");
  CHECK_THROWS_AS(load_expreg_csv(p.string()), ParseError);

  write_text(p, "x1,x2,y\n");
  CHECK_THROWS_AS(load_expreg_csv(p.string()), InvalidData);
  fs::remove(p);
}

TEST_CASE("series CSV transforms and round-trip", "[io]") {
  const fs::path p = temp_file("series.csv");

  // quoted fields and a date column are tolerated; the log of (1, e, e^2)
  // is (0, 1, 2), and demeaning shifts it to (-1, 0, 1)
  write_text(p, "date,value\n2020-01-01,\"1.0\"\n2020-01-02,2.718281828459045\n"
                "2020-01-03,7.38905609893065\n");
  SeriesOptions opts;
  opts.log_transform = true;
  const ReturnSeries logged = load_series_csv(p.string(), opts);
  REQUIRE(logged.size() == 3);
  CHECK(logged.y[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(logged.y[1] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(logged.y[2] == Catch::Approx(2.0).epsilon(1e-12));

  opts.demean = true;
  const ReturnSeries centered = load_series_csv(p.string(), opts);
  CHECK(centered.y[0] == Catch::Approx(-1.0).epsilon(1e-12));
  CHECK(centered.y[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(centered.y[2] == Catch::Approx(1.0).epsilon(1e-12));

  // writing and reading back preserves the numbers bit-for-bit
  ReturnSeries s;
  RngStream rng(51, 0);
  for (int i = 0; i < 30; ++i) s.y.push_back(rng.normal());
  save_series_csv(p.string(), s);
  const ReturnSeries back = load_series_csv(p.string());
  CHECK(back.y == s.y);
  fs::remove(p);
}

TEST_CASE("series CSV rejects malformed input", "[io]") {
  const fs::path p = temp_file("series_bad.csv");

  write_text(p, "value,junk\n1,2\n");
  CHECK_THROWS_AS(load_series_csv(p.string()), ParseError);

  write_text(p, "date\n2020-01-01\n");
  CHECK_THROWS_AS(load_series_csv(p.string()), ParseError);

  write_text(p, "value\n1.0\n-2.0\n");
  SeriesOptions opts;
  opts.log_transform = true;
  try {
    load_series_csv(p.string(), opts);
    FAIL("expected NonPositiveUnderLog");
  } catch (const NonPositiveUnderLog& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find(p.string()) != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("IDX loader reads a hand-built pair", "[io]") {
  const fs::path img = temp_file("imgs.idx"), lab = temp_file("labs.idx");
  write_idx_pair(img, lab, 3, 3);
  const Dataset d = load_idx_dataset(img.string(), lab.string(), 3);
  REQUIRE(d.size() == 3);
  REQUIRE(d.x[0].size() == 4);
  CHECK(d.x[0][0] == Catch::Approx(0.0));
  CHECK(d.x[0][1] == Catch::Approx(51.0 / 255.0));
  CHECK(d.labels == std::vector<int>{0, 1, 2});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d.y[i][std::size_t(d.labels[i])] == 1.0);
    double s = 0.0;
    for (double v : d.y[i]) s += v;
    CHECK(s == 1.0);
  }
  fs::remove(img);
  fs::remove(lab);
}

TEST_CASE("IDX loader rejects malformed input", "[io]") {
  const fs::path img = temp_file("bad_imgs.idx"), lab = temp_file("bad_labs.idx");

  try {
    load_idx_dataset("/nonexistent/i.idx", "/nonexistent/l.idx");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/i.idx") != std::string::npos);
  }

  write_idx_pair(img, lab, 2, 2, 0x802);
  CHECK_THROWS_AS(load_idx_dataset(img.string(), lab.string()), ParseError);

  write_idx_pair(img, lab, 2, 2, 0x803, 0x800);
  CHECK_THROWS_AS(load_idx_dataset(img.string(), lab.string()), ParseError);

  write_idx_pair(img, lab, 2, 3);
  CHECK_THROWS_AS(load_idx_dataset(img.string(), lab.string()), InvalidData);

  write_idx_pair(img, lab, 2, 2, 0x803, 0x801, /*truncate_pixels=*/true);
  CHECK_THROWS_AS(load_idx_dataset(img.string(), lab.string()), ParseError);

  // labels outside the one-hot range
  write_idx_pair(img, lab, 3, 3);
  CHECK_THROWS_AS(load_idx_dataset(img.string(), lab.string(), 2), InvalidData);

  fs::remove(img);
  fs::remove(lab);
}

TEST_CASE("bundled digits corpus loads cleanly", "[io]") {
  const std::string root = NADJUST_SOURCE_DIR;
  const Dataset train = load_idx_dataset(root + "/data/digits/train-images-idx3-ubyte",
                                         root + "/data/digits/train-labels-idx1-ubyte");
  const Dataset test = load_idx_dataset(root + "/data/digits/t10k-images-idx3-ubyte",
                                        root + "/data/digits/t10k-labels-idx1-ubyte");
  CHECK(train.size() == 1438);
  CHECK(test.size() == 359);
  REQUIRE(train.x[0].size() == 64);
  for (double v : train.x[0]) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // all ten classes appear in both splits
  for (int c = 0; c < 10; ++c) {
    CHECK(std::count(train.labels.begin(), train.labels.end(), c) > 0);
    CHECK(std::count(test.labels.begin(), test.labels.end(), c) > 0);
  }
}

TEST_CASE("synthetic blobs are deterministic and well-formed", "[io]") {
  BlobSpec bs;
  RngStream r1(52, 0), r2(52, 0);
  const Dataset a = gaussian_blob_dataset(bs, r1);
  const Dataset b = gaussian_blob_dataset(bs, r2);
  REQUIRE(a.size() == bs.classes * bs.per_class);
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.x[i] == b.x[i]);

  BlobSpec bad;
  bad.classes = 1;
  CHECK_THROWS_AS(gaussian_blob_dataset(bad, r1), InvalidParams);
}

TEST_CASE("figure rendering: circle geometry and byte stability", "[io]") {
  // identity covariance at radius^2 = 1: the rendered ellipse is a circle,
  // so the rx and ry attributes must match
  EllipseSpec circle;
  circle.center = {0.0, 0.0};
  circle.cov = Mat::identity(2);
  circle.radius2 = 1.0;
  SvgFigure fig;
  fig.title = "calibration circle";
  fig.ellipses.push_back({circle, "unit", "#1f77b4", false});
  const std::string svg = render_svg(fig);

  const std::size_t rx = svg.find("rx=\"");
  const std::size_t ry = svg.find("ry=\"");
  REQUIRE(rx != std::string::npos);
  REQUIRE(ry != std::string::npos);
  const std::string rxv = svg.substr(rx + 4, svg.find('"', rx + 4) - rx - 4);
  const std::string ryv = svg.substr(ry + 4, svg.find('"', ry + 4) - ry - 4);
  CHECK(rxv == ryv);

  CHECK(render_svg(fig) == svg);  // same input, same bytes
}

TEST_CASE("figure rendering: region pair layering", "[io]") {
  Mat inner = Mat::identity(2);
  Mat outer = 2.5 * Mat::identity(2);
  EllipseSpec adj{.center = {1.0, 2.0}, .cov = outer, .radius2 = 4.6};
  EllipseSpec un{.center = {1.0, 2.0}, .cov = inner, .radius2 = 4.6};

  SvgFigure fig;
  // wider adjusted region first so the inner one draws on top
  fig.ellipses.push_back({adj, "adjusted", "#1f77b4", false});
  fig.ellipses.push_back({un, "unadjusted", "#d62728", true});
  fig.markers.push_back({1.1, 2.1, "estimate", "#000000", false});
  const std::string svg = render_svg(fig);

  CHECK(svg.find("#1f77b4") != std::string::npos);
  CHECK(svg.find("#d62728") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("adjusted") < svg.find("unadjusted"));

  const fs::path p = temp_file("fig.svg");
  emit_svg(p.string(), fig);
  std::ifstream in(p, std::ios::binary);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(body == svg);
  fs::remove(p);
}
