#include <cstring>
#include <filesystem>

#include <unistd.h>

#include <gtest/gtest.h>

#include <geoflow/config.hpp>
#include <geoflow/io.hpp>

using namespace geoflow;
namespace fs = std::filesystem;

namespace {

Snapshot sample_snapshot() {
  Snapshot s;
  s.name = "omega";
  s.Nx = 8;
  s.Ny = 4;
  s.X = 2.0;
  s.Y = 0.9;
  s.t = 12.5;
  s.data.resize(8, 5);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 8; ++i) s.data(i, j) = 0.1 * i - 1.0 / (j + 3);
  return s;
}

fs::path scratch_dir() {
  auto p = fs::temp_directory_path() / ("geoflow_io_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Snapshot, HeaderIsExact) {
  std::string b = encode_snapshot(sample_snapshot());
  auto nl = b.find('\n');
  EXPECT_EQ(b.substr(0, nl), "GEOFLOW-FIELD v1 name=omega Nx=8 Ny=4 X=2 Y=0.90000000000000002 t=12.5");
  EXPECT_EQ(b.size() - nl - 1, 8u * 5u * 8u);
}

TEST(Snapshot, PayloadIsRowMajorByY) {
  auto s = sample_snapshot();
  std::string b = encode_snapshot(s);
  const char* p = b.data() + b.find('\n') + 1;
  double v;
  // row j = 2, column i = 3
  std::memcpy(&v, p + (2 * 8 + 3) * sizeof(double), sizeof v);
  EXPECT_EQ(v, s.data(3, 2));
}

TEST(Snapshot, RoundTrip) {
  auto s = sample_snapshot();
  auto dir = scratch_dir();
  write_snapshot(dir / "a.field", s);
  auto r = read_snapshot(dir / "a.field");
  EXPECT_EQ(r.name, s.name);
  EXPECT_EQ(r.Nx, s.Nx);
  EXPECT_EQ(r.Ny, s.Ny);
  EXPECT_EQ(r.X, s.X);
  EXPECT_EQ(r.Y, s.Y);
  EXPECT_EQ(r.t, s.t);
  EXPECT_TRUE((r.data == s.data).all());
  EXPECT_FALSE(fs::exists(dir / "a.field.tmp"));
  fs::remove_all(dir);
}

TEST(Snapshot, Rejections) {
  std::string b = encode_snapshot(sample_snapshot());
  try {
    decode_snapshot(b.substr(0, b.size() - 3));
    FAIL();
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("expected 320 payload bytes, found 317"), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_snapshot("GEOFLOW-FIELD v2 name=a Nx=1 Ny=0 X=1 Y=1 t=0\n" + std::string(8, '\0')),
               config_error);
  EXPECT_THROW(decode_snapshot("GEOFLOW-FIELD v1 name=a Nx=1 X=1 Y=1 t=0\n" + std::string(8, '\0')), config_error);
  EXPECT_THROW(decode_snapshot("GEOFLOW-FIELD v1 name=a Nx=z Ny=0 X=1 Y=1 t=0\n"), config_error);
  EXPECT_THROW(decode_snapshot("no newline"), config_error);
  auto s = sample_snapshot();
  s.name = "two words";
  EXPECT_THROW(encode_snapshot(s), config_error);
  s = sample_snapshot();
  s.Ny = 5;
  EXPECT_THROW(encode_snapshot(s), config_error);
}

TEST(SeriesCsv, RoundTripIsExact) {
  std::vector<Diagnostics> rows = {{0.0, 1.0 / 3, 2.5, 1e-9, -3e-17, -6.086e-7, 0.0},
                                   {0.1, 0.3333333333333333, 2.4999999, 1.1e-9, 0.0, -6.1e-7, 1e-300}};
  std::string text = series_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,energy,enstrophy,pert_enstrophy,circulation,H2,p_norm");
  auto back = parse_series_csv(text);
  ASSERT_EQ(back.size(), 2u);
  for (size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].t, rows[k].t);
    EXPECT_EQ(back[k].energy, rows[k].energy);
    EXPECT_EQ(back[k].enstrophy, rows[k].enstrophy);
    EXPECT_EQ(back[k].pert_enstrophy, rows[k].pert_enstrophy);
    EXPECT_EQ(back[k].circulation, rows[k].circulation);
    EXPECT_EQ(back[k].H2, rows[k].H2);
    EXPECT_EQ(back[k].p_norm, rows[k].p_norm);
  }
  EXPECT_EQ(series_csv(back), text);
}

TEST(SeriesCsv, Rejections) {
  EXPECT_THROW(parse_series_csv("t,energy\n1,2\n"), config_error);
  std::string h = std::string(kSeriesHeader) + "\n";
  EXPECT_THROW(parse_series_csv(h + "1,2,3\n"), config_error);
  EXPECT_THROW(parse_series_csv(h + "1,2,3,4,5,6,x\n"), config_error);
  EXPECT_THROW(parse_series_csv(h + "1,2,3,4,5,6,7abc\n"), config_error);
  EXPECT_EQ(parse_series_csv(h).size(), 0u);
}

TEST(RigidCsv, RoundTrip) {
  RigidTrajectory tr;
  tr.samples.push_back({0.0, Vec3(0.001, 1.0, 0.0), 0.0, 0.25, 1.000001, 0.0});
  tr.samples.push_back({0.5, Vec3(-0.2, 0.98, 1e-4), 0.1, 0.25, 1.000001, -2e-20});
  std::string text = rigid_csv(tr);
  auto rows = parse_csv(text, kRigidHeader);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], 0.5);
  EXPECT_EQ(rows[1][2], 0.98);
  EXPECT_EQ(rows[1][7], -2e-20);
}

TEST(Config, ParsesSectionsAndComments) {
  auto c = Config::parse("# header\nsystem.kind = shear-flow\n\ngeometry.X = 2.0  # trailing\ngeometry.Nx=128\n"
                         "control.list = 1, 2 ,3\nseed = 42\n");
  EXPECT_EQ(c.str("system.kind"), "shear-flow");
  EXPECT_EQ(c.num("geometry.X"), 2.0);
  EXPECT_EQ(c.integer("geometry.Nx", 0), 128);
  EXPECT_EQ(c.list("control.list", 3, {}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(c.u64("seed", 0), 42u);
  EXPECT_EQ(c.num("geometry.Y", 0.9), 0.9);
  EXPECT_NO_THROW(c.check_unused());
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto expect_msg = [](const std::string& text, const std::string& what, auto&& use) {
    try {
      auto c = Config::parse(text, "run.cfg");
      use(c);
      FAIL() << "no error for: " << text;
    } catch (const config_error& e) {
      EXPECT_NE(std::string(e.what()).find(what), std::string::npos) << e.what();
    }
  };
  auto none = [](const Config&) {};
  expect_msg("a = 1\nbroken line\n", "run.cfg:2: expected 'key = value'", none);
  expect_msg("a = 1\na = 2\n", "run.cfg:2: duplicate key 'a'", none);
  expect_msg("a b = 1\n", "run.cfg:1: invalid key", none);
  expect_msg("a =\n", "run.cfg:1: empty key or value", none);
  expect_msg("\n\nx = abc\n", "run.cfg:3: 'x' is not a number", [](const Config& c) { c.num("x"); });
  expect_msg("n = 1.5\n", "run.cfg:1: 'n' is not an integer", [](const Config& c) { c.integer("n", 0); });
  expect_msg("s = -4\n", "run.cfg:1: 's' is not an unsigned integer", [](const Config& c) { c.u64("s", 0); });
  expect_msg("l = 1,2\n", "run.cfg:1: 'l' needs 3 values", [](const Config& c) { c.list("l", 3, {}); });
  expect_msg("m = foo\n", "run.cfg:1: 'm' must be one of a b",
             [](const Config& c) { c.choice("m", "a", {"a", "b"}); });
  expect_msg("x = 1\ntypo = 2\n", "run.cfg:2: unknown key 'typo'", [](const Config& c) {
    c.num("x");
    c.check_unused();
  });
  expect_msg("", "missing required key 'k'", [](const Config& c) { c.str("k"); });
}

TEST(AtomicWrite, ReplacesExisting) {
  auto dir = scratch_dir();
  write_atomic(dir / "f.txt", "one");
  write_atomic(dir / "f.txt", "two");
  EXPECT_EQ(read_file(dir / "f.txt"), "two");
  EXPECT_THROW(read_file(dir / "missing"), config_error);
  fs::remove_all(dir);
}
