#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ebgmrf/cli.hpp"
#include "ebgmrf/config.hpp"
#include "ebgmrf/rng.hpp"
#include "ebgmrf/volume.hpp"

using namespace ebgmrf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ebgmrf_test_" + std::to_string(Rng(::getpid()).next() % 100000000));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Volume toy_volume(int t) {
  Volume v;
  v.dims = {4, 3, 2};
  v.t = t;
  v.voxel_size = {3.0, 3.0, 3.5};
  v.origin = {-6.0, -4.5, -3.5};
  v.data.resize(v.frame_size() * static_cast<std::size_t>(t));
  Rng rng(401);
  for (auto& d : v.data) d = static_cast<float>(rng.normal());
  return v;
}

}  // namespace

TEST_CASE("NIfTI write/read round trip is bitwise for float32") {
  TempDir tmp;
  const Volume v = toy_volume(1);
  write_volume(tmp.file("a.nii"), v);
  const Volume r = read_volume(tmp.file("a.nii"));
  CHECK(r.dims == v.dims);
  CHECK(r.t == 1);
  CHECK(r.voxel_size[0] == doctest::Approx(3.0));
  CHECK(r.origin[0] == doctest::Approx(-6.0));
  REQUIRE(r.data.size() == v.data.size());
  CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);

  // Write the same volume twice: identical bytes on disk.
  write_volume(tmp.file("b.nii"), v);
  CHECK(slurp(tmp.file("a.nii")) == slurp(tmp.file("b.nii")));
}

TEST_CASE("raw sidecar volume round trips") {
  TempDir tmp;
  const Volume v = toy_volume(3);
  write_volume(tmp.file("a.rvol"), v);
  const Volume r = read_volume(tmp.file("a.rvol"));
  CHECK(r.t == 3);
  CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
}

TEST_CASE("wrong magic and unsupported dtype produce named errors") {
  TempDir tmp;
  const Volume v = toy_volume(1);
  write_volume(tmp.file("a.nii"), v);

  // Corrupt the magic field (offset 344).
  auto bytes = slurp(tmp.file("a.nii"));
  bytes[344] = 'x';
  std::ofstream(tmp.file("bad_magic.nii"), std::ios::binary)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_WITH_AS(read_volume(tmp.file("bad_magic.nii")),
                       doctest::Contains("magic"), std::runtime_error);

  // Corrupt the datatype field (offset 70, int16).
  bytes = slurp(tmp.file("a.nii"));
  bytes[70] = 2;  // DT_UNSIGNED_CHAR, unsupported
  bytes[71] = 0;
  std::ofstream(tmp.file("bad_dtype.nii"), std::ios::binary)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_WITH_AS(read_volume(tmp.file("bad_dtype.nii")),
                       doctest::Contains("datatype"), std::runtime_error);

  CHECK_THROWS_WITH_AS(read_volume(tmp.file("a.nii.gz")), doctest::Contains("compressed"),
                       std::runtime_error);
}

TEST_CASE("scl_slope and scl_inter are applied on read") {
  TempDir tmp;
  const Volume v = toy_volume(1);
  write_volume(tmp.file("a.nii"), v);
  auto bytes = slurp(tmp.file("a.nii"));
  const float slope = 2.0f, inter = -1.0f;
  std::memcpy(bytes.data() + 112, &slope, 4);
  std::memcpy(bytes.data() + 116, &inter, 4);
  std::ofstream(tmp.file("scaled.nii"), std::ios::binary)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  const Volume r = read_volume(tmp.file("scaled.nii"));
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(r.data[i] == doctest::Approx(v.data[i] * 2.0f - 1.0f));
}

TEST_CASE("4D series loads under the mask and scatters back") {
  const std::array<int, 3> dims{4, 3, 2};
  std::vector<std::uint8_t> mask = full_mask(dims);
  mask[5] = 0;
  const MaskedLattice lat = build_lattice(dims, mask, {3, 3, 3.5});
  TempDir tmp;

  Eigen::MatrixXd series(7, lat.n);
  Rng rng(402);
  for (Eigen::Index j = 0; j < lat.n; ++j)
    for (Eigen::Index i = 0; i < 7; ++i) series(i, j) = std::round(100.0 * rng.normal()) / 16.0;
  write_volume(tmp.file("y.nii"), volume_from_series(lat, series));
  const Volume r = read_volume(tmp.file("y.nii"));
  CHECK(r.t == 7);
  const Eigen::MatrixXd back = series_from_volume(r, lat);
  CHECK((back - series).cwiseAbs().maxCoeff() == 0.0);  // values chosen exactly representable
}

TEST_CASE("design CSV: header auto-detect, values, ragged error") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("d.csv"));
    out << "hrf,intercept\n1.5,1\n-0.25,1\n0.75,1\n";
  }
  const Eigen::MatrixXd x = read_design(tmp.file("d.csv"));
  CHECK(x.rows() == 3);
  CHECK(x.cols() == 2);
  CHECK(x(0, 0) == doctest::Approx(1.5));
  CHECK(x(2, 1) == doctest::Approx(1.0));

  {
    std::ofstream out(tmp.file("ragged.csv"));
    out << "1,2\n3\n";
  }
  CHECK_THROWS_WITH_AS(read_design(tmp.file("ragged.csv")), doctest::Contains("ragged"),
                       std::runtime_error);
}

TEST_CASE("config parse, typed getters, serialize round trip") {
  const std::string text = R"(
seed = 42
[data]
bold = "y.nii"   # comment
mask = "m.nii"
[prior.1]
kind = "M2"
xi1 = 0.05
optimize = true
contrast = [1.0, 0.0, -0.5]
names = ["a", "b"]
)";
  const ConfigFile cfg = ConfigFile::parse(text);
  CHECK(cfg.get_int("seed") == 42);
  CHECK(cfg.get_string("data.bold") == "y.nii");
  CHECK(cfg.get_double("prior.1.xi1") == doctest::Approx(0.05));
  CHECK(cfg.get_bool("prior.1.optimize"));
  CHECK(cfg.get_doubles("prior.1.contrast").size() == 3);
  CHECK(cfg.get_string("missing", "fallback") == "fallback");
  CHECK(cfg.subsections("prior") == std::vector<std::string>{"1"});

  const ConfigFile again = ConfigFile::parse(cfg.serialize());
  CHECK(again.values().size() == cfg.values().size());
  CHECK(again.get_doubles("prior.1.contrast") == cfg.get_doubles("prior.1.contrast"));
  CHECK(again.get_string("data.mask") == "m.nii");

  CHECK_THROWS_AS(ConfigFile::parse("key = "), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("data.bold"), ConfigError);
  try {
    cfg.get_string("data.nope");
    FAIL("expected");
  } catch (const ConfigError& e) {
    CHECK(e.key == "data.nope");
  }
}

TEST_CASE("cli: full simulate/fit/ppm/cv/sample-prior pipeline with deterministic outputs") {
  TempDir tmp;
  const std::string config = tmp.file("run.toml");
  {
    std::ofstream out(config);
    out << "seed = 11\n"
        << "[data]\n"
        << "bold = \"sim/bold.nii\"\nmask = \"sim/mask.nii\"\ndesign = \"sim/design.csv\"\n"
        << "output = \"out\"\n"
        << "[model]\nnoise_order = 1\nactivity = [1]\n"
        << "[prior.1]\nkind = \"M2\"\nsigma0_pct = 2.0\n"
        << "[optimizer]\nn_iter = 4\nwarmup = 1\nn_probes = 2\nn_polyak = 2\npcg_tol = 1e-7\n"
        << "[ppm]\ncontrast = [1.0]\ngamma_pct = 0.5\nn_rbmc = 12\n"
        << "[cv]\nn_splits = 2\nleave_out_pct = 50.0\nn_rbmc = 6\n"
        << "[simulate]\ndims = [5, 5, 4]\nvoxel_size = [3.0, 3.0, 3.0]\nt = 24\n"
        << "mask = \"ellipsoid\"\nar = [0.3]\nlambda = 1.0\n"
        << "[condition.1]\nkind = \"M2\"\nrho_mm = 9.0\nsigma = 2.0\n";
  }

  auto run = [&](std::vector<std::string> args) { return run_cli(args); };
  CHECK(run({"simulate", "--config", config, "--out", tmp.file("sim")}) == 0);
  CHECK(fs::exists(tmp.file("sim/bold.nii")));
  CHECK(fs::exists(tmp.file("sim/truth_1.nii")));

  CHECK(run({"fit", "--config", config}) == 0);
  CHECK(fs::exists(tmp.file("out/theta.toml")));
  CHECK(fs::exists(tmp.file("out/lambda.nii")));
  CHECK(fs::exists(tmp.file("out/diagnostics.csv")));

  CHECK(run({"ppm", "--config", config, "--fit", tmp.file("out")}) == 0);
  CHECK(fs::exists(tmp.file("out/ppm.nii")));

  CHECK(run({"cv", "--config", config, "--fit", tmp.file("out")}) == 0);
  CHECK(fs::exists(tmp.file("out/scores.csv")));

  CHECK(run({"sample-prior", "--config", config, "--n", "2"}) == 0);
  CHECK(fs::exists(tmp.file("out/prior_M2_1_s1.nii")));

  // Identical seeds give bytewise-identical outputs.
  const auto theta_bytes = slurp(tmp.file("out/theta.toml"));
  const auto mu_bytes = slurp(tmp.file("out/mu_k1.nii"));
  const auto ppm_bytes = slurp(tmp.file("out/ppm.nii"));
  CHECK(run({"fit", "--config", config}) == 0);
  CHECK(run({"ppm", "--config", config, "--fit", tmp.file("out")}) == 0);
  CHECK(slurp(tmp.file("out/theta.toml")) == theta_bytes);
  CHECK(slurp(tmp.file("out/mu_k1.nii")) == mu_bytes);
  CHECK(slurp(tmp.file("out/ppm.nii")) == ppm_bytes);
}

TEST_CASE("cli: missing mask path exits with code 2") {
  TempDir tmp;
  const std::string config = tmp.file("bad.toml");
  {
    std::ofstream out(config);
    out << "[data]\nbold = \"nope.nii\"\nmask = \"nope.nii\"\ndesign = \"d.csv\"\n"
        << "[model]\nactivity = [1]\n[prior.1]\nkind = \"M2\"\n";
  }
  CHECK(run_cli({"fit", "--config", config}) == 2);
}
