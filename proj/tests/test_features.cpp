#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gridfloor/error.hpp"
#include "gridfloor/features.hpp"
#include "gridfloor/rng.hpp"

using namespace gridfloor;
using namespace gridfloor::features;

namespace {

FeatureTable random_table(const GridSpec& g, std::size_t channels, int rows, std::uint64_t seed) {
  Rng rng(seed);
  FeatureTable t{g, channels, RowMatrix(rows, static_cast<Eigen::Index>(g.node_count() * channels))};
  for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = rng.normal(3, 2);
  return t;
}

ingest::FrameDataset random_dataset(const GridSpec& g, int frames, std::uint64_t seed) {
  Rng rng(seed);
  ingest::FrameDataset ds{g, {}};
  for (int i = 0; i < frames; ++i) {
    ingest::Frame f{static_cast<double>(i), {rng.uniform(0, 5), rng.uniform(0, 5)}, {}};
    for (int n = 0; n < g.node_count(); ++n) {
      Measurement m;
      for (auto& v : m.values) v = rng.normal();
      f.nodes.push_back(m);
    }
    ds.frames.push_back(f);
  }
  return ds;
}

}  // namespace

TEST_SUITE("featureprep") {

TEST_CASE("channel selection keeps magnetometer and rssi in order") {
  GridSpec g;
  const auto ds = random_dataset(g, 2, 1);
  const auto full = from_dataset(ds);
  CHECK(full.width() == 3450);
  const auto sel = select_channels(full);
  CHECK(sel.width() == 1380);
  CHECK(sel.values.cols() == 1380);
  for (int n : {0, 17, 344}) {
    for (int k = 0; k < 4; ++k) {
      CHECK(sel.values(1, n * 4 + k) == ds.frames[1].nodes[n].values[6 + k]);
    }
  }
  CHECK_THROWS_AS(select_channels(sel), SchemaError);
}

TEST_CASE("min-max scaling") {
  GridSpec g = GridSpec::scaled(1, 1);
  FeatureTable train{g, 1, RowMatrix(2, 1)};
  train.values << -100, -40;
  const auto p = fit_minmax(train);
  FeatureTable x{g, 1, RowMatrix(4, 1)};
  x.values << -70, -100, -40, -10;
  const auto s = apply_minmax(p, x);
  CHECK(s.values(0, 0) == doctest::Approx(0.5));
  CHECK(s.values(1, 0) == 0.0);
  CHECK(s.values(2, 0) == 1.0);
  CHECK(s.values(3, 0) == doctest::Approx(1.5));  // no clipping

  FeatureTable c{g, 1, RowMatrix(3, 1)};
  c.values << 2, 2, 2;
  const auto sc = apply_minmax(fit_minmax(c), c);
  CHECK(sc.values.isZero());
}

TEST_CASE("training values land in the unit interval") {
  const auto t = random_table(GridSpec::scaled(4, 3), 4, 30, 2);
  const auto s = apply_minmax(fit_minmax(t), t);
  CHECK(s.values.minCoeff() >= 0.0);
  CHECK(s.values.maxCoeff() <= 1.0);
}

TEST_CASE("neighbourhood aggregation") {
  GridSpec g = GridSpec::scaled(5, 5);
  FeatureTable ones{g, 2, RowMatrix::Ones(1, 50)};
  const auto a = aggregate_neighborhood(ones);
  CHECK(a.values(0, node_index(g, {3, 3}) * 2) == 9);
  CHECK(a.values(0, node_index(g, {1, 1}) * 2 + 1) == 4);
  CHECK(a.values(0, node_index(g, {1, 3}) * 2) == 6);

  FeatureTable spike{g, 2, RowMatrix::Zero(1, 50)};
  spike.values(0, node_index(g, {2, 2}) * 2 + 1) = 1;
  const auto s = aggregate_neighborhood(spike);
  for (auto id : all_nodes(g)) {
    const bool near = std::abs(id.strip - 2) <= 1 && std::abs(id.node - 2) <= 1;
    CHECK(s.values(0, node_index(g, id) * 2 + 1) == (near ? 1.0 : 0.0));
    CHECK(s.values(0, node_index(g, id) * 2) == 0.0);
  }
}

TEST_CASE("aggregation is linear") {
  const auto t = random_table(GridSpec::scaled(4, 6), 4, 3, 7);
  FeatureTable scaled = t;
  scaled.values *= 2.5;
  const auto a = aggregate_neighborhood(t);
  const auto b = aggregate_neighborhood(scaled);
  CHECK((b.values - 2.5 * a.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("z-normalisation per channel") {
  const auto t = random_table(GridSpec::scaled(3, 4), 4, 40, 3);
  const auto p = fit_znorm(t);
  REQUIRE(p.means.size() == 4);
  const auto z = apply_znorm(p, t);
  for (int c = 0; c < 4; ++c) {
    double sum = 0, sq = 0, n = 0;
    for (Eigen::Index r = 0; r < z.values.rows(); ++r) {
      for (int node = 0; node < 12; ++node) {
        const double v = z.values(r, node * 4 + c);
        sum += v;
        sq += v * v;
        n += 1;
      }
    }
    CHECK(std::abs(sum / n) < 1e-9);
    CHECK(std::abs(sq / n - 1.0) < 1e-6);
  }
  FeatureTable x = t;
  x.values(0, 1) = p.means[1] + p.sds[1];
  CHECK(apply_znorm(p, x).values(0, 1) == doctest::Approx(1.0));

  FeatureTable c{GridSpec::scaled(1, 1), 1, RowMatrix::Constant(5, 1, 3.0)};
  CHECK(apply_znorm(fit_znorm(c), c).values.isZero());
  FeatureTable single{GridSpec::scaled(1, 1), 1, RowMatrix::Constant(1, 1, 3.0)};
  CHECK_THROWS_AS(fit_znorm(single), Error);
}

TEST_CASE("grid tensor packing") {
  GridSpec g;
  const auto t = random_table(g, 4, 2, 4);
  const auto tensor = to_grid_tensor(t, 1);
  CHECK(tensor.shape() == std::vector<int>{23, 15, 4});
  CHECK(tensor.at(2, 6, 3) == t.values(1, node_index(g, {3, 7}) * 4 + 3));
  CHECK(from_grid_tensor(tensor, g) == t.values.row(1));
  nn::Tensor wrong({23, 14, 4});
  CHECK_THROWS_AS(from_grid_tensor(wrong, g), ShapeError);
}

TEST_CASE("parameter sidecar round trip") {
  const auto t = random_table(GridSpec::scaled(2, 2), 4, 5, 5);
  PrepParams p{fit_minmax(t), fit_znorm(t)};
  auto path = std::filesystem::temp_directory_path() / "gridfloor_tests" / "prep.json";
  write_params(p, path);
  const auto q = read_params(path);
  CHECK(q.minmax.mins == p.minmax.mins);
  CHECK(q.minmax.maxs == p.minmax.maxs);
  CHECK(q.znorm.means == p.znorm.means);
  CHECK(q.znorm.sds == p.znorm.sds);
}

}
