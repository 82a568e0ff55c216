#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gridfloor/error.hpp"
#include "gridfloor/floorsim.hpp"
#include "gridfloor/ingest.hpp"
#include "gridfloor/io.hpp"
#include "gridfloor/rng.hpp"
#include "oracles.hpp"

using namespace gridfloor;
using namespace gridfloor::ingest;
using namespace gridfloor::oracle;

namespace {

BufferBatch batch(double t, std::size_t n, double tag = 0) {
  BufferBatch b{{1, 1}, t, {}};
  for (std::size_t j = 0; j < n; ++j) b.samples.push_back(filled(tag + static_cast<double>(j)));
  return b;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gridfloor_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("topic parsing") {
  CHECK(parse_topic("/imu_reader/3/7") == NodeId{3, 7});
  CHECK_THROWS_AS(parse_topic("/imu/3/7"), ParseError);
  CHECK_THROWS_AS(parse_topic("/imu_reader/3"), ParseError);
  CHECK_THROWS_AS(parse_topic("/imu_reader/a/7"), ParseError);
}

TEST_CASE("payload log parsing") {
  GridSpec g = GridSpec::scaled(3, 2);
  std::vector<std::string> none;
  CHECK(parse_payload_log(none, g).empty());

  std::vector<std::string> lines = {
      R"({"topic":"/imu_reader/1/2","t":8.0,"samples":[[1,2,3,4,5,6,7,8,9,10]]})",
      R"({"topic":"/imu_reader/1/2","t":4.0,"samples":[[0,0,0,0,0,0,0,0,0,1],[0,0,0,0,0,0,0,0,0,2]]})",
      R"({"topic":"/imu_reader/2/1","t":5.0,"samples":[]})",
  };
  const auto map = parse_payload_log(lines, g);
  REQUIRE(map.size() == 2);
  const auto& b = map.at({1, 2});
  REQUIRE(b.size() == 2);
  CHECK(b[0].t == 4.0);
  CHECK(b[1].t == 8.0);
  CHECK(b[0].samples.size() == 2);
  CHECK(b[1].samples[0].values[9] == 10);

  std::vector<std::string> bad = {lines[0], "{not json"};
  try {
    parse_payload_log(bad, g);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::vector<std::string> short_sample = {R"({"topic":"/imu_reader/1/1","t":1,"samples":[[1,2,3]]})"};
  CHECK_THROWS_AS(parse_payload_log(short_sample, g), ParseError);
  std::vector<std::string> unknown = {R"({"topic":"/imu_reader/9/1","t":1,"samples":[]})"};
  CHECK_THROWS_AS(parse_payload_log(unknown, g), InvalidNodeError);
}

TEST_CASE("ground truth parsing") {
  std::vector<std::string> lines = {R"({"t":0.0,"pos_mm":[1000,2000,5],"rot_rad":[0,0,1]})",
                                    R"({"t":0.005,"pos_mm":[1001,2000,5],"rot_rad":[0,0,1]})"};
  const auto gt = parse_ground_truth_log(lines);
  REQUIRE(gt.size() == 2);
  CHECK(gt[1].pos_mm[0] == 1001);
  std::swap(lines[0], lines[1]);
  CHECK_THROWS_AS(parse_ground_truth_log(lines), OrderingError);
}

TEST_CASE("interpolation between polls") {
  std::vector<BufferBatch> b = {batch(4, 10), batch(8, 10)};
  const auto s = interpolate_timestamps(b, 4.0);
  REQUIRE(s.items.size() == 20);
  for (int j = 0; j < 10; ++j) {
    CHECK(s.items[10 + j].t == doctest::Approx(4.0 + 0.4 * (j + 1)));
  }
  CHECK(s.items.back().t == 8.0);
}

TEST_CASE("first batch reaches back one round trip") {
  std::vector<BufferBatch> b = {batch(4, 8)};
  const auto s = interpolate_timestamps(b, 4.0);
  REQUIRE(s.items.size() == 8);
  for (int j = 0; j < 8; ++j) CHECK(s.items[j].t == doctest::Approx(0.5 * (j + 1)));
  CHECK(s.items.back().t == 4.0);
}

TEST_CASE("single-sample batch lands on its poll time") {
  std::vector<BufferBatch> b = {batch(4, 3), batch(7.3, 1)};
  const auto s = interpolate_timestamps(b, 4.0);
  CHECK(s.items.back().t == 7.3);
}

TEST_CASE("empty batches are skipped and counted") {
  std::vector<BufferBatch> b = {batch(4, 2), batch(8, 0), batch(12, 4)};
  const auto s = interpolate_timestamps(b, 4.0);
  CHECK(s.items.size() == 6);
  CHECK(s.skipped_empty == 1);
  CHECK(s.items[2].t == doctest::Approx(9.0));
}

TEST_CASE("non-increasing poll times are rejected") {
  std::vector<BufferBatch> b = {batch(4, 2), batch(4, 2)};
  CHECK_THROWS_AS(interpolate_timestamps(b, 4.0), OrderingError);
}

TEST_CASE("interpolation invariants on random batches") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BufferBatch> b;
    double t = rng.uniform(1, 5);
    std::size_t total = 0;
    for (int i = 0; i < 12; ++i) {
      const auto n = 1 + rng.below(15);
      b.push_back(batch(t, n));
      total += n;
      t += rng.uniform(0.5, 6);
    }
    const auto s = interpolate_timestamps(b, 4.0);
    REQUIRE(s.items.size() == total);
    std::size_t at = 0;
    for (const auto& bb : b) {
      at += bb.samples.size();
      CHECK(s.items[at - 1].t == bb.t);  // exact anchor
    }
    for (std::size_t i = 1; i < s.items.size(); ++i) CHECK(s.items[i].t > s.items[i - 1].t);
  }
}

TEST_CASE("nearest match and its tie-break") {
  std::vector<double> a = {0.9, 1.2};
  CHECK(nearest_index(a, 1.0) == 0);
  std::vector<double> b = {0.5, 0.75, 1.0};
  CHECK(nearest_index(b, 0.875) == 1);  // exact tie in binary: earlier wins
  CHECK(nearest_index(b, -3) == 0);
  CHECK(nearest_index(b, 9) == 2);
}

TEST_CASE("merge equals a brute-force nearest scan") {
  Rng rng(5);
  std::vector<GroundTruthSample> gt;
  std::vector<double> gt_t;
  double t = 0;
  for (int i = 0; i < 400; ++i) {
    t += rng.uniform(0.001, 0.2);
    if (i % 37 == 0) t = std::round(t * 8) / 8 + 0.125;  // some dyadic times for exact ties
    gt.push_back({t, {rng.uniform(0, 30000), rng.uniform(0, 15000), 10}, {0, 0, 0}});
    gt_t.push_back(t);
  }
  InterpolatedSeries s{{1, 1}, {}, 0};
  for (int i = 0; i < 1000; ++i) {
    double q = rng.uniform(-1, t + 1);
    if (i % 10 == 0) q = std::round(q * 16) / 16;
    s.items.push_back({filled(i), q});
  }
  const auto merged = merge_with_ground_truth(s, gt);
  REQUIRE(merged.items.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto j = brute_nearest(gt_t, s.items[i].t);
    CHECK(merged.items[i].label.x == gt[j].pos_mm[0] / 1000.0);
    CHECK(merged.items[i].label.y == gt[j].pos_mm[1] / 1000.0);
    CHECK(merged.items[i].t == s.items[i].t);
    CHECK(merged.items[i].m == s.items[i].m);
  }
  CHECK_THROWS_AS(merge_with_ground_truth(s, {}), MergeError);
}

TEST_CASE("frame assembly equals exhaustive construction on a 3x2 grid") {
  GridSpec g = GridSpec::scaled(3, 2);
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<NodeId, MergedSeries> nodes;
    for (auto id : all_nodes(g)) {
      nodes[id] = random_series(id, rng, 3 + rng.below(12), rng.uniform(0, 3));
    }
    const auto ds = generate_frames(g, nodes);
    const auto oracle = exhaustive_frames(g, nodes);
    CHECK(ds == oracle);
    for (const auto& f : ds.frames) CHECK(f.nodes.size() == 6);
  }
}

TEST_CASE("frame count follows the shortest series") {
  GridSpec g = GridSpec::scaled(3, 1);
  std::map<NodeId, MergedSeries> nodes;
  const std::size_t lens[] = {5, 7, 9};
  for (int s = 1; s <= 3; ++s) {
    MergedSeries m{{s, 1}, {}};
    // Wide identical spans: nothing is trimmed.
    const auto n = lens[s - 1];
    for (std::size_t i = 0; i < n; ++i) {
      m.items.push_back({filled(s), {1, 1}, 10.0 * static_cast<double>(i) / static_cast<double>(n - 1)});
    }
    nodes[{s, 1}] = m;
  }
  const auto ds = generate_frames(g, nodes);
  CHECK(ds.frames.size() == 5);
  for (const auto& f : ds.frames) {
    CHECK(f.label.x == 1.0);
    CHECK(f.label.y == 1.0);
  }
}

TEST_CASE("frame assembly is invariant to node insertion order") {
  GridSpec g = GridSpec::scaled(3, 2);
  Rng rng(4);
  std::vector<MergedSeries> series;
  for (auto id : all_nodes(g)) series.push_back(random_series(id, rng, 8, 0));
  std::map<NodeId, MergedSeries> a, b;
  for (const auto& s : series) a[s.node] = s;
  for (auto it = series.rbegin(); it != series.rend(); ++it) b[it->node] = *it;
  CHECK(generate_frames(g, a) == generate_frames(g, b));
}

TEST_CASE("missing nodes are listed") {
  GridSpec g = GridSpec::scaled(3, 2);
  Rng rng(1);
  std::map<NodeId, MergedSeries> nodes;
  for (auto id : all_nodes(g)) {
    if (id != NodeId{2, 2}) nodes[id] = random_series(id, rng, 4, 0);
  }
  try {
    generate_frames(g, nodes);
    FAIL("expected an incomplete grid error");
  } catch (const IncompleteGridError& e) {
    CHECK(std::string(e.what()).find("(2,2)") != std::string::npos);
  }
}

TEST_CASE("dataset file round trip and schema") {
  GridSpec g;
  CHECK(dataset_header(g).size() == 3 + 3450);
  CHECK(dataset_header(g)[3] == "f_1_1_0");
  CHECK(dataset_header(g).back() == "f_23_15_9");

  GridSpec small = GridSpec::scaled(3, 2);
  Rng rng(8);
  FrameDataset ds{small, {}};
  for (int i = 0; i < 5; ++i) {
    Frame f{0.1 * i + 1.0 / 3.0, {rng.uniform(0, 4), rng.normal()}, {}};
    for (int n = 0; n < 6; ++n) {
      Measurement m;
      for (auto& v : m.values) v = rng.normal() * 1e3;
      f.nodes.push_back(m);
    }
    ds.frames.push_back(f);
  }
  const auto path = temp_path("roundtrip.csv");
  write_dataset(ds, path);
  CHECK(read_dataset(path) == ds);

  auto text = io::read_file(path);
  text += "1,2,3\n";
  io::write_file_atomic(path, text);
  CHECK_THROWS_AS(read_dataset(path), SchemaError);
}

TEST_CASE("simulated run ingests to 3450-wide frames") {
  sim::SimConfig cfg;
  cfg.rng_seed = 2;
  cfg.duration = 40;
  const auto plan = sim::plan_random_run(cfg.grid, 3, 4);
  const auto log = sim::simulate(cfg, {plan}, sim::SignalModel{});
  auto lines = [](const std::string& text) {
    std::vector<std::string> out;
    for (auto l : io::split(text, '\n')) {
      if (!l.empty()) out.emplace_back(l);
    }
    return out;
  };
  const auto ds = build_dataset(cfg.grid, lines(sim::payload_log_text(log)),
                                lines(sim::ground_truth_log_text(log)), cfg.poll_rtt);
  CHECK(ds.feature_width() == 3450);
  CHECK(ds.frames.size() > 50);
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    CHECK(ds.frames[i].nodes.size() == 345);
    if (i > 0) CHECK(ds.frames[i].t > ds.frames[i - 1].t);
    // Labels are averaged over about one sample period, so they stay close to the plan.
    const auto p = sim::robot_position(plan, ds.frames[i].t);
    CHECK(std::hypot(p.x - ds.frames[i].label.x, p.y - ds.frames[i].label.y) < 1.0);
  }
}

}
