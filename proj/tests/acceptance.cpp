// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "fieldsync/cli.hpp"
#include "fieldsync/field_sim.hpp"
#include "fieldsync/geo_analytics.hpp"
#include "fieldsync/http_peer.hpp"
#include "fieldsync/persistent_log.hpp"
#include "fieldsync/sync_engine.hpp"
#include "fieldsync/tier_service.hpp"
#include "fieldsync/view_geometry.hpp"
#include "support.hpp"

using namespace fieldsync;
using nlohmann::json;
using testing::LiveService;
using testing::TempDir;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

std::vector<sim::RunResult>& convergence_runs() {
  static std::vector<sim::RunResult> runs;
  return runs;
}

Outcome convergence_suite() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  std::size_t records = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const sim::Scenario s = sim::generate_scenario(seed, {5, 500, 200});
    if (s.devices.size() > 5 || s.ticks > 500) o.fail("scenario " + std::to_string(seed) + " exceeds limits");
    convergence_runs().push_back(sim::run(s));
    const auto& r = convergence_runs().back();
    if (r.report.total_records > 200) o.fail("scenario " + std::to_string(seed) + " exceeds 200 records");
    if (!r.report.converged) o.fail("scenario " + std::to_string(seed) + " did not converge");
    records += r.report.total_records;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs >= 10.0) o.fail("took " + std::to_string(secs) + " s");
  if (o.pass) {
    std::ostringstream d;
    d.precision(2);
    d << std::fixed << "100 scenarios, " << records << " records, " << secs << " s";
    o.detail = d.str();
  }
  return o;
}

Outcome freshness_mapping() {
  Outcome o;
  FreshnessLedger ledger;
  const RecordId r("d", 0), g("d", 1), b("d", 2);
  ledger.raise(r, FreshnessState::kUnsynced);
  ledger.raise(g, FreshnessState::kEdgeCached);
  ledger.raise(b, FreshnessState::kRemote);
  if (classify_freshness(ledger, r) != ColorClass::kRed || to_string(ColorClass::kRed) != "red") o.fail("UNSYNCED");
  if (classify_freshness(ledger, g) != ColorClass::kGreen || to_string(ColorClass::kGreen) != "green") o.fail("EDGE_CACHED");
  if (classify_freshness(ledger, b) != ColorClass::kBlue || to_string(ColorClass::kBlue) != "blue") o.fail("REMOTE");

  std::size_t traces = 0, violations = 0;
  for (const auto& run : convergence_runs()) {
    const auto props = sim::check_trace(run.trace);
    ++traces;
    violations += props.violations.size();
    if (!props.monotonic) o.fail("monotonicity violated: " + props.first()->detail);
  }
  if (traces == 0) o.fail("no traces to check");
  if (o.pass) o.detail = std::to_string(traces) + " traces, " + std::to_string(violations) + " violations";
  return o;
}

std::vector<std::string> contents(const TierStore& s) {
  std::vector<std::string> out;
  for (const auto& r : s.records()) out.push_back(canonical_bytes(r));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Record> as_vector(const TierStore& s) { return {s.records().begin(), s.records().end()}; }

Outcome protocol_algebra() {
  Outcome o;
  std::mt19937_64 rng(1000);
  std::vector<Record> pool;
  for (int d = 0; d < 4; ++d) {
    for (int i = 0; i < 15; ++i) {
      pool.push_back(testing::scorch_record("d" + std::to_string(d), static_cast<std::uint64_t>(i), (d * 15 + i) % 100));
    }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::vector<Record>> parts(3);
    for (auto& p : parts) {
      for (const auto& r : pool) {
        if (rng() % 3 == 0) p.push_back(r);
      }
      std::shuffle(p.begin(), p.end(), rng);
    }
    auto fold = [&](std::initializer_list<int> order) {
      TierStore s(Tier::kCloud, "s");
      for (int i : order) merge(s, parts[static_cast<std::size_t>(i)]);
      return s;
    };
    const TierStore ab = fold({0, 1});
    const TierStore ba = fold({1, 0});
    if (contents(ab) != contents(ba)) o.fail("commutativity, trial " + std::to_string(trial));

    TierStore left = fold({0, 1});
    merge(left, parts[2]);
    TierStore bc = fold({1, 2});
    TierStore right = fold({0});
    merge(right, as_vector(bc));
    if (contents(left) != contents(right)) o.fail("associativity, trial " + std::to_string(trial));

    TierStore again = fold({0});
    merge(again, parts[0]);
    if (contents(again) != contents(fold({0})) || !merge(again, as_vector(again)).empty()) {
      o.fail("idempotence, trial " + std::to_string(trial));
    }

    const SyncCursor cursor{"p", rng() % (left.max_seq() + 1)};
    const Delta d = delta_since(left, cursor);
    if (!delta_since(left, {"p", d.cursor}).records.empty()) o.fail("cursor safety, trial " + std::to_string(trial));
  }
  if (o.pass) o.detail = "1000 permutations";
  return o;
}

std::string post_body(const std::vector<Record>& recs) {
  json arr = json::array();
  for (const auto& r : recs) arr.push_back(record_to_json(r));
  return json{{"records", arr}}.dump();
}

std::string bytes_of(std::span<const Record> recs) {
  std::string out;
  for (const auto& r : recs) out += canonical_bytes(r) + "\n";
  return out;
}

Outcome http_equivalence() {
  Outcome o;
  std::mt19937_64 rng(4242);
  std::vector<Record> universe;
  for (int d = 0; d < 4; ++d) {
    for (int i = 0; i < 12; ++i) {
      universe.push_back(testing::scorch_record("d" + std::to_string(d), static_cast<std::uint64_t>(i), (7 * i + d) % 100,
                                                40.0 + 0.0001 * i, -105.0 + 0.0001 * d, i));
    }
  }
  for (int seq = 0; seq < 100; ++seq) {
    TempDir dir;
    ServiceConfig cfg;
    cfg.tier = Tier::kCloud;
    cfg.data_dir = dir / "data";
    LiveService live(cfg);
    HttpPeer peer(live.url());
    TierStore oracle(Tier::kCloud, "oracle");
    const int batches = 1 + static_cast<int>(rng() % 5);
    for (int b = 0; b < batches; ++b) {
      std::vector<Record> batch;
      for (const auto& r : universe) {
        if (rng() % 5 == 0) batch.push_back(r);
      }
      std::shuffle(batch.begin(), batch.end(), rng);
      peer.push(batch);
      merge(oracle, batch);
      const std::string before = bytes_of(peer.pull(0).records);
      if (before != bytes_of(oracle.records())) o.fail("sequence " + std::to_string(seq) + " diverged");
      const PushAck twice = peer.push(batch);
      if (!twice.accepted_ids.empty() || bytes_of(peer.pull(0).records) != before) {
        o.fail("double POST changed sequence " + std::to_string(seq));
      }
    }
  }
  if (o.pass) o.detail = "100 sequences";
  return o;
}

Outcome crash_recovery() {
  Outcome o;
  std::mt19937_64 rng(50);
  std::vector<Record> first, second;
  for (int i = 0; i < 4; ++i) first.push_back(testing::scorch_record("a", static_cast<std::uint64_t>(i), i * 10));
  for (int i = 0; i < 6; ++i) second.push_back(testing::scorch_record("b", static_cast<std::uint64_t>(i), i * 5));
  std::vector<Record> expected = first;
  expected.insert(expected.end(), second.begin(), second.end());
  std::uint64_t second_bytes = 0;
  for (const auto& r : second) second_bytes += PersistentLog::encode_entry(r).size();

  for (int trial = 0; trial < 50; ++trial) {
    TempDir dir;
    ServiceConfig cfg;
    cfg.tier = Tier::kCloud;
    cfg.data_dir = dir / "data";
    const std::uint64_t offset = rng() % second_bytes;
    bool crashed = false;
    {
      TierService svc(cfg);
      svc.post_records(post_body(first));
      svc.crash_after(offset);
      try {
        svc.post_records(post_body(second));
      } catch (const SimulatedCrash&) {
        crashed = true;
      }
    }
    if (!crashed) o.fail("offset " + std::to_string(offset) + " did not crash");
    TierService restarted(cfg);
    const Delta recovered = restarted.dump();
    if (recovered.records.size() < first.size() ||
        !std::equal(recovered.records.begin(), recovered.records.end(), expected.begin())) {
      o.fail("offset " + std::to_string(offset) + " recovered a non-prefix state");
    }
    restarted.post_records(post_body(second));
    if (restarted.dump().records != expected) o.fail("offset " + std::to_string(offset) + " did not converge");
  }
  if (o.pass) o.detail = "50 offsets";
  return o;
}

Outcome coverage_oracle() {
  Outcome o;
  std::mt19937_64 rng(1);
  geo::GridSpec g;
  g.origin_lat = 45.5;
  g.origin_lon = -122.6;
  g.cell_size_m = 25.0;
  g.rows = 12;
  g.cols = 9;
  g.target_per_cell = 6;
  std::uniform_real_distribution<double> x(-40.0, g.width_m() + 40.0);
  std::uniform_real_distribution<double> y(-40.0, g.height_m() + 40.0);
  std::vector<Record> recs;
  for (int i = 0; i < 1000; ++i) recs.push_back(testing::record_at(g, "d", static_cast<std::uint64_t>(i), x(rng), y(rng)));

  // Brute force: test each record against every cell rectangle.
  std::vector<std::size_t> counts(static_cast<std::size_t>(g.rows * g.cols), 0);
  std::size_t out = 0;
  const double kx = 111320.0 * std::cos(g.origin_lat * std::numbers::pi / 180.0);
  for (const Record& r : recs) {
    const double px = (r.lon() - g.origin_lon) * kx;
    const double py = (r.lat() - g.origin_lat) * 111320.0;
    bool placed = false;
    for (int row = 0; row < g.rows; ++row) {
      for (int col = 0; col < g.cols; ++col) {
        if (!placed && px >= col * g.cell_size_m && px < (col + 1) * g.cell_size_m && py >= row * g.cell_size_m &&
            py < (row + 1) * g.cell_size_m) {
          ++counts[static_cast<std::size_t>(row * g.cols + col)];
          placed = true;
        }
      }
    }
    if (!placed) ++out;
  }
  std::vector<geo::CellIndex> missing;
  std::vector<std::pair<geo::CellIndex, std::size_t>> deficits;
  for (int row = 0; row < g.rows; ++row) {
    for (int col = 0; col < g.cols; ++col) {
      const std::size_t n = counts[static_cast<std::size_t>(row * g.cols + col)];
      if (n == 0) missing.push_back({row, col});
      if (n < static_cast<std::size_t>(g.target_per_cell)) deficits.push_back({{row, col}, g.target_per_cell - n});
    }
  }

  const auto c = geo::coverage(recs, g);
  if (c.counts != counts) o.fail("cell counts differ");
  if (c.out_of_bounds != out) o.fail("out_of_bounds differs");
  if (geo::missing_cells(c) != missing) o.fail("missing cells differ");
  const auto under = geo::under_sampled_cells(c, g);
  if (under.size() != deficits.size()) {
    o.fail("under-sampled cell count differs");
  } else {
    for (std::size_t i = 0; i < under.size(); ++i) {
      if (under[i].cell != deficits[i].first || under[i].deficit != deficits[i].second) o.fail("deficit differs");
    }
  }
  if (o.pass) {
    o.detail = "1000 records, " + std::to_string(out) + " out of bounds, " + std::to_string(missing.size()) +
               " missing, " + std::to_string(deficits.size()) + " under-sampled";
  }
  return o;
}

Outcome anomaly_determinism() {
  Outcome o;
  static const Schema schema = parse_schema(
      R"({"schema_id":"r","version":1,"fields":[{"name":"reading","kind":"numeric","required":true}]})");
  geo::GridSpec g;
  g.origin_lat = 40.0;
  g.origin_lon = -105.0;
  g.cell_size_m = 10.0;
  g.rows = 9;
  g.cols = 9;

  auto reading = [&](std::uint64_t n, double x, double y, double v) {
    const GeoPoint p = geo::local_unproject({x, y}, g);
    RecordDraft d;
    d.id = RecordId("s", n);
    d.schema_id = "r";
    d.lat = p.lat;
    d.lon = p.lon;
    d.values["reading"] = v;
    return validate_record(schema, d);
  };

  // The worked neighbourhood.
  std::vector<Record> example;
  const double vals[] = {10, 11, 9, 10, 95};
  for (std::uint64_t i = 0; i < 5; ++i) example.push_back(reading(i, 15, 15, vals[i]));
  const auto ex = geo::detect_anomalies(example, g, schema, {"reading", 3.0});
  if (ex.size() != 1 || ex[0].id != example[4].id() || std::abs(ex[0].robust_z - 57.3) > 0.05) {
    o.fail("worked example");
  }

  // Nine isolated neighbourhoods (centre cells three apart), one planted
  // outlier each among evenly spaced background values.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> base(-50.0, 50.0);
  std::uniform_real_distribution<double> jump(20.0, 200.0);
  std::vector<Record> recs;
  std::vector<RecordId> planted;
  std::uint64_t n = 0;
  for (int cr = 1; cr < 9; cr += 3) {
    for (int cc = 1; cc < 9; cc += 3) {
      const double level = base(rng);
      std::vector<double> spread;
      for (int k = -4; k <= 4; ++k) spread.push_back(level + 0.25 * k);
      std::shuffle(spread.begin(), spread.end(), rng);
      for (double v : spread) {
        recs.push_back(reading(n++, (cc + (rng() % 3) - 1.0) * 10 + 5, (cr + (rng() % 3) - 1.0) * 10 + 5, v));
      }
      planted.push_back(RecordId("s", n));
      recs.push_back(reading(n++, cc * 10 + 5, cr * 10 + 5, level + (rng() % 2 ? 1 : -1) * jump(rng)));
    }
  }
  auto flagged = [&](double scale) {
    std::vector<Record> scaled;
    for (const auto& r : recs) {
      RecordDraft d;
      d.id = r.id();
      d.schema_id = "r";
      d.lat = r.lat();
      d.lon = r.lon();
      d.values["reading"] = *r.numeric("reading") * scale;
      scaled.push_back(validate_record(schema, d));
    }
    std::vector<RecordId> ids;
    for (const auto& a : geo::detect_anomalies(scaled, g, schema, {"reading", 3.0})) ids.push_back(a.id);
    return ids;
  };
  const auto base_ids = flagged(1.0);
  if (base_ids != planted) o.fail("flagged " + std::to_string(base_ids.size()) + " ids, planted 9");
  std::uniform_real_distribution<double> log_scale(-6.0, 6.0);
  for (int i = 0; i < 100; ++i) {
    const double c = std::exp(log_scale(rng));
    if (flagged(c) != base_ids) o.fail("scale " + std::to_string(c) + " changed the flags");
  }
  if (o.pass) {
    std::ostringstream d;
    d.precision(3);
    d << std::fixed << "z " << ex[0].robust_z << ", 9 planted, 100 scalings";
    o.detail = d.str();
  }
  return o;
}

Outcome wedge_geometry() {
  Outcome o;
  using namespace fieldsync::view;
  const Viewport square{100, 100};
  const auto worked = std::get<WedgeGeom>(wedge({150, 50}, square));
  const Vec2 up = worked.base_left.y < worked.base_right.y ? worked.base_left : worked.base_right;
  const Vec2 down = worked.base_left.y < worked.base_right.y ? worked.base_right : worked.base_left;
  if (std::abs(up.x - 91.79) > 0.01 || std::abs(up.y - 35.45) > 0.01 || std::abs(down.x - 91.79) > 0.01 ||
      std::abs(down.y - 64.55) > 0.01) {
    o.fail("worked example");
  }

  std::mt19937_64 rng(10000);
  std::uniform_real_distribution<double> size(20.0, 1000.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int done = 0;
  double worst_leg = 0.0;
  while (done < 10000) {
    const Viewport vp{size(rng), size(rng)};
    const double reach = 10.0 * std::max(vp.width, vp.height);
    const Vec2 t{-reach + unit(rng) * (vp.width + 2 * reach), -reach + unit(rng) * (vp.height + 2 * reach)};
    const double dx = std::max({0.0, -t.x, t.x - vp.width});
    const double dy = std::max({0.0, -t.y, t.y - vp.height});
    if (vp.contains(t) || std::hypot(dx, dy) > reach) continue;
    const auto g = std::get<WedgeGeom>(wedge(t, vp));
    if (!(g.apex == t)) o.fail("apex moved");
    const double l1 = std::hypot(g.base_left.x - t.x, g.base_left.y - t.y);
    const double l2 = std::hypot(g.base_right.x - t.x, g.base_right.y - t.y);
    worst_leg = std::max({worst_leg, std::abs(l1 - g.leg_length), std::abs(l2 - g.leg_length)});
    if (!vp.strictly_contains(g.base_left) || !vp.strictly_contains(g.base_right)) o.fail("base vertex outside");
    ++done;
  }
  if (worst_leg > 1e-9) o.fail("leg mismatch " + std::to_string(worst_leg));
  if (o.pass) {
    std::ostringstream d;
    d << "10000 targets, worst leg error " << worst_leg;
    o.detail = d.str();
  }
  return o;
}

Outcome colormap() {
  Outcome o;
  using namespace fieldsync::view;
  const Colormap map;
  if (!(map.at(0.0) == map.low) || !(map.at(1.0) == map.high)) o.fail("endpoints");
  const Colormap custom{{0.1, 0.2, 0.3}, {0.9, 0.8, 0.7}};
  if (!(custom.at(0.0) == custom.low) || !(custom.at(1.0) == custom.high)) o.fail("custom endpoints");
  const Lab lo = srgb_to_lab(map.low);
  const Lab hi = srgb_to_lab(map.high);
  const Lab mid = map.lab_at(0.5);
  const double asym = std::abs(delta_e(lo, mid) - delta_e(mid, hi));
  if (asym > 1e-9) o.fail("midpoint asymmetry " + std::to_string(asym));

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Rgb c{u(rng), u(rng), u(rng)};
    const Rgb back = lab_to_srgb(srgb_to_lab(c)).rgb;
    worst = std::max({worst, std::abs(back.r - c.r), std::abs(back.g - c.g), std::abs(back.b - c.b)});
  }
  if (worst >= 1e-6) o.fail("round trip error " + std::to_string(worst));
  if (o.pass) {
    std::ostringstream d;
    d << "midpoint asymmetry " << asym << ", round trip max " << worst;
    o.detail = d.str();
  }
  return o;
}

Outcome cli_end_to_end() {
  Outcome o;
  TempDir dir;
  auto run = [](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return std::make_pair(code, out.str());
  };
  const auto sim = run({"simulate", "scorch-demo", "--dump-dir", (dir / "dump").string()});
  if (sim.first != 0 || sim.second.rfind("converged: true\n", 0) != 0) o.fail("scorch-demo did not converge");
  const std::string cfg = (dir / "dump" / "teamB-tablet2" / "config.json").string();
  for (const char* report : {"status", "coverage", "missing"}) {
    const auto golden = read_file(std::filesystem::path(FIELDSYNC_TEST_GOLDEN_DIR) /
                                  (std::string("scorch-demo-") + report + ".txt"));
    if (!golden) {
      o.fail(std::string("golden ") + report + " missing");
      continue;
    }
    if (run({"--config", cfg, report}).second != *golden) o.fail(std::string(report) + " differs from golden");
  }
  if (o.pass) o.detail = "converged, 3 goldens match";
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"convergence suite", convergence_suite},
      {"freshness mapping", freshness_mapping},
      {"protocol algebra", protocol_algebra},
      {"HTTP equivalence", http_equivalence},
      {"crash recovery", crash_recovery},
      {"coverage oracle", coverage_oracle},
      {"anomaly determinism", anomaly_determinism},
      {"wedge geometry", wedge_geometry},
      {"colormap", colormap},
      {"end-to-end CLI", cli_end_to_end},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.fail(std::string("threw: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << o.detail << ")" << std::endl;
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
