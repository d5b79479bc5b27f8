#include <doctest.h>

#include <random>

#include "arterial/segmenter.hpp"
#include "test_helpers.hpp"

using namespace arterial;

namespace {

StateSegment seg(TrajState st, double t0, double t1, double c0, double c1, int count = 2) {
  StateSegment s;
  s.state = st;
  s.t_start = t0;
  s.t_end = t1;
  s.chainage_start = c0;
  s.chainage_end = c1;
  s.point_count = count;
  s.chainage_sum = count * 0.5 * (c0 + c1);
  return s;
}

Journey journey_from_speeds(const std::vector<double>& speeds_mps, double dt = 3.0) {
  Journey j;
  j.journey_id = "J";
  j.link_id = "L";
  double t = 0.0, c = 0.0;
  for (double v : speeds_mps) {
    RawPoint rp{"J", 0, 0, t, v * kMpsToMph, 90.0};
    j.points.push_back({rp, "L", c, 0.0});
    t += dt;
    c += v * dt;
  }
  return j;
}

// Contiguous, chainage-monotone random sequence with alternating states.
std::vector<StateSegment> random_sequence(std::mt19937_64& rng, int max_len = 8) {
  std::uniform_real_distribution<double> dur(0.5, 15.0);
  std::uniform_real_distribution<double> span(0.0, 20.0);
  int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_len));
  std::vector<StateSegment> out;
  double t = 0.0, c = 0.0;
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    int st = static_cast<int>(rng() % 3);
    if (st == prev) st = (st + 1) % 3;
    prev = st;
    double d = dur(rng), m = span(rng);
    out.push_back(seg(static_cast<TrajState>(st), t, t + d, c, c + m));
    t += d;
    c += m;
  }
  return out;
}

// Exhaustive merge-order enumeration for one state's consolidation.
using Seq = std::vector<StateSegment>;

bool seq_equal(const Seq& a, const Seq& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].state != b[i].state || std::fabs(a[i].t_start - b[i].t_start) > 1e-9 ||
        std::fabs(a[i].t_end - b[i].t_end) > 1e-9)
      return false;
  return true;
}

void enumerate_merges(const Seq& segs, TrajState st, const SegmenterConfig& cfg,
                      std::vector<Seq>& terminals) {
  bool any = false;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].state != st) continue;
    std::size_t j = i + 1;
    while (j < segs.size() && segs[j].state != st) ++j;
    if (j >= segs.size()) break;
    double gap_t = segs[j].t_start - segs[i].t_end;
    double gap_m = std::fabs(segs[j].chainage_start - segs[i].chainage_end);
    if (gap_t < cfg.merge_gap_s && gap_m < cfg.merge_gap_m) {
      any = true;
      Seq next(segs.begin(), segs.begin() + static_cast<std::ptrdiff_t>(i));
      StateSegment m = segs[i];
      m.t_end = segs[j].t_end;
      m.chainage_end = segs[j].chainage_end;
      for (std::size_t k = i + 1; k <= j; ++k) {
        m.point_count += segs[k].point_count;
        m.chainage_sum += segs[k].chainage_sum;
      }
      next.push_back(m);
      next.insert(next.end(), segs.begin() + static_cast<std::ptrdiff_t>(j + 1), segs.end());
      enumerate_merges(next, st, cfg, terminals);
    }
  }
  if (!any) terminals.push_back(segs);
}

}  // namespace

TEST_CASE("label_states: speed thresholds") {
  SegmenterConfig cfg;
  SUBCASE("all creeping -> single Stop segment") {
    auto j = journey_from_speeds({0.5, 0.5, 0.5, 0.5});
    auto segs = label_states(j, cfg, 45.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].state == TrajState::Stop);
  }
  SUBCASE("18 m/s with 45 mph limit -> FreeFlow (v_t = 16.1 m/s)") {
    auto j = journey_from_speeds({18.0, 18.0});
    auto segs = label_states(j, cfg, 45.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].state == TrajState::FreeFlow);
  }
  SUBCASE("10 m/s -> Transition") {
    auto j = journey_from_speeds({10.0, 10.0});
    auto segs = label_states(j, cfg, 45.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].state == TrajState::Transition);
  }
}

TEST_CASE("consolidate_states: short interlude absorbed, thresholds are strict") {
  SegmenterConfig cfg;
  SUBCASE("5 s / 4 m interlude between stops is merged") {
    Seq s = {seg(TrajState::Stop, 0, 20, 100, 101), seg(TrajState::Transition, 20, 25, 101, 105),
             seg(TrajState::Stop, 25, 60, 105, 106)};
    auto out = consolidate_states(s, cfg, TrajState::Stop);
    REQUIRE(out.size() == 1);
    CHECK(out[0].state == TrajState::Stop);
    CHECK(out[0].t_start == 0.0);
    CHECK(out[0].t_end == 60.0);
  }
  SUBCASE("12 s interlude stays (>= 9 s)") {
    Seq s = {seg(TrajState::Stop, 0, 20, 100, 101), seg(TrajState::Transition, 20, 32, 101, 105),
             seg(TrajState::Stop, 32, 60, 105, 106)};
    CHECK(consolidate_states(s, cfg, TrajState::Stop).size() == 3);
  }
  SUBCASE("5 s but 15 m interlude stays (distance fails)") {
    Seq s = {seg(TrajState::Stop, 0, 20, 100, 101), seg(TrajState::Transition, 20, 25, 101, 116),
             seg(TrajState::Stop, 25, 60, 116, 117)};
    CHECK(consolidate_states(s, cfg, TrajState::Stop).size() == 3);
  }
}

TEST_CASE("remove_short_states: boundary is strict and relabels merge neighbors") {
  SegmenterConfig cfg;
  SUBCASE("6 s stop becomes transition") {
    Seq s = {seg(TrajState::Transition, 0, 10, 0, 30), seg(TrajState::Stop, 10, 16, 30, 31),
             seg(TrajState::Transition, 16, 30, 31, 60)};
    auto out = remove_short_states(s, cfg, TrajState::Stop);
    REQUIRE(out.size() == 1);
    CHECK(out[0].state == TrajState::Transition);
  }
  SUBCASE("9 s stop is kept") {
    Seq s = {seg(TrajState::Transition, 0, 10, 0, 30), seg(TrajState::Stop, 10, 19, 30, 31)};
    auto out = remove_short_states(s, cfg, TrajState::Stop);
    CHECK(out.size() == 2);
    CHECK(out[1].state == TrajState::Stop);
  }
  SUBCASE("4 s free-flow between transitions collapses") {
    Seq s = {seg(TrajState::Transition, 0, 10, 0, 30), seg(TrajState::FreeFlow, 10, 14, 30, 90),
             seg(TrajState::Transition, 14, 30, 90, 120)};
    auto out = remove_short_states(s, cfg, TrajState::FreeFlow);
    REQUIRE(out.size() == 1);
    CHECK(out[0].state == TrajState::Transition);
  }
}

TEST_CASE("filter pipeline properties on 10000 random sequences") {
  SegmenterConfig cfg;
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 10000; ++trial) {
    auto input = random_sequence(rng);
    auto once = filter_segments(input, cfg);
    auto twice = filter_segments(once, cfg);
    CHECK(seq_equal(once, twice));

    REQUIRE(!once.empty());
    CHECK(once.front().t_start == doctest::Approx(input.front().t_start));
    CHECK(once.back().t_end == doctest::Approx(input.back().t_end));
    CHECK(once.front().chainage_start == doctest::Approx(input.front().chainage_start));
    CHECK(once.back().chainage_end == doctest::Approx(input.back().chainage_end));

    for (std::size_t i = 0; i < once.size(); ++i) {
      if (once[i].state == TrajState::Stop) CHECK(once[i].duration() >= cfg.min_state_s);
      if (i > 0) CHECK(once[i].state != once[i - 1].state);
      if (i > 0) CHECK(once[i].t_start == doctest::Approx(once[i - 1].t_end));
    }
  }
}

TEST_CASE("consolidation is confluent and matches exhaustive merge enumeration") {
  SegmenterConfig cfg;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 400; ++trial) {
    auto input = random_sequence(rng, 6);
    std::vector<Seq> terminals;
    enumerate_merges(input, TrajState::Stop, cfg, terminals);
    REQUIRE(!terminals.empty());
    auto impl = consolidate_states(input, cfg, TrajState::Stop);
    for (const auto& t : terminals) CHECK(seq_equal(t, impl));
  }
}
