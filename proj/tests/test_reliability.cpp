#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "vlroute/reliability.hpp"
#include "vlroute/rng.hpp"

using namespace vlroute;
using namespace vlroute::reliability;

namespace {

LinkProbMap uniform_probs(const ConnectivityGraph& g, double p) { return LinkProbMap(g.links().size(), LinkProb{p}); }

LinkProbMap random_probs(const ConnectivityGraph& g, std::uint64_t seed) {
  RngStream rng(seed);
  LinkProbMap m(g.links().size());
  for (auto& x : m) x.p = rng.uniform(0.05, 0.95);
  return m;
}

}  // namespace

TEST(Formulas, TransmitProbability) {
  EXPECT_EQ(transmit_prob(31), 0.0625);
  EXPECT_EQ(transmit_prob(1), 1.0);
  EXPECT_EQ(transmit_prob(3), 0.5);
  EXPECT_THROW(transmit_prob(0), std::invalid_argument);
}

TEST(Formulas, AccessProbabilityDecreasesWithContenders) {
  for (int cw : {2, 4, 15, 31}) {
    double prev = access_prob(cw, 1);
    EXPECT_EQ(prev, transmit_prob(cw));
    for (int m = 2; m <= 12; ++m) {
      const double cur = access_prob(cw, m);
      EXPECT_LT(cur, prev) << "cw=" << cw << " m=" << m;
      prev = cur;
    }
  }
  // cw = 3: p0 = 1/2, three contenders -> 1/8
  EXPECT_EQ(access_prob(3, 3), 0.125);
  EXPECT_THROW(access_prob(4, 0), std::invalid_argument);
}

TEST(Formulas, LinkSuccess) {
  EXPECT_NEAR(link_success_prob(0.2, 1.0, 0.05).p, 0.76, 1e-15);
  EXPECT_NEAR(link_success_prob(0.2, 0.25, 0.9).p, 0.02, 1e-15);
  EXPECT_EQ(link_success_prob(0.0, 1.0, 0.0).p, 1.0);
  EXPECT_EQ(link_success_prob(1.0, 1.0, 0.0).p, 0.0);
}

TEST(Formulas, BacklogPenaltyEndpoints) {
  EXPECT_EQ(backlog_penalty(0, 100), 1.0);
  EXPECT_EQ(backlog_penalty(100, 100), 0.0);
  EXPECT_EQ(backlog_penalty(25, 100), 0.75);
  EXPECT_THROW(backlog_penalty(101, 100), std::invalid_argument);
  EXPECT_THROW(backlog_penalty(-1, 100), std::invalid_argument);
}

TEST(Routes, ChainHasOneRoute) {
  const auto g = fixtures::chain(4);
  const auto routes = enumerate_forward_routes(g, 0, 3);
  ASSERT_EQ(routes.size(), 1u);
  EXPECT_EQ(routes[0], (Route{0, 1, 2, 3}));
  const auto probs = uniform_probs(g, 0.5);
  EXPECT_EQ(route_reliability(g, routes[0], probs), 0.125);
  EXPECT_EQ(delivery_prob_oracle(g, 0, 3, probs), 0.125);
  EXPECT_EQ(delivery_prob_oracle(g, 2, 3, probs), 0.5);
}

TEST(Routes, ChainTowardTheOtherEnd) {
  const auto g = fixtures::chain(4);
  EXPECT_EQ(delivery_prob_oracle(g, 3, 0, uniform_probs(g, 0.5)), 0.125);
  EXPECT_EQ(enumerate_forward_routes(g, 3, 0).size(), 1u);
  EXPECT_THROW(enumerate_forward_routes(g, 2, 2), std::invalid_argument);
}

TEST(Routes, DiamondUnion) {
  const auto g = fixtures::diamond();
  const auto routes = enumerate_forward_routes(g, 0, 3);
  ASSERT_EQ(routes.size(), 2u);
  EXPECT_EQ(routes[0], (Route{0, 1, 3}));
  EXPECT_EQ(routes[1], (Route{0, 2, 3}));
  EXPECT_EQ(delivery_prob_oracle(g, 0, 3, uniform_probs(g, 0.5)), 0.4375);
}

TEST(Routes, IsolatedNodeHasZeroDelivery) {
  const ConnectivityGraph g({{0, 0}, {1, 0}, {10, 0}}, {1}, 1.5, 4);
  EXPECT_EQ(delivery_prob_oracle(g, 2, 1, uniform_probs(g, 0.9)), 0.0);
  EXPECT_EQ(forward_hop_counts(g, 1)[2], kInfiniteHops);
}

TEST(Routes, RouteReliabilityRejectsNonLinks) {
  const auto g = fixtures::diamond();
  const Route bad{1, 2};
  EXPECT_THROW(route_reliability(g, bad, uniform_probs(g, 0.5)), std::invalid_argument);
  const Route single{2};
  EXPECT_EQ(route_reliability(g, single, uniform_probs(g, 0.5)), 1.0);
}

TEST(Routes, MatchesExhaustiveEnumeratorOnSmallFixtures) {
  int checked = 0;
  for (const auto& f : fixtures::fixture_fleet()) {
    const auto& g = f.graph;
    if (g.node_count() > 10) continue;
    const auto probs = random_probs(g, g.node_count());
    for (SinkId k : g.sinks()) {
      for (NodeId i = 0; i < g.node_count(); ++i) {
        if (i == k) continue;
        ASSERT_EQ(enumerate_forward_routes(g, i, k), fixtures::all_progress_paths(g, i, k)) << f.name;
        ASSERT_EQ(delivery_prob_oracle(g, i, k, probs), fixtures::exhaustive_delivery_prob(g, i, k, probs))
            << f.name << " " << i << "->" << k;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 30);
}

TEST(Routes, EveryHopMakesProgress) {
  for (const auto& f : fixtures::fixture_fleet()) {
    const auto& g = f.graph;
    if (g.node_count() > 16) continue;
    const SinkId k = g.sinks()[0];
    for (NodeId i = 0; i < g.node_count(); ++i) {
      if (i == k) continue;
      for (const auto& r : enumerate_forward_routes(g, i, k)) {
        EXPECT_EQ(r.front(), i);
        EXPECT_EQ(r.back(), k);
        for (std::size_t h = 1; h < r.size(); ++h) EXPECT_TRUE(makes_progress(g, r[h - 1], r[h], k));
      }
    }
  }
}

TEST(Routes, DeliveryIsMonotoneInLinkProbability) {
  // Raising any single link probability never lowers delivery.
  for (const auto& f : fixtures::fixture_fleet()) {
    const auto& g = f.graph;
    if (g.node_count() > 10) continue;
    auto probs = random_probs(g, 77);
    RngStream rng(f.name.size());
    for (int trial = 0; trial < 5; ++trial) {
      const auto idx = rng.below(g.links().size());
      auto higher = probs;
      higher[idx].p = std::min(1.0, probs[idx].p + 0.2);
      for (NodeId i = 0; i < g.node_count(); ++i) {
        const SinkId k = g.sinks()[0];
        if (i == k) continue;
        EXPECT_GE(delivery_prob_oracle(g, i, k, higher), delivery_prob_oracle(g, i, k, probs) - 1e-15);
      }
    }
  }
}

TEST(HopCounts, ChainAndGrid) {
  const auto c = fixtures::chain(5);
  EXPECT_EQ(forward_hop_counts(c, 4), (std::vector<int>{4, 3, 2, 1, 0}));
  const auto g = build_grid(3, 3, 3.0, 1.5, {8});
  const auto h = forward_hop_counts(g, 8);
  EXPECT_EQ(h[0], 2);  // diagonal steps
  EXPECT_EQ(h[4], 1);
  EXPECT_EQ(h[2], 2);
}

TEST(HopCounts, MatchShortestProgressPath) {
  for (const auto& f : fixtures::fixture_fleet()) {
    const auto& g = f.graph;
    if (g.node_count() > 10) continue;
    for (SinkId k : g.sinks()) {
      const auto h = forward_hop_counts(g, k);
      for (NodeId i = 0; i < g.node_count(); ++i) {
        if (i == k) continue;
        const auto routes = fixtures::all_progress_paths(g, i, k);
        int best = kInfiniteHops;
        for (const auto& r : routes) best = std::min(best, static_cast<int>(r.size()) - 1);
        EXPECT_EQ(h[i], best) << f.name;
      }
    }
  }
}

TEST(RrsOracle, ChainIsProductOfLinks) {
  const auto g = fixtures::chain(4);
  const auto probs = uniform_probs(g, 0.5);
  const auto r = rrs_fixed_point_oracle(g, 3, probs, {}, 100);
  EXPECT_EQ(r[3].score, 1.0);
  EXPECT_EQ(r[3].hops, 0);
  EXPECT_EQ(r[2].score, 0.5);
  EXPECT_EQ(r[1].score, 0.25);
  EXPECT_EQ(r[0].score, 0.125);
  EXPECT_EQ(r[0].hops, 3);
}

TEST(RrsOracle, DiamondTakesBestSingleSector) {
  // Relays sit in different sectors of the source, so only one counts.
  const auto g = fixtures::diamond();
  const auto probs = uniform_probs(g, 0.5);
  const auto r = rrs_fixed_point_oracle(g, 3, probs, {}, 100);
  EXPECT_EQ(r[1].score, 0.5);
  EXPECT_EQ(r[0].score, 0.25);
  EXPECT_LE(r[0].score, delivery_prob_oracle(g, 0, 3, probs));
}

TEST(RrsOracle, SameSectorNeighborsCombine) {
  // Two relays both in sector 0 of the source.
  const ConnectivityGraph g({{0, 0}, {1, 0.3}, {1, -0.3}, {2, 0}}, {3}, 1.1, 4);
  ASSERT_EQ(g.neighbors_in(0, Sector{0}).size(), 2u);
  const auto probs = uniform_probs(g, 0.5);
  const auto r = rrs_fixed_point_oracle(g, 3, probs, {}, 100);
  EXPECT_EQ(r[0].score, 1.0 - 0.75 * 0.75);
}

TEST(RrsOracle, BacklogScalesScore) {
  const auto g = fixtures::chain(3);
  const auto probs = uniform_probs(g, 0.8);
  const std::vector<int> backlog{0, 50, 0};
  const auto r = rrs_fixed_point_oracle(g, 2, probs, backlog, 100);
  EXPECT_DOUBLE_EQ(r[1].score, 0.4);
  EXPECT_DOUBLE_EQ(r[0].score, 0.8 * 0.4);
}

TEST(RrsOracle, ScoresStayInUnitInterval) {
  for (const auto& f : fixtures::fixture_fleet()) {
    const auto probs = contention_link_probs(f.graph, 4);
    for (SinkId k : f.graph.sinks()) {
      for (const auto& e : rrs_fixed_point_oracle(f.graph, k, probs, {}, 100)) {
        EXPECT_GE(e.score, 0.0);
        EXPECT_LE(e.score, 1.0);
        if (e.hops == kInfiniteHops) EXPECT_EQ(e.score, 0.0);
      }
    }
  }
}

TEST(ContentionProbs, UseReceiverSectorSize) {
  auto g = fixtures::diamond();
  const auto probs = contention_link_probs(g, 4);
  const auto li = *g.find_link(0, 1);
  const auto& l = g.link(li);
  const int m = static_cast<int>(g.neighbors_in(1, l.sector_at_to).size());
  EXPECT_EQ(probs[li].p, link_success_prob(l.p_error, access_prob(4, std::max(1, m)), l.p_blockage).p);
}
