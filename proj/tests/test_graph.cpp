#include <gtest/gtest.h>

#include <queue>
#include <sstream>

#include "nsi/graph.hpp"

using namespace nsi;

namespace {

std::vector<Unit> nb(const NetworkGraph& g, Unit n) {
  const auto s = g.neighbors(n);
  return {s.begin(), s.end()};
}

// Dense adjacency, built independently of NetworkGraph's own storage.
std::vector<std::vector<char>> dense(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (const auto& [i, j] : edges) adj[i][j] = adj[j][i] = 1;
  return adj;
}

// First-fit over ascending indices on a dense matrix.
int reference_greedy(const std::vector<std::vector<char>>& adj, std::vector<int>& color) {
  const std::size_t n = adj.size();
  color.assign(n, -1);
  int used = 0;
  for (std::size_t v = 0; v < n; ++v) {
    for (int c = 0;; ++c) {
      bool ok = true;
      for (std::size_t u = 0; u < v; ++u)
        if (u != v && adj[v][u] && color[u] == c) ok = false;
      if (ok) {
        color[v] = c;
        used = std::max(used, c + 1);
        break;
      }
    }
  }
  return used;
}

std::vector<std::size_t> bfs(const NetworkGraph& g, Unit s) {
  std::vector<std::size_t> dist(g.size(), SIZE_MAX);
  std::queue<Unit> q;
  dist[s] = 0;
  q.push(s);
  while (!q.empty()) {
    const Unit u = q.front();
    q.pop();
    for (Unit v : g.neighbors(u))
      if (dist[v] == SIZE_MAX) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

}  // namespace

TEST(Graph, RingNeighborsAreSortedAndIncludeSelf) {
  const NetworkGraph g = make_ring(6);
  EXPECT_EQ(nb(g, 0), (std::vector<Unit>{0, 1, 5}));
  EXPECT_EQ(nb(g, 3), (std::vector<Unit>{2, 3, 4}));
  EXPECT_EQ(g.degree(0), 2u);
}

TEST(Graph, IsolatedNodeHasOnlyItself) {
  const NetworkGraph g(3, {{0, 1}});
  EXPECT_EQ(nb(g, 2), (std::vector<Unit>{2}));
}

TEST(Graph, CompleteGraphNeighbors) {
  const NetworkGraph g = make_complete(4);
  for (Unit n = 0; n < 4; ++n) EXPECT_EQ(nb(g, n), (std::vector<Unit>{0, 1, 2, 3}));
}

TEST(Graph, OutOfRangeIsInputError) {
  const NetworkGraph g = make_ring(6);
  EXPECT_THROW(g.neighbors(6), InputError);
  EXPECT_THROW(NetworkGraph(3, {{0, 3}}), InputError);
  EXPECT_THROW(NetworkGraph(0, {}), InputError);
}

TEST(Graph, EdgesAreSymmetrizedAndDeduplicated) {
  const NetworkGraph g(4, {{0, 1}, {1, 0}, {0, 1}, {2, 2}});
  EXPECT_TRUE(g.has_edge(1, 0));
  EXPECT_EQ(g.edges(), (std::vector<Edge>{{0, 1}}));
  for (Unit n = 0; n < 4; ++n) EXPECT_TRUE(g.has_edge(n, n));
}

TEST(Graph, TwoHopOfPathAddsEndpoints) {
  const NetworkGraph g2 = two_hop(make_path(3));
  EXPECT_TRUE(g2.has_edge(0, 2));
  EXPECT_EQ(g2.edges().size(), 3u);
}

TEST(Graph, TwoHopOfCompleteIsUnchanged) {
  const NetworkGraph k4 = make_complete(4);
  EXPECT_EQ(two_hop(k4), k4);
}

TEST(Graph, TwoHopOfRingIsCirculant12) {
  const NetworkGraph g2 = two_hop(make_ring(6));
  EXPECT_EQ(nb(g2, 0), (std::vector<Unit>{0, 1, 2, 4, 5}));
  EXPECT_EQ(g2, make_regular_graph(RegularKind::circulant, 6, 4));
}

TEST(Graph, TwoHopIsMonotoneAndIdempotentOnDiameterTwo) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const NetworkGraph g = make_random_bounded_degree(15, 4, 0.3, seed);
    const NetworkGraph g2 = two_hop(g);
    for (const auto& [i, j] : g.edges()) EXPECT_TRUE(g2.has_edge(i, j));
  }
  const NetworkGraph star = make_star(7);  // diameter 2
  EXPECT_EQ(two_hop(two_hop(star)), two_hop(star));
  EXPECT_EQ(two_hop(star), make_complete(7));
}

TEST(Graph, GreedyColorSingleNodeAndClique) {
  EXPECT_EQ(greedy_color(NetworkGraph(1, {})).num_colors, 1);
  for (std::size_t d = 1; d <= 6; ++d) EXPECT_EQ(greedy_color(make_complete(d + 1)).num_colors, static_cast<int>(d + 1));
}

TEST(Graph, GreedyColorMatchesReferenceOnTwoHopRing7) {
  const NetworkGraph g2 = two_hop(make_ring(7));
  std::vector<int> ref;
  const int expected = reference_greedy(dense(7, g2.edges()), ref);
  const Coloring c = greedy_color(g2);
  EXPECT_EQ(c.num_colors, expected);
  EXPECT_EQ(c.assignment, ref);
}

TEST(Graph, GreedyColorPropertiesOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t n = 5 + seed % 30;
    const NetworkGraph g = make_random_bounded_degree(n, 1 + seed % 6, 0.4, seed);
    const Coloring c = greedy_color(g);
    EXPECT_TRUE(is_proper(g, c));
    EXPECT_LE(static_cast<std::size_t>(c.num_colors), g.max_degree() + 1);
    std::vector<int> ref;
    EXPECT_EQ(c.num_colors, reference_greedy(dense(n, g.edges()), ref));
    EXPECT_EQ(c.assignment, ref);
  }
}

TEST(Graph, TwoHopColorsAreAtLeastThreeHopsApart) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const NetworkGraph g = make_random_bounded_degree(40, 4, 0.15, seed);
    const Coloring c = greedy_color(two_hop(g));
    for (Unit i = 0; i < g.size(); ++i) {
      const auto dist = bfs(g, i);
      for (Unit j = i + 1; j < g.size(); ++j)
        if (c.assignment[i] == c.assignment[j]) EXPECT_GE(dist[j], 3u) << i << " " << j;
    }
  }
}

TEST(Graph, RegularGraphs) {
  const NetworkGraph ring = make_regular_graph(RegularKind::ring, 6, 2);
  EXPECT_EQ(ring.edges().size(), 6u);
  const NetworkGraph c = make_regular_graph(RegularKind::circulant, 10, 4);
  EXPECT_EQ(nb(c, 0), (std::vector<Unit>{0, 1, 2, 8, 9}));
  for (Unit n = 0; n < 10; ++n) EXPECT_EQ(c.degree(n), 4u);
  EXPECT_THROW(make_regular_graph(RegularKind::circulant, 5, 6), InputError);
  EXPECT_THROW(make_regular_graph(RegularKind::circulant, 9, 3), InputError);
  EXPECT_THROW(make_regular_graph(RegularKind::ring, 9, 4), InputError);
}

TEST(Graph, RandomBoundedDegreeRespectsBound) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const NetworkGraph g = make_random_bounded_degree(100, 5, 0.2, seed);
    EXPECT_LE(g.max_degree(), 5u);
    EXPECT_EQ(g, make_random_bounded_degree(100, 5, 0.2, seed));
  }
}

TEST(Graph, EdgeListRoundTrip) {
  const NetworkGraph g = make_random_bounded_degree(30, 3, 0.3, 5);
  std::stringstream ss;
  write_edge_list(ss, NetworkGraph(32, g.edges()));
  const NetworkGraph back = read_edge_list(ss);
  EXPECT_EQ(back.size(), 32u);
  EXPECT_EQ(back.edges(), g.edges());
}

TEST(Graph, EdgeListCommentsAndErrors) {
  std::istringstream in("# a comment\n\n0 1\n1 2  # trailing\n");
  const NetworkGraph g = read_edge_list(in);
  EXPECT_EQ(g.size(), 3u);
  EXPECT_TRUE(g.has_edge(2, 1));
  std::istringstream bad("0 1 2\n");
  EXPECT_THROW(read_edge_list(bad), InputError);
  std::istringstream neg("0 -1\n");
  EXPECT_THROW(read_edge_list(neg), InputError);
  std::istringstream small("# units: 2\n0 5\n");
  EXPECT_THROW(read_edge_list(small), InputError);
}
