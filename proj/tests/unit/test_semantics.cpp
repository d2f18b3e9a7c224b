// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <queue>
#include <random>

#include "test_support.hpp"
#include "wadcmsn/error.hpp"
#include "wadcmsn/semantics/semantic_table.hpp"
#include "wadcmsn/semantics/taxonomy.hpp"

using namespace wadcmsn;
namespace wt = wadcmsn::testing;

namespace {

//          root(0)
//         /       \
//   animal(1)   vehicle(2)
//    /    \        /   \
//  cat(3) dog(4) car(5) bus(6)
// Own counts: cat 3, dog 1, car 2, bus 2, animal 0, vehicle 0, root 0.
Taxonomy fixture() {
  return Taxonomy({{0, "root", std::nullopt, 0},
                   {1, "animal", 0, 0},
                   {2, "vehicle", 0, 0},
                   {3, "cat", 1, 3},
                   {4, "dog", 1, 1},
                   {5, "car", 2, 2},
                   {6, "bus", 2, 2}});
}

// Random tree: node i > 0 hangs under a uniformly chosen earlier node.
Taxonomy random_tree(std::size_t n, std::mt19937_64& rng, std::vector<std::vector<std::size_t>>& adjacency) {
  std::vector<TaxonomyNode> nodes;
  adjacency.assign(n, {});
  nodes.push_back({0, "n0", std::nullopt, 1 + rng() % 5});
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t p = rng() % i;
    nodes.push_back({std::int64_t(i), "n" + std::to_string(i), std::int64_t(p), 1 + rng() % 5});
    adjacency[i].push_back(p);
    adjacency[p].push_back(i);
  }
  // Shuffle declaration order: parents need not precede children in a file.
  std::shuffle(nodes.begin(), nodes.end(), rng);
  return Taxonomy(nodes);
}

std::size_t bfs_hops(const std::vector<std::vector<std::size_t>>& adj, std::size_t a, std::size_t b) {
  std::vector<std::size_t> dist(adj.size(), SIZE_MAX);
  std::queue<std::size_t> q;
  dist[a] = 0;
  q.push(a);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u]) {
      if (dist[v] == SIZE_MAX) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist[b];
}

}  // namespace

TEST_SUITE("semantics") {
  TEST_CASE("path similarity on the fixture") {
    const Taxonomy t = fixture();
    CHECK(path_similarity(t, "cat", "cat") == 1.0);
    CHECK(path_similarity(t, "cat", "dog") == doctest::Approx(1.0 / 3));
    CHECK(path_similarity(t, "cat", "car") == doctest::Approx(1.0 / 5));
    CHECK(path_similarity(t, "cat", "animal") == doctest::Approx(1.0 / 2));
  }

  TEST_CASE("Jiang-Conrath similarity on the fixture") {
    const Taxonomy t = fixture();
    // Effective counts: animal 4, vehicle 4, root 8.
    CHECK(t.effective_count(t.resolve("animal")) == 4);
    CHECK(t.effective_count(t.root()) == 8);
    const double ic_cat = -std::log(3.0 / 8), ic_dog = -std::log(1.0 / 8), ic_car = -std::log(2.0 / 8);
    const double ic_animal = -std::log(4.0 / 8);
    CHECK(jiang_conrath_similarity(t, "cat", "dog") ==
          doctest::Approx(1.0 / (1.0 + ic_cat + ic_dog - 2 * ic_animal)).epsilon(1e-12));
    CHECK(jiang_conrath_similarity(t, "cat", "car") ==
          doctest::Approx(1.0 / (1.0 + ic_cat + ic_car)).epsilon(1e-12));
    CHECK(jiang_conrath_similarity(t, "bus", "bus") == 1.0);
  }

  TEST_CASE("hop counts agree with breadth-first search on random trees") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<std::vector<std::size_t>> adj;
      const std::size_t n = 2 + rng() % 30;
      const Taxonomy t = random_tree(n, rng, adj);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          const std::string na = "n" + std::to_string(a), nb = "n" + std::to_string(b);
          const std::size_t want = bfs_hops(adj, a, b);
          CHECK(t.hops(t.resolve(na), t.resolve(nb)) == want);
          CHECK(path_similarity(t, na, nb) == doctest::Approx(1.0 / (1.0 + double(want))));
        }
      }
    }
  }

  TEST_CASE("both measures are symmetric, in (0, 1] and 1 on the diagonal") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::vector<std::size_t>> adj;
      const std::size_t n = 2 + rng() % 20;
      const Taxonomy t = random_tree(n, rng, adj);
      for (auto m : {HierarchyMeasure::path, HierarchyMeasure::jiang_conrath}) {
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = 0; b < n; ++b) {
            const std::string na = "n" + std::to_string(a), nb = "n" + std::to_string(b);
            const double s = hierarchy_similarity(t, m, na, nb);
            CHECK(s > 0);
            CHECK(s <= 1);
            CHECK(s == hierarchy_similarity(t, m, nb, na));
            if (a == b) CHECK(s == 1);
          }
        }
      }
    }
  }

  TEST_CASE("taxonomy structure errors") {
    using N = TaxonomyNode;
    CHECK_THROWS_AS(Taxonomy({}), ValidationError);
    CHECK_THROWS_AS(Taxonomy({N{0, "a", std::nullopt, 1}, N{1, "b", std::nullopt, 1}}), ValidationError);
    CHECK_THROWS_AS(Taxonomy({N{0, "a", std::nullopt, 1}, N{1, "b", 7, 1}}), ValidationError);
    CHECK_THROWS_AS(Taxonomy({N{0, "a", std::nullopt, 1}, N{0, "b", 0, 1}}), ValidationError);
    CHECK_THROWS_AS(Taxonomy({N{0, "r", std::nullopt, 1}, N{1, "a", 2, 1}, N{2, "b", 1, 1}}), ValidationError);
    const Taxonomy t = fixture();
    CHECK_THROWS_AS(t.resolve("horse"), LookupError);
    CHECK_THROWS_AS(path_similarity(t, "cat", "horse"), LookupError);
    const Taxonomy dup({N{0, "r", std::nullopt, 1}, N{1, "x", 0, 1}, N{2, "x", 0, 1}});
    CHECK_THROWS_AS(dup.resolve("x"), LookupError);
    // A zero-count subtree has no information content.
    const Taxonomy zero({N{0, "r", std::nullopt, 1}, N{1, "a", 0, 0}});
    CHECK_THROWS_AS(jiang_conrath_similarity(zero, "a", "r"), ValidationError);
    CHECK_THROWS_AS(parse_measure("lin"), ConfigError);
  }

  TEST_CASE("taxonomy JSON round trip and parse errors") {
    wt::TempDir dir;
    const Taxonomy t = fixture();
    t.save(dir / "t.json");
    const Taxonomy back = Taxonomy::load(dir / "t.json");
    CHECK(back.nodes() == t.nodes());
    wt::write_text(dir / "nodes.json", R"({"nodes": [{"id": 1, "name": "r", "parent": null, "count": 2}]})");
    CHECK(Taxonomy::load(dir / "nodes.json").size() == 1);
    // Counts are optional and default to zero; id, name and parent are not.
    wt::write_text(dir / "nocount.json", R"([{"id": 1, "name": "r", "parent": null}])");
    CHECK(Taxonomy::load(dir / "nocount.json").nodes()[0].count == 0);
    wt::write_text(dir / "bad.json", R"([{"id": 1, "parent": null}])");
    CHECK_THROWS_AS(Taxonomy::load(dir / "bad.json"), ParseError);
    wt::write_text(dir / "neg.json", R"([{"id": 1, "name": "r", "parent": null, "count": -1}])");
    CHECK_THROWS_AS(Taxonomy::load(dir / "neg.json"), ParseError);
    wt::write_text(dir / "trunc.json", R"([{"id": 1, )");
    CHECK_THROWS_AS(Taxonomy::load(dir / "trunc.json"), ParseError);
    CHECK_THROWS_AS(Taxonomy::load(dir / "missing.json"), ParseError);
  }

  TEST_CASE("class embedding is the text vector followed by similarities to seen classes") {
    const Taxonomy t = fixture();
    const TextEmbeddingTable text({{"cat", {1, 2}}, {"dog", {3, 4}}, {"car", {5, 6}}, {"bus", {7, 8}}});
    const std::vector<std::string> seen{"cat", "dog", "car"};
    const auto e = build_class_embedding("bus", text, t, HierarchyMeasure::path, seen);
    REQUIRE(e.size() == 2 + 3);
    CHECK(e[0] == 7);
    CHECK(e[1] == 8);
    CHECK(e[2] == doctest::Approx(1.0 / 5));
    CHECK(e[3] == doctest::Approx(1.0 / 5));
    CHECK(e[4] == doctest::Approx(1.0 / 3));
    const auto jc = build_class_embedding("bus", text, t, HierarchyMeasure::jiang_conrath, seen);
    CHECK(jc[4] != e[4]);
    CHECK_THROWS_AS(build_class_embedding("horse", text, t, HierarchyMeasure::path, seen), LookupError);
  }

  TEST_CASE("text embedding files: header detection, round trip and errors") {
    wt::TempDir dir;
    const TextEmbeddingTable table({{"a", {1.5, -2}}, {"b", {0.25, 1e-9}}});
    for (bool header : {false, true}) {
      table.save(dir / "e.txt", header);
      const TextEmbeddingTable back = TextEmbeddingTable::load(dir / "e.txt");
      CHECK(back.entries() == table.entries());
      CHECK(back.dim() == 2);
    }
    // A first line of two integers is only a header when its dim fits the rows.
    wt::write_text(dir / "one.txt", "7 3\nx 4\n");
    CHECK(TextEmbeddingTable::load(dir / "one.txt").size() == 2);
    wt::write_text(dir / "hdr.txt", "1 1\nx 4\n");
    CHECK(TextEmbeddingTable::load(dir / "hdr.txt").size() == 1);
    wt::write_text(dir / "ragged.txt", "a 1 2\nb 1\n");
    CHECK_THROWS_AS(TextEmbeddingTable::load(dir / "ragged.txt"), ValidationError);
    wt::write_text(dir / "dup.txt", "a 1\na 2\n");
    CHECK_THROWS_AS(TextEmbeddingTable::load(dir / "dup.txt"), ParseError);
    wt::write_text(dir / "word.txt", "a 1 x\n");
    CHECK_THROWS_AS(TextEmbeddingTable::load(dir / "word.txt"), ParseError);
    wt::write_text(dir / "nan.txt", "a 1 nan\n");
    CHECK_THROWS(TextEmbeddingTable::load(dir / "nan.txt"));
    CHECK_THROWS_AS(table.at("zzz"), LookupError);
  }

  TEST_CASE("combiner reduces its reconstruction loss and records history") {
    std::mt19937_64 rng(33);
    const Matrix x = wt::random_matrix(6, 10, rng);
    CombinerConfig cfg;
    cfg.code_dim = 4;
    cfg.epochs = 400;
    cfg.learning_rate = Real(1e-2);
    const Combiner c = fit_combiner(x, cfg);
    REQUIRE(c.loss_history.size() == 400);
    CHECK(c.loss_history.back() < 0.2 * c.loss_history.front());
    CHECK(c.loss(x) <= c.loss_history.back() * 1.5);
    const Matrix codes = c.encode(x);
    CHECK(codes.rows() == 6);
    CHECK(codes.cols() == 4);
    for (Real v : codes.values()) CHECK(std::abs(v) <= 1);  // tanh codes
    // Same seed, same result.
    CHECK(fit_combiner(x, cfg).encoder == c.encoder);
  }

  TEST_CASE("combiner with zero learning rate keeps its initial weights") {
    std::mt19937_64 rng(34);
    const Matrix x = wt::random_matrix(4, 5, rng);
    CombinerConfig cfg;
    cfg.code_dim = 3;
    cfg.epochs = 10;
    cfg.learning_rate = 0;
    const Combiner c = fit_combiner(x, cfg);
    CHECK(c.encoder == initial_combiner(5, cfg).encoder);
    CHECK(c.loss_history.front() == c.loss_history.back());
  }

  TEST_CASE("combiner L1 penalty adds the mean code norm") {
    std::mt19937_64 rng(35);
    const Matrix x = wt::random_matrix(4, 5, rng);
    CombinerConfig cfg;
    cfg.code_dim = 3;
    const Combiner c = initial_combiner(5, cfg);
    const Matrix codes = c.encode(x);
    double l1 = 0;
    for (Real v : codes.values()) l1 += std::abs(v);
    l1 /= double(x.rows());
    CHECK(c.loss(x, Real(0.5)) == doctest::Approx(c.loss(x) + 0.5 * l1).epsilon(1e-12));
  }

  TEST_CASE("combiner rejects degenerate input") {
    CombinerConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(fit_combiner(Matrix(1, 3, Real{1}), cfg), ValidationError);
    CHECK_THROWS_AS(fit_combiner(Matrix(4, 3, Real{1}), cfg), ValidationError);
  }

  TEST_CASE("semantic table build uses only seen classes and round-trips") {
    const Taxonomy t = fixture();
    const TextEmbeddingTable text({{"cat", {1, 0, 0}}, {"dog", {0, 1, 0}}, {"car", {0, 0, 1}}, {"bus", {1, 1, 1}}});
    CombinerConfig cfg;
    cfg.code_dim = 2;
    cfg.epochs = 50;
    const std::vector<std::string> all{"cat", "dog", "car", "bus"};
    const SemanticBuild b = build_semantic_table(all, {"cat", "dog", "car"}, text, "a", t, HierarchyMeasure::path, cfg);
    CHECK(b.seen_embeddings.rows() == 3);
    CHECK(b.seen_embeddings.cols() == 3 + 3);
    CHECK(b.table.size() == 4);
    CHECK(b.table.code_dim() == 2);
    CHECK(b.table.provenance().seen_classes == std::vector<std::string>{"cat", "dog", "car"});

    // Changing the unseen class's text vector leaves every seen code unchanged.
    const TextEmbeddingTable text2({{"cat", {1, 0, 0}}, {"dog", {0, 1, 0}}, {"car", {0, 0, 1}}, {"bus", {9, 9, 9}}});
    const SemanticBuild b2 = build_semantic_table(all, {"cat", "dog", "car"}, text2, "a", t, HierarchyMeasure::path, cfg);
    for (const auto& s : {"cat", "dog", "car"}) CHECK(b2.table.at(s) == b.table.at(s));
    CHECK(b2.table.at("bus") != b.table.at("bus"));

    wt::TempDir dir;
    b.table.save(dir / "s.json");
    const SemanticTable back = SemanticTable::load(dir / "s.json");
    CHECK(back == b.table);
    CHECK(back.provenance().text_source == "a");

    CHECK_THROWS_AS(build_semantic_table({"cat", "dog", "horse"}, {"cat", "dog"}, text, "a", t,
                                         HierarchyMeasure::path, cfg),
                    LookupError);
    wt::write_text(dir / "bad.json", R"({"code_dim": 2, "classes": [{"name": "a", "code": [1]}]})");
    CHECK_THROWS(SemanticTable::load(dir / "bad.json"));
  }
}
