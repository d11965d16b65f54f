#include "egocurate/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "doctest.h"
#include "egocurate/jsonl.hpp"
#include "egocurate/rng.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace egocurate;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

Manifest tiny_manifest(int classes, int per_class) {
  Manifest m;
  for (int c = 0; c < classes; ++c) {
    ClassEntry e;
    e.label_id = c;
    e.canonical_text = "class" + std::to_string(c);
    e.member_texts = {e.canonical_text};
    e.semantic_vector = {1.0, static_cast<double>(c)};
    m.classes.entries.push_back(e);
    for (int i = 0; i < per_class; ++i) {
      VideoRecord r;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "v%02d_%03d", c, i);
      r.id = buf;
      r.source = "synthetic";
      r.split = Split::train;
      r.label_text = e.canonical_text;
      r.label_id = c;
      r.fps_native = 30.0;
      m.records.push_back(r);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("load_manifest keeps file order and round-trips") {
  TempDir dir("manifest");
  const auto path = dir / "m.jsonl";
  write_text(path,
             R"({"id":"a","source":"s","split":"train","label_text":"pick","label_id":0,"fps_native":30.0})"
             "\n"
             R"({"id":"b","source":"s","split":"val","label_text":"put","label_id":1,"frames_path":"/tmp/x","fps_native":29.97})"
             "\n"
             R"({"id":"c","source":"s","split":"test","label_text":"cut","label_id":2,"fps_native":8.0})"
             "\n");
  Manifest m = load_manifest(path);
  REQUIRE(m.records.size() == 3);
  CHECK(m.records[0].id == "a");
  CHECK(m.records[1].id == "b");
  CHECK(m.records[2].id == "c");
  CHECK(m.records[1].frames_path.value() == "/tmp/x");
  CHECK(m.classes.entries.empty());

  const auto out = dir / "copy.jsonl";
  write_manifest(m, out);
  CHECK(read_text(out) == read_text(path));
}

TEST_CASE("write/load/write is byte-identical with classes attached") {
  TempDir dir("manifest_rt");
  Manifest m = tiny_manifest(3, 4);
  const auto p1 = dir / "a.jsonl";
  const auto p2 = dir / "b.jsonl";
  write_manifest(m, p1);
  Manifest loaded = load_manifest(p1);
  REQUIRE(loaded.classes.entries.size() == 3);
  write_manifest(loaded, p2);
  CHECK(read_text(p1) == read_text(p2));
  CHECK(read_text(classes_sidecar_path(p1)) == read_text(classes_sidecar_path(p2)));
}

TEST_CASE("duplicate id error cites both lines") {
  TempDir dir("manifest_dup");
  const auto path = dir / "m.jsonl";
  write_text(path,
             R"({"id":"a","source":"s","split":"train","label_text":"x","label_id":0,"fps_native":30})"
             "\n"
             R"({"id":"a","source":"s","split":"train","label_text":"x","label_id":0,"fps_native":30})"
             "\n");
  try {
    load_manifest(path);
    FAIL("expected duplicate-id error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("\"a\"") != std::string::npos);
    CHECK(msg.find("1") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
}

TEST_CASE("empty file loads as empty manifest") {
  TempDir dir("manifest_empty");
  const auto path = dir / "m.jsonl";
  write_text(path, "");
  Manifest m = load_manifest(path);
  CHECK(m.records.empty());
  CHECK(m.classes.entries.empty());
}

TEST_CASE("parse failure names the line") {
  TempDir dir("manifest_bad");
  const auto path = dir / "m.jsonl";
  write_text(path,
             R"({"id":"a","source":"s","split":"train","label_text":"x","label_id":0,"fps_native":30})"
             "\nnot json\n");
  CHECK_THROWS_WITH_AS(load_manifest(path),
                       doctest::Contains(":2:"), ValidationError);
}

TEST_CASE("unresolvable label_id is rejected") {
  TempDir dir("manifest_badlabel");
  Manifest m = tiny_manifest(2, 1);
  m.records[0].label_id = 99;
  CHECK_THROWS_AS(write_manifest(m, dir / "m.jsonl"), ValidationError);
}

TEST_CASE("merge_classes: identical texts and vectors collapse") {
  std::vector<LabeledVector> labels = {{"open door", {1, 2, 3}},
                                       {"open door", {1, 2, 3}}};
  ClassTable table = merge_classes(labels, 0.95);
  REQUIRE(table.entries.size() == 1);
  CHECK(table.entries[0].member_texts.size() == 2);
  CHECK(table.entries[0].canonical_text == "open door");
  CHECK(table.entries[0].label_id == 0);
}

TEST_CASE("merge_classes: orthogonal vectors stay separate") {
  std::vector<LabeledVector> labels = {{"a", {1, 0}}, {"b", {0, 1}}};
  ClassTable table = merge_classes(labels, 0.95);
  CHECK(table.entries.size() == 2);
}

TEST_CASE("merge_classes: chain merges through the middle element") {
  // Three unit vectors with cos(u,v)=cos(v,w)=0.96 and cos(u,w)=0.90.
  const double cuv = 0.96, cvw = 0.96, cuw = 0.90;
  std::vector<double> u = {1, 0, 0};
  std::vector<double> v = {cuv, std::sqrt(1 - cuv * cuv), 0};
  const double wy = (cvw - cuv * cuw) / v[1];
  std::vector<double> w = {cuw, wy, std::sqrt(1 - cuw * cuw - wy * wy)};
  REQUIRE(cosine_similarity(u, v) == doctest::Approx(0.96).epsilon(1e-12));
  REQUIRE(cosine_similarity(v, w) == doctest::Approx(0.96).epsilon(1e-12));
  REQUIRE(cosine_similarity(u, w) == doctest::Approx(0.90).epsilon(1e-12));

  std::vector<LabeledVector> labels = {{"u", u}, {"v", v}, {"w", w}};
  ClassTable table = merge_classes(labels, 0.95);
  CHECK(table.entries.size() == 1);
  CHECK(table.entries[0].member_texts == std::vector<std::string>{"u", "v", "w"});

  // Independent single-link oracle over the full cosine matrix.
  std::vector<std::vector<double>> cos(3, std::vector<double>(3, 1.0));
  std::vector<std::vector<double>> vecs = {u, v, w};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cos[i][j] = cosine_similarity(vecs[i], vecs[j]);
  auto clusters = oracle::single_link_clusters(cos, 0.95);
  CHECK(clusters[0] == clusters[1]);
  CHECK(clusters[1] == clusters[2]);
}

TEST_CASE("merge_classes rejects zero-norm vectors") {
  std::vector<LabeledVector> labels = {{"a", {0, 0}}, {"b", {1, 0}}};
  CHECK_THROWS_AS(merge_classes(labels, 0.9), ValidationError);
}

TEST_CASE("merge_classes is permutation invariant") {
  std::vector<LabeledVector> labels;
  Rng rng(7);
  for (int cluster = 0; cluster < 4; ++cluster) {
    std::vector<double> base(6);
    for (auto& x : base) x = rng.normal();
    for (int member = 0; member < 3; ++member) {
      std::vector<double> v = base;
      for (auto& x : v) x += 0.001 * rng.normal();  // tight cluster
      labels.push_back({"c" + std::to_string(cluster) + "m" + std::to_string(member), v});
    }
  }
  ClassTable reference = merge_classes(labels, 0.95);

  std::mt19937 shuffler(123);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = labels;
    std::shuffle(shuffled.begin(), shuffled.end(), shuffler);
    ClassTable got = merge_classes(shuffled, 0.95);
    REQUIRE(got.entries.size() == reference.entries.size());
    for (std::size_t i = 0; i < got.entries.size(); ++i) {
      CHECK(got.entries[i].label_id == reference.entries[i].label_id);
      CHECK(got.entries[i].canonical_text == reference.entries[i].canonical_text);
      CHECK(got.entries[i].member_texts == reference.entries[i].member_texts);
    }
  }
}

TEST_CASE("sample_class_balanced draws per_class per class") {
  Manifest m = tiny_manifest(2, 50);
  BalancedSample s = sample_class_balanced(m, 30, 17);
  REQUIRE(s.ids.size() == 60);
  int class0 = 0, class1 = 0;
  for (const auto& id : s.ids) {
    if (id.rfind("v00", 0) == 0) ++class0;
    if (id.rfind("v01", 0) == 0) ++class1;
  }
  CHECK(class0 == 30);
  CHECK(class1 == 30);
  CHECK(s.underpopulated_classes.empty());
  // No duplicates.
  auto sorted = s.ids;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("sample_class_balanced takes everything from small classes") {
  Manifest m = tiny_manifest(1, 5);
  BalancedSample s = sample_class_balanced(m, 30, 0);
  CHECK(s.ids.size() == 5);
  CHECK(s.underpopulated_classes == std::vector<int>{0});
}

TEST_CASE("sample_class_balanced is deterministic and record-order invariant") {
  Manifest m = tiny_manifest(3, 40);
  BalancedSample a = sample_class_balanced(m, 10, 42);
  BalancedSample b = sample_class_balanced(m, 10, 42);
  CHECK(a.ids == b.ids);

  Manifest shuffled = m;
  std::mt19937 rng(5);
  std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
  BalancedSample c = sample_class_balanced(shuffled, 10, 42);
  CHECK(a.ids == c.ids);

  BalancedSample d = sample_class_balanced(m, 10, 43);
  CHECK(a.ids != d.ids);
}
