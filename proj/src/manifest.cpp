#include "egocurate/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "egocurate/jsonl.hpp"
#include "egocurate/rng.hpp"

namespace egocurate {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split \"" + s + "\" (expected train|val|test)");
}

void Manifest::validate() const {
  std::unordered_map<std::string, std::size_t> seen;
  seen.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = seen.emplace(records[i].id, i);
    if (!inserted)
      throw ValidationError("duplicate id \"" + records[i].id + "\" at records " +
                            std::to_string(it->second + 1) + " and " +
                            std::to_string(i + 1));
  }
  if (classes.entries.empty()) return;
  std::unordered_map<int, bool> known;
  for (const auto& e : classes.entries) known[e.label_id] = true;
  for (const auto& r : records) {
    if (!known.count(r.label_id))
      throw ValidationError("record \"" + r.id + "\" has unresolvable label_id " +
                            std::to_string(r.label_id));
  }
}

std::filesystem::path classes_sidecar_path(const std::filesystem::path& records_path) {
  std::filesystem::path p = records_path;
  p.replace_extension();
  p += ".classes.jsonl";
  return p;
}

namespace {

VideoRecord record_from_json(const json& obj, const std::string& where) {
  VideoRecord r;
  try {
    r.id = obj.at("id").get<std::string>();
    r.source = obj.at("source").get<std::string>();
    r.split = split_from_string(obj.at("split").get<std::string>());
    r.label_text = obj.at("label_text").get<std::string>();
    r.label_id = obj.at("label_id").get<int>();
    if (obj.contains("frames_path"))
      r.frames_path = obj.at("frames_path").get<std::string>();
    r.fps_native = obj.at("fps_native").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
  if (r.fps_native < 0)
    throw ValidationError(where + ": fps_native must be >= 0");
  return r;
}

json record_to_json(const VideoRecord& r) {
  json obj;
  obj["id"] = r.id;
  obj["source"] = r.source;
  obj["split"] = to_string(r.split);
  obj["label_text"] = r.label_text;
  obj["label_id"] = r.label_id;
  if (r.frames_path) obj["frames_path"] = *r.frames_path;
  obj["fps_native"] = r.fps_native;
  return obj;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& records_path) {
  Manifest m;
  std::unordered_map<std::string, std::size_t> first_line;
  for_each_jsonl(records_path, [&](std::size_t line_no, const json& obj) {
    VideoRecord r = record_from_json(
        obj, records_path.string() + ":" + std::to_string(line_no));
    auto [it, inserted] = first_line.emplace(r.id, line_no);
    if (!inserted)
      throw ValidationError(records_path.string() + ": duplicate id \"" + r.id +
                            "\" at lines " + std::to_string(it->second) + " and " +
                            std::to_string(line_no));
    m.records.push_back(std::move(r));
  });
  auto sidecar = classes_sidecar_path(records_path);
  if (std::filesystem::exists(sidecar)) m.classes = load_classes(sidecar);
  m.validate();
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& records_path) {
  m.validate();
  JsonlWriter out(records_path);
  for (const auto& r : m.records) out.write(record_to_json(r));
  out.close();
  if (!m.classes.entries.empty())
    write_classes(m.classes, classes_sidecar_path(records_path));
}

ClassTable load_classes(const std::filesystem::path& path) {
  ClassTable table;
  for_each_jsonl(path, [&](std::size_t line_no, const json& obj) {
    ClassEntry e;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      e.label_id = obj.at("label_id").get<int>();
      e.canonical_text = obj.at("canonical_text").get<std::string>();
      e.member_texts = obj.at("member_texts").get<std::vector<std::string>>();
      e.semantic_vector = obj.at("semantic_vector").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(where + ": " + ex.what());
    }
    if (std::find(e.member_texts.begin(), e.member_texts.end(), e.canonical_text) ==
        e.member_texts.end())
      throw ValidationError(where + ": canonical_text not among member_texts");
    table.entries.push_back(std::move(e));
  });
  return table;
}

void write_classes(const ClassTable& table, const std::filesystem::path& path) {
  JsonlWriter out(path);
  for (const auto& e : table.entries) {
    json obj;
    obj["label_id"] = e.label_id;
    obj["canonical_text"] = e.canonical_text;
    obj["member_texts"] = e.member_texts;
    obj["semantic_vector"] = e.semantic_vector;
    out.write(obj);
  }
  out.close();
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw ValidationError("cosine undefined for zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

ClassTable merge_classes(const std::vector<LabeledVector>& labels, double threshold) {
  if (labels.empty()) throw ValidationError("merge_classes: need at least one label");
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ValidationError("merge_classes: threshold must be in (0,1]");
  const std::size_t dim = labels[0].embedding.size();
  for (const auto& l : labels) {
    if (l.embedding.size() != dim)
      throw ValidationError("merge_classes: embedding dimension mismatch for \"" +
                            l.text + "\"");
    double norm2 = 0;
    for (double v : l.embedding) norm2 += v * v;
    if (norm2 == 0.0)
      throw ValidationError("merge_classes: zero-norm semantic vector for \"" +
                            l.text + "\"");
  }

  const std::size_t n = labels.size();
  UnionFind uf(n);
  std::unordered_map<std::string, std::size_t> first_of_text;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = first_of_text.emplace(labels[i].text, i);
    if (!inserted) uf.unite(i, it->second);  // same text never splits
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (cosine_similarity(labels[i].embedding, labels[j].embedding) >= threshold)
        uf.unite(i, j);

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);

  ClassTable table;
  for (auto& [root, members] : groups) {
    ClassEntry e;
    for (std::size_t i : members) e.member_texts.push_back(labels[i].text);
    std::sort(e.member_texts.begin(), e.member_texts.end());
    e.canonical_text = e.member_texts.front();
    // Vector of the first input carrying the canonical text.
    for (std::size_t i : members) {
      if (labels[i].text == e.canonical_text) {
        e.semantic_vector = labels[i].embedding;
        break;
      }
    }
    table.entries.push_back(std::move(e));
  }
  std::sort(table.entries.begin(), table.entries.end(),
            [](const ClassEntry& a, const ClassEntry& b) {
              return a.canonical_text < b.canonical_text;
            });
  for (std::size_t i = 0; i < table.entries.size(); ++i)
    table.entries[i].label_id = static_cast<int>(i);
  return table;
}

BalancedSample sample_class_balanced(const Manifest& manifest, int per_class,
                                     std::uint64_t seed) {
  if (per_class < 1) throw ValidationError("sample_class_balanced: per_class must be >= 1");
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& r : manifest.records) by_class[r.label_id].push_back(r.id);

  BalancedSample result;
  Rng rng(seed);
  for (auto& [label_id, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    const std::size_t want = static_cast<std::size_t>(per_class);
    if (ids.size() <= want) {
      result.ids.insert(result.ids.end(), ids.begin(), ids.end());
      if (ids.size() < want) result.underpopulated_classes.push_back(label_id);
      continue;
    }
    auto picks = rng.choose_indices(ids.size(), want);
    for (std::size_t p : picks) result.ids.push_back(ids[p]);
  }
  return result;
}

}  // namespace egocurate
