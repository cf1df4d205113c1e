#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssg/prompt.hpp"
#include "ssg/random.hpp"

namespace ssg {

using nlohmann::json;

enum class EntityKind { Person, Object, Verb };

inline const char* to_string(EntityKind k) {
  switch (k) {
    case EntityKind::Person: return "person";
    case EntityKind::Object: return "object";
    case EntityKind::Verb: return "verb";
  }
  return "?";
}

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The frame structure: per-category ordered semantic-role lists and per-role
// candidate value sets. Role order is significant and immutable after load.
struct FrameStructure {
  std::vector<std::string> object_categories;
  std::vector<std::string> verb_predicates;
  std::vector<std::string> person_roles;
  std::map<std::string, std::vector<std::string>> object_roles;  // category -> roles
  std::map<std::string, std::vector<std::string>> verb_roles;    // predicate -> roles
  std::map<std::string, std::vector<std::string>> value_vocab;   // role -> values

  // Derived label spaces: one value vocabulary per entity type, the ordered
  // union over that type's roles (first occurrence wins).
  std::vector<std::string> object_value_vocab;
  std::vector<std::string> verb_value_vocab;
  std::vector<std::string> person_value_vocab;
  std::map<std::string, int> object_value_index;
  std::map<std::string, int> verb_value_index;
  std::map<std::string, int> person_value_index;
  std::map<std::string, int> predicate_index;
  std::map<std::string, int> category_index;

  int max_object_roles = 0;  // x
  int max_verb_roles = 0;    // y

  int person_role_count() const { return static_cast<int>(person_roles.size()); }  // z

  const std::vector<std::string>& roles_of(EntityKind kind, const std::string& name) const {
    switch (kind) {
      case EntityKind::Person: return person_roles;
      case EntityKind::Object: return object_roles.at(name);
      case EntityKind::Verb: return verb_roles.at(name);
    }
    throw std::logic_error("roles_of: bad kind");
  }

  const std::vector<std::string>& value_vocab_of(EntityKind kind) const {
    switch (kind) {
      case EntityKind::Person: return person_value_vocab;
      case EntityKind::Object: return object_value_vocab;
      case EntityKind::Verb: return verb_value_vocab;
    }
    throw std::logic_error("value_vocab_of: bad kind");
  }

  const std::map<std::string, int>& value_index_of(EntityKind kind) const {
    switch (kind) {
      case EntityKind::Person: return person_value_index;
      case EntityKind::Object: return object_value_index;
      case EntityKind::Verb: return verb_value_index;
    }
    throw std::logic_error("value_index_of: bad kind");
  }

  // All distinct role-values (the set V).
  std::set<std::string> global_values() const {
    std::set<std::string> v;
    for (const auto& [role, values] : value_vocab) v.insert(values.begin(), values.end());
    return v;
  }
};

namespace detail {

inline void check_role_list(const std::string& owner, const std::vector<std::string>& roles,
                            const std::map<std::string, std::vector<std::string>>& vocab) {
  if (roles.size() < 2 || roles.size() > 7)
    throw SchemaError("role-count out of range [2,7] for \"" + owner + "\": " +
                      std::to_string(roles.size()));
  std::set<std::string> seen;
  for (const auto& r : roles) {
    if (!seen.insert(r).second)
      throw SchemaError("duplicate role \"" + r + "\" in role list of \"" + owner + "\"");
    auto it = vocab.find(r);
    if (it == vocab.end() || it->second.empty())
      throw SchemaError("role \"" + r + "\" of \"" + owner + "\" has no value vocabulary");
  }
}

inline void build_type_vocab(const std::vector<std::string>& owners,
                             const std::map<std::string, std::vector<std::string>>& role_lists,
                             const std::map<std::string, std::vector<std::string>>& vocab,
                             std::vector<std::string>& out, std::map<std::string, int>& index) {
  std::set<std::string> role_seen;
  for (const auto& owner : owners) {
    for (const auto& role : role_lists.at(owner)) {
      if (!role_seen.insert(role).second) continue;
      for (const auto& v : vocab.at(role)) {
        if (index.emplace(v, static_cast<int>(out.size())).second) out.push_back(v);
      }
    }
  }
}

}  // namespace detail

inline FrameStructure schema_from_json(const json& j) {
  FrameStructure s;
  try {
    s.object_categories = j.at("object_categories").get<std::vector<std::string>>();
    s.verb_predicates = j.at("verb_predicates").get<std::vector<std::string>>();
    s.person_roles = j.at("person_roles").get<std::vector<std::string>>();
    for (auto& [k, v] : j.at("object_roles").items())
      s.object_roles[k] = v.get<std::vector<std::string>>();
    for (auto& [k, v] : j.at("verb_roles").items())
      s.verb_roles[k] = v.get<std::vector<std::string>>();
    for (auto& [k, v] : j.at("value_vocab").items())
      s.value_vocab[k] = v.get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema parse failure: ") + e.what());
  }

  for (const auto& p : s.verb_predicates)
    if (p == "other relationship")
      throw SchemaError("\"other relationship\" is not a valid verb predicate");

  std::set<std::string> cat_seen, pred_seen;
  for (const auto& c : s.object_categories)
    if (!cat_seen.insert(c).second) throw SchemaError("duplicate object category \"" + c + "\"");
  for (const auto& p : s.verb_predicates)
    if (!pred_seen.insert(p).second) throw SchemaError("duplicate verb predicate \"" + p + "\"");

  for (const auto& [role, values] : s.value_vocab) {
    std::set<std::string> seen;
    for (const auto& v : values)
      if (!seen.insert(v).second)
        throw SchemaError("duplicate value \"" + v + "\" for role \"" + role + "\"");
  }

  for (const auto& c : s.object_categories) {
    auto it = s.object_roles.find(c);
    if (it == s.object_roles.end())
      throw SchemaError("object category \"" + c + "\" has no role list");
    detail::check_role_list(c, it->second, s.value_vocab);
  }
  for (const auto& [c, roles] : s.object_roles)
    if (!cat_seen.count(c)) throw SchemaError("role list for unknown category \"" + c + "\"");
  for (const auto& p : s.verb_predicates) {
    auto it = s.verb_roles.find(p);
    if (it == s.verb_roles.end())
      throw SchemaError("verb predicate \"" + p + "\" has no role list");
    detail::check_role_list(p, it->second, s.value_vocab);
  }
  for (const auto& [p, roles] : s.verb_roles)
    if (!pred_seen.count(p)) throw SchemaError("role list for unknown predicate \"" + p + "\"");
  detail::check_role_list("person", s.person_roles, s.value_vocab);

  for (const auto& c : s.object_categories)
    s.max_object_roles = std::max(s.max_object_roles, static_cast<int>(s.object_roles.at(c).size()));
  for (const auto& p : s.verb_predicates)
    s.max_verb_roles = std::max(s.max_verb_roles, static_cast<int>(s.verb_roles.at(p).size()));

  detail::build_type_vocab(s.object_categories, s.object_roles, s.value_vocab,
                           s.object_value_vocab, s.object_value_index);
  detail::build_type_vocab(s.verb_predicates, s.verb_roles, s.value_vocab, s.verb_value_vocab,
                           s.verb_value_index);
  std::map<std::string, std::vector<std::string>> person_list{{"person", s.person_roles}};
  detail::build_type_vocab({"person"}, person_list, s.value_vocab, s.person_value_vocab,
                           s.person_value_index);
  for (size_t i = 0; i < s.verb_predicates.size(); ++i)
    s.predicate_index[s.verb_predicates[i]] = static_cast<int>(i);
  for (size_t i = 0; i < s.object_categories.size(); ++i)
    s.category_index[s.object_categories[i]] = static_cast<int>(i);
  return s;
}

inline json schema_to_json(const FrameStructure& s) {
  json j;
  j["object_categories"] = s.object_categories;
  j["verb_predicates"] = s.verb_predicates;
  j["person_roles"] = s.person_roles;
  j["object_roles"] = s.object_roles;
  j["verb_roles"] = s.verb_roles;
  j["value_vocab"] = s.value_vocab;
  return j;
}

inline FrameStructure load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema parse failure: ") + e.what());
  }
  return schema_from_json(j);
}

// Stable fingerprint over the canonical serialized schema; checkpoints carry
// it so inference refuses to run against a different frame structure.
inline std::string schema_hash(const FrameStructure& s) {
  std::ostringstream os;
  os << std::hex << fnv1a64(schema_to_json(s).dump());
  return os.str();
}

// ---------------------------------------------------------------------------
// Annotations

struct BBox {
  int x = 0, y = 0, w = 0, h = 0;
  Rect rect() const { return Rect{x, y, w, h}; }
  bool operator==(const BBox&) const = default;
};

// Ordered role -> value assignments for one entity instance; roles the
// annotator marked unsure carry no value.
struct SrvFrame {
  std::map<std::string, std::string> values;
  std::set<std::string> unsure;
  bool operator==(const SrvFrame&) const = default;
};

struct PersonEntry {
  BBox bbox;
  SrvFrame srv;
  bool operator==(const PersonEntry&) const = default;
};

struct ObjectInstance {
  std::string instance_id;
  std::string category;
  BBox bbox;
  SrvFrame srv;
  bool operator==(const ObjectInstance&) const = default;
};

struct Relation {
  std::string object_instance_id;
  std::string predicate;
  SrvFrame srv;
  bool operator==(const Relation&) const = default;
};

struct SSGAnnotation {
  std::string video_id;
  std::string frame_id;
  std::optional<std::pair<int, int>> image_size;  // width, height
  PersonEntry person;
  std::vector<ObjectInstance> objects;
  std::vector<Relation> relations;
  std::vector<std::string> actions;
  bool operator==(const SSGAnnotation&) const = default;
};

namespace detail {

inline json bbox_to_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

inline BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("bbox must be [x,y,w,h]");
  return BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline json srv_to_json(const SrvFrame& f) {
  json j;
  j["srv"] = json::object();
  for (const auto& [r, v] : f.values) j["srv"][r] = v;
  j["unsure"] = std::vector<std::string>(f.unsure.begin(), f.unsure.end());
  return j;
}

inline SrvFrame srv_from_json(const json& j) {
  SrvFrame f;
  if (j.contains("srv"))
    for (auto& [k, v] : j.at("srv").items()) f.values[k] = v.get<std::string>();
  if (j.contains("unsure"))
    for (const auto& r : j.at("unsure")) f.unsure.insert(r.get<std::string>());
  return f;
}

}  // namespace detail

inline json annotation_to_json(const SSGAnnotation& a) {
  json j;
  j["frame_id"] = a.frame_id;
  if (a.image_size) j["image_size"] = json::array({a.image_size->first, a.image_size->second});
  json person = detail::srv_to_json(a.person.srv);
  person["bbox"] = detail::bbox_to_json(a.person.bbox);
  j["person"] = person;
  j["objects"] = json::array();
  for (const auto& o : a.objects) {
    json jo = detail::srv_to_json(o.srv);
    jo["instance_id"] = o.instance_id;
    jo["category"] = o.category;
    jo["bbox"] = detail::bbox_to_json(o.bbox);
    j["objects"].push_back(jo);
  }
  j["relations"] = json::array();
  for (const auto& r : a.relations) {
    json jr = detail::srv_to_json(r.srv);
    jr["object_instance_id"] = r.object_instance_id;
    jr["predicate"] = r.predicate;
    j["relations"].push_back(jr);
  }
  j["actions"] = a.actions;
  return j;
}

inline SSGAnnotation annotation_from_json(const json& j, const std::string& video_id) {
  SSGAnnotation a;
  a.video_id = video_id;
  a.frame_id = j.at("frame_id").get<std::string>();
  if (j.contains("image_size"))
    a.image_size = {j.at("image_size")[0].get<int>(), j.at("image_size")[1].get<int>()};
  const json& p = j.at("person");
  a.person.bbox = detail::bbox_from_json(p.at("bbox"));
  a.person.srv = detail::srv_from_json(p);
  for (const auto& jo : j.value("objects", json::array())) {
    ObjectInstance o;
    o.instance_id = jo.at("instance_id").get<std::string>();
    o.category = jo.at("category").get<std::string>();
    o.bbox = detail::bbox_from_json(jo.at("bbox"));
    o.srv = detail::srv_from_json(jo);
    a.objects.push_back(std::move(o));
  }
  for (const auto& jr : j.value("relations", json::array())) {
    Relation r;
    r.object_instance_id = jr.at("object_instance_id").get<std::string>();
    r.predicate = jr.at("predicate").get<std::string>();
    r.srv = detail::srv_from_json(jr);
    a.relations.push_back(std::move(r));
  }
  for (const auto& act : j.value("actions", json::array()))
    a.actions.push_back(act.get<std::string>());
  return a;
}

// One document per video: {video_id, frames:[...]}.
inline json video_to_json(const std::string& video_id, const std::vector<SSGAnnotation>& frames) {
  json j;
  j["video_id"] = video_id;
  j["frames"] = json::array();
  for (const auto& f : frames) j["frames"].push_back(annotation_to_json(f));
  return j;
}

inline std::vector<SSGAnnotation> video_from_json(const json& j) {
  std::vector<SSGAnnotation> out;
  const std::string vid = j.at("video_id").get<std::string>();
  for (const auto& jf : j.at("frames")) out.push_back(annotation_from_json(jf, vid));
  return out;
}

// Loads a dataset from one file (a video document or an array of them) or a
// directory of such files, in sorted filename order.
inline std::vector<SSGAnnotation> load_annotations(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".json")
        files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw std::runtime_error("no annotation files under " + path);
  std::vector<SSGAnnotation> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw std::runtime_error("cannot open annotation file: " + f);
    json j;
    in >> j;
    if (j.is_array())
      for (const auto& jv : j) {
        auto v = video_from_json(jv);
        out.insert(out.end(), v.begin(), v.end());
      }
    else {
      auto v = video_from_json(j);
      out.insert(out.end(), v.begin(), v.end());
    }
  }
  return out;
}

inline void save_annotations(const std::string& path, const std::vector<SSGAnnotation>& frames) {
  // group by video in first-appearance order
  std::vector<std::string> order;
  std::map<std::string, std::vector<SSGAnnotation>> by_video;
  for (const auto& f : frames) {
    if (!by_video.count(f.video_id)) order.push_back(f.video_id);
    by_video[f.video_id].push_back(f);
  }
  json j = json::array();
  for (const auto& vid : order) j.push_back(video_to_json(vid, by_video[vid]));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationIssue {
  std::string frame_id;
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
  std::map<std::string, int> counts_by_code;
  bool accepted() const { return errors.empty(); }
};

namespace detail {

inline void add_error(ValidationReport& rep, const std::string& frame, const std::string& code,
                      const std::string& msg) {
  rep.errors.push_back({frame, code, msg});
  ++rep.counts_by_code[code];
}

inline void add_warning(ValidationReport& rep, const std::string& frame, const std::string& code,
                        const std::string& msg) {
  rep.warnings.push_back({frame, code, msg});
  ++rep.counts_by_code[code];
}

inline void check_srv(ValidationReport& rep, const SSGAnnotation& a, const FrameStructure& s,
                      const std::string& who, const std::vector<std::string>& role_list,
                      const SrvFrame& srv) {
  for (const auto& r : srv.unsure) {
    if (std::find(role_list.begin(), role_list.end(), r) == role_list.end())
      add_error(rep, a.frame_id, "UNKNOWN_ROLE", who + ": unsure role \"" + r + "\" not in schema");
    if (srv.values.count(r))
      add_error(rep, a.frame_id, "UNSURE_CONFLICT",
                who + ": role \"" + r + "\" is both valued and unsure");
  }
  for (const auto& [r, v] : srv.values) {
    if (std::find(role_list.begin(), role_list.end(), r) == role_list.end()) {
      add_error(rep, a.frame_id, "UNKNOWN_ROLE", who + ": role \"" + r + "\" not in schema");
      continue;
    }
    const auto& vocab = s.value_vocab.at(r);
    if (std::find(vocab.begin(), vocab.end(), v) == vocab.end())
      add_error(rep, a.frame_id, "UNKNOWN_VALUE",
                who + ": value \"" + v + "\" not allowed for role \"" + r + "\"");
  }
  for (const auto& r : role_list) {
    if (!srv.values.count(r) && !srv.unsure.count(r))
      add_error(rep, a.frame_id, "INCOMPLETE_FRAME", who + ": missing role \"" + r + "\"");
  }
}

inline void check_bbox(ValidationReport& rep, const SSGAnnotation& a, const std::string& who,
                       const BBox& b) {
  if (b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0) {
    add_error(rep, a.frame_id, "BAD_BBOX", who + ": degenerate box");
    return;
  }
  if (a.image_size) {
    if (b.x + b.w > a.image_size->first || b.y + b.h > a.image_size->second)
      add_error(rep, a.frame_id, "BBOX_OUT_OF_BOUNDS", who + ": box exceeds image bounds");
  }
}

}  // namespace detail

// Pure: same inputs produce an identical report. Violations are reported,
// never thrown.
inline ValidationReport validate_annotation(const SSGAnnotation& a, const FrameStructure& s) {
  ValidationReport rep;
  detail::check_bbox(rep, a, "person", a.person.bbox);
  detail::check_srv(rep, a, s, "person", s.person_roles, a.person.srv);

  std::set<std::string> ids;
  for (const auto& o : a.objects) {
    const std::string who = "object \"" + o.instance_id + "\"";
    if (!ids.insert(o.instance_id).second)
      detail::add_error(rep, a.frame_id, "DUPLICATE_INSTANCE_ID", who + ": id reused");
    if (!s.object_roles.count(o.category)) {
      detail::add_error(rep, a.frame_id, "UNKNOWN_CATEGORY",
                        who + ": category \"" + o.category + "\"");
      continue;
    }
    detail::check_bbox(rep, a, who, o.bbox);
    detail::check_srv(rep, a, s, who, s.object_roles.at(o.category), o.srv);
  }

  for (size_t i = 0; i < a.relations.size(); ++i) {
    const auto& r = a.relations[i];
    const std::string who = "relation #" + std::to_string(i);
    if (!ids.count(r.object_instance_id))
      detail::add_error(rep, a.frame_id, "DANGLING_RELATION",
                        who + ": references missing object \"" + r.object_instance_id + "\"");
    if (!s.verb_roles.count(r.predicate)) {
      detail::add_error(rep, a.frame_id, "UNKNOWN_PREDICATE",
                        who + ": predicate \"" + r.predicate + "\"");
      continue;
    }
    detail::check_srv(rep, a, s, who, s.verb_roles.at(r.predicate), r.srv);
  }

  if (a.actions.empty())
    detail::add_warning(rep, a.frame_id, "EMPTY_ACTIONS", "frame has no action labels");
  return rep;
}

inline ValidationReport validate_dataset(const std::vector<SSGAnnotation>& ds,
                                         const FrameStructure& s) {
  ValidationReport rep;
  for (const auto& a : ds) {
    ValidationReport r = validate_annotation(a, s);
    rep.errors.insert(rep.errors.end(), r.errors.begin(), r.errors.end());
    rep.warnings.insert(rep.warnings.end(), r.warnings.begin(), r.warnings.end());
    for (const auto& [c, n] : r.counts_by_code) rep.counts_by_code[c] += n;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct StatsReport {
  long frame_count = 0;
  double objects_per_frame = 0;
  double relations_per_frame = 0;
  double object_srv_pairs_per_frame = 0;
  double verb_srv_pairs_per_frame = 0;
  double person_srv_pairs_per_frame = 0;
  double actions_per_frame = 0;
  double relations_per_object = 0;
  std::map<std::string, long> category_occurrences;
  std::map<std::string, long> predicate_occurrences;
  std::map<std::string, long> role_value_occurrences;  // "role=value"

  std::string to_text() const {
    std::ostringstream os;
    os << "frame_count=" << frame_count << "\n";
    os.precision(12);
    os << "objects_per_frame=" << objects_per_frame << "\n"
       << "relations_per_frame=" << relations_per_frame << "\n"
       << "object_srv_pairs_per_frame=" << object_srv_pairs_per_frame << "\n"
       << "verb_srv_pairs_per_frame=" << verb_srv_pairs_per_frame << "\n"
       << "person_srv_pairs_per_frame=" << person_srv_pairs_per_frame << "\n"
       << "actions_per_frame=" << actions_per_frame << "\n"
       << "relations_per_object=" << relations_per_object << "\n";
    os << "[categories]\n";
    for (const auto& [k, n] : category_occurrences) os << k << "\t" << n << "\n";
    os << "[predicates]\n";
    for (const auto& [k, n] : predicate_occurrences) os << k << "\t" << n << "\n";
    os << "[role_values]\n";
    for (const auto& [k, n] : role_value_occurrences) os << k << "\t" << n << "\n";
    return os.str();
  }
};

inline StatsReport dataset_stats(const std::vector<SSGAnnotation>& ds) {
  if (ds.empty()) throw std::invalid_argument("EMPTY_DATASET");
  StatsReport r;
  r.frame_count = static_cast<long>(ds.size());
  long objects = 0, relations = 0, obj_pairs = 0, verb_pairs = 0, person_pairs = 0, actions = 0;
  for (const auto& a : ds) {
    objects += static_cast<long>(a.objects.size());
    relations += static_cast<long>(a.relations.size());
    actions += static_cast<long>(a.actions.size());
    person_pairs += static_cast<long>(a.person.srv.values.size());
    for (const auto& [role, v] : a.person.srv.values)
      ++r.role_value_occurrences[role + "=" + v];
    for (const auto& o : a.objects) {
      ++r.category_occurrences[o.category];
      obj_pairs += static_cast<long>(o.srv.values.size());
      for (const auto& [role, v] : o.srv.values) ++r.role_value_occurrences[role + "=" + v];
    }
    for (const auto& rel : a.relations) {
      ++r.predicate_occurrences[rel.predicate];
      verb_pairs += static_cast<long>(rel.srv.values.size());
      for (const auto& [role, v] : rel.srv.values) ++r.role_value_occurrences[role + "=" + v];
    }
  }
  const double n = static_cast<double>(r.frame_count);
  r.objects_per_frame = objects / n;
  r.relations_per_frame = relations / n;
  r.object_srv_pairs_per_frame = obj_pairs / n;
  r.verb_srv_pairs_per_frame = verb_pairs / n;
  r.person_srv_pairs_per_frame = person_pairs / n;
  r.actions_per_frame = actions / n;
  r.relations_per_object = objects > 0 ? static_cast<double>(relations) / objects : 0.0;
  return r;
}

}  // namespace ssg
