#pragma once

// Domain file format: one JSON document with sections meta, features,
// actions, states, transitions and the optional layout and subgoals.
// Transition rows of terminal states are implied and never written.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "polex/errors.hpp"
#include "polex/mdp.hpp"

namespace polex {

inline constexpr const char* kDomainFormat = "polex-domain";
inline constexpr int kDomainFormatVersion = 1;

namespace detail {

// Typed access into a JSON tree that reports the offending field path.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& node, std::string path)
      : node_(node), path_(std::move(path)) {}

  const nlohmann::json& node() const { return node_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw SchemaError(path_, 0, "field " + path_ + ": " + msg);
  }

  bool has(const char* key) const { return node_.is_object() && node_.contains(key); }

  FieldReader at(const char* key) const {
    if (!node_.is_object()) fail("expected an object");
    auto it = node_.find(key);
    if (it == node_.end())
      throw SchemaError(path_ + "/" + key, 0, "field " + path_ + "/" + key + ": missing");
    return FieldReader(*it, path_ + "/" + key);
  }

  FieldReader at(std::size_t i) const {
    if (!node_.is_array()) fail("expected an array");
    if (i >= node_.size()) fail("index " + std::to_string(i) + " out of range");
    return FieldReader(node_[i], path_ + "/" + std::to_string(i));
  }

  std::size_t size() const {
    if (!node_.is_array()) fail("expected an array");
    return node_.size();
  }

  double number() const {
    if (!node_.is_number()) fail("expected a number");
    return node_.get<double>();
  }

  std::uint64_t index() const {
    if (!node_.is_number_unsigned() && !(node_.is_number_integer() && node_.get<long long>() >= 0))
      fail("expected a non-negative integer");
    return node_.get<std::uint64_t>();
  }

  long long integer() const {
    if (!node_.is_number_integer()) fail("expected an integer");
    return node_.get<long long>();
  }

  bool boolean() const {
    if (!node_.is_boolean()) fail("expected a boolean");
    return node_.get<bool>();
  }

  std::string string() const {
    if (!node_.is_string()) fail("expected a string");
    return node_.get<std::string>();
  }

 private:
  const nlohmann::json& node_;
  std::string path_;
};

inline std::size_t line_of_byte(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

inline nlohmann::json parse_document(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t line = line_of_byte(text, e.byte == 0 ? 0 : e.byte - 1);
    throw SchemaError("", line, "parse error at line " + std::to_string(line) + ": " + e.what());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace detail

inline nlohmann::json domain_to_json(const DomainModel& domain) {
  using nlohmann::json;
  json doc;
  doc["format"] = kDomainFormat;
  doc["version"] = kDomainFormatVersion;
  doc["meta"] = {{"name", domain.name()}, {"discount", domain.discount()}};

  json features = json::array();
  for (const auto& f : domain.features())
    features.push_back({{"name", f.name}, {"min", f.min}, {"max", f.max}});
  doc["features"] = std::move(features);

  json actions = json::array();
  for (const auto& a : domain.actions()) actions.push_back(a.label);
  doc["actions"] = std::move(actions);

  json states = json::array();
  for (const auto& s : domain.states())
    states.push_back({{"id", s.id}, {"features", s.features}, {"terminal", s.terminal}});
  doc["states"] = std::move(states);

  json transitions = json::array();
  for (const auto& s : domain.states()) {
    if (s.terminal) continue;
    for (ActionId a = 0; a < domain.num_actions(); ++a) {
      json outs = json::array();
      for (const auto& o : domain.outcomes(s.id, a)) outs.push_back({o.next, o.prob, o.reward});
      transitions.push_back({{"s", s.id}, {"a", a}, {"outcomes", std::move(outs)}});
    }
  }
  doc["transitions"] = std::move(transitions);

  if (const auto& layout = domain.layout()) {
    json walls = json::array();
    for (const auto& w : layout->walls) walls.push_back({w.row_a, w.col_a, w.row_b, w.col_b});
    json glyphs = json::array();
    for (const auto& per_state : layout->glyphs) {
      json g = json::array();
      for (const auto& glyph : per_state)
        g.push_back({{"kind", glyph.kind}, {"row", glyph.row}, {"col", glyph.col}});
      glyphs.push_back(std::move(g));
    }
    doc["layout"] = {{"width", layout->width},
                     {"height", layout->height},
                     {"walls", std::move(walls)},
                     {"glyphs", std::move(glyphs)}};
  }

  if (!domain.subgoals().empty()) {
    json subgoals = json::array();
    for (const auto& [key, label] : domain.subgoals())
      subgoals.push_back({{"s", key.first}, {"a", key.second}, {"label", label}});
    doc["subgoals"] = std::move(subgoals);
  }
  return doc;
}

inline std::string serialize_domain(const DomainModel& domain) {
  return domain_to_json(domain).dump(1) + "\n";
}

inline DomainModel domain_from_json(const nlohmann::json& doc) {
  using detail::FieldReader;
  const FieldReader root(doc, "");
  if (!doc.is_object()) root.fail("document must be an object");
  if (root.has("format") && root.at("format").string() != kDomainFormat)
    root.at("format").fail("unknown format tag");

  DomainData d;
  const auto meta = root.at("meta");
  d.name = meta.at("name").string();
  d.discount = meta.at("discount").number();

  const auto features = root.at("features");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto f = features.at(i);
    d.features.push_back({f.at("name").string(), f.at("min").number(), f.at("max").number()});
  }

  const auto actions = root.at("actions");
  for (std::size_t i = 0; i < actions.size(); ++i)
    d.actions.push_back({static_cast<ActionId>(i), actions.at(i).string()});

  const auto states = root.at("states");
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto s = states.at(i);
    StateRecord rec;
    rec.id = static_cast<StateId>(s.at("id").index());
    if (rec.id != i) s.at("id").fail("state ids must be contiguous from 0 in listing order");
    const auto fv = s.at("features");
    for (std::size_t k = 0; k < fv.size(); ++k) rec.features.push_back(fv.at(k).number());
    rec.terminal = s.has("terminal") ? s.at("terminal").boolean() : false;
    d.states.push_back(std::move(rec));
  }

  const std::size_t n_a = d.actions.size();
  d.transitions.assign(d.states.size() * n_a, {});
  const auto transitions = root.at("transitions");
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const auto row = transitions.at(i);
    const auto s = row.at("s").index();
    const auto a = row.at("a").index();
    if (s >= d.states.size()) row.at("s").fail("unknown state id");
    if (a >= n_a) row.at("a").fail("unknown action id");
    auto& dest = d.transitions[s * n_a + a];
    if (!dest.empty()) row.fail("duplicate transition row");
    const auto outs = row.at("outcomes");
    for (std::size_t k = 0; k < outs.size(); ++k) {
      const auto o = outs.at(k);
      if (o.size() != 3) o.fail("outcome must be [successor, probability, reward]");
      const auto next = o.at(std::size_t{0}).index();
      if (next >= d.states.size()) o.at(std::size_t{0}).fail("unknown successor id");
      dest.push_back({static_cast<StateId>(next), o.at(1).number(), o.at(2).number()});
    }
    if (dest.empty()) outs.fail("transition row has no outcomes");
  }

  if (root.has("layout")) {
    const auto l = root.at("layout");
    Layout layout;
    layout.width = static_cast<int>(l.at("width").integer());
    layout.height = static_cast<int>(l.at("height").integer());
    if (l.has("walls")) {
      const auto walls = l.at("walls");
      for (std::size_t i = 0; i < walls.size(); ++i) {
        const auto w = walls.at(i);
        if (w.size() != 4) w.fail("wall must be [row_a, col_a, row_b, col_b]");
        layout.walls.push_back({static_cast<int>(w.at(std::size_t{0}).integer()),
                                static_cast<int>(w.at(1).integer()),
                                static_cast<int>(w.at(2).integer()),
                                static_cast<int>(w.at(3).integer())});
      }
    }
    const auto glyphs = l.at("glyphs");
    for (std::size_t i = 0; i < glyphs.size(); ++i) {
      const auto per_state = glyphs.at(i);
      std::vector<Glyph> gs;
      for (std::size_t k = 0; k < per_state.size(); ++k) {
        const auto g = per_state.at(k);
        gs.push_back({g.at("kind").string(), static_cast<int>(g.at("row").integer()),
                      static_cast<int>(g.at("col").integer())});
      }
      layout.glyphs.push_back(std::move(gs));
    }
    d.layout = std::move(layout);
  }

  if (root.has("subgoals")) {
    const auto subgoals = root.at("subgoals");
    for (std::size_t i = 0; i < subgoals.size(); ++i) {
      const auto sg = subgoals.at(i);
      d.subgoals[{static_cast<StateId>(sg.at("s").index()),
                  static_cast<ActionId>(sg.at("a").index())}] = sg.at("label").string();
    }
  }
  return DomainModel(std::move(d));
}

inline DomainModel parse_domain(const std::string& text) {
  return domain_from_json(detail::parse_document(text));
}

inline DomainModel load_domain(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("domain file not found: " + path.string());
  return parse_domain(detail::read_file(path));
}

inline void save_domain(const DomainModel& domain, const std::filesystem::path& path) {
  detail::write_file(path, serialize_domain(domain));
}

}  // namespace polex
