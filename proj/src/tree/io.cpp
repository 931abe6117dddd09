#include "vetta/tree/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace vetta::tree {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw TreeFormatError(path + ": " + what);
}

const json& field(const json& obj, const std::string& path, const char* name) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) fail(path + "." + name, "missing required field");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "non-finite number");
  return d;
}

NodeId integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<NodeId>();
}

const json& array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  return v;
}

}  // namespace

std::string save_tree_json(const VesselTree& t) {
  json doc;
  doc["version"] = kTreeSchema;
  doc["dims"] = t.dims;
  doc["root"] = t.root;
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    json jn;
    jn["id"] = n.id;
    json pos = json::array();
    for (int c = 0; c < t.dims; ++c) pos.push_back(n.pos[c]);
    jn["pos"] = pos;
    if (n.r) jn["r"] = *n.r;
    nodes.push_back(jn);
  }
  doc["nodes"] = nodes;
  json edges = json::array();
  for (const auto& e : t.edges) {
    json je;
    je["parent"] = e.parent;
    je["child"] = e.child;
    if (e.polyline) {
      json pl = json::array();
      for (const auto& p : e.polyline->points) pl.push_back({p[0], p[1], p[2], p[3]});
      je["polyline"] = pl;
    }
    if (e.skip) je["skip"] = true;
    edges.push_back(je);
  }
  doc["edges"] = edges;
  return doc.dump(1) + "\n";
}

VesselTree load_tree_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("$", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("$", "expected an object");
  const auto& version = field(doc, "$", "version");
  if (!version.is_string() || version.get<std::string>() != kTreeSchema)
    fail("$.version", std::string("unsupported schema, expected \"") + kTreeSchema + "\"");
  VesselTree t;
  t.dims = static_cast<int>(integer(field(doc, "$", "dims"), "$.dims"));
  if (t.dims != 2 && t.dims != 3) fail("$.dims", "must be 2 or 3");
  t.root = integer(field(doc, "$", "root"), "$.root");

  const auto& nodes = array(field(doc, "$", "nodes"), "$.nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = "$.nodes[" + std::to_string(i) + "]";
    TreeNode n;
    n.id = integer(field(nodes[i], p, "id"), p + ".id");
    const auto& pos = array(field(nodes[i], p, "pos"), p + ".pos");
    if (pos.size() != static_cast<std::size_t>(t.dims))
      fail(p + ".pos", "expected " + std::to_string(t.dims) + " coordinates");
    for (int c = 0; c < t.dims; ++c) n.pos[c] = number(pos[c], p + ".pos[" + std::to_string(c) + "]");
    if (nodes[i].contains("r")) {
      n.r = number(nodes[i]["r"], p + ".r");
      if (!(*n.r > 0)) fail(p + ".r", "radius must be positive");
    }
    if (t.has_node(n.id)) fail(p + ".id", "duplicate node id " + std::to_string(n.id));
    t.nodes.push_back(n);
  }

  const auto& edges = array(field(doc, "$", "edges"), "$.edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = "$.edges[" + std::to_string(i) + "]";
    TreeEdge e;
    e.parent = integer(field(edges[i], p, "parent"), p + ".parent");
    e.child = integer(field(edges[i], p, "child"), p + ".child");
    if (edges[i].contains("polyline")) {
      const auto& pl = array(edges[i]["polyline"], p + ".polyline");
      geom::PolylineVessel v;
      for (std::size_t k = 0; k < pl.size(); ++k) {
        const std::string q = p + ".polyline[" + std::to_string(k) + "]";
        const auto& row = array(pl[k], q);
        if (row.size() != 4) fail(q, "expected [x, y, z, r]");
        geom::Point4 pt;
        for (int c = 0; c < 4; ++c) pt[c] = number(row[c], q + "[" + std::to_string(c) + "]");
        v.points.push_back(pt);
      }
      e.polyline = std::move(v);
    }
    if (edges[i].contains("skip")) {
      if (!edges[i]["skip"].is_boolean()) fail(p + ".skip", "expected a boolean");
      e.skip = edges[i]["skip"].get<bool>();
    }
    t.edges.push_back(std::move(e));
  }
  try {
    validate_tree(t);
  } catch (const TreeError& e) {
    fail("$", e.what());
  }
  return t;
}

void save_tree(const VesselTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << save_tree_json(tree);
}

VesselTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return load_tree_json(ss.str());
  } catch (const TreeFormatError& e) {
    throw TreeFormatError(path.string() + ": " + e.what());
  }
}

std::string tree_to_svg(const VesselTree& t) {
  if (t.dims != 2) throw TreeError("SVG export supports 2D trees only");
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  auto px = [&](double x) { return fmt(512.0 * x); };
  auto py = [&](double y) { return fmt(512.0 * (1.0 - y)); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 512 512\" width=\"512\" height=\"512\">\n";
  s << "<rect width=\"512\" height=\"512\" fill=\"white\"/>\n";
  for (const auto& e : t.edges) {
    s << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"2\" points=\"";
    if (e.polyline) {
      for (const auto& p : e.polyline->points) s << px(p[0]) << "," << py(p[1]) << " ";
    } else {
      const auto& a = t.node(e.parent).pos;
      const auto& b = t.node(e.child).pos;
      s << px(a[0]) << "," << py(a[1]) << " " << px(b[0]) << "," << py(b[1]);
    }
    s << "\"/>\n";
  }
  const auto& r = t.node(t.root).pos;
  s << "<circle cx=\"" << px(r[0]) << "\" cy=\"" << py(r[1]) << "\" r=\"4\" fill=\"red\"/>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace vetta::tree
