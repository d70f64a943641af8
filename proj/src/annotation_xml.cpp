#include "aoi/annotation_xml.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace aoi {

std::string annotation_to_xml(const Annotation& ann) {
  std::ostringstream os;
  os << "<annotation>\n";
  os << "  <filename>" << ann.filename << "</filename>\n";
  os << "  <size>\n";
  os << "    <width>" << ann.width << "</width>\n";
  os << "    <height>" << ann.height << "</height>\n";
  os << "    <depth>" << ann.depth << "</depth>\n";
  os << "  </size>\n";
  for (const auto& [cls, box] : ann.objects) {
    os << "  <object>\n";
    os << "    <name>" << defect_class_name(cls) << "</name>\n";
    os << "    <bndbox>\n";
    os << "      <xmin>" << box.xmin << "</xmin>\n";
    os << "      <ymin>" << box.ymin << "</ymin>\n";
    os << "      <xmax>" << box.xmax << "</xmax>\n";
    os << "      <ymax>" << box.ymax << "</ymax>\n";
    os << "    </bndbox>\n";
    os << "  </object>\n";
  }
  os << "</annotation>\n";
  return os.str();
}

namespace {

[[noreturn]] void parse_fail(const std::string& what) {
  throw std::runtime_error("annotation parse error: " + what);
}

struct XmlNode {
  std::string name;
  std::string text;
  std::vector<XmlNode> children;

  const XmlNode* child(std::string_view n) const {
    for (const auto& c : children) {
      if (c.name == n) return &c;
    }
    return nullptr;
  }
};

struct Parser {
  std::string_view s;
  size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }

  XmlNode parse_element() {
    skip_ws();
    if (pos >= s.size() || s[pos] != '<') parse_fail("expected '<'");
    ++pos;
    XmlNode node;
    while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) {
      node.name += s[pos++];
    }
    if (node.name.empty()) parse_fail("empty tag name");
    skip_ws();
    if (pos >= s.size() || s[pos] != '>') parse_fail("attributes are not allowed in <" + node.name + ">");
    ++pos;
    // content: either nested elements or text
    while (true) {
      skip_ws();
      if (pos >= s.size()) parse_fail("unterminated <" + node.name + ">");
      if (s[pos] == '<') {
        if (pos + 1 < s.size() && s[pos + 1] == '/') {
          pos += 2;
          std::string close;
          while (pos < s.size() && s[pos] != '>') close += s[pos++];
          if (pos >= s.size()) parse_fail("unterminated close tag");
          ++pos;
          if (close != node.name) parse_fail("mismatched </" + close + "> for <" + node.name + ">");
          return node;
        }
        node.children.push_back(parse_element());
      } else {
        while (pos < s.size() && s[pos] != '<') node.text += s[pos++];
        while (!node.text.empty() && std::isspace(static_cast<unsigned char>(node.text.back()))) {
          node.text.pop_back();
        }
      }
    }
  }
};

int parse_int_field(const XmlNode& parent, const char* field) {
  const XmlNode* n = parent.child(field);
  if (!n) parse_fail(std::string("missing field <") + field + ">");
  int v = 0;
  const auto [p, ec] = std::from_chars(n->text.data(), n->text.data() + n->text.size(), v);
  if (ec != std::errc{} || p != n->text.data() + n->text.size()) {
    parse_fail(std::string("field <") + field + "> is not an integer: '" + n->text + "'");
  }
  return v;
}

}  // namespace

Annotation annotation_from_xml(const std::string& xml) {
  Parser parser{xml};
  const XmlNode root = parser.parse_element();
  parser.skip_ws();
  if (parser.pos != xml.size()) parse_fail("trailing content after </annotation>");
  if (root.name != "annotation") parse_fail("root element must be <annotation>");

  Annotation ann;
  const XmlNode* fname = root.child("filename");
  if (!fname) parse_fail("missing field <filename>");
  ann.filename = fname->text;

  const XmlNode* size = root.child("size");
  if (!size) parse_fail("missing field <size>");
  ann.width = parse_int_field(*size, "width");
  ann.height = parse_int_field(*size, "height");
  ann.depth = parse_int_field(*size, "depth");
  if (ann.width < 1 || ann.height < 1) parse_fail("field <size> must be positive");

  for (const auto& child : root.children) {
    if (child.name != "object") continue;
    const XmlNode* name = child.child("name");
    if (!name) parse_fail("missing field <name>");
    const auto cls = defect_class_from_name(name->text);
    if (!cls) parse_fail("unknown defect class in <name>: '" + name->text + "'");
    const XmlNode* bb = child.child("bndbox");
    if (!bb) parse_fail("missing field <bndbox>");
    BoundingBox box;
    box.xmin = parse_int_field(*bb, "xmin");
    box.ymin = parse_int_field(*bb, "ymin");
    box.xmax = parse_int_field(*bb, "xmax");
    box.ymax = parse_int_field(*bb, "ymax");
    if (!box.valid()) parse_fail("field <bndbox> violates 0 <= min < max");
    if (box.xmax > ann.width || box.ymax > ann.height) {
      parse_fail("field <bndbox> exceeds <size>");
    }
    ann.objects.emplace_back(*cls, box);
  }
  return ann;
}

void write_annotation(const Annotation& ann, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_annotation: cannot open " + path);
  f << annotation_to_xml(ann);
  if (!f) throw std::runtime_error("write_annotation: write failed for " + path);
}

Annotation read_annotation(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_annotation: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return annotation_from_xml(ss.str());
}

}  // namespace aoi
