#include "fmdroid/xml.hpp"

namespace fmdroid::xml {

std::optional<std::string_view> Element::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return std::string_view(v);
  }
  return std::nullopt;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_name_start(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == ':' || u >= 0x80;
}

bool is_name_char(char c) {
  return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Parser {
 public:
  explicit Parser(std::string_view doc) : doc_(doc) {}

  Element run() {
    if (doc_.starts_with("\xEF\xBB\xBF")) pos_ = 3;
    skip_misc();
    if (at_end() || peek() != '<') fail("expected root element");
    Element root = element();
    skip_misc();
    if (!at_end()) fail("content after root element");
    return root;
  }

 private:
  std::string_view doc_;
  std::size_t pos_ = 0;
  std::size_t depth_ = 0;

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(pos_, what); }
  bool at_end() const { return pos_ >= doc_.size(); }
  char peek() const { return doc_[pos_]; }
  bool looking_at(std::string_view s) const { return doc_.substr(pos_).starts_with(s); }

  void expect(std::string_view s) {
    if (!looking_at(s)) fail("expected '" + std::string(s) + "'");
    pos_ += s.size();
  }

  void skip_space() {
    while (!at_end() && is_space(peek())) ++pos_;
  }

  void skip_until(std::string_view terminator, const char* what) {
    const auto end = doc_.find(terminator, pos_);
    if (end == std::string_view::npos) {
      pos_ = doc_.size();
      fail(std::string("unterminated ") + what);
    }
    pos_ = end + terminator.size();
  }

  // Whitespace, comments, processing instructions and DOCTYPE outside the
  // root element.
  void skip_misc() {
    while (true) {
      skip_space();
      if (looking_at("<?")) {
        skip_until("?>", "processing instruction");
      } else if (looking_at("<!--")) {
        comment();
      } else if (looking_at("<!DOCTYPE")) {
        skip_until(">", "DOCTYPE");
      } else {
        return;
      }
    }
  }

  void comment() {
    pos_ += 4;
    const auto end = doc_.find("--", pos_);
    if (end == std::string_view::npos) {
      pos_ = doc_.size();
      fail("unterminated comment");
    }
    pos_ = end;
    expect("-->");
  }

  std::string name() {
    if (at_end() || !is_name_start(peek())) fail("expected a name");
    const auto start = pos_;
    while (!at_end() && is_name_char(peek())) ++pos_;
    return std::string(doc_.substr(start, pos_ - start));
  }

  void reference(std::string& out) {
    const auto start = pos_;
    ++pos_;  // '&'
    const auto semi = doc_.find(';', pos_);
    if (semi == std::string_view::npos || semi - pos_ > 12) {
      pos_ = start;
      fail("malformed entity reference");
    }
    const auto ref = doc_.substr(pos_, semi - pos_);
    if (ref == "amp") out += '&';
    else if (ref == "lt") out += '<';
    else if (ref == "gt") out += '>';
    else if (ref == "quot") out += '"';
    else if (ref == "apos") out += '\'';
    else if (ref.starts_with('#')) {
      unsigned long cp = 0;
      const bool hex = ref.size() > 1 && (ref[1] == 'x' || ref[1] == 'X');
      const auto digits = ref.substr(hex ? 2 : 1);
      if (digits.empty()) {
        pos_ = start;
        fail("empty character reference");
      }
      for (char c : digits) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (hex && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else {
          pos_ = start;
          fail("bad character reference");
        }
        cp = cp * (hex ? 16 : 10) + static_cast<unsigned long>(d);
        if (cp > 0x10FFFF) {
          pos_ = start;
          fail("character reference out of range");
        }
      }
      append_utf8(out, cp);
    } else {
      pos_ = start;
      fail("unknown entity '&" + std::string(ref) + ";'");
    }
    pos_ = semi + 1;
  }

  std::string attribute_value() {
    if (at_end() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
    const char quote = peek();
    ++pos_;
    std::string value;
    while (true) {
      if (at_end()) fail("unterminated attribute value");
      const char c = peek();
      if (c == quote) break;
      if (c == '<') fail("'<' inside attribute value");
      if (c == '&') {
        reference(value);
      } else {
        value += c;
        ++pos_;
      }
    }
    ++pos_;
    return value;
  }

  Element element() {
    if (++depth_ > 512) fail("element nesting too deep");
    expect("<");
    Element el;
    el.name = name();
    while (true) {
      const bool had_space = !at_end() && is_space(peek());
      skip_space();
      if (at_end()) fail("unterminated start tag");
      if (looking_at("/>")) {
        pos_ += 2;
        --depth_;
        return el;
      }
      if (peek() == '>') {
        ++pos_;
        break;
      }
      if (!had_space) fail("expected whitespace before attribute");
      auto key = name();
      skip_space();
      expect("=");
      skip_space();
      auto value = attribute_value();
      for (const auto& [k, v] : el.attributes) {
        if (k == key) fail("duplicate attribute '" + key + "'");
      }
      el.attributes.emplace_back(std::move(key), std::move(value));
    }
    content(el);
    --depth_;
    return el;
  }

  void content(Element& el) {
    std::string scratch;
    while (true) {
      if (at_end()) fail("missing end tag for <" + el.name + ">");
      if (looking_at("</")) {
        pos_ += 2;
        const auto close = name();
        if (close != el.name) fail("end tag </" + close + "> does not match <" + el.name + ">");
        skip_space();
        expect(">");
        return;
      }
      if (looking_at("<!--")) {
        comment();
      } else if (looking_at("<![CDATA[")) {
        skip_until("]]>", "CDATA section");
      } else if (looking_at("<?")) {
        skip_until("?>", "processing instruction");
      } else if (peek() == '<') {
        el.children.push_back(element());
      } else if (peek() == '&') {
        scratch.clear();
        reference(scratch);
      } else {
        ++pos_;
      }
    }
  }
};

}  // namespace

Element parse(std::string_view document) { return Parser(document).run(); }

}  // namespace fmdroid::xml
