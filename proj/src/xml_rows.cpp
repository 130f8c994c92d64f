#include "segnn/xml_rows.hpp"

#include <cctype>
#include <charconv>
#include <cstring>

#include "segnn/errors.hpp"

namespace segnn {

namespace {

constexpr std::size_t kBufferSize = 1 << 16;

bool is_name_start(int c) {
  return std::isalpha(c) || c == '_' || c == ':' || c >= 0x80;
}

bool is_name_char(int c) {
  return is_name_start(c) || std::isdigit(c) || c == '-' || c == '.';
}

bool is_space(int c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

}  // namespace

const std::string* XmlRow::find(std::string_view name) const {
  for (const auto& [key, value] : attributes) {
    if (key == name) return &value;
  }
  return nullptr;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool decode_xml_entities(std::string_view raw, std::string& out) {
  out.clear();
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '&') {
      out.push_back(raw[i]);
      continue;
    }
    const std::size_t semi = raw.find(';', i);
    if (semi == std::string_view::npos) return false;
    const std::string_view ref = raw.substr(i + 1, semi - i - 1);
    if (ref == "amp") {
      out.push_back('&');
    } else if (ref == "lt") {
      out.push_back('<');
    } else if (ref == "gt") {
      out.push_back('>');
    } else if (ref == "quot") {
      out.push_back('"');
    } else if (ref == "apos") {
      out.push_back('\'');
    } else if (ref.size() >= 2 && ref[0] == '#') {
      const bool hex = ref[1] == 'x' || ref[1] == 'X';
      const std::string_view digits = ref.substr(hex ? 2 : 1);
      std::uint32_t cp = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(),
                                       cp, hex ? 16 : 10);
      if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() ||
          cp > 0x10FFFF) {
        return false;
      }
      append_utf8(out, static_cast<char32_t>(cp));
    } else {
      return false;
    }
    i = semi;
  }
  return true;
}

XmlRowReader::XmlRowReader(std::istream& in) : in_(in), buffer_(kBufferSize) {}

bool XmlRowReader::fill(std::size_t need) {
  if (end_ - pos_ >= need) return true;
  const std::size_t remain = end_ - pos_;
  std::memmove(buffer_.data(), buffer_.data() + pos_, remain);
  consumed_ += pos_;
  pos_ = 0;
  end_ = remain;
  while (end_ < need) {
    in_.read(buffer_.data() + end_, static_cast<std::streamsize>(buffer_.size() - end_));
    const auto n = static_cast<std::size_t>(in_.gcount());
    if (n == 0) break;
    end_ += n;
  }
  return end_ - pos_ >= need;
}

int XmlRowReader::peek_at(std::size_t k) {
  if (!fill(k + 1)) return -1;
  return static_cast<unsigned char>(buffer_[pos_ + k]);
}

int XmlRowReader::peek() {
  if (pos_ == end_ && !fill(1)) return -1;
  return static_cast<unsigned char>(buffer_[pos_]);
}

int XmlRowReader::get() {
  const int c = peek();
  if (c >= 0) ++pos_;
  return c;
}

void XmlRowReader::fail(const std::string& what) const {
  throw XmlParseError(what, consumed_ + pos_);
}

void XmlRowReader::expect(char c) {
  const int got = peek();
  if (got != static_cast<unsigned char>(c)) {
    fail(got < 0 ? std::string("unexpected end of input, expected '") + c + "'"
                 : std::string("expected '") + c + "'");
  }
  ++pos_;
}

void XmlRowReader::skip_space() {
  while (is_space(peek())) ++pos_;
}

void XmlRowReader::skip_until(std::string_view terminator) {
  std::size_t matched = 0;
  while (matched < terminator.size()) {
    const int c = get();
    if (c < 0) fail("unexpected end of input, expected '" + std::string(terminator) + "'");
    if (c == static_cast<unsigned char>(terminator[matched])) {
      ++matched;
    } else {
      matched = c == static_cast<unsigned char>(terminator[0]) ? 1 : 0;
    }
  }
}

std::string XmlRowReader::read_name() {
  if (!is_name_start(peek())) fail("expected a name");
  std::string name;
  while (is_name_char(peek())) name.push_back(static_cast<char>(get()));
  return name;
}

std::string XmlRowReader::read_attribute_value() {
  const int quote = get();
  if (quote != '"' && quote != '\'') fail("expected quoted attribute value");
  const std::size_t start = consumed_ + pos_;
  std::string raw;
  for (;;) {
    const int c = get();
    if (c < 0) fail("unterminated attribute value");
    if (c == quote) break;
    if (c == '<') fail("'<' inside attribute value");
    raw.push_back(static_cast<char>(c));
  }
  std::string decoded;
  if (!decode_xml_entities(raw, decoded)) {
    throw XmlParseError("bad entity reference in attribute value", start);
  }
  return decoded;
}

void XmlRowReader::read_attributes(std::vector<std::pair<std::string, std::string>>& out,
                                   bool& self_closing) {
  for (;;) {
    const bool had_space = is_space(peek());
    skip_space();
    const int c = peek();
    if (c == '/') {
      ++pos_;
      expect('>');
      self_closing = true;
      return;
    }
    if (c == '>') {
      ++pos_;
      self_closing = false;
      return;
    }
    if (c < 0) fail("unexpected end of input inside tag");
    if (!had_space) fail("expected whitespace between attributes");
    std::string name = read_name();
    skip_space();
    expect('=');
    skip_space();
    out.emplace_back(std::move(name), read_attribute_value());
  }
}

// Skips whitespace, comments, processing instructions and DOCTYPE.
void XmlRowReader::skip_misc() {
  for (;;) {
    skip_space();
    if (peek() != '<') return;
    const int c = peek_at(1);
    if (c == '?') {
      pos_ += 2;
      skip_until("?>");
    } else if (c == '!') {
      pos_ += 2;
      if (peek() == '-') {
        ++pos_;
        expect('-');
        skip_until("-->");
      } else {
        skip_until(">");
      }
    } else {
      return;
    }
  }
}

void XmlRowReader::open_root() {
  // Optional UTF-8 byte order mark.
  if (peek() == 0xEF) {
    ++pos_;
    if (get() != 0xBB || get() != 0xBF) fail("malformed byte order mark");
  }
  skip_misc();
  if (peek() < 0) fail("missing root element");
  expect('<');
  root_ = read_name();
  std::vector<std::pair<std::string, std::string>> ignored;
  bool self_closing = false;
  read_attributes(ignored, self_closing);
  root_open_ = !self_closing;
  if (self_closing) finished_ = true;
}

void XmlRowReader::skip_element_body(const std::string& name) {
  // Content of a non-self-closing child; nested elements are kept on a stack.
  std::vector<std::string> open{name};
  while (!open.empty()) {
    const int c = get();
    if (c < 0) fail("unexpected end of input inside <" + open.back() + ">");
    if (c != '<') continue;
    if (peek() == '/') {
      ++pos_;
      const std::string closing = read_name();
      if (closing != open.back()) {
        fail("mismatched closing tag </" + closing + ">, expected </" + open.back() + ">");
      }
      skip_space();
      expect('>');
      open.pop_back();
    } else if (peek() == '!' || peek() == '?') {
      skip_until(">");
    } else {
      std::string child = read_name();
      std::vector<std::pair<std::string, std::string>> ignored;
      bool self_closing = false;
      read_attributes(ignored, self_closing);
      if (!self_closing) open.push_back(std::move(child));
    }
  }
}

bool XmlRowReader::next(XmlRow& row) {
  if (root_.empty() && !finished_) open_root();
  while (!finished_) {
    skip_misc();
    const std::size_t offset = consumed_ + pos_;
    const int c = peek();
    if (c < 0) fail("unexpected end of input, <" + root_ + "> not closed");
    if (c != '<') {
      // Character data between rows is not part of the dump format but is
      // harmless; skip it.
      ++pos_;
      continue;
    }
    ++pos_;
    if (peek() == '/') {
      ++pos_;
      const std::string name = read_name();
      if (name != root_) fail("mismatched closing tag </" + name + ">");
      skip_space();
      expect('>');
      root_open_ = false;
      finished_ = true;
      break;
    }
    const std::string name = read_name();
    row.attributes.clear();
    row.offset = offset;
    bool self_closing = false;
    read_attributes(row.attributes, self_closing);
    if (!self_closing) skip_element_body(name);
    if (name == "row") return true;
  }
  skip_misc();
  if (peek() >= 0) fail("content after the root element");
  return false;
}

}  // namespace segnn
