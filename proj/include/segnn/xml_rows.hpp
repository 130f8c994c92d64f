#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace segnn {

// One <row .../> element of a Stack Exchange dump file with its attributes
// already entity-decoded.
struct XmlRow {
  std::vector<std::pair<std::string, std::string>> attributes;
  std::size_t offset = 0;  // byte offset of the '<' that opened the row

  const std::string* find(std::string_view name) const;
};

// Single-pass pull reader over a dump file: prolog, one root element, and a
// flat list of row children. Memory use is bounded by the largest row.
// Malformed input raises XmlParseError carrying the byte offset.
class XmlRowReader {
 public:
  explicit XmlRowReader(std::istream& in);

  // Reads the next row. Returns false once the root element has closed and
  // only trailing whitespace or comments remain.
  bool next(XmlRow& row);

  const std::string& root_name() const { return root_; }

 private:
  bool fill(std::size_t need);
  int peek_at(std::size_t k);
  int peek();
  int get();
  void expect(char c);
  [[noreturn]] void fail(const std::string& what) const;
  void skip_space();
  void skip_until(std::string_view terminator);
  std::string read_name();
  std::string read_attribute_value();
  void read_attributes(std::vector<std::pair<std::string, std::string>>& out,
                       bool& self_closing);
  void skip_misc();
  void open_root();
  void skip_element_body(const std::string& name);

  std::istream& in_;
  std::vector<char> buffer_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
  std::size_t consumed_ = 0;  // bytes handed out before buffer_[0]
  std::string root_;
  bool root_open_ = false;
  bool finished_ = false;
};

// Decodes the five predefined XML entities and numeric character references.
// Returns false on an unknown or malformed reference.
bool decode_xml_entities(std::string_view raw, std::string& out);

// Appends the UTF-8 encoding of a code point.
void append_utf8(std::string& out, char32_t cp);

}  // namespace segnn
