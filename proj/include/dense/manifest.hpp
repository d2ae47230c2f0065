#pragma once

// Line-oriented "key value..." text used in the headers of model and dataset
// files. Doubles use shortest round-trip formatting so files re-save
// byte-identically.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace dense::manifest {

std::string format_double(double v);
double parse_double(const std::string& token);
std::uint64_t parse_uint(const std::string& token);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  Writer& line(const std::string& key);
  Writer& put(const std::string& token);
  Writer& put(std::uint64_t v);
  Writer& put(double v);
  template <typename Range>
  Writer& put_all(const Range& r) {
    for (const auto& v : r) put(v);
    return *this;
  }
  void end();  // terminates the last line

 private:
  std::ostream& out_;
  bool open_ = false;
};

// Reads lines until a line equal to `terminator`.
class Reader {
 public:
  Reader(std::istream& in, const std::string& terminator);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::vector<std::string>& tokens(const std::string& key) const;
  std::string str(const std::string& key) const;
  std::uint64_t uint(const std::string& key) const;
  std::vector<std::uint64_t> uints(const std::string& key) const;
  std::vector<double> doubles(const std::string& key) const;
  const std::string& first_line() const { return first_; }

 private:
  std::string first_;
  std::map<std::string, std::vector<std::string>> entries_;
};

}  // namespace dense::manifest
