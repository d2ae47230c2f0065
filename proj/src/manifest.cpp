#include "dense/manifest.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace dense::manifest {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& token) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw std::runtime_error("malformed number '" + token + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& token) {
  std::uint64_t v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw std::runtime_error("malformed integer '" + token + "'");
  }
  return v;
}

Writer& Writer::line(const std::string& key) {
  if (open_) out_ << '\n';
  out_ << key;
  open_ = true;
  return *this;
}

Writer& Writer::put(const std::string& token) {
  out_ << ' ' << token;
  return *this;
}

Writer& Writer::put(std::uint64_t v) {
  out_ << ' ' << v;
  return *this;
}

Writer& Writer::put(double v) {
  out_ << ' ' << format_double(v);
  return *this;
}

void Writer::end() {
  if (open_) out_ << '\n';
  open_ = false;
}

Reader::Reader(std::istream& in, const std::string& terminator) {
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line == terminator) return;
    if (first) {
      first_ = line;
      first = false;
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty()) continue;
    std::vector<std::string> toks;
    std::string t;
    while (ls >> t) toks.push_back(t);
    entries_[key] = std::move(toks);
  }
  throw std::runtime_error("manifest is missing its '" + terminator + "' line");
}

const std::vector<std::string>& Reader::tokens(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw std::runtime_error("manifest is missing key '" + key + "'");
  return it->second;
}

std::string Reader::str(const std::string& key) const {
  const auto& t = tokens(key);
  return t.empty() ? std::string{} : t.front();
}

std::uint64_t Reader::uint(const std::string& key) const {
  const auto& t = tokens(key);
  if (t.size() != 1) throw std::runtime_error("manifest key '" + key + "' expects one integer");
  return parse_uint(t.front());
}

std::vector<std::uint64_t> Reader::uints(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& t : tokens(key)) out.push_back(parse_uint(t));
  return out;
}

std::vector<double> Reader::doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& t : tokens(key)) out.push_back(parse_double(t));
  return out;
}

}  // namespace dense::manifest
