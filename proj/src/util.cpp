#include "labloop/util.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "labloop/errors.hpp"

namespace labloop {

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &md_len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(md_len * 2);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot read file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write file: " + path.string());
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw Error("short write: " + path.string());
  }
}

void write_text_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, content);
  std::filesystem::rename(tmp, path);
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) {
    return "";
  }
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') {
        current.pop_back();
      }
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) {
    if (current.back() == '\r') {
      current.pop_back();
    }
    lines.push_back(std::move(current));
  }
  return lines;
}

long count_occurrences(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) {
    return 0;
  }
  const std::string h = to_lower(haystack);
  const std::string n = to_lower(needle);
  long count = 0;
  std::size_t pos = 0;
  while ((pos = h.find(n, pos)) != std::string::npos) {
    ++count;
    pos += n.size();
  }
  return count;
}

std::string tail_bytes(const std::string& text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) {
    return text;
  }
  std::size_t start = text.size() - max_bytes;
  std::size_t nl = text.find('\n', start);
  if (nl != std::string::npos && nl + 1 < text.size()) {
    start = nl + 1;
  }
  return text.substr(start);
}

nlohmann::json extract_json_block(const std::string& text) {
  // Try the whole thing first, then the outermost-looking bracketed span.
  {
    auto parsed = nlohmann::json::parse(text, nullptr, false);
    if (!parsed.is_discarded()) {
      return parsed;
    }
  }
  for (char open : {'[', '{'}) {
    const char close = (open == '[') ? ']' : '}';
    std::size_t begin = text.find(open);
    if (begin == std::string::npos) {
      continue;
    }
    std::size_t end = text.rfind(close);
    while (end != std::string::npos && end > begin) {
      auto parsed = nlohmann::json::parse(text.substr(begin, end - begin + 1), nullptr, false);
      if (!parsed.is_discarded()) {
        return parsed;
      }
      end = (end == 0) ? std::string::npos : text.rfind(close, end - 1);
    }
  }
  return nlohmann::json();
}

std::string canonical_json(const nlohmann::json& value) {
  // nlohmann::json already stores object keys sorted.
  return value.dump(2) + "\n";
}

}  // namespace labloop
