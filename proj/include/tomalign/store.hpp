#ifndef TOMALIGN_STORE_HPP
#define TOMALIGN_STORE_HPP

// A directory of JSON documents with per-document revision counters.
// Keys are '/'-separated paths ("content/c-17"); each document lives in
// <root>/<key>.json as {"revision": n, "value": ...}.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tomalign/error.hpp"

namespace tomalign {

struct StoreRecord {
  std::string key;
  nlohmann::json value;
  std::uint64_t revision = 0;

  friend bool operator==(const StoreRecord&, const StoreRecord&) = default;
};

/// Key segments: letters, digits, '.', '_' and '-'; no empty, "." or ".." segments.
inline bool valid_store_key(std::string_view key) {
  if (key.empty() || key.size() > 512) return false;
  std::size_t start = 0;
  while (start <= key.size()) {
    const auto end = std::min(key.find('/', start), key.size());
    const auto segment = key.substr(start, end - start);
    if (segment.empty() || segment == "." || segment == "..") return false;
    for (unsigned char ch : segment) {
      if (!(std::isalnum(ch) || ch == '.' || ch == '_' || ch == '-')) return false;
    }
    start = end + 1;
  }
  return true;
}

class DocumentStore {
 public:
  explicit DocumentStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw IOError("cannot create store at '" + root_.string() + "': " + ec.message());
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Writes `value` if the stored revision equals `expected_revision`
  /// (0 means the key must not exist yet). Returns the new record.
  StoreRecord put(const std::string& key, nlohmann::json value, std::uint64_t expected_revision) {
    const auto path = path_for(key);
    std::lock_guard lock(mutex_);
    const auto current = read_file(key, path);
    const std::uint64_t have = current ? current->revision : 0;
    if (have != expected_revision) {
      throw ConflictError("'" + key + "' is at revision " + std::to_string(have) +
                          ", write was based on " + std::to_string(expected_revision));
    }
    StoreRecord next{key, std::move(value), have + 1};
    write_file(path, next);
    return next;
  }

  StoreRecord get(const std::string& key) const {
    if (auto r = find(key)) return *std::move(r);
    throw NotFound("no document '" + key + "'");
  }

  std::optional<StoreRecord> find(const std::string& key) const {
    const auto path = path_for(key);
    std::lock_guard lock(mutex_);
    return read_file(key, path);
  }

  /// All records whose key starts with `prefix`, sorted by key.
  std::vector<StoreRecord> list(std::string_view prefix = {}) const {
    std::lock_guard lock(mutex_);
    std::vector<StoreRecord> out;
    std::error_code ec;
    for (auto it = std::filesystem::recursive_directory_iterator(root_, ec);
         !ec && it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
      if (!it->is_regular_file() || it->path().extension() != ".json") continue;
      auto rel = std::filesystem::relative(it->path(), root_).generic_string();
      rel.resize(rel.size() - 5);
      if (!rel.starts_with(prefix) || !valid_store_key(rel)) continue;
      if (auto r = read_file(rel, it->path())) out.push_back(*std::move(r));
    }
    std::sort(out.begin(), out.end(),
              [](const StoreRecord& a, const StoreRecord& b) { return a.key < b.key; });
    return out;
  }

 private:
  std::filesystem::path path_for(const std::string& key) const {
    if (!valid_store_key(key)) throw ValidationError("invalid store key '" + key + "'");
    return root_ / (key + ".json");
  }

  static std::optional<StoreRecord> read_file(const std::string& key,
                                              const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream text;
    text << in.rdbuf();
    try {
      const auto j = nlohmann::json::parse(text.str());
      return StoreRecord{key, j.at("value"), j.at("revision").get<std::uint64_t>()};
    } catch (const nlohmann::json::exception& e) {
      throw IOError("corrupt document '" + path.string() + "': " + e.what());
    }
  }

  void write_file(const std::filesystem::path& path, const StoreRecord& record) const {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IOError("cannot create '" + path.parent_path().string() + "': " + ec.message());
    std::ostringstream suffix;
    suffix << ".tmp." << std::this_thread::get_id() << '.' << counter_++;
    auto tmp = path;
    tmp += suffix.str();
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << nlohmann::json{{"revision", record.revision}, {"value", record.value}}.dump();
      if (!out.flush()) throw IOError("cannot write '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IOError("cannot replace '" + path.string() + "': " + ec.message());
  }

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::atomic<std::uint64_t> counter_{0};
};

}  // namespace tomalign

#endif  // TOMALIGN_STORE_HPP
