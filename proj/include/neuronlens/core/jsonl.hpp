#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace neuronlens {

/// Reads every non-blank line of a JSONL file. `on_line(line_number, json)` is
/// called in file order. Throws MissingFile / SchemaViolation on parse errors.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& on_line);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Append-only JSONL writer. Every append is flushed; appends are serialized
/// so one writer may be shared across threads.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);

  void append(const nlohmann::json& j);
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

}  // namespace neuronlens
