#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace da_cli {

/// Config does not match the schema. `path` is a JSON pointer.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Validates `user` against the schema and fills in defaults. The result has
/// every documented field present.
nlohmann::json resolve_config(const nlohmann::json& user);

/// The schema rendered as {pointer: {kind, default}} for documentation.
nlohmann::json schema_description();

std::uint64_t fnv1a64(const std::string& bytes);

/// Hash of the command and the resolved config, excluding fields that do not
/// affect results (workers, out).
std::string config_hash(const std::string& command, const nlohmann::json& resolved);

/// RFC-4180 writer: CRLF rows, quoted fields where needed, %.17g numbers.
class Csv {
 public:
  using Cell = std::variant<double, long long, std::string>;
  explicit Csv(std::vector<std::string> header);
  void row(const std::vector<Cell>& cells);
  const std::string& str() const { return text_; }

 private:
  void line(const std::vector<Cell>& cells);
  std::size_t width_;
  std::string text_;
};

std::string format_number(double v);
std::string quote_field(const std::string& s);

/// Entry point shared by the executable and the tests. Exit codes: 0 ok,
/// 1 internal error, 2 schema or input violation, 3 numerical rejection.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace da_cli
