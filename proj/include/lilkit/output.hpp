#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace lilkit {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr int kManifestVersion = 1;

/// 17 significant digits; nan and inf spelled as such.
std::string format_double(double x);

std::string sha256_hex(std::string_view bytes);

/// Long-format CSV: every cell is preformatted text.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::string render() const;
};

/// Row of the shared curve schema: curve, n, estimate, ci_lo, ci_hi.
std::vector<std::string> curve_row(std::string_view curve, std::uint64_t n, double estimate, double ci_lo,
                                   double ci_hi);
CsvTable curve_table();

enum class RunStatus { pass, fail, inconclusive };

int exit_code(RunStatus s);
std::string to_string(RunStatus s);

struct ArtifactEntry {
    std::string path;  ///< relative to the output directory
    std::string kind;  ///< csv | json
    std::string sha256;
    std::uint64_t bytes = 0;
};

/// Writes artifacts into one directory and the manifest that indexes them.
/// Files are written by the calling thread only.
class ArtifactWriter {
  public:
    explicit ArtifactWriter(std::filesystem::path directory);

    void write_csv(const std::string& name, const CsvTable& table);
    void write_json(const std::string& name, const nlohmann::json& doc);

    /// Emits manifest.json; may be called once.
    void write_manifest(const std::string& command, const nlohmann::json& resolved_config, std::uint64_t seed,
                        RunStatus status, const nlohmann::json& summary);

    const std::vector<ArtifactEntry>& entries() const noexcept { return entries_; }
    const std::filesystem::path& directory() const noexcept { return dir_; }

  private:
    void write_file(const std::string& name, const std::string& kind, const std::string& content);

    std::filesystem::path dir_;
    std::vector<ArtifactEntry> entries_;
    std::string started_at_;
    bool manifest_written_ = false;
};

/// UTC timestamp in ISO 8601 with seconds.
std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now());

/// Hash of the config with worker count removed, so runs that differ only in
/// parallelism share it.
std::string config_hash(const nlohmann::json& resolved_config);

}  // namespace lilkit
