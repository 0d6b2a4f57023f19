#include "lilkit/output.hpp"

#include <cmath>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "lilkit/errors.hpp"

#ifndef LILKIT_VERSION
#define LILKIT_VERSION "unknown"
#endif

namespace lilkit {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", x);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
}

void CsvTable::add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw InputError("CSV row width does not match the header");
    rows.push_back(std::move(row));
}

std::string CsvTable::render() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
    return out;
}

std::vector<std::string> curve_row(std::string_view curve, std::uint64_t n, double estimate, double ci_lo,
                                   double ci_hi) {
    return {std::string(curve), std::to_string(n), format_double(estimate), format_double(ci_lo),
            format_double(ci_hi)};
}

CsvTable curve_table() {
    CsvTable t;
    t.columns = {"curve", "n", "estimate", "ci_lo", "ci_hi"};
    return t;
}

int exit_code(RunStatus s) {
    switch (s) {
    case RunStatus::pass: return 0;
    case RunStatus::fail: return 1;
    case RunStatus::inconclusive: return 3;
    }
    return 1;
}

std::string to_string(RunStatus s) {
    switch (s) {
    case RunStatus::pass: return "pass";
    case RunStatus::fail: return "fail";
    case RunStatus::inconclusive: return "inconclusive";
    }
    return "fail";
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string config_hash(const nlohmann::json& resolved_config) {
    nlohmann::json c = resolved_config;
    if (c.is_object() && c.contains("run") && c["run"].is_object()) c["run"].erase("workers");
    return sha256_hex(c.dump());
}

ArtifactWriter::ArtifactWriter(std::filesystem::path directory)
    : dir_(std::move(directory)), started_at_(utc_timestamp()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(fmt::format("cannot create output directory {}: {}", dir_.string(), ec.message()));
}

void ArtifactWriter::write_file(const std::string& name, const std::string& kind, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", path.string()));
    out << content;
    out.close();
    if (!out) throw Error(fmt::format("write to {} failed", path.string()));
    entries_.push_back({name, kind, sha256_hex(content), content.size()});
}

void ArtifactWriter::write_csv(const std::string& name, const CsvTable& table) {
    write_file(name, "csv", table.render());
}

void ArtifactWriter::write_json(const std::string& name, const nlohmann::json& doc) {
    write_file(name, "json", doc.dump(2) + "\n");
}

void ArtifactWriter::write_manifest(const std::string& command, const nlohmann::json& resolved_config,
                                    std::uint64_t seed, RunStatus status, const nlohmann::json& summary) {
    if (manifest_written_) throw Error("manifest already written");
    nlohmann::json files = nlohmann::json::array();
    for (const auto& e : entries_)
        files.push_back({{"path", e.path}, {"kind", e.kind}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    nlohmann::json m;
    m["manifest_version"] = kManifestVersion;
    m["csv_schema_version"] = kCsvSchemaVersion;
    m["code_version"] = LILKIT_VERSION;
    m["config_sha256"] = config_hash(resolved_config);
    m["config"] = resolved_config;
    m["seed"] = seed;
    m["started_at"] = started_at_;
    m["finished_at"] = utc_timestamp();
    m["tasks"] = nlohmann::json::array(
        {{{"command", command}, {"status", to_string(status)}, {"exit_code", exit_code(status)}, {"files", files},
          {"summary", summary}}});
    const std::string text = m.dump(2) + "\n";
    std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write manifest.json");
    out << text;
    manifest_written_ = true;
}

}  // namespace lilkit
