#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uqbench/error.hpp"
#include "uqbench/perturb.hpp"
#include "uqbench/uncertainty.hpp"

namespace uqbench {

enum class ReportFormat { csv, markdown };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    fail(ErrorKind::invalid_input, "unknown report format '" + std::string(s) + "'");
}

inline std::string_view extension(ReportFormat f) { return f == ReportFormat::csv ? ".csv" : ".md"; }

/// Six decimal places everywhere a real number is reported.
inline std::string format_fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct ReportTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size()) {
            fail(ErrorKind::invalid_input, "report row has " + std::to_string(row.size()) + " cells, expected " +
                                               std::to_string(columns.size()));
        }
        rows.push_back(std::move(row));
    }

    bool operator==(const ReportTable&) const = default;
};

namespace detail {

inline std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string markdown_cell(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += '\\';
        out += (c == '\n') ? ' ' : c;
    }
    return out;
}

} // namespace detail

inline std::string render(const ReportTable& table, ReportFormat format) {
    std::ostringstream os;
    if (format == ReportFormat::csv) {
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                os << (i ? "," : "") << detail::csv_cell(cells[i]);
            }
            os << '\n';
        };
        line(table.columns);
        for (const auto& r : table.rows) line(r);
    } else {
        auto line = [&](const std::vector<std::string>& cells) {
            os << '|';
            for (const auto& c : cells) os << ' ' << detail::markdown_cell(c) << " |";
            os << '\n';
        };
        line(table.columns);
        os << '|';
        for (std::size_t i = 0; i < table.columns.size(); ++i) os << " --- |";
        os << '\n';
        for (const auto& r : table.rows) line(r);
    }
    return os.str();
}

inline void emit_report(const ReportTable& table, ReportFormat format, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::io, "cannot write report " + path.string());
    }
    out << render(table, format);
    if (!out) {
        fail(ErrorKind::io, "failed writing report " + path.string());
    }
}

/// RFC 4180-style reader for reports written by emit_report.
inline ReportTable parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> lines;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        any = true;
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(cell));
            cell.clear();
            lines.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            cell += c;
        }
    }
    if (quoted) {
        fail(ErrorKind::invalid_input, "unterminated quoted CSV field");
    }
    if (any) {
        row.push_back(std::move(cell));
        lines.push_back(std::move(row));
    }
    if (lines.empty()) {
        fail(ErrorKind::invalid_input, "CSV has no header row");
    }
    ReportTable table;
    table.columns = std::move(lines.front());
    for (std::size_t i = 1; i < lines.size(); ++i) {
        table.add_row(std::move(lines[i]));
    }
    return table;
}

inline ReportTable read_csv_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::invalid_input, "cannot open report " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

inline ReportTable uncertainty_table(const std::vector<UncertaintyRecord>& records) {
    ReportTable t{{"Ground Truth", "Ensemble", "Avg Probability", "Variance", "Entropy"}, {}};
    for (const auto& r : records) {
        t.add_row({r.ground_truth, r.ensemble_name.empty() ? std::to_string(r.ensemble_class) : r.ensemble_name,
                   format_fixed(r.avg_probability), format_fixed(r.variance), format_fixed(r.entropy_bits)});
    }
    return t;
}

inline ReportTable robustness_table(const std::vector<RobustnessRecord>& records) {
    ReportTable t{{"Image", "Ground Truth", "Original class", "Original probability", "Perturbation added",
                   "Perturbed class", "Perturbed probability", "Flipped", "Originally correct", "Perturbed correct"},
                  {}};
    auto yes_no = [](bool b) { return std::string(b ? "yes" : "no"); };
    for (const auto& r : records) {
        t.add_row({r.image_id, r.ground_truth, r.original_prediction.name,
                   format_fixed(r.original_prediction.probability), r.spec.describe(), r.perturbed_prediction.name,
                   format_fixed(r.perturbed_prediction.probability), yes_no(r.flipped), yes_no(r.originally_correct),
                   yes_no(r.perturbed_correct)});
    }
    return t;
}

} // namespace uqbench
