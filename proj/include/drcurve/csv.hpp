#pragma once

#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drcurve/sample.hpp"

namespace drcurve {

/// Malformed input; carries the 1-based line number.
class CsvError : public std::runtime_error {
public:
    CsvError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

namespace detail {
inline std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}
}  // namespace detail

/// Reads a sample with header exactly y,a,x1,...,xd (d >= 1).
inline Sample read_sample_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw CsvError(1, "empty input, expected header y,a,x1,...");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "y" || header[1] != "a")
        throw CsvError(1, "header must be y,a,x1,...,xd");
    for (std::size_t j = 2; j < header.size(); ++j)
        if (header[j] != "x" + std::to_string(j - 1))
            throw CsvError(1, "header column " + std::to_string(j + 1) + " must be x" + std::to_string(j - 1) +
                                  ", got '" + header[j] + "'");
    const std::size_t cols = header.size();
    std::vector<double> values;
    std::size_t lineno = 1;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != cols)
            throw CsvError(lineno, "expected " + std::to_string(cols) + " fields, got " + std::to_string(cells.size()));
        for (std::size_t j = 0; j < cols; ++j) {
            double v = 0.0;
            std::size_t used = 0;
            try {
                v = std::stod(cells[j], &used);
            } catch (const std::logic_error&) {
                used = 0;
            }
            if (used == 0 || used != cells[j].size() || !std::isfinite(v))
                throw CsvError(lineno, "field " + std::to_string(j + 1) + " ('" + cells[j] + "') is not a finite number");
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw CsvError(lineno, "no data rows");
    const auto n = static_cast<Eigen::Index>(rows);
    const auto d = static_cast<Eigen::Index>(cols - 2);
    Eigen::VectorXd y(n), a(n);
    RowMatrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * cols;
        y(i) = values[base];
        a(i) = values[base + 1];
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = values[base + 2 + static_cast<std::size_t>(j)];
    }
    return {std::move(y), std::move(a), std::move(x)};
}

inline void write_sample_csv(std::ostream& os, const Sample& s) {
    os.precision(17);
    os << "y,a";
    for (std::size_t j = 0; j < s.dims(); ++j) os << ",x" << j + 1;
    os << '\n';
    for (Eigen::Index i = 0; i < s.y.size(); ++i) {
        os << s.y(i) << ',' << s.a(i);
        for (Eigen::Index j = 0; j < s.x.cols(); ++j) os << ',' << s.x(i, j);
        os << '\n';
    }
}

}  // namespace drcurve
