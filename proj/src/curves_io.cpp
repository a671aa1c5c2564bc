#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>

#include "ragged/error.hpp"
#include "ragged/metrics.hpp"
#include "ragged/text.hpp"

namespace ragged {
namespace {

constexpr const char* kHeader = "dataset,retriever,reader,condition,variant,k,f1";

void check_field(const std::string& value, const char* name) {
    if (value.find_first_of(",\"\r\n") != std::string::npos) {
        throw ValidationError(std::string("curve label field '") + name + "' may not contain commas, quotes or newlines: " +
                              value);
    }
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out(1);
    for (char c : line) {
        if (c == ',') {
            out.emplace_back();
        } else {
            out.back().push_back(c);
        }
    }
    return out;
}

}  // namespace

void write_curves_csv(std::ostream& out, std::span<const PerformanceCurve> curves) {
    out << kHeader << '\n';
    char f1[64];
    for (const auto& curve : curves) {
        curve.validate();
        const auto& l = curve.label;
        check_field(l.dataset, "dataset");
        check_field(l.retriever, "retriever");
        check_field(l.reader, "reader");
        check_field(l.condition, "condition");
        check_field(l.variant, "variant");
        for (const auto& p : curve.points) {
            std::snprintf(f1, sizeof(f1), "%.4f", p.f1);
            out << l.dataset << ',' << l.retriever << ',' << l.reader << ',' << l.condition << ',' << l.variant << ','
                << p.k << ',' << f1 << '\n';
        }
    }
}

std::vector<PerformanceCurve> read_curves_csv(std::istream& in, const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != kHeader) {
        throw ValidationError(source_name + ":1: expected header '" + std::string(kHeader) + "'");
    }
    std::map<CurveLabel, std::map<std::size_t, double>> grouped;
    std::vector<CurveLabel> order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        const std::string where = source_name + ":" + std::to_string(line_no);
        const auto fields = split_commas(trimmed);
        if (fields.size() != 7) {
            throw ValidationError(where + ": expected 7 comma-separated fields, got " + std::to_string(fields.size()));
        }
        CurveLabel label{fields[0], fields[1], fields[2], fields[3], fields[4]};
        char* end = nullptr;
        errno = 0;
        const unsigned long long k = std::strtoull(fields[5].c_str(), &end, 10);
        if (fields[5].empty() || errno != 0 || *end != '\0' || fields[5][0] == '-') {
            throw ValidationError(where + ": k must be a non-negative integer, got '" + fields[5] + "'");
        }
        errno = 0;
        const double f1 = std::strtod(fields[6].c_str(), &end);
        if (fields[6].empty() || errno != 0 || *end != '\0' || !std::isfinite(f1)) {
            throw ValidationError(where + ": f1 must be a number, got '" + fields[6] + "'");
        }
        if (f1 < 0.0 || f1 > 100.0) throw ValidationError(where + ": f1 must lie in [0, 100]");
        auto [it, fresh] = grouped.try_emplace(label);
        if (fresh) order.push_back(label);
        if (!it->second.emplace(static_cast<std::size_t>(k), f1).second) {
            throw ValidationError(where + ": duplicate k=" + fields[5] + " for curve " + label.to_string());
        }
    }
    std::vector<PerformanceCurve> curves;
    for (const auto& label : order) {
        PerformanceCurve curve{label, {}};
        for (const auto& [k, f1] : grouped.at(label)) curve.points.push_back({k, f1});
        curves.push_back(std::move(curve));
    }
    return curves;
}

}  // namespace ragged
