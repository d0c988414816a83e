#include "wiseft/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wiseft/errors.hpp"
#include "wiseft/format.hpp"

namespace wiseft {

namespace {

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw CodecError("dataset csv: bad real value '" + s + "'");
    return v;
}

}  // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw CodecError("cannot open for writing: " + path.string());
    os << "label";
    for (std::size_t j = 0; j < d.cols; ++j) os << ",f" << j;
    os << "\n";
    for (std::size_t i = 0; i < d.rows; ++i) {
        os << d.labels[i];
        const double* row = d.row(i);
        for (std::size_t j = 0; j < d.cols; ++j) os << ',' << format_double(row[j]);
        os << "\n";
    }
    if (!os) throw CodecError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw CodecError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw CodecError("dataset csv: empty file");
    if (line.rfind("label", 0) != 0) throw CodecError("dataset csv: missing header");
    std::size_t cols = 0;
    for (char c : line)
        if (c == ',') ++cols;

    Dataset d;
    d.cols = cols;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ',')) throw CodecError("dataset csv: ragged row");
        std::size_t pos = 0;
        int label = 0;
        try {
            label = std::stoi(cell, &pos);
        } catch (const std::exception&) {
            throw CodecError("dataset csv: non-integer label '" + cell + "'");
        }
        if (pos != cell.size()) throw CodecError("dataset csv: non-integer label '" + cell + "'");
        d.labels.push_back(label);
        std::size_t count = 0;
        while (std::getline(ss, cell, ',')) {
            d.features.push_back(parse_double(cell));
            ++count;
        }
        if (count != cols) throw CodecError("dataset csv: ragged row");
        ++d.rows;
    }
    return d;
}

}  // namespace wiseft
