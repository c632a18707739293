#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gradstop {

// 17 significant digits round-trip any double exactly.
inline std::string csv17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header) : out_(path) {
        if (!out_) throw std::runtime_error("csv: cannot open " + path);
        out_ << header << "\n";
    }

    // columns already formatted; joined with commas
    template <typename... Cols>
    void row(const Cols&... cols) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cols, first = false), ...);
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

}  // namespace gradstop
