#pragma once

#include <fstream>
#include <string>

#include "florg/federation.hpp"

namespace florg {

// Fixed column layout; floating-point cells are printed with 17 significant
// digits so a run can be reproduced bit-for-bit from its log.

std::string metrics_csv_header();
std::string metrics_csv_row(const RoundMetrics& m);

std::string theorem2_csv_header();
std::string theorem2_csv_row(const Theorem2Record& rec);

// %.17g formatting used by every CSV cell
std::string format_double(double v);

// Small append-only CSV sink; throws IoError if the file cannot be written.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header);
    void row(const std::string& line);
    void close();

private:
    std::ofstream out_;
    std::string path_;
};

} // namespace florg
