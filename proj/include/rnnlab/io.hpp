// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace rnnlab {

// Shortest round-trip decimal form of a double (std::to_chars), so CSV
// and checkpoint bytes are identical across runs.
std::string format_double(double v);

// Write via a temp file in the same directory, then rename, so failures
// never leave partial artifacts behind.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Minimal CSV assembly: header + rows, comma-separated, '\n' line ends.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    void add_row(const std::vector<std::string>& cells);
    const std::string& content() const { return buf_; }
    void write(const std::string& path) const { write_file_atomic(path, buf_); }

private:
    std::size_t width_;
    std::string buf_;
};

}  // namespace rnnlab
