#pragma once

#include "xrdl/byte_io.hpp"
#include "xrdl/error.hpp"

#include <charconv>
#include <filesystem>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace xrdl {

/// One row of training history.
struct epoch_record {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;

    friend bool operator==(const epoch_record&, const epoch_record&) = default;
};

/// Shortest decimal that parses back to exactly `v`.
inline std::string round_trip(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw format_error("not a number: '" + s + "'");
    }
    return v;
}

inline constexpr const char* history_header = "epoch,train_loss,train_acc,val_loss,val_acc,lr";

inline std::string format_history(const std::vector<epoch_record>& records) {
    std::string out = std::string(history_header) + "\n";
    for (const auto& r : records) {
        out += std::to_string(r.epoch) + "," + round_trip(r.train_loss) + "," + round_trip(r.train_accuracy) + "," +
               round_trip(r.val_loss) + "," + round_trip(r.val_accuracy) + "," + round_trip(r.learning_rate) + "\n";
    }
    return out;
}

/// Writes history.csv; nothing is created when `records` is empty.
inline void emit_history(const std::vector<epoch_record>& records, const std::filesystem::path& destination) {
    if (records.empty()) {
        throw usage_error("emit_history needs at least one epoch record");
    }
    atomic_write(destination, format_history(records));
}

inline std::vector<epoch_record> parse_history(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != history_header) {
        throw format_error("history CSV header mismatch");
    }
    std::vector<epoch_record> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != 6) {
            throw format_error("history CSV row has " + std::to_string(cells.size()) + " fields");
        }
        epoch_record r;
        r.epoch = static_cast<std::size_t>(parse_double(cells[0]));
        r.train_loss = parse_double(cells[1]);
        r.train_accuracy = parse_double(cells[2]);
        r.val_loss = parse_double(cells[3]);
        r.val_accuracy = parse_double(cells[4]);
        r.learning_rate = parse_double(cells[5]);
        out.push_back(r);
    }
    return out;
}

}  // namespace xrdl
