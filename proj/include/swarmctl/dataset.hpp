#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmctl/csv.hpp"

namespace swarmctl {

/// One observed (position, action, velocity) sample from the grid search.
struct DatasetRecord {
    int combo_id = 0;
    int k = 1;
    double f_mhz = 0.0;
    double v_pp = 0.0;
    int frame_idx = 0;
    double t_s = 0.0;
    double x = 0.0;
    double y = 0.0;
    double dx_dt = 0.0;
    double dy_dt = 0.0;

    bool operator==(const DatasetRecord&) const = default;
};

inline constexpr const char* kDatasetHeader =
    "combo_id,k,f_mhz,v_pp,frame_idx,t_s,x,y,dx_dt,dy_dt";

inline void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open '" + path + "' for writing");
    std::string buf;
    buf.reserve(1 << 20);
    buf += kDatasetHeader;
    buf += '\n';
    for (const DatasetRecord& r : records) {
        append_number(buf, r.combo_id);
        buf += ',';
        append_number(buf, r.k);
        buf += ',';
        append_number(buf, r.f_mhz);
        buf += ',';
        append_number(buf, r.v_pp);
        buf += ',';
        append_number(buf, r.frame_idx);
        buf += ',';
        append_number(buf, r.t_s);
        buf += ',';
        append_number(buf, r.x);
        buf += ',';
        append_number(buf, r.y);
        buf += ',';
        append_number(buf, r.dx_dt);
        buf += ',';
        append_number(buf, r.dy_dt);
        buf += '\n';
        if (buf.size() > (1 << 20)) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_dataset: write failed for '" + path + "'");
}

inline std::vector<DatasetRecord> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("load_dataset: '" + path + "' is empty (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kDatasetHeader)
        throw std::runtime_error("load_dataset: header mismatch in '" + path + "' (expected '" +
                                 kDatasetHeader + "')");
    std::vector<DatasetRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != 10)
            throw std::runtime_error("load_dataset: expected 10 fields, got " +
                                     std::to_string(fields.size()) + " at line " +
                                     std::to_string(line_no));
        DatasetRecord r;
        r.combo_id = static_cast<int>(parse_long(fields[0], "load_dataset", line_no));
        r.k = static_cast<int>(parse_long(fields[1], "load_dataset", line_no));
        r.f_mhz = parse_double(fields[2], "load_dataset", line_no);
        r.v_pp = parse_double(fields[3], "load_dataset", line_no);
        r.frame_idx = static_cast<int>(parse_long(fields[4], "load_dataset", line_no));
        r.t_s = parse_double(fields[5], "load_dataset", line_no);
        r.x = parse_double(fields[6], "load_dataset", line_no);
        r.y = parse_double(fields[7], "load_dataset", line_no);
        r.dx_dt = parse_double(fields[8], "load_dataset", line_no);
        r.dy_dt = parse_double(fields[9], "load_dataset", line_no);
        records.push_back(r);
    }
    return records;
}

}  // namespace swarmctl
