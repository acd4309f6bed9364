#include "florg/metrics_io.hpp"

#include <cstdio>

#include "florg/errors.hpp"

namespace florg {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string metrics_csv_header() {
    return "round,global_loss,grad_norm,agg_error,gram_preservation_err,truncation_loss,"
           "delta_proc,lambda_min,sigma_min_cross,omega,uplink_params,downlink_params,"
           "eval_accuracy";
}

std::string metrics_csv_row(const RoundMetrics& m) {
    std::string s = std::to_string(m.round);
    s += ',' + format_double(m.global_loss);
    s += ',' + format_double(m.grad_norm);
    s += ',' + format_double(m.agg_error);
    s += ',' + format_double(m.gram_preservation_err);
    s += ',' + format_double(m.truncation_loss);
    s += ',' + format_double(m.delta_proc);
    s += ',' + format_double(m.lambda_min);
    s += ',' + format_double(m.sigma_min_cross);
    s += ',' + format_double(m.omega);
    s += ',' + std::to_string(m.uplink_params);
    s += ',' + std::to_string(m.downlink_params);
    s += ',' + format_double(m.eval_accuracy);
    return s;
}

std::string theorem2_csv_header() {
    return "round,lambda_min,omega,delta_proc,sigma_min_cross,sigma_defined,psi_sq,c_a,"
           "c_a_tilde,smoothness,term_initial_gap,term_step_noise,term_drift,omega_positive,"
           "drift_defined";
}

std::string theorem2_csv_row(const Theorem2Record& rec) {
    std::string s = std::to_string(rec.round);
    s += ',' + format_double(rec.lambda_min);
    s += ',' + format_double(rec.omega);
    s += ',' + format_double(rec.delta_proc);
    s += ',' + format_double(rec.sigma_min_cross);
    s += rec.sigma_defined ? ",1" : ",0";
    s += ',' + format_double(rec.psi_sq);
    s += ',' + format_double(rec.c_a);
    s += ',' + format_double(rec.c_a_tilde);
    s += ',' + format_double(rec.smoothness);
    s += ',' + format_double(rec.term_initial_gap);
    s += ',' + format_double(rec.term_step_noise);
    s += ',' + format_double(rec.term_drift);
    s += rec.omega_positive ? ",1" : ",0";
    s += rec.drift_defined ? ",1" : ",0";
    return s;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& header) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    out_ << header << '\n';
}

void CsvWriter::row(const std::string& line) {
    out_ << line << '\n';
    if (!out_) throw IoError("write failed on '" + path_ + "'");
}

void CsvWriter::close() {
    if (out_.is_open()) {
        out_.flush();
        out_.close();
        if (out_.fail()) throw IoError("close failed on '" + path_ + "'");
    }
}

} // namespace florg
