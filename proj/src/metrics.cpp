#include "fedsim/metrics.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fedsim {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string metrics_header() {
    return "round,strategy,seed,train_loss,test_loss,test_acc,rho_effective,eta_l,wall_ms";
}

std::string metrics_row(const RoundRecord& record, uint64_t seed) {
    std::string row = std::to_string(record.round);
    row += ',';
    row += strategy_name(record.strategy);
    row += ',';
    row += std::to_string(seed);
    row += ',';
    row += format_double(record.train_loss);
    row += ',';
    row += format_double(record.test_loss);
    row += ',';
    row += format_double(record.test_accuracy);
    row += ',';
    row += format_double(record.rho_effective);
    row += ',';
    row += format_double(record.eta_l);
    row += ',';
    row += format_double(record.wall_ms);
    return row;
}

void write_metrics_csv(const std::string& path, const std::vector<RoundRecord>& records, uint64_t seed) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("metrics: cannot open '" + path + "'");
    out << metrics_header() << '\n';
    for (const RoundRecord& r : records) out << metrics_row(r, seed) << '\n';
    if (!out) throw std::runtime_error("metrics: write to '" + path + "' failed");
}

std::string approx_report_jsonl(const ApproxErrorReport& report) {
    nlohmann::json j;
    j["suite"] = "approx";
    j["win_rate"] = report.win_rate;
    j["eta_exponent"] = report.eta_exponent;
    j["tau_exponent"] = report.tau_exponent;
    j["empirical_m"] = report.empirical_m;
    j["trials_per_cell"] = report.trials_per_cell;
    j["aborted_trials"] = report.aborted_trials;
    j["eta_grid"] = report.eta_grid;
    j["eta_mean_err"] = report.eta_mean_err;
    j["tau_grid"] = report.tau_grid;
    j["tau_mean_err"] = report.tau_mean_err;
    j["tau_median_err"] = report.tau_median_err;
    nlohmann::json trials = nlohmann::json::array();
    for (const ApproxTrial& t : report.trials)
        trials.push_back({{"eta_l", t.eta_l},
                          {"tau", t.tau},
                          {"err_hat", t.err_hat},
                          {"err_raw", t.err_raw},
                          {"grad_norm", t.grad_norm},
                          {"win", t.win}});
    j["trials"] = std::move(trials);
    return j.dump();
}

std::string sampling_report_jsonl(const SamplingReport& report) {
    nlohmann::json j;
    j["suite"] = "sampling";
    j["n_devices"] = report.n_devices;
    j["k"] = report.k;
    j["trials"] = report.trials;
    j["expected"] = report.expected;
    j["max_abs_dev"] = report.max_abs_dev;
    j["sigma"] = report.sigma;
    j["threshold"] = report.threshold;
    j["within_threshold"] = report.within_threshold;
    j["freq"] = report.freq;
    return j.dump();
}

std::string degeneracy_jsonl(const DegeneracyResult& result) {
    nlohmann::json j;
    j["suite"] = "degeneracy";
    j["identical"] = result.identical;
    j["rounds_compared"] = result.rounds_compared;
    j["first_divergent_round"] = result.first_divergent_round;
    j["first_divergent_coord"] = result.first_divergent_coord;
    j["max_abs_diff"] = result.max_abs_diff;
    return j.dump();
}

void append_line(const std::string& path, const std::string& line) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("metrics: cannot open '" + path + "'");
    out << line << '\n';
    if (!out) throw std::runtime_error("metrics: write to '" + path + "' failed");
}

}  // namespace fedsim
