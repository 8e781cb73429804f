// Acceptance runner: one PASS/FAIL line per criterion. Property criteria run
// the matching unit-test cases in-process; the end-to-end and ablation
// criteria drive the CLI.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddseg/cli.hpp"

namespace fs = std::filesystem;

namespace {

// Test-case bookkeeping shared with the listener.
struct Tally {
    int started = 0;
    int failed = 0;
    std::vector<std::string> failures;
};
Tally g_tally;

struct TallyListener : doctest::IReporter {
    explicit TallyListener(const doctest::ContextOptions&) {}
    void report_query(const doctest::QueryData&) override {}
    void test_run_start() override {}
    void test_run_end(const doctest::TestRunStats&) override {}
    void test_case_start(const doctest::TestCaseData& d) override {
        ++g_tally.started;
        current_ = d.m_name;
    }
    void test_case_reenter(const doctest::TestCaseData&) override {}
    void test_case_end(const doctest::CurrentTestCaseStats& s) override {
        if (!s.testCaseSuccess) {
            ++g_tally.failed;
            g_tally.failures.push_back(current_);
        }
    }
    void test_case_exception(const doctest::TestCaseException&) override {}
    void subcase_start(const doctest::SubcaseSignature&) override {}
    void subcase_end() override {}
    void log_assert(const doctest::AssertData&) override {}
    void log_message(const doctest::MessageData&) override {}
    void test_case_skipped(const doctest::TestCaseData&) override {}

private:
    std::string current_;
};
DOCTEST_REGISTER_LISTENER("tally", 1, TallyListener);

struct Outcome {
    bool pass = false;
    std::string detail;
};

double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string secs(double s) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(1);
    o << s << "s";
    return o.str();
}

// Runs the named test cases (each must match at least one case) under a time budget.
Outcome run_cases(const std::vector<std::string>& names, double budget_s) {
    const auto t0 = std::chrono::steady_clock::now();
    int matched = 0, failed = 0;
    std::string failures;
    for (const auto& name : names) {
        g_tally = Tally{};
        doctest::Context ctx;
        ctx.setOption("test-case", name.c_str());
        ctx.setOption("no-intro", true);
        ctx.setOption("no-version", true);
        ctx.setCout(&std::cerr);
        ctx.run();
        if (g_tally.started == 0) {
            ++failed;
            failures += " [no case matches '" + name + "']";
        }
        matched += g_tally.started;
        failed += g_tally.failed;
        for (const auto& f : g_tally.failures) failures += " [" + f + "]";
    }
    const double took = since(t0);
    Outcome o;
    o.pass = failed == 0 && took < budget_s;
    o.detail = std::to_string(matched) + " cases, " + std::to_string(failed) + " failed, " + secs(took) + " (budget " +
               secs(budget_s) + ")" + failures;
    return o;
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ddseg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return ddseg::run_cli(static_cast<int>(argv.size()), argv.data(), std::cerr, std::cerr);
}

double csv_mean_iou(const fs::path& csv) {
    std::ifstream in(csv);
    for (std::string line; std::getline(in, line);) {
        const auto pos = line.find(",meanIoU,");
        if (pos != std::string::npos) return std::stod(line.substr(pos + 9));
    }
    return -1.0;
}

// Default desk dataset, shared by the training and ablation criteria.
fs::path desk_data(const fs::path& work) {
    const auto data = work / "desk";
    if (!fs::exists(data / "test" / "manifest.json")) {
        if (cli({"synth", "--out", data.string(), "--seed", "0"}) != 0) throw std::runtime_error("synth failed");
    }
    return data;
}

// The reference run of this exact pipeline scored 0.9284 test meanIoU; the
// threshold sits five points below it.
constexpr double kDeskThreshold = 0.878;

Outcome desk_training(const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = desk_data(work);
    const auto ckpt = (work / "desk.ckpt").string();
    Outcome o;
    if (cli({"train", "--data", data.string(), "--out", ckpt, "--epochs", "40", "--seed", "0"}) != 0) {
        o.detail = "train failed";
        return o;
    }
    const auto pred = work / "desk_pred";
    if (cli({"predict", "--ckpt", ckpt, "--data", data.string(), "--out", pred.string(), "--steps", "3", "--td", "1",
             "--seed", "0"}) != 0) {
        o.detail = "predict failed";
        return o;
    }
    const auto csv = work / "desk_eval.csv";
    if (cli({"eval", "--pred", pred.string(), "--gt", data.string(), "--csv", csv.string()}) != 0) {
        o.detail = "eval failed";
        return o;
    }
    const double miou = csv_mean_iou(csv);
    const double took = since(t0);
    o.pass = miou >= kDeskThreshold && took < 30 * 60;
    std::ostringstream d;
    d.precision(4);
    d << std::fixed << "test meanIoU " << miou << " (threshold " << kDeskThreshold << "), " << secs(took)
      << " (budget 1800s)";
    o.detail = d.str();
    return o;
}

Outcome ablation(const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = desk_data(work);
    const auto csv = work / "ablation.csv";
    Outcome o;
    const int rc = cli({"ablate", "--data", data.string(), "--csv", csv.string(), "--epochs", "2", "--train-limit",
                        "40", "--test-limit", "10"});
    std::ifstream in(csv);
    std::vector<std::string> rows;
    for (std::string l; std::getline(in, l);) rows.push_back(l);
    const std::vector<std::string> expect{"schedule,cosine,0.01,", "schedule,linear,0.01,", "scale,cosine,0.001,",
                                          "scale,cosine,0.01,",    "scale,cosine,0.03,",    "scale,cosine,0.05,",
                                          "scale,cosine,0.1,"};
    bool rows_ok = rows.size() == expect.size() + 1;
    for (std::size_t i = 0; rows_ok && i < expect.size(); ++i) {
        rows_ok = rows[i + 1].rfind(expect[i], 0) == 0 && rows[i + 1].find("nan") == std::string::npos &&
                  rows[i + 1].find("inf") == std::string::npos;
    }
    o.pass = rc == 0 && rows_ok;
    o.detail = "exit " + std::to_string(rc) + ", " + std::to_string(rows.empty() ? 0 : rows.size() - 1) +
               " rows (2 schedules + 5 scales expected), " + secs(since(t0));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    // optional arguments: the criterion numbers to run (default: all)
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    auto want = [&](int c) { return wanted.empty() || std::find(wanted.begin(), wanted.end(), c) != wanted.end(); };

    const fs::path work = fs::temp_directory_path() / "ddseg_acceptance";
    fs::create_directories(work);

    std::map<int, Outcome> results;
    std::map<int, std::string> titles{
        {1, "paper-scale results out of scope; property and synthetic targets stand in"},
        {2, "gradient integrity (finite differences, 64-bit)"},
        {3, "schedule correctness"},
        {4, "DDIM sanity"},
        {5, "attention oracles"},
        {6, "end-to-end desk training"},
        {7, "challenge-subset machinery"},
        {8, "metric oracle"},
        {9, "reproducibility and formats"},
        {10, "ablation harness"},
    };

    if (want(2)) {
        results[2] = run_cases({"matmul gradient*", "batched matmul gradients", "pointwise and normalization gradients",
                                "broadcasting arithmetic gradients", "shape ops gradients", "conv gradients",
                                "bilinear_sample gradients*", "resampling gradients", "gather_rows gradient",
                                "cross_entropy ignores masked positions", "composite attention gradients*",
                                "full_condition gradients*", "decode gradients*"},
                               120);
    }
    if (want(3)) {
        results[3] = run_cases({"cosine log-snr closed-form values", "alpha_bar is strictly decreasing*",
                                "linear schedule is the cumulative*", "corrupt is the exact affine mix",
                                "corrupt marginal variance*"},
                               60);
    }
    if (want(4)) {
        results[4] = run_cases({"ddim_step fixed point*", "sampler time pairs*", "sampling is deterministic and steps=1*"},
                               60);
    }
    if (want(5)) {
        results[5] = run_cases({"mhsa matches the nested-loop oracle", "zero offsets reduce deform_attend*",
                                "deform_attend matches a step-by-step oracle*",
                                "decoder attention matches a per-query loop oracle"},
                               60);
    }
    if (want(7)) results[7] = run_cases({"challenge subsets"}, 60);
    if (want(8)) results[8] = run_cases({"mean_iou hand case*", "mean_iou equals a brute-force*"}, 60);
    if (want(9)) {
        results[9] = run_cases({"dataset round-trip*", "checkpoint round-trip*", "fit is bitwise reproducible*",
                                "sampling is deterministic*", "seeded commands are byte-for-byte reproducible"},
                               600);
    }
    if (want(10)) results[10] = ablation(work);
    if (want(6)) results[6] = desk_training(work);
    if (want(1)) {
        // holds when every substitute criterion that ran holds
        bool all = true;
        int ran = 0;
        for (const auto& [c, o] : results) {
            all = all && o.pass;
            ++ran;
        }
        results[1] = {all && ran > 0, std::to_string(ran) + " substitute criteria ran"};
    }

    int failed = 0;
    for (const auto& [c, o] : results) {
        std::printf("criterion %2d %s  %s -- %s\n", c, o.pass ? "PASS" : "FAIL", titles[c].c_str(), o.detail.c_str());
        failed += o.pass ? 0 : 1;
    }
    std::fflush(stdout);
    return failed == 0 ? 0 : 1;
}
