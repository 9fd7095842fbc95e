#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/checkpoint.hpp"
#include "fedsim/cli.hpp"
#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/simulation.hpp"

using namespace fedsim;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    fs::path dir = fs::temp_directory_path() / "fedsim_cli_io_tests";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    REQUIRE(out.good());
}

int line_count(const std::string& text) {
    int lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    return lines;
}

// ten-device two-class setup that runs in milliseconds
const char* kTinyConfig =
    "n_devices=10\n"
    "k_selected=4\n"
    "epochs=5\n"
    "batch_size=5\n"
    "rounds=3\n"
    "eta_l0=0.05\n"
    "input_dim=5\n"
    "samples_per_class=30\n"
    "test_samples_per_class=20\n"
    "master_seed=5\n";

CheckpointError::Kind read_kind(const std::string& path, int expected_dim = -1) {
    try {
        read_checkpoint(path, expected_dim);
    } catch (const CheckpointError& e) {
        return e.kind;
    }
    FAIL("read_checkpoint did not throw");
    return CheckpointError::Kind::OpenFailed;
}

}  // namespace

TEST_CASE("empty config text yields the documented defaults") {
    ExperimentConfig cfg = parse_config("");
    CHECK(cfg.n_devices == 50);
    CHECK(cfg.k_selected == 10);
    CHECK(cfg.epochs == 5);
    CHECK(cfg.batch_size == 10);
    CHECK(cfg.rounds == 200);
    CHECK(cfg.eta_l0 == 0.05);
    CHECK(cfg.gamma == 0.0);
    CHECK(cfg.rho == 0.5);
    CHECK(cfg.tau_max == 4);  // epochs - 1 when absent
    CHECK(cfg.strategy.variant == Strategy::FedLga);
    CHECK(cfg.strategy.eta_g == 1.0);
    CHECK(cfg.strategy.mu == 1.0);
    CHECK(cfg.model.kind == ModelKind::Logistic);
    CHECK(cfg.model.input_dim == 20);
    CHECK(cfg.model.num_classes == 2);
    CHECK(cfg.model.hidden_dim == 32);
    CHECK(cfg.data.source == DataConfig::Source::Synth);
    CHECK(cfg.data.samples_per_class == 250);
    CHECK(cfg.data.class_sep == 1.75);
    CHECK(cfg.data.noise_sigma == 0.5);
    CHECK(cfg.classes_per_device == 2);
    CHECK(cfg.master_seed == 42);
    CHECK_FALSE(cfg.target_accuracy.has_value());
    CHECK(cfg.eval_every == 1);
    CHECK(cfg.threads == 1);
}

TEST_CASE("absent tau_max follows an epochs override") {
    ExperimentConfig cfg = parse_config("epochs=7\n");
    CHECK(cfg.epochs == 7);
    CHECK(cfg.tau_max == 6);
    ExperimentConfig pinned = parse_config("epochs=7\ntau_max=3\n");
    CHECK(pinned.tau_max == 3);
}

TEST_CASE("comments, blank lines and whitespace are tolerated") {
    ExperimentConfig cfg = parse_config("# a comment\n\n  rounds = 17  \n\t# another\nrho=0.25\n");
    CHECK(cfg.rounds == 17);
    CHECK(cfg.rho == 0.25);
}

TEST_CASE("config errors name the offending key or line") {
    auto expect = [](const std::string& text, const char* needle) {
        CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains(needle), ConfigError);
    };
    expect("bogus_key=1\n", "bogus_key");
    expect("rounds=5\nrounds=6\n", "duplicate key 'rounds'");
    expect("rounds=five\n", "rounds");
    expect("rho=half\n", "rho");
    expect("rounds\n", "line 1");
    expect("=3\n", "empty key");
    expect("k_selected=60\n", "k_selected");
    expect("k_selected=60\n", "n_devices");
    expect("strategy=fedsgd\n", "strategy");
    expect("gamma=1\n", "gamma");
    expect("data=idx\n", "idx_images");
    expect("model=resnet\n", "model");
}

TEST_CASE("serialize -> parse -> serialize is a fixpoint") {
    ExperimentConfig cfg;
    cfg.n_devices = 12;
    cfg.k_selected = 6;
    cfg.epochs = 4;
    cfg.batch_size = 3;
    cfg.rounds = 7;
    cfg.rho = 0.25;
    cfg.tau_max = 2;
    cfg.strategy.variant = Strategy::FedNova;
    cfg.eta_l0 = 0.125;
    cfg.strategy.eta_g = 1.5;
    cfg.gamma = 0.5;
    cfg.strategy.mu = 0.25;
    cfg.model = ModelSpec{ModelKind::Mlp, 6, 3, 5};
    cfg.data.samples_per_class = 24;
    cfg.data.test_samples_per_class = 8;
    cfg.data.class_sep = 2.5;
    cfg.data.noise_sigma = 0.75;
    cfg.classes_per_device = 3;
    cfg.master_seed = 987654321;
    cfg.target_accuracy = 0.9;
    cfg.eval_every = 2;
    cfg.threads = 2;

    std::string s1 = serialize_config(cfg);
    ExperimentConfig parsed = parse_config(s1);
    std::string s2 = serialize_config(parsed);
    CHECK(s1 == s2);

    CHECK(parsed.strategy.variant == Strategy::FedNova);
    CHECK(parsed.model.kind == ModelKind::Mlp);
    CHECK(parsed.eta_l0 == cfg.eta_l0);
    CHECK(parsed.gamma == cfg.gamma);
    CHECK(parsed.master_seed == cfg.master_seed);
    REQUIRE(parsed.target_accuracy.has_value());
    CHECK(*parsed.target_accuracy == 0.9);

    std::string d1 = serialize_config(ExperimentConfig{});
    CHECK(serialize_config(parse_config(d1)) == d1);
    CHECK_FALSE(parse_config(d1).target_accuracy.has_value());  // absent key stays absent
}

TEST_CASE("idx configs carry their paths through the round trip") {
    ExperimentConfig cfg;
    cfg.data.source = DataConfig::Source::Idx;
    cfg.data.idx_images = "train-images.idx";
    cfg.data.idx_labels = "train-labels.idx";
    cfg.data.idx_test_images = "t10k-images.idx";
    cfg.data.idx_test_labels = "t10k-labels.idx";
    std::string s = serialize_config(cfg);
    ExperimentConfig parsed = parse_config(s);
    CHECK(parsed.data.source == DataConfig::Source::Idx);
    CHECK(parsed.data.idx_images == "train-images.idx");
    CHECK(parsed.data.idx_test_labels == "t10k-labels.idx");
    CHECK(serialize_config(parsed) == s);
}

TEST_CASE("checkpoints round trip bit patterns at any dimension") {
    fs::path path = test_dir() / "roundtrip.ckpt";
    Rng rng(5);
    for (int dim : {0, 1, 10000}) {
        ParamVector params(dim);
        for (double& v : params) v = rng.normal() * std::pow(10.0, rng.uniform_int(-30, 30));
        write_checkpoint(params, path.string());
        ParamVector back = read_checkpoint(path.string(), dim);
        REQUIRE(back.size() == params.size());
        for (size_t i = 0; i < params.size(); ++i) CHECK(back[i] == params[i]);
    }

    // special values survive because the format stores raw bit patterns
    ParamVector special = {0.0, -0.0, std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::quiet_NaN(), 5e-324};
    write_checkpoint(special, path.string());
    ParamVector back = read_checkpoint(path.string());
    REQUIRE(back.size() == special.size());
    for (size_t i = 0; i < special.size(); ++i)
        CHECK(std::bit_cast<uint64_t>(back[i]) == std::bit_cast<uint64_t>(special[i]));

    write_checkpoint({}, path.string());
    CHECK(fs::file_size(path) == 12);
    CHECK(read_checkpoint(path.string()).empty());
}

TEST_CASE("checkpoint failures carry a specific kind") {
    fs::path dir = test_dir();
    CHECK(read_kind((dir / "missing.ckpt").string()) == CheckpointError::Kind::OpenFailed);

    fs::path bad_magic = dir / "bad_magic.ckpt";
    spit(bad_magic, std::string("XLGACKPT") + std::string(4, '\0'));
    CHECK(read_kind(bad_magic.string()) == CheckpointError::Kind::BadMagic);

    fs::path short_file = dir / "short.ckpt";
    spit(short_file, "FLGACK");
    CHECK(read_kind(short_file.string()) == CheckpointError::Kind::Truncated);

    fs::path cut = dir / "cut.ckpt";
    write_checkpoint({1.0, 2.0}, cut.string());
    std::string bytes = slurp(cut);
    spit(cut, bytes.substr(0, bytes.size() - 3));
    CHECK(read_kind(cut.string()) == CheckpointError::Kind::Truncated);

    fs::path padded = dir / "padded.ckpt";
    spit(padded, bytes + "xx");
    CHECK(read_kind(padded.string()) == CheckpointError::Kind::Truncated);

    fs::path ok = dir / "dim.ckpt";
    write_checkpoint({1.0, 2.0, 3.0}, ok.string());
    CHECK(read_kind(ok.string(), 5) == CheckpointError::Kind::DimMismatch);

    CHECK_THROWS_AS(write_checkpoint({1.0}, "/proc/definitely/not/writable"), CheckpointError);
}

TEST_CASE("metrics rows freeze the CSV wire format") {
    CHECK(metrics_header() == "round,strategy,seed,train_loss,test_loss,test_acc,rho_effective,eta_l,wall_ms");

    RoundRecord r;
    r.round = 3;
    r.strategy = Strategy::FedAvg;
    r.train_loss = 0.5;
    r.test_loss = 0.25;
    r.test_accuracy = 0.75;
    r.rho_effective = 0.5;
    r.eta_l = 0.05;
    r.wall_ms = 12.5;
    CHECK(metrics_row(r, 7) == "3,fedavg,7,0.5,0.25,0.75,0.5,0.05,12.5");

    r.train_loss = std::numeric_limits<double>::quiet_NaN();
    CHECK(metrics_row(r, 7) == "3,fedavg,7,nan,0.25,0.75,0.5,0.05,12.5");

    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-0.0) == "-0");
    CHECK(format_double(1e300) == "1e+300");
}

TEST_CASE("identical runs produce byte-identical CSVs once wall time is removed") {
    ExperimentConfig cfg = parse_config(kTinyConfig);
    ExperimentResult a = run_experiment(cfg);
    ExperimentResult b = run_experiment(cfg);
    for (RoundRecord& r : a.records) r.wall_ms = 0.0;
    for (RoundRecord& r : b.records) r.wall_ms = 0.0;

    fs::path pa = test_dir() / "stable_a.csv";
    fs::path pb = test_dir() / "stable_b.csv";
    write_metrics_csv(pa.string(), a.records, cfg.master_seed);
    write_metrics_csv(pb.string(), b.records, cfg.master_seed);
    std::string ca = slurp(pa);
    CHECK(ca == slurp(pb));
    CHECK(line_count(ca) == 4);  // header + 3 rounds
    CHECK(ca.rfind(metrics_header() + "\n", 0) == 0);
}

TEST_CASE("verification reports serialize to parseable JSON lines") {
    SamplingReport sampling = sampling_study(5, 2, 100, 1);
    nlohmann::json js = nlohmann::json::parse(sampling_report_jsonl(sampling));
    CHECK(js["suite"] == "sampling");
    CHECK(js["n_devices"] == 5);
    CHECK(js["k"] == 2);
    CHECK(js["trials"] == 100);
    CHECK(js["freq"].size() == 5);
    CHECK(js["expected"].get<double>() == doctest::Approx(0.4).epsilon(1e-15));

    DegeneracyResult deg;
    deg.identical = true;
    deg.rounds_compared = 50;
    nlohmann::json jd = nlohmann::json::parse(degeneracy_jsonl(deg));
    CHECK(jd["suite"] == "degeneracy");
    CHECK(jd["identical"] == true);
    CHECK(jd["rounds_compared"] == 50);
    CHECK(jd["first_divergent_round"] == -1);

    ApproxErrorReport approx;
    approx.eta_grid = {1e-3, 1e-2};
    approx.win_rate = 0.75;
    approx.aborted_trials = 2;
    ApproxTrial t;
    t.eta_l = 1e-3;
    t.tau = 2;
    t.err_hat = 0.5;
    t.err_raw = 1.0;
    t.win = true;
    approx.trials.push_back(t);
    nlohmann::json ja = nlohmann::json::parse(approx_report_jsonl(approx));
    CHECK(ja["suite"] == "approx");
    CHECK(ja["win_rate"].get<double>() == 0.75);
    CHECK(ja["aborted_trials"] == 2);
    REQUIRE(ja["trials"].size() == 1);
    CHECK(ja["trials"][0]["err_hat"].get<double>() == 0.5);
    CHECK(ja["trials"][0]["win"] == true);
}

TEST_CASE("cli: run writes the metrics file and reports success") {
    fs::path dir = test_dir() / "cli_run";
    fs::remove_all(dir);
    fs::path cfg_path = test_dir() / "tiny.cfg";
    spit(cfg_path, kTinyConfig);

    fs::path ckpt = test_dir() / "final.ckpt";
    int code = cli_run({"run", "--config", cfg_path.string(), "--out", dir.string(), "--checkpoint",
                        ckpt.string()});
    CHECK(code == 0);
    std::string csv = slurp(dir / "run_fedlga_seed5.csv");
    CHECK(line_count(csv) == 4);
    CHECK(csv.rfind(metrics_header() + "\n", 0) == 0);
    ParamVector params = read_checkpoint(ckpt.string());
    CHECK(params.size() == 12);  // logistic on 5 features, 2 classes

    int seeded = cli_run({"run", "--config", cfg_path.string(), "--out", dir.string(), "--seed", "9"});
    CHECK(seeded == 0);
    CHECK(fs::exists(dir / "run_fedlga_seed9.csv"));
}

TEST_CASE("cli: sweep crosses its lists and writes one summary") {
    fs::path dir = test_dir() / "cli_sweep";
    fs::remove_all(dir);
    fs::path cfg_path = test_dir() / "tiny_sweep.cfg";
    spit(cfg_path, kTinyConfig);

    int code = cli_run({"sweep", "--config", cfg_path.string(), "--strategy", "fedavg,fedlga", "--rho",
                        "0,0.5", "--out", dir.string()});
    CHECK(code == 0);
    int sweep_files = 0;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().filename().string().rfind("sweep_", 0) == 0) ++sweep_files;
    CHECK(sweep_files == 4);
    std::string summary = slurp(dir / "summary.csv");
    CHECK(line_count(summary) == 5);  // header + 4 cells
    CHECK(summary.rfind("strategy,rho,epochs,k_selected,n_devices,seed,rounds_to_target,final_test_acc\n", 0) ==
          0);
}

TEST_CASE("cli: an invalid sweep grid fails before any cell runs") {
    fs::path dir = test_dir() / "cli_sweep_bad";
    fs::remove_all(dir);
    fs::path cfg_path = test_dir() / "tiny_sweep_bad.cfg";
    spit(cfg_path, kTinyConfig);

    // k = 40 exceeds n_devices = 10 in the second cell; nothing may be written
    int code = cli_run({"sweep", "--config", cfg_path.string(), "--k", "4,40", "--out", dir.string()});
    CHECK(code == 2);
    CHECK_FALSE(fs::exists(dir / "summary.csv"));
}

TEST_CASE("cli: check degeneracy suite passes and logs a report line") {
    fs::path cfg_path = test_dir() / "tiny_check.cfg";
    spit(cfg_path, kTinyConfig);
    fs::path report = test_dir() / "check.jsonl";
    fs::remove(report);

    int code = cli_run({"check", "--suite", "degeneracy", "--config", cfg_path.string(), "--out",
                        report.string()});
    CHECK(code == 0);
    nlohmann::json j = nlohmann::json::parse(slurp(report));
    CHECK(j["suite"] == "degeneracy");
    CHECK(j["identical"] == true);
}

TEST_CASE("cli: partition-info prints and succeeds") {
    fs::path cfg_path = test_dir() / "tiny_pinfo.cfg";
    spit(cfg_path, kTinyConfig);
    CHECK(cli_run({"partition-info", "--config", cfg_path.string()}) == 0);
}

TEST_CASE("cli: exit codes separate usage, config and runtime failures") {
    CHECK(cli_run({"run", "--no-such-flag"}) == 2);
    CHECK(cli_run({}) == 2);
    CHECK(cli_run({"--help"}) == 0);
    CHECK(cli_run({"run", "--config", (test_dir() / "missing.cfg").string()}) == 2);

    fs::path bad_cfg = test_dir() / "bad.cfg";
    spit(bad_cfg, "k_selected=60\n");
    CHECK(cli_run({"run", "--config", bad_cfg.string()}) == 2);

    fs::path cfg_path = test_dir() / "tiny_fail.cfg";
    spit(cfg_path, kTinyConfig);
    CHECK(cli_run({"run", "--config", cfg_path.string(), "--out", "/proc/nope/out"}) == 1);
    CHECK(cli_run({"check", "--suite", "nonsense", "--config", cfg_path.string()}) == 2);
}
