#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>

#include "emofuse/metrics.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct RunOutcome {
    int code = -1;
    std::string out;
    std::string err;
};

RunOutcome run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_file =
        fs::temp_directory_path() / ("emofuse_cli_out_" + std::to_string(getpid()) + "_" +
                                     std::to_string(counter));
    const fs::path err_file =
        fs::temp_directory_path() / ("emofuse_cli_err_" + std::to_string(getpid()) + "_" +
                                     std::to_string(counter));
    ++counter;
    const std::string cmd = std::string(EMOFUSE_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    RunOutcome outcome;
    outcome.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    outcome.out = test_util::read_file(out_file);
    outcome.err = test_util::read_file(err_file);
    fs::remove(out_file);
    fs::remove(err_file);
    return outcome;
}

// name -> content for every regular file under a directory
std::map<std::string, std::string> dir_contents(const fs::path& dir,
                                                const std::string& skip_suffix = "") {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), dir).string();
        if (!skip_suffix.empty() && rel.size() >= skip_suffix.size() &&
            rel.compare(rel.size() - skip_suffix.size(), skip_suffix.size(), skip_suffix) == 0)
            continue;
        out[rel] = test_util::read_file(entry.path());
    }
    return out;
}

std::string strip_seconds_column(const std::string& csv) {
    std::string out;
    size_t pos = 0;
    while (pos < csv.size()) {
        size_t eol = csv.find('\n', pos);
        if (eol == std::string::npos) eol = csv.size();
        std::string line = csv.substr(pos, eol - pos);
        const size_t last_comma = line.rfind(',');
        if (last_comma != std::string::npos) line = line.substr(0, last_comma);
        out += line + "\n";
        pos = eol + 1;
    }
    return out;
}

}  // namespace

TEST_CASE("usage errors exit 2, --help exits 0 and lists defaults") {
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("no-such-command").code == 2);
    CHECK(run_cli("train").code == 2);  // missing required flags

    for (const std::string sub :
         {"fixture", "prepare-faces", "train", "eval", "predict", "report"}) {
        const RunOutcome r = run_cli(sub + " --help");
        CHECK(r.code == 0);
        CHECK(r.out.find("--") != std::string::npos);
    }
    const RunOutcome train_help = run_cli("train --help");
    CHECK(train_help.out.find("--lr0") != std::string::npos);
    CHECK(train_help.out.find("0.005") != std::string::npos);  // default shown
    CHECK(train_help.out.find("--theta") != std::string::npos);
    CHECK(train_help.out.find("--batch-size") != std::string::npos);
}

TEST_CASE("fixture runs are byte-identical") {
    test_util::TempDir d1("cli_fix1"), d2("cli_fix2");
    CHECK(run_cli("fixture --n 20 --seed 3 --out " + d1.path().string()).code == 0);
    CHECK(run_cli("fixture --n 20 --seed 3 --out " + d2.path().string()).code == 0);
    CHECK(dir_contents(d1.path()) == dir_contents(d2.path()));

    test_util::TempDir d3("cli_fix3");
    CHECK(run_cli("fixture --n 20 --seed 4 --out " + d3.path().string()).code == 0);
    CHECK(dir_contents(d1.path()) != dir_contents(d3.path()));
}

TEST_CASE("eval on a missing checkpoint fails with a path-bearing message") {
    test_util::TempDir data("cli_data");
    CHECK(run_cli("fixture --n 8 --seed 1 --out " + data.path().string()).code == 0);
    const RunOutcome r = run_cli(
        "eval --checkpoint /nonexistent/ckpt.emf --annotations " +
        (data / "annotations.csv").string() + " --data-root " + data.path().string());
    CHECK(r.code == 1);
    CHECK(r.err.find("/nonexistent/ckpt.emf") != std::string::npos);
}

TEST_CASE("full pipeline: fixture, faces, train, eval, predict, report") {
    test_util::TempDir data("cli_data"), faces("cli_faces"), run1("cli_run1"),
        run2("cli_run2"), evald("cli_eval"), rep("cli_rep");

    REQUIRE(run_cli("fixture --n 60 --seed 5 --out " + data.path().string()).code == 0);
    const std::string annotations = (data / "annotations.csv").string();
    REQUIRE(run_cli("prepare-faces --annotations " + annotations + " --data-root " +
                    data.path().string() + " --out " + faces.path().string())
                .code == 0);
    CHECK(fs::exists(faces / "manifest.csv"));

    const std::string train_args =
        " --annotations " + annotations + " --data-root " + data.path().string() +
        " --faces-cache " + faces.path().string() +
        " --branches body,context,face --task joint --epochs 2 --lr0 0.05 --seed 9";
    REQUIRE(run_cli("train" + train_args + " --out " + run1.path().string()).code == 0);
    REQUIRE(run_cli("train" + train_args + " --out " + run2.path().string()).code == 0);

    // idempotent up to the wall-time column of the log
    auto c1 = dir_contents(run1.path());
    auto c2 = dir_contents(run2.path());
    REQUIRE(c1.count("trainlog.csv"));
    c1["trainlog.csv"] = strip_seconds_column(c1["trainlog.csv"]);
    c2["trainlog.csv"] = strip_seconds_column(c2["trainlog.csv"]);
    CHECK(c1 == c2);

    const std::string ckpt = (run1 / "checkpoint_best.emf").string();
    const RunOutcome eval_run =
        run_cli("eval --checkpoint " + ckpt + " --annotations " + annotations +
                " --data-root " + data.path().string() + " --faces-cache " +
                faces.path().string() + " --split test --out " + evald.path().string());
    REQUIRE(eval_run.code == 0);
    CHECK(eval_run.out.find("toy_rand_16") != std::string::npos);  // table on stdout
    REQUIRE(fs::exists(evald / "eval_report.json"));

    // report lists exactly the 3 configured branch names
    const emofuse::EvalReport report = emofuse::EvalReport::from_json(
        test_util::read_file(evald / "eval_report.json"));
    REQUIRE(report.branch_names.size() == 3);
    for (const auto& name : report.branch_names) CHECK(name == "toy_rand_16");

    // predict on one fixture image
    const RunOutcome predict_run = run_cli(
        "predict --checkpoint " + ckpt + " --image " + (data / "img_00000.png").string() +
        " --box 10,10,40,40");
    REQUIRE(predict_run.code == 0);
    CHECK(predict_run.out.find("disc_scores") != std::string::npos);
    CHECK(predict_run.out.find("vad_pred") != std::string::npos);

    // report figures, byte-identical across runs at a fixed seed
    test_util::TempDir rep2("cli_rep2");
    const std::string report_args =
        " --checkpoint " + ckpt + " --annotations " + annotations + " --data-root " +
        data.path().string() + " --faces-cache " + faces.path().string() +
        " --seed 7 --grid-k 4";
    REQUIRE(run_cli("report" + report_args + " --out " + rep.path().string()).code == 0);
    REQUIRE(run_cli("report" + report_args + " --out " + rep2.path().string()).code == 0);
    CHECK(fs::exists(rep / "ap_per_category.png"));
    CHECK(fs::exists(rep / "vad_error_hist.png"));
    CHECK(fs::exists(rep / "samples_grid.png"));
    CHECK(dir_contents(rep.path()) == dir_contents(rep2.path()));

    // predict twice: identical JSON on stdout
    const RunOutcome p1 = run_cli("predict --checkpoint " + ckpt + " --image " +
                                  (data / "img_00001.png").string() + " --box 8,8,40,48");
    const RunOutcome p2 = run_cli("predict --checkpoint " + ckpt + " --image " +
                                  (data / "img_00001.png").string() + " --box 8,8,40,48");
    CHECK(p1.code == 0);
    CHECK(p1.out == p2.out);
}

TEST_CASE("train honors a config file with CLI flags overriding") {
    test_util::TempDir data("cli_data"), out("cli_out");
    REQUIRE(run_cli("fixture --n 30 --seed 2 --out " + data.path().string()).code == 0);
    test_util::write_file(data / "run.cfg",
                          "branches = body\nepochs = 1\ntask = continuous\nlr0 = 0.02\n");
    const RunOutcome r = run_cli(
        "train --config " + (data / "run.cfg").string() + " --annotations " +
        (data / "annotations.csv").string() + " --data-root " + data.path().string() +
        " --epochs 2 --out " + out.path().string());
    REQUIRE(r.code == 0);
    // config file picked body-only branches; CLI override bumped epochs to 2
    const std::string log = test_util::read_file(out / "trainlog.csv");
    CHECK(log.find("\n1,") != std::string::npos);   // epoch 1 exists
    CHECK(log.find("\n2,") == std::string::npos);   // no epoch 2
    const std::string sidecar = test_util::read_file(out / "checkpoint_best.emf.json");
    CHECK(sidecar.find("\"body\": \"toy_rand_16\"") != std::string::npos);
    CHECK(sidecar.find("\"context\": \"\"") != std::string::npos);
}
