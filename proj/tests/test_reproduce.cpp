#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <sstream>

#include <advnf/reproduce.hpp>

using namespace advnf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "advnf_reproduce" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& file) {
    std::istringstream is(csv_body(read_file(file)));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) rows.push_back(detail::split_csv(line));
    return rows;
}

// shrink every experiment to seconds
StudyOptions tiny_options(const fs::path& out, bool lattice) {
    StudyOptions opt;
    opt.out = out;
    opt.seed = 11;
    opt.overrides = {{"dataset.train_size", "20"},
                     {"dataset.test_size", "10"},
                     {"model.layers", "2"},
                     {"model.hidden", "8,8"},
                     {"train.batch_size", "32"},
                     {"train.max_epochs", "1"},
                     {"train.patience", "0"},
                     {"train.phase2_iters", "2"},
                     {"eval.samples", "30"}};
    if (lattice) {
        opt.overrides.push_back({"dataset.n", "3"});
        opt.overrides.push_back({"dataset.temp_count", "2"});
        opt.overrides.push_back({"dataset.val_size", "0"});
        opt.overrides.push_back({"mcmc.burn_in", "100"});
        opt.overrides.push_back({"mcmc.thinning", "1"});
    }
    return opt;
}

}  // namespace

TEST_CASE("table1 study covers every synthetic benchmark and variant") {
    const fs::path dir = fresh_dir("table1");
    const fs::path file = reproduce_table1(tiny_options(dir, false));
    const auto rows = csv_rows(file);
    REQUIRE(rows.size() == 19);  // header + 3 datasets x 6 models
    CHECK(rows[0] == std::vector<std::string>{"dataset", "model", "nll_mean", "nll_std",
                                              "ar_mean", "ar_std"});
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        REQUIRE(rows[r].size() == 6);
        seen.insert(rows[r][0] + "/" + rows[r][1]);
        for (std::size_t c = 2; c < 6; ++c)
            CHECK(std::isfinite(detail::parse_double(rows[r][c])));
        const double ar = detail::parse_double(rows[r][4]);
        CHECK(ar >= 0.0);
        CHECK(ar <= 100.0);
    }
    CHECK(seen.size() == 18);
    CHECK(seen.count("mog4/cnf_fkl") == 1);
    CHECK(seen.count("mog8/advnf_rkl") == 1);
    CHECK(seen.count("rings4/advnf_fkl_rkl") == 1);
    fs::remove_all(dir);
}

TEST_CASE("table2 study reports per-temperature observable agreement") {
    const fs::path dir = fresh_dir("table2");
    const fs::path file = reproduce_table2(tiny_options(dir, true));
    const auto rows = csv_rows(file);
    REQUIRE(rows.size() == 19);  // header + 6 models x (2 temperatures + mean)
    CHECK(rows[0] == std::vector<std::string>{"variant", "condition", "nll", "ar",
                                              "ol_energy", "emd_energy", "ol_mag", "emd_mag"});
    std::set<std::string> models;
    std::size_t mean_rows = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        REQUIRE(rows[r].size() == 8);
        models.insert(rows[r][0]);
        if (rows[r][1] == "mean") ++mean_rows;
        const double ol = detail::parse_double(rows[r][4]);
        CHECK(ol >= 0.0);
        CHECK(ol <= 100.0);
    }
    CHECK(models.size() == 6);
    CHECK(mean_rows == 6);
    CHECK(rows[1][1].rfind("T=", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("table6 study sweeps the training-set size") {
    const fs::path dir = fresh_dir("table6");
    const fs::path file = reproduce_table6(tiny_options(dir, true));
    const auto rows = csv_rows(file);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == std::vector<std::string>{"train_size", "nll_mean", "nll_std", "ar_mean",
                                              "ar_std"});
    CHECK(rows[1][0] == "100");
    CHECK(rows[2][0] == "512");
    CHECK(rows[3][0] == "1024");
    CHECK(rows[4][0] == "5120");
    for (std::size_t r = 1; r < rows.size(); ++r)
        CHECK(std::isfinite(detail::parse_double(rows[r][1])));
    // the generated runs really used the swept size
    Config c = Config::parse_string(preset_config("xy-desk"));
    CHECK(fs::exists(dir / "table6" / "n100"));
    {
        StudyOptions opt = tiny_options(dir, true);
        ExperimentConfig probe = parse_experiment([&] {
            Config cc = Config::parse_string(preset_config("xy-desk"));
            for (const auto& [k, v] : opt.overrides) cc.set(k, v);
            cc.set("dataset.train_size", "100");
            cc.set("run.out", (dir / "table6" / "n100").string());
            return cc;
        }());
        auto is = open_input(paths::ensemble(probe, "train", 0));
        CHECK(read_lattice_ensemble(is).configs.size() == 100);
    }
    fs::remove_all(dir);
}

TEST_CASE("fig3 study dumps per-component scatter data") {
    const fs::path dir = fresh_dir("fig3");
    StudyOptions opt = tiny_options(dir, false);
    reproduce_fig3(opt, 15);
    for (const char* ds : {"mog4", "mog8", "rings4"})
        for (const char* model : {"cnf_rkl", "advnf_rkl"}) {
            const fs::path f = dir / "fig3" / ds / (std::string("samples_") + model + "_c0.csv");
            INFO(f.string());
            REQUIRE(fs::exists(f));
            CHECK(csv_rows(f).size() == 16);  // header + 15 samples
        }
    CHECK(fs::exists(dir / "fig3" / "mog8" / "samples_advnf_rkl_c7.csv"));
    CHECK_FALSE(fs::exists(dir / "fig3" / "mog4" / "samples_advnf_rkl_c4.csv"));
    fs::remove_all(dir);
}

TEST_CASE("fig4 study snapshots the fine-tuning trajectory") {
    const fs::path dir = fresh_dir("fig4");
    StudyOptions opt = tiny_options(dir, false);
    opt.overrides.push_back({"train.phase2_iters", "4"});
    reproduce_fig4(opt, 2, 10);
    // phase-1 model at tag 0, then every other iteration of the 4
    for (const char* tag : {"i0", "i2", "i4"})
        for (int c = 0; c < 4; ++c) {
            const fs::path f =
                dir / "fig4" / ("snapshot_" + std::string(tag) + "_c" + std::to_string(c) + ".csv");
            INFO(f.string());
            REQUIRE(fs::exists(f));
            CHECK(csv_rows(f).size() == 11);
        }
    CHECK(fs::exists(dir / "fig4" / "model_advnf_rkl.ckpt"));
    fs::remove_all(dir);
}

TEST_CASE("observable curves compare the model against the reference") {
    const fs::path dir = fresh_dir("observables");
    const fs::path file = reproduce_observables(tiny_options(dir, true), false, 40);
    const auto rows = csv_rows(file);
    REQUIRE(rows.size() == 5);  // header + 2 temperatures x 2 sources
    CHECK(rows[0] == std::vector<std::string>{"T", "source", "energy_mean", "energy_std",
                                              "mag_mean", "mag_std"});
    CHECK(rows[1][1] == "mcmc");
    CHECK(rows[2][1] == "advnf_rkl_imh");
    CHECK(rows[1][0] == rows[2][0]);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const double em = detail::parse_double(rows[r][2]);
        const double mm = detail::parse_double(rows[r][4]);
        CHECK(em >= -2.0);
        CHECK(em <= 0.0);
        CHECK(mm >= 0.0);
        CHECK(mm <= 1.0);
    }
    fs::remove_all(dir);
}
