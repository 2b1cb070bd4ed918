#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <sstream>

#include <advnf/config.hpp>
#include <advnf/dataset_io.hpp>
#include <advnf/mcmc.hpp>

using namespace advnf;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("config parses sections, comments, and whitespace") {
    const std::string text =
        "# leading comment\n"
        "[dataset]\n"
        "kind = xy   # trailing comment\n"
        "  n=16\n"
        "\n"
        "[ run ]\n"
        "seed = 7\n";
    Config c = Config::parse_string(text);
    CHECK(c.get_string("dataset.kind") == "xy");
    CHECK(c.get_string("dataset.n") == "16");
    CHECK(c.get_string("run.seed") == "7");
    CHECK(c.has("dataset.kind"));
    CHECK_FALSE(c.has("dataset.kindness"));
    CHECK(c.get_string("dataset.missing", "fallback") == "fallback");
    CHECK(c.entries().size() == 3);

    c.set("run.jobs", "4");
    CHECK(c.get_size("run.jobs") == 4);
}

TEST_CASE("config parse errors carry line numbers") {
    CHECK_THROWS_MATCHES(Config::parse_string("[dataset]\n[oops\n"), ValueError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 2")));
    CHECK_THROWS_MATCHES(Config::parse_string("kind = xy\n"), ValueError,
                         Catch::Matchers::MessageMatches(
                             ContainsSubstring("outside any section")));
    CHECK_THROWS_MATCHES(Config::parse_string("[a]\nnovalue\n"), ValueError,
                         Catch::Matchers::MessageMatches(
                             ContainsSubstring("expected key = value")));
    CHECK_THROWS_MATCHES(Config::parse_string("[a]\n= 3\n"), ValueError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("empty key")));
    CHECK_THROWS_MATCHES(Config::parse_string("[]\n"), ValueError,
                         Catch::Matchers::MessageMatches(
                             ContainsSubstring("empty section name")));
}

TEST_CASE("typed getters convert and validate") {
    Config c = Config::parse_string(
        "[t]\n"
        "lr = 1e-4\n"
        "count = 12\n"
        "on = yes\n"
        "off = 0\n"
        "hidden = 16, 32,8\n"
        "temps = 0.5, 1.0,2\n"
        "bad_int = 12x\n"
        "bad_float = 1e\n"
        "bad_bool = maybe\n"
        "empty =\n");
    CHECK(c.get_double("t.lr") == 1e-4);
    CHECK(c.get_double("t.absent", 0.25) == 0.25);
    CHECK(c.get_u64("t.count") == 12);
    CHECK(c.get_u64("t.absent", 9) == 9);
    CHECK(c.get_size("t.count") == 12);
    CHECK(c.get_bool("t.on"));
    CHECK_FALSE(c.get_bool("t.off"));
    CHECK(c.get_bool("t.absent", true));
    CHECK(c.get_sizes("t.hidden") == std::vector<std::size_t>{16, 32, 8});
    CHECK(c.get_doubles("t.temps") == std::vector<double>{0.5, 1.0, 2.0});

    CHECK_THROWS_AS(c.get_string("t.absent"), ValueError);
    CHECK_THROWS_AS(c.get_u64("t.bad_int"), ValueError);
    CHECK_THROWS_AS(c.get_u64("t.lr"), ValueError);
    CHECK_THROWS_AS(c.get_double("t.bad_float"), ValueError);
    CHECK_THROWS_AS(c.get_bool("t.bad_bool"), ValueError);
    CHECK_THROWS_AS(c.get_doubles("t.empty"), ValueError);
    CHECK_THROWS_AS(c.get_sizes("t.empty"), ValueError);
    CHECK_THROWS_AS(c.get_sizes("t.temps"), ValueError);
}

TEST_CASE("canonical text is sorted and the hash tracks content") {
    Config a = Config::parse_string("[b]\nz = 1\n[a]\ny = 2\n");
    Config b = Config::parse_string("[a]\ny = 2\n[b]\nz = 1\n");
    CHECK(a.canonical() == "a.y=2\nb.z=1\n");
    CHECK(a.canonical() == b.canonical());
    CHECK(a.hash() == b.hash());

    Config d = Config::parse_string("[b]\nz = 1\n[a]\ny = 3\n");
    CHECK(a.hash() != d.hash());
    CHECK(a.hash() != 0);
}

TEST_CASE("temperature grid includes both endpoints") {
    const auto t = temperature_grid(0.25, 2.0, 8);
    REQUIRE(t.size() == 8);
    CHECK(t.front() == 0.25);
    CHECK(t.back() == 2.0);
    for (std::size_t i = 1; i < t.size(); ++i)
        CHECK_THAT(t[i] - t[i - 1], Catch::Matchers::WithinAbs(0.25, 1e-12));

    const auto native = temperature_grid(0.05, 2.05, 32);
    REQUIRE(native.size() == 32);
    CHECK(native.front() == 0.05);
    CHECK(native.back() == 2.05);

    CHECK(temperature_grid(1.5, 9.0, 1) == std::vector<double>{1.5});
    CHECK_THROWS_AS(temperature_grid(0.0, 2.0, 8), ValueError);
    CHECK_THROWS_AS(temperature_grid(2.0, 1.0, 8), ValueError);
    CHECK_THROWS_AS(temperature_grid(0.5, 2.0, 0), ValueError);
}

TEST_CASE("shipped presets parse and carry the documented scales") {
    for (const char* name :
         {"mog4", "mog8", "rings4", "xy-native", "xy-desk", "exy-native", "exy-desk"}) {
        INFO(name);
        CHECK_NOTHROW(Config::parse_string(preset_config(name)));
    }

    Config mog4 = Config::parse_string(preset_config("mog4"));
    CHECK(mog4.get_string("dataset.kind") == "mog4");
    CHECK(mog4.get_size("dataset.train_size") == 1000);
    CHECK(mog4.get_size("dataset.test_size") == 250);
    CHECK(mog4.get_size("model.layers") == 10);
    CHECK(mog4.get_sizes("model.hidden") == std::vector<std::size_t>{32, 32});
    CHECK(mog4.get_string("model.projection") == "none");
    CHECK(mog4.get_size("train.batch_size") == 256);
    CHECK(mog4.get_size("train.phase2_iters") == 3000);
    CHECK(mog4.get_double("train.lr_gen") == 1e-4);
    CHECK(mog4.get_double("train.lr_disc") == 5e-5);
    CHECK(mog4.get_bool("train.lr_decay"));

    Config mog8 = Config::parse_string(preset_config("mog8"));
    CHECK(mog8.get_size("dataset.train_size") == 500);

    Config xyd = Config::parse_string(preset_config("xy-desk"));
    CHECK(xyd.get_size("dataset.n") == 4);
    CHECK(xyd.get_double("dataset.J") == 1.0);
    CHECK(xyd.get_double("dataset.K") == 0.0);
    CHECK(xyd.get_double("dataset.temp_lo") == 0.25);
    CHECK(xyd.get_double("dataset.temp_hi") == 2.0);
    CHECK(xyd.get_size("dataset.temp_count") == 8);
    CHECK(xyd.get_size("dataset.train_size") == 1000);
    CHECK(xyd.get_size("model.layers") == 6);
    CHECK(xyd.get_sizes("model.hidden") == std::vector<std::size_t>{16, 16});
    CHECK(xyd.get_string("model.projection") == "sigmoid");
    CHECK(xyd.get_size("mcmc.burn_in") == 10000);
    CHECK(xyd.get_size("mcmc.thinning") == 10);
    CHECK(xyd.get_string("mcmc.proposal") == "perturbation");
    CHECK(xyd.get_double("mcmc.delta") == 1.0);
    CHECK(xyd.get_size("train.phase2_iters") == 600);

    Config xyn = Config::parse_string(preset_config("xy-native"));
    CHECK(xyn.get_size("dataset.n") == 16);
    CHECK(xyn.get_double("dataset.temp_lo") == 0.05);
    CHECK(xyn.get_double("dataset.temp_hi") == 2.05);
    CHECK(xyn.get_size("dataset.temp_count") == 32);
    CHECK(xyn.get_size("dataset.train_size") == 5000);
    CHECK(xyn.get_size("model.layers") == 50);
    CHECK(xyn.get_sizes("model.hidden") == std::vector<std::size_t>{128, 128});
    CHECK(xyn.get_size("train.phase2_iters") == 10000);

    Config exn = Config::parse_string(preset_config("exy-native"));
    CHECK(exn.get_double("dataset.J") == 1.0);
    CHECK(exn.get_double("dataset.K") == 1.0);
    CHECK(exn.get_double("dataset.temp_lo") == 0.5);
    CHECK(exn.get_double("dataset.temp_hi") == 3.5);
    CHECK(exn.get_size("dataset.temp_count") == 50);

    Config exd = Config::parse_string(preset_config("exy-desk"));
    CHECK(exd.get_size("dataset.temp_count") == 8);
    CHECK(exd.get_size("dataset.n") == 4);

    CHECK_THROWS_MATCHES(preset_config("mog16"), ValueError,
                         Catch::Matchers::MessageMatches(
                             ContainsSubstring("unknown preset")));
}

TEST_CASE("synthetic dataset files round trip bit-exactly") {
    SyntheticTarget t = make_synthetic_target(SyntheticKind::mog4);
    Rng rng(5);
    SyntheticDataset d = generate_synthetic_dataset(t, 3, rng);

    FileMeta meta;
    meta.config_hash = 42;
    meta.seed = 7;
    meta.extra = {{"split", "train"}};
    std::ostringstream os;
    write_synthetic_dataset(os, d, t, meta);
    const std::string text = os.str();

    CHECK(text.rfind("# config_hash=42 seed=7\n# split=train\n", 0) == 0);
    {
        std::istringstream is(text);
        std::string line;
        REQUIRE(detail::next_data_line(is, line));
        CHECK(line == "x1,x2,component_index,cond1,cond2");
    }

    std::istringstream is(text);
    SyntheticDataset back = read_synthetic_dataset(is);
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(std::memcmp(back.x[i].data(), d.x[i].data(), 2 * sizeof(double)) == 0);
        CHECK(back.component[i] == d.component[i]);
    }

    SECTION("ring datasets carry the radius as the condition column") {
        SyntheticTarget rt = make_synthetic_target(SyntheticKind::rings4);
        SyntheticDataset rd = generate_synthetic_dataset(rt, 1, rng);
        std::ostringstream ros;
        write_synthetic_dataset(ros, rd, rt, meta);
        std::istringstream ris(ros.str());
        std::string line;
        REQUIRE(detail::next_data_line(ris, line));
        CHECK(line == "x1,x2,component_index,cond1");
        REQUIRE(detail::next_data_line(ris, line));  // component 0, radius 1
        auto f = detail::split_csv(line);
        REQUIRE(f.size() == 4);
        CHECK(f[2] == "0");
        CHECK(f[3] == "1");
    }

    SECTION("malformed input is rejected") {
        std::istringstream bad1("a,b,c\n1,2,0\n");
        CHECK_THROWS_MATCHES(read_synthetic_dataset(bad1), ValueError,
                             Catch::Matchers::MessageMatches(
                                 ContainsSubstring("unexpected header")));
        std::istringstream bad2("x1,x2,component_index\n1,2\n");
        CHECK_THROWS_AS(read_synthetic_dataset(bad2), ValueError);
        std::istringstream bad3("x1,x2,component_index\n1,huh,0\n");
        CHECK_THROWS_MATCHES(read_synthetic_dataset(bad3), ValueError,
                             Catch::Matchers::MessageMatches(
                                 ContainsSubstring("bad number 'huh'")));
        std::istringstream empty("");
        CHECK_THROWS_MATCHES(read_synthetic_dataset(empty), ValueError,
                             Catch::Matchers::MessageMatches(
                                 ContainsSubstring("missing header")));
    }
}

TEST_CASE("lattice ensembles round trip bit-exactly") {
    const std::size_t n = 3;
    LatticeCondition cond{0.8, 1.0, 0.5};
    Rng rng(11);
    std::vector<SpinConfig> configs;
    for (int k = 0; k < 4; ++k) {
        SpinConfig c(n);
        for (std::size_t s = 0; s < n * n; ++s) c.theta[s] = rng.uniform(-M_PI, M_PI);
        configs.push_back(std::move(c));
    }

    std::ostringstream os;
    write_lattice_ensemble(os, configs, cond, FileMeta{1, 2, {}});
    std::istringstream is(os.str());
    LatticeEnsemble e = read_lattice_ensemble(is);

    REQUIRE(e.n == n);
    CHECK(e.cond.T == cond.T);
    CHECK(e.cond.J == cond.J);
    CHECK(e.cond.K == cond.K);
    REQUIRE(e.configs.size() == configs.size());
    for (std::size_t k = 0; k < configs.size(); ++k)
        CHECK(std::memcmp(e.configs[k].theta.data(), configs[k].theta.data(),
                          n * n * sizeof(double)) == 0);

    SECTION("rows with different conditions cannot share a file") {
        LatticeCondition other{1.4, 1.0, 0.5};
        std::ostringstream os2;
        write_lattice_ensemble(os2, {configs[0]}, other, FileMeta{});
        std::istringstream mixed(os.str() + os2.str());
        CHECK_THROWS_MATCHES(read_lattice_ensemble(mixed), ValueError,
                             Catch::Matchers::MessageMatches(
                                 ContainsSubstring("mixed conditions")));
    }

    SECTION("short and inconsistent rows are rejected") {
        std::istringstream bad1("3,1,1,0\n");
        CHECK_THROWS_AS(read_lattice_ensemble(bad1), ValueError);
        std::istringstream bad2("2,1,1,0,0.1,0.2,0.3\n");  // 3 angles for n=2
        CHECK_THROWS_MATCHES(read_lattice_ensemble(bad2), ValueError,
                             Catch::Matchers::MessageMatches(ContainsSubstring("angles")));
        std::istringstream empty("# only metadata\n");
        CHECK_THROWS_MATCHES(read_lattice_ensemble(empty), ValueError,
                             Catch::Matchers::MessageMatches(ContainsSubstring("empty")));
        std::istringstream badT("2,0,1,0,0.1,0.2,0.3,0.4\n");  // T = 0 fails validation
        CHECK_THROWS_AS(read_lattice_ensemble(badT), ValueError);
    }
}

TEST_CASE("loss traces serialize with the fixed header") {
    std::vector<TraceRow> trace(2);
    trace[0].phase = 1;
    trace[0].iteration = 0;
    trace[0].l1 = 0.0;
    trace[0].l2 = 0.0;
    trace[0].l3 = 1.0;
    trace[0].total = 2.5;
    trace[0].fkl = 2.5;
    trace[0].lr_gen = 1e-4;
    trace[0].lr_disc = 5e-5;
    trace[1].phase = 2;
    trace[1].iteration = 3;
    trace[1].l1 = 4.0;
    trace[1].l2 = 0.5;
    trace[1].l3 = 1.0;
    trace[1].total = -0.25;
    trace[1].fkl = 1.5;
    trace[1].rkl = 0.8;
    trace[1].adv = 1.25;
    trace[1].lr_gen = 5e-5;
    trace[1].lr_disc = 2.5e-5;

    std::ostringstream os;
    write_loss_trace(os, trace, FileMeta{9, 1, {}});
    CHECK(csv_body(os.str()) ==
          "phase,iteration,lambda1,lambda2,lambda3,loss_total,loss_fkl,loss_rkl,loss_adv,"
          "lr_gen,lr_disc\n"
          "1,0,0,0,1,2.5,2.5,nan,nan,1e-04,5e-05\n"
          "2,3,4,0.5,1,-0.25,1.5,0.8,1.25,5e-05,2.5e-05\n");
}

TEST_CASE("sample dumps carry one log density per row") {
    Tensor x({2, 2});
    x[0] = 1.5;
    x[1] = -0.25;
    x[2] = 3.0;
    x[3] = 4.0;
    std::ostringstream os;
    write_samples(os, x, {-1.25, -2.0}, FileMeta{});
    CHECK(csv_body(os.str()) ==
          "x1,x2,log_q\n"
          "1.5,-0.25,-1.25\n"
          "3,4,-2\n");

    CHECK_THROWS_AS(write_samples(os, x, {-1.25}, FileMeta{}), ValueError);
    Tensor flat({4});
    CHECK_THROWS_AS(write_samples(os, flat, {1, 2, 3, 4}, FileMeta{}), ValueError);
}

TEST_CASE("metadata lines never leak into comparisons or readers") {
    const std::string a = "# config_hash=1 seed=2\nx1,x2\n1,2\n";
    const std::string b = "# config_hash=9 seed=9\n# note=rerun\nx1,x2\n1,2\n";
    CHECK(csv_body(a) == csv_body(b));
    CHECK(csv_body(a) == "x1,x2\n1,2\n");

    std::istringstream is("# meta\n\n# more\nvalue line\n");
    std::string line;
    REQUIRE(detail::next_data_line(is, line));
    CHECK(line == "value line");
    CHECK_FALSE(detail::next_data_line(is, line));

    SECTION("windows line endings are tolerated") {
        std::istringstream crlf("x1,x2,component_index\r\n0.5,1.5,0\r\n");
        SyntheticDataset d = read_synthetic_dataset(crlf);
        REQUIRE(d.size() == 1);
        CHECK(d.x[0][0] == 0.5);
        CHECK(d.x[0][1] == 1.5);
    }
}

TEST_CASE("file helpers create directories and survive round trips") {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "advnf_io_test";
    fs::remove_all(root);
    const fs::path file = root / "sub" / "samples.csv";

    {
        auto os = open_output(file);
        os << "# meta\nx1\n0.5\n";
    }
    REQUIRE(fs::exists(file));
    CHECK(read_file(file) == "# meta\nx1\n0.5\n");
    {
        auto is = open_input(file);
        std::string line;
        REQUIRE(detail::next_data_line(is, line));
        CHECK(line == "x1");
    }
    CHECK_THROWS_AS(open_input(root / "absent.csv"), ValueError);
    fs::remove_all(root);
}
