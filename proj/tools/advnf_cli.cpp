// advnf — conditional normalizing flows for multi-modal targets.
//
// Subcommands cover the full experiment cycle: gen-data draws the reference
// ensembles, train fits a flow variant, evaluate scores it against held-out
// data, sample dumps (optionally de-biased) model samples, and reproduce
// runs the published benchmark studies end to end.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <advnf/pipeline.hpp>
#include <advnf/reproduce.hpp>

namespace {

struct CommonArgs {
    std::string config_file;
    std::string preset;
    std::vector<std::string> sets;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t jobs = 0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    auto* cfg = cmd->add_option("-c,--config", a.config_file, "experiment config file");
    auto* pre = cmd->add_option("-p,--preset", a.preset,
                                "built-in preset (mog4, mog8, rings4, xy-native, xy-desk, "
                                "exy-native, exy-desk)");
    cfg->excludes(pre);
    cmd->add_option("--set", a.sets, "override a config key, e.g. --set train.max_epochs=50")
        ->type_name("KEY=VALUE");
    cmd->add_option("-o,--out", a.out, "run directory (overrides run.out)");
    cmd->add_option("--seed", a.seed, "master seed (overrides run.seed)")
        ->each([&](const std::string&) { a.seed_given = true; });
    cmd->add_option("-j,--jobs", a.jobs, "worker threads for evaluation");
}

advnf::ExperimentConfig load_experiment(const CommonArgs& a) {
    advnf::Config c;
    if (!a.config_file.empty()) {
        auto is = advnf::open_input(a.config_file);
        c = advnf::Config::parse(is);
    } else if (!a.preset.empty()) {
        c = advnf::Config::parse_string(advnf::preset_config(a.preset));
    } else {
        throw advnf::ValueError("need --config FILE or --preset NAME");
    }
    for (const std::string& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw advnf::ValueError("--set expects KEY=VALUE, got '" + kv + "'");
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.seed_given) c.set("run.seed", std::to_string(a.seed));
    if (a.jobs > 0) c.set("run.jobs", std::to_string(a.jobs));
    if (!a.out.empty()) c.set("run.out", a.out);
    return advnf::parse_experiment(c);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional normalizing flows for multi-modal sampling"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "generate the reference datasets");
    add_common(gen, gen_args);

    CommonArgs train_args;
    auto* train = app.add_subcommand("train", "fit a flow on the generated data");
    add_common(train, train_args);

    CommonArgs eval_args;
    auto* eval = app.add_subcommand("evaluate", "score a trained flow on held-out data");
    add_common(eval, eval_args);

    CommonArgs sample_args;
    std::size_t sample_component = 0;
    double sample_T = 0.0;
    std::size_t sample_n = 1000;
    bool sample_imh = false;
    auto* sample = app.add_subcommand("sample", "draw samples from a trained flow");
    add_common(sample, sample_args);
    sample->add_option("--component", sample_component,
                       "mixture component to condition on (synthetic targets)");
    auto* t_opt = sample->add_option("-T,--temperature", sample_T,
                                     "temperature to condition on (lattice targets)");
    sample->add_option("-n,--samples", sample_n, "number of samples")->capture_default_str();
    sample->add_flag("--imh", sample_imh,
                     "de-bias through independent Metropolis-Hastings resampling");

    std::string study;
    CommonArgs rep_args;
    bool rep_native = false;
    auto* rep = app.add_subcommand("reproduce", "run a published benchmark study");
    rep->add_option("study", study,
                    "table1, table2, table3, table6, fig3, fig4, observables, observables-exy")
        ->required();
    rep->add_option("--set", rep_args.sets, "override a config key for every experiment")
        ->type_name("KEY=VALUE");
    rep->add_option("-o,--out", rep_args.out, "study output directory")->capture_default_str();
    rep->add_option("--seed", rep_args.seed, "master seed")
        ->each([&](const std::string&) { rep_args.seed_given = true; });
    rep->add_option("-j,--jobs", rep_args.jobs, "worker threads for evaluation");
    rep->add_flag("--native", rep_native, "published experiment scales (hours), not desk ones");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            const advnf::ExperimentConfig e = load_experiment(gen_args);
            advnf::run_gen_data(e);
            std::printf("wrote %s data for %zu condition(s) to %s\n",
                        advnf::dataset_kind_name(e.kind), e.n_conditions(),
                        e.out.string().c_str());
        } else if (train->parsed()) {
            const advnf::ExperimentConfig e = load_experiment(train_args);
            const advnf::TrainOutcome t = advnf::run_train(e);
            std::printf("%s: %zu epoch(s), %zu adversarial iteration(s), best loss %g\n",
                        e.label().c_str(), t.phase1.epochs_run, t.phase2.iterations_run,
                        t.phase1.best_loss);
            std::printf("checkpoint: %s\n", t.checkpoint.string().c_str());
        } else if (eval->parsed()) {
            const advnf::ExperimentConfig e = load_experiment(eval_args);
            const advnf::EvalOutcome ev = advnf::run_evaluate(e);
            if (e.synthetic())
                std::printf("%s: mean NLL %g, mean acceptance %g%%\n", e.label().c_str(),
                            ev.synthetic.mean.nll, ev.synthetic.mean.ar);
            else
                std::printf("%s: mean NLL %g, acceptance %g%%, energy overlap %g%%\n",
                            e.label().c_str(), ev.lattice.mean.nll, ev.lattice.mean.ar,
                            ev.lattice.mean.ol_energy);
            std::printf("metrics: %s\n", ev.metrics.string().c_str());
        } else if (sample->parsed()) {
            const advnf::ExperimentConfig e = load_experiment(sample_args);
            if (!e.synthetic() && t_opt->count() == 0)
                throw advnf::ValueError("sample: lattice models need --temperature");
            advnf::SampleRequest req;
            req.component = sample_component;
            req.T = t_opt->count() ? sample_T : 1.0;
            req.count = sample_n;
            req.imh = sample_imh;
            const advnf::SampleOutcome s = advnf::run_sample(e, req);
            if (req.imh)
                std::printf("%zu de-biased samples (acceptance %g%%): %s\n", s.count,
                            s.acceptance, s.file.string().c_str());
            else
                std::printf("%zu samples: %s\n", s.count, s.file.string().c_str());
        } else if (rep->parsed()) {
            advnf::StudyOptions opt;
            if (!rep_args.out.empty()) opt.out = rep_args.out;
            if (rep_args.seed_given) opt.seed = rep_args.seed;
            if (rep_args.jobs > 0) opt.jobs = rep_args.jobs;
            opt.native = rep_native;
            for (const std::string& kv : rep_args.sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos || eq == 0)
                    throw advnf::ValueError("--set expects KEY=VALUE, got '" + kv + "'");
                opt.overrides.push_back({kv.substr(0, eq), kv.substr(eq + 1)});
            }
            std::filesystem::path result;
            if (study == "table1") result = advnf::reproduce_table1(opt);
            else if (study == "table2") result = advnf::reproduce_table2(opt, false);
            else if (study == "table3") result = advnf::reproduce_table2(opt, true);
            else if (study == "table6") result = advnf::reproduce_table6(opt);
            else if (study == "fig3") result = advnf::reproduce_fig3(opt);
            else if (study == "fig4") result = advnf::reproduce_fig4(opt);
            else if (study == "observables") result = advnf::reproduce_observables(opt, false);
            else if (study == "observables-exy")
                result = advnf::reproduce_observables(opt, true);
            else
                throw advnf::ValueError(
                    "unknown study '" + study +
                    "' (known: table1, table2, table3, table6, fig3, fig4, observables, "
                    "observables-exy)");
            std::printf("study output: %s\n", result.string().c_str());
        }
    } catch (const advnf::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 2;
    } catch (const advnf::ValueError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
