#pragma once
// Benchmark study drivers. Each one runs a self-contained set of experiments
// through the pipeline stages and distills the results into one summary CSV,
// mirroring the published comparison tables and figures. Desk scales (the
// default) shrink lattice sizes and iteration counts so a study finishes on
// a single core; --native restores the published scales.

#include <filesystem>
#include <string>
#include <vector>

#include <advnf/pipeline.hpp>

namespace advnf {

struct StudyOptions {
    std::filesystem::path out = "studies";
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    bool native = false;
    // config keys forced on every experiment in the study, e.g. a smaller
    // train.max_epochs for a quick look
    std::vector<std::pair<std::string, std::string>> overrides;
};

namespace detail {

inline std::string preset_name(DatasetKind kind, bool native) {
    if (is_synthetic_kind(kind)) return dataset_kind_name(kind);
    const std::string base = dataset_kind_name(kind);
    return base + (native ? "-native" : "-desk");
}

inline Config study_config(DatasetKind kind, Variant v, bool adversarial,
                           const StudyOptions& opt, const std::filesystem::path& subdir) {
    Config c = Config::parse_string(preset_config(preset_name(kind, opt.native)));
    c.set("train.variant", variant_name(v));
    c.set("train.adversarial", adversarial ? "true" : "false");
    c.set("run.seed", std::to_string(opt.seed));
    c.set("run.jobs", std::to_string(opt.jobs));
    c.set("run.out", (opt.out / subdir).string());
    for (const auto& [key, value] : opt.overrides) c.set(key, value);
    return c;
}

inline ExperimentConfig study_experiment(DatasetKind kind, Variant v, bool adversarial,
                                         const StudyOptions& opt,
                                         const std::filesystem::path& subdir) {
    return parse_experiment(study_config(kind, v, adversarial, opt, subdir));
}

constexpr Variant kVariants[] = {Variant::fkl, Variant::rkl, Variant::fkl_rkl};

}  // namespace detail

// Likelihood and acceptance on the three synthetic benchmarks for every
// model variant. One shared dataset per benchmark; six models trained on it.
inline std::filesystem::path reproduce_table1(const StudyOptions& opt) {
    const auto file = opt.out / "table1.csv";
    auto os = open_output(file);
    os << "# study=table1 seed=" << opt.seed << '\n';
    os << "dataset,model,nll_mean,nll_std,ar_mean,ar_std\n";
    for (DatasetKind kind : {DatasetKind::mog4, DatasetKind::mog8, DatasetKind::rings4}) {
        const std::filesystem::path subdir = std::string("table1/") + dataset_kind_name(kind);
        bool generated = false;
        for (bool adversarial : {false, true})
            for (Variant v : detail::kVariants) {
                ExperimentConfig e = detail::study_experiment(kind, v, adversarial, opt, subdir);
                if (!generated) {
                    run_gen_data(e);
                    generated = true;
                }
                run_train(e);
                const EvalOutcome ev = run_evaluate(e);
                os << dataset_kind_name(kind) << ',' << e.label() << ','
                   << detail::format_double(ev.synthetic.mean.nll) << ','
                   << detail::format_double(ev.synthetic.std.nll) << ','
                   << detail::format_double(ev.synthetic.mean.ar) << ','
                   << detail::format_double(ev.synthetic.std.ar) << '\n';
            }
    }
    return file;
}

// Observable agreement on the spin models: per-temperature histogram overlap
// and transport distance for energy and magnetization, plus likelihood and
// acceptance, for every variant. `exy` switches to the extended model.
inline std::filesystem::path reproduce_table2(const StudyOptions& opt, bool exy = false) {
    const DatasetKind kind = exy ? DatasetKind::exy : DatasetKind::xy;
    const std::string study = exy ? "table3" : "table2";  // extended model is its own table
    const auto file = opt.out / (study + ".csv");
    auto os = open_output(file);
    os << "# study=" << study << " seed=" << opt.seed << '\n';
    write_metrics_header(os);
    const std::filesystem::path subdir = study + "/" + dataset_kind_name(kind);
    bool generated = false;
    for (bool adversarial : {false, true})
        for (Variant v : detail::kVariants) {
            ExperimentConfig e = detail::study_experiment(kind, v, adversarial, opt, subdir);
            if (!generated) {
                run_gen_data(e);
                generated = true;
            }
            run_train(e);
            const EvalOutcome ev = run_evaluate(e);
            for (std::size_t i = 0; i < ev.condition_labels.size(); ++i)
                write_metrics_row(os, e.label(), ev.condition_labels[i],
                                  ev.lattice.per_condition[i]);
            write_metrics_row(os, e.label(), "mean", ev.lattice.mean);
        }
    return file;
}

// Sensitivity of the adversarial reverse-KL model to the training-set size.
inline std::filesystem::path reproduce_table6(const StudyOptions& opt) {
    const auto file = opt.out / "table6.csv";
    auto os = open_output(file);
    os << "# study=table6 seed=" << opt.seed << '\n';
    os << "train_size,nll_mean,nll_std,ar_mean,ar_std\n";
    for (std::size_t size : {std::size_t{100}, std::size_t{512}, std::size_t{1024},
                             std::size_t{5120}}) {
        Config c = detail::study_config(DatasetKind::xy, Variant::rkl, true, opt,
                                        "table6/n" + std::to_string(size));
        c.set("dataset.train_size", std::to_string(size));
        ExperimentConfig e = parse_experiment(c);
        run_gen_data(e);
        run_train(e);
        const EvalOutcome ev = run_evaluate(e);
        os << size << ',' << detail::format_double(ev.lattice.mean.nll) << ','
           << detail::format_double(ev.lattice.std.nll) << ','
           << detail::format_double(ev.lattice.mean.ar) << ','
           << detail::format_double(ev.lattice.std.ar) << '\n';
    }
    return file;
}

// 2-D scatter data behind the qualitative mode-coverage comparison: direct
// samples from the plain and adversarial reverse-KL models on each synthetic
// benchmark, one dump per mixture component.
inline std::filesystem::path reproduce_fig3(const StudyOptions& opt,
                                            std::size_t samples_per_component = 2000) {
    const auto root = opt.out / "fig3";
    for (DatasetKind kind : {DatasetKind::mog4, DatasetKind::mog8, DatasetKind::rings4}) {
        const std::filesystem::path subdir = std::string("fig3/") + dataset_kind_name(kind);
        bool generated = false;
        for (bool adversarial : {false, true}) {
            ExperimentConfig e =
                detail::study_experiment(kind, Variant::rkl, adversarial, opt, subdir);
            if (!generated) {
                run_gen_data(e);
                generated = true;
            }
            run_train(e);
            for (std::size_t c = 0; c < e.n_conditions(); ++c) {
                SampleRequest req;
                req.component = c;
                req.count = samples_per_component;
                run_sample(e, req);
            }
        }
    }
    return root;
}

// Mode-coverage trajectory during adversarial fine-tuning on the ring
// mixture: sample dumps at evenly spaced phase-2 checkpoints, starting from
// the phase-1 model (iteration tag 0).
inline std::filesystem::path reproduce_fig4(const StudyOptions& opt,
                                            std::size_t snapshots = 6,
                                            std::size_t samples_per_component = 1000) {
    if (snapshots == 0) throw ValueError("reproduce_fig4: need at least one snapshot");
    ExperimentConfig e =
        detail::study_experiment(DatasetKind::rings4, Variant::rkl, true, opt, "fig4");
    run_gen_data(e);

    const TrainData data = load_synthetic_train_data(e);
    FlowModel flow = build_flow(e);
    const SyntheticTarget target = e.target();

    const auto dump = [&](std::size_t iteration) {
        for (std::size_t c = 0; c < target.n_components(); ++c) {
            Rng rng = Rng(e.seed).derive("fig4.snapshot", iteration * 64 + c);
            const FlowSamples s =
                flow_sample(flow, target.condition(c).value, samples_per_component, rng);
            FileMeta meta = run_meta(e);
            meta.extra = {{"iteration", std::to_string(iteration)},
                          {"component", std::to_string(c)}};
            auto os = open_output(e.out / ("snapshot_i" + std::to_string(iteration) + "_c" +
                                           std::to_string(c) + ".csv"));
            write_samples(os, s.x, s.log_q, meta);
        }
    };

    TrainConfig cfg = e.train;
    train_phase1(flow, data, cfg);
    dump(0);
    if (cfg.phase2_iters > 0) {
        Discriminator disc = build_discriminator(e);
        cfg.checkpoint_every = std::max<std::size_t>(1, cfg.phase2_iters / snapshots);
        cfg.on_checkpoint = [&](int phase, std::size_t iteration) {
            if (phase == 2) dump(iteration + 1);
        };
        train_phase2(flow, disc, data, cfg);
    }
    save_flow_file(paths::checkpoint(e).string(), flow);
    return e.out;
}

// Mean and spread of the physical observables against temperature, for the
// MCMC reference and the de-biased adversarial reverse-KL model.
inline std::filesystem::path reproduce_observables(const StudyOptions& opt, bool exy = false,
                                                   std::size_t samples_per_temp = 1000) {
    const DatasetKind kind = exy ? DatasetKind::exy : DatasetKind::xy;
    ExperimentConfig e = detail::study_experiment(
        kind, Variant::rkl, true, opt,
        std::string("observables/") + dataset_kind_name(kind));
    run_gen_data(e);
    run_train(e);

    struct Moments {
        double e_mean = 0.0, e_std = 0.0, m_mean = 0.0, m_std = 0.0;
    };
    const auto moments = [&](const std::vector<SpinConfig>& configs,
                             const LatticeCondition& cond) {
        Moments m;
        std::vector<double> es, ms;
        for (const auto& c : configs) {
            es.push_back(energy_per_site(c, cond));
            ms.push_back(magnetization(c));
        }
        const auto stat = [](const std::vector<double>& v, double& mean, double& sd) {
            double s = 0.0;
            for (double x : v) s += x;
            mean = s / static_cast<double>(v.size());
            double q = 0.0;
            for (double x : v) q += (x - mean) * (x - mean);
            sd = std::sqrt(q / static_cast<double>(v.size()));
        };
        stat(es, m.e_mean, m.e_std);
        stat(ms, m.m_mean, m.m_std);
        return m;
    };

    const auto file = opt.out / (std::string("observables_") + dataset_kind_name(kind) + ".csv");
    auto os = open_output(file);
    os << "# study=observables seed=" << opt.seed << '\n';
    os << "T,source,energy_mean,energy_std,mag_mean,mag_std\n";
    for (std::size_t i = 0; i < e.temps.size(); ++i) {
        const LatticeCondition cond{e.temps[i], e.J, e.K};
        auto is = open_input(paths::ensemble(e, "test", i));
        const LatticeEnsemble ens = read_lattice_ensemble(is);

        SampleRequest req;
        req.T = e.temps[i];
        req.count = samples_per_temp;
        req.imh = true;
        const SampleOutcome s = run_sample(e, req);
        std::vector<SpinConfig> model_configs;
        {
            auto sis = open_input(s.file);
            std::string line;
            if (!detail::next_data_line(sis, line))
                throw ValueError("reproduce_observables: empty sample dump");
            while (detail::next_data_line(sis, line)) {
                const auto f = detail::split_csv(line);
                if (f.size() != e.n * e.n + 1)
                    throw ValueError("reproduce_observables: bad sample row");
                SpinConfig c(e.n);
                for (std::size_t j = 0; j < e.n * e.n; ++j)
                    c.theta[j] = wrap_angle(detail::csv_double(f[j], "reproduce_observables"));
                model_configs.push_back(std::move(c));
            }
        }

        const Moments ref = moments(ens.configs, cond);
        const Moments mod = moments(model_configs, cond);
        os << detail::format_double(e.temps[i]) << ",mcmc,"
           << detail::format_double(ref.e_mean) << ',' << detail::format_double(ref.e_std)
           << ',' << detail::format_double(ref.m_mean) << ','
           << detail::format_double(ref.m_std) << '\n';
        os << detail::format_double(e.temps[i]) << ",advnf_rkl_imh,"
           << detail::format_double(mod.e_mean) << ',' << detail::format_double(mod.e_std)
           << ',' << detail::format_double(mod.m_mean) << ','
           << detail::format_double(mod.m_std) << '\n';
    }
    return file;
}

}  // namespace advnf
