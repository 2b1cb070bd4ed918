#pragma once
// End-to-end experiment stages: generate reference data, train a flow
// variant, evaluate it against held-out ensembles, draw samples. Each stage
// communicates with the next only through files in the run directory, so
// stages can run in separate processes and a finished directory fully
// describes the experiment. All randomness is derived from one master seed;
// rerunning a stage with the same config reproduces its outputs byte for
// byte outside the '#' metadata lines.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <advnf/adversarial.hpp>
#include <advnf/checkpoint.hpp>
#include <advnf/config.hpp>
#include <advnf/dataset_io.hpp>
#include <advnf/flow.hpp>
#include <advnf/lattice.hpp>
#include <advnf/mcmc.hpp>
#include <advnf/metrics.hpp>
#include <advnf/synthetic.hpp>
#include <advnf/tensor.hpp>
#include <advnf/trainer.hpp>

namespace advnf {

// ---- experiment description ----

enum class DatasetKind { mog4, mog8, rings4, xy, exy };

inline const char* dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::mog4: return "mog4";
        case DatasetKind::mog8: return "mog8";
        case DatasetKind::rings4: return "rings4";
        case DatasetKind::xy: return "xy";
        case DatasetKind::exy: return "exy";
    }
    return "?";
}

inline DatasetKind dataset_kind_from(const std::string& s) {
    if (s == "mog4") return DatasetKind::mog4;
    if (s == "mog8") return DatasetKind::mog8;
    if (s == "rings4") return DatasetKind::rings4;
    if (s == "xy") return DatasetKind::xy;
    if (s == "exy") return DatasetKind::exy;
    throw ValueError("unknown dataset kind '" + s + "' (known: mog4, mog8, rings4, xy, exy)");
}

inline bool is_synthetic_kind(DatasetKind k) {
    return k == DatasetKind::mog4 || k == DatasetKind::mog8 || k == DatasetKind::rings4;
}

inline Domain domain_of(DatasetKind k) {
    if (is_synthetic_kind(k)) return Domain::synthetic;
    return k == DatasetKind::xy ? Domain::xy : Domain::exy;
}

inline Variant variant_from(const std::string& s) {
    if (s == "fkl") return Variant::fkl;
    if (s == "rkl") return Variant::rkl;
    if (s == "fkl_rkl") return Variant::fkl_rkl;
    throw ValueError("unknown variant '" + s + "' (known: fkl, rkl, fkl_rkl)");
}

// "advnf_rkl", "cnf_fkl", ... — used in file names and report rows.
inline std::string model_label(Variant v, bool adversarial) {
    return std::string(adversarial ? "advnf_" : "cnf_") + variant_name(v);
}

struct ExperimentConfig {
    Config raw;  // retained for the hash stamped into outputs

    DatasetKind kind = DatasetKind::mog4;

    // lattice targets; unused for the synthetic ones
    std::size_t n = 0;
    double J = 1.0, K = 0.0;
    std::vector<double> temps;
    MHConfig mh;  // n_samples and seed are filled in per use

    // sizes are per condition (per component / per temperature)
    std::size_t train_size = 0, val_size = 0, test_size = 0;

    std::size_t layers = 0;
    std::vector<std::size_t> hidden;
    ProjectionKind projection = ProjectionKind::none;

    Variant variant = Variant::rkl;
    bool adversarial = true;
    TrainConfig train;

    std::size_t eval_samples = 2000;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    std::filesystem::path out = "out";

    bool synthetic() const { return is_synthetic_kind(kind); }
    std::string label() const { return model_label(variant, adversarial); }
    SyntheticTarget target() const {
        switch (kind) {
            case DatasetKind::mog4: return make_synthetic_target(SyntheticKind::mog4);
            case DatasetKind::mog8: return make_synthetic_target(SyntheticKind::mog8);
            default: return make_synthetic_target(SyntheticKind::rings4);
        }
    }
    std::size_t n_conditions() const {
        return synthetic() ? target().n_components() : temps.size();
    }
};

inline ProjectionKind projection_from(const std::string& s) {
    if (s == "none") return ProjectionKind::none;
    if (s == "sigmoid") return ProjectionKind::sigmoid_map;
    if (s == "tan") return ProjectionKind::tan_map;
    throw ValueError("unknown projection '" + s + "' (known: none, sigmoid, tan)");
}

inline ProposalKind proposal_from(const std::string& s) {
    if (s == "full_resample") return ProposalKind::full_resample;
    if (s == "perturbation") return ProposalKind::perturbation;
    throw ValueError("unknown proposal '" + s + "' (known: full_resample, perturbation)");
}

// Builds the runnable description from a parsed config file. Loss weights
// and the adversarial-weight schedule come from the benchmark presets for
// the dataset's domain; a non-adversarial model never enters phase 2.
inline ExperimentConfig parse_experiment(const Config& c) {
    ExperimentConfig e;
    e.raw = c;
    e.kind = dataset_kind_from(c.get_string("dataset.kind"));

    e.train_size = c.get_size("dataset.train_size");
    e.val_size = c.get_size("dataset.val_size", 0);
    e.test_size = c.get_size("dataset.test_size");
    if (e.train_size == 0 || e.test_size == 0)
        throw ValueError("parse_experiment: train_size and test_size must be positive");

    if (!e.synthetic()) {
        e.n = c.get_size("dataset.n");
        if (e.n < 2) throw ValueError("parse_experiment: lattice side must be at least 2");
        e.J = c.get_double("dataset.J", 1.0);
        e.K = c.get_double("dataset.K", 0.0);
        if (c.has("dataset.temps"))
            e.temps = c.get_doubles("dataset.temps");
        else
            e.temps = temperature_grid(c.get_double("dataset.temp_lo"),
                                       c.get_double("dataset.temp_hi"),
                                       c.get_size("dataset.temp_count"));
        for (double t : e.temps)
            if (!(t > 0.0)) throw ValueError("parse_experiment: temperatures must be positive");

        e.mh.burn_in_steps = c.get_size("mcmc.burn_in", 10000);
        e.mh.thinning = c.get_size("mcmc.thinning", 10);
        e.mh.proposal = proposal_from(c.get_string("mcmc.proposal", "perturbation"));
        e.mh.delta = c.get_double("mcmc.delta", 1.0);
    }

    e.layers = c.get_size("model.layers");
    if (e.layers == 0) throw ValueError("parse_experiment: need at least one coupling layer");
    e.hidden = c.get_sizes("model.hidden");
    e.projection = projection_from(
        c.get_string("model.projection", e.synthetic() ? "none" : "sigmoid"));
    if (!e.synthetic() && e.projection == ProjectionKind::none)
        throw ValueError("parse_experiment: lattice models need a circular projection");

    e.variant = variant_from(c.get_string("train.variant"));
    e.adversarial = c.get_bool("train.adversarial", true);
    const Preset preset = preset_weights(domain_of(e.kind), e.variant, e.adversarial);
    e.train.weights = preset.weights;
    e.train.batch_size = c.get_size("train.batch_size", 256);
    e.train.rkl_epoch_batches = c.get_size("train.rkl_epoch_batches", 4);
    e.train.max_epochs = c.get_size("train.max_epochs", 200);
    e.train.patience = c.get_size("train.patience", 10);
    e.train.tolerance = c.get_double("train.tolerance", 1e-3);
    e.train.lr_gen = c.get_double("train.lr_gen", 1e-4);
    e.train.lr_disc = c.get_double("train.lr_disc", 5e-5);
    e.train.lr_decay = c.get_bool("train.lr_decay", true);
    e.train.phase2_iters = e.adversarial ? c.get_size("train.phase2_iters", 0) : 0;
    e.train.lambda1_schedule = resolve_schedule(preset, e.train.phase2_iters);
    e.train.checkpoint_every = c.get_size("train.checkpoint_every", 0);

    e.eval_samples = c.get_size("eval.samples", 2000);
    e.seed = c.get_u64("run.seed", 1);
    e.jobs = c.get_size("run.jobs", 1);
    e.out = c.get_string("run.out", std::string("out/") + dataset_kind_name(e.kind));
    e.train.seed = Rng(e.seed).derive("train." + e.label()).seed();
    return e;
}

// ---- run-directory layout ----

namespace paths {

inline std::string temp_tag(std::size_t i) {
    return (i < 10 ? "t0" : "t") + std::to_string(i);
}

inline std::filesystem::path dataset(const ExperimentConfig& e, const std::string& split) {
    return e.out / (split + ".csv");
}
inline std::filesystem::path ensemble(const ExperimentConfig& e, const std::string& split,
                                      std::size_t temp_index) {
    return e.out / (split + "_" + temp_tag(temp_index) + ".csv");
}
inline std::filesystem::path checkpoint(const ExperimentConfig& e) {
    return e.out / ("model_" + e.label() + ".ckpt");
}
inline std::filesystem::path trace(const ExperimentConfig& e) {
    return e.out / ("trace_" + e.label() + ".csv");
}
inline std::filesystem::path metrics(const ExperimentConfig& e) {
    return e.out / ("metrics_" + e.label() + ".csv");
}
inline std::filesystem::path occupancy(const ExperimentConfig& e) {
    return e.out / ("occupancy_" + e.label() + ".csv");
}

}  // namespace paths

inline FileMeta run_meta(const ExperimentConfig& e) {
    FileMeta m;
    m.config_hash = e.raw.hash();
    m.seed = e.seed;
    return m;
}

// ---- stage: data generation ----

// Synthetic targets are sampled exactly; lattice ensembles come from the
// single-site Metropolis chain, one independent chain per condition and
// split. Files: train/test(.csv) for synthetic, <split>_t<i>.csv per
// temperature for lattices (val only when val_size > 0).
inline void run_gen_data(const ExperimentConfig& e) {
    const Rng master(e.seed);
    if (e.synthetic()) {
        const SyntheticTarget t = e.target();
        const std::pair<const char*, std::size_t> splits[] = {{"train", e.train_size},
                                                              {"test", e.test_size}};
        for (const auto& [split, size] : splits) {
            Rng rng = master.derive(std::string("data.") + split);
            const SyntheticDataset d = generate_synthetic_dataset(t, size, rng);
            FileMeta meta = run_meta(e);
            meta.extra = {{"split", split}};
            auto os = open_output(paths::dataset(e, split));
            write_synthetic_dataset(os, d, t, meta);
        }
        return;
    }
    for (std::size_t i = 0; i < e.temps.size(); ++i) {
        const LatticeCondition cond{e.temps[i], e.J, e.K};
        const std::pair<const char*, std::size_t> splits[] = {
            {"train", e.train_size}, {"val", e.val_size}, {"test", e.test_size}};
        for (const auto& [split, size] : splits) {
            if (size == 0) continue;
            MHConfig mc = e.mh;
            mc.n_samples = size;
            mc.seed = master.derive(std::string("mcmc.") + split, i).seed();
            const MHResult res = mh_generate(e.n, cond, mc);
            FileMeta meta = run_meta(e);
            meta.extra = {{"split", split},
                          {"T", detail::format_double(cond.T)},
                          {"mh_acceptance", detail::format_double(res.acceptance_rate())}};
            auto os = open_output(paths::ensemble(e, split, i));
            write_lattice_ensemble(os, res.samples, cond, meta);
        }
    }
}

// ---- stage: training ----

namespace detail {

inline Tensor angles_tensor(const std::vector<SpinConfig>& configs) {
    if (configs.empty()) throw ValueError("angles_tensor: empty ensemble");
    const std::size_t d = configs[0].theta.size();
    Tensor x({configs.size(), d});
    for (std::size_t r = 0; r < configs.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) x[r * d + j] = configs[r].theta[j];
    return x;
}

inline RklTarget synthetic_rkl_target(const SyntheticTarget& t, std::size_t component) {
    return t.is_mog() ? make_mog_rkl_target(t.mog, component)
                      : make_rings_rkl_target(t.rings, component);
}

}  // namespace detail

// One condition per mixture component, data split by the stored labels.
inline TrainData load_synthetic_train_data(const ExperimentConfig& e) {
    const SyntheticTarget t = e.target();
    auto is = open_input(paths::dataset(e, "train"));
    const SyntheticDataset d = read_synthetic_dataset(is);
    TrainData data;
    data.dim = 2;
    for (std::size_t c = 0; c < t.n_components(); ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.component[i] == c) rows.push_back(i);
        if (rows.empty())
            throw ValueError("load_synthetic_train_data: component " + std::to_string(c) +
                             " has no rows");
        Tensor x({rows.size(), 2});
        for (std::size_t r = 0; r < rows.size(); ++r) {
            x[r * 2] = d.x[rows[r]][0];
            x[r * 2 + 1] = d.x[rows[r]][1];
        }
        data.conditions.push_back(
            {t.condition(c).value, std::move(x), detail::synthetic_rkl_target(t, c)});
    }
    return data;
}

// One condition per temperature; the condition vector fed to the networks is
// the bare temperature.
inline TrainData load_lattice_train_data(const ExperimentConfig& e) {
    TrainData data;
    data.dim = e.n * e.n;
    for (std::size_t i = 0; i < e.temps.size(); ++i) {
        auto is = open_input(paths::ensemble(e, "train", i));
        const LatticeEnsemble ens = read_lattice_ensemble(is);
        if (ens.n != e.n)
            throw ValueError("load_lattice_train_data: ensemble side " +
                             std::to_string(ens.n) + " does not match configured " +
                             std::to_string(e.n));
        data.conditions.push_back({{ens.cond.T}, detail::angles_tensor(ens.configs),
                                   make_lattice_rkl_target(e.n, ens.cond)});
    }
    return data;
}

inline FlowModel build_flow(const ExperimentConfig& e) {
    Rng rng = Rng(e.seed).derive("init." + e.label());
    if (e.synthetic())
        return make_synthetic_flow(e.target().cond_dim(), e.layers, rng, e.hidden);
    return make_lattice_flow(e.n, 1, e.layers, rng, e.hidden, e.projection);
}

inline Discriminator build_discriminator(const ExperimentConfig& e) {
    Rng rng = Rng(e.seed).derive("disc." + e.label());
    if (e.synthetic()) return make_synthetic_discriminator(e.target().cond_dim(), rng);
    return make_lattice_discriminator(e.n, rng);
}

struct TrainOutcome {
    Phase1Result phase1;
    Phase2Result phase2;
    std::filesystem::path checkpoint;
    std::filesystem::path trace;
};

// Phase 1 (KL fit) then, for adversarial models, phase 2 (GAN fine-tune).
// Writes the final model checkpoint and the full loss trace.
inline TrainOutcome run_train(const ExperimentConfig& e) {
    const TrainData data =
        e.synthetic() ? load_synthetic_train_data(e) : load_lattice_train_data(e);
    FlowModel flow = build_flow(e);

    TrainOutcome out;
    out.phase1 = train_phase1(flow, data, e.train);
    if (e.train.phase2_iters > 0) {
        Discriminator disc = build_discriminator(e);
        out.phase2 = train_phase2(flow, disc, data, e.train);
    }

    out.checkpoint = paths::checkpoint(e);
    save_flow_file(out.checkpoint.string(), flow);

    std::vector<TraceRow> trace = out.phase1.trace;
    trace.insert(trace.end(), out.phase2.trace.begin(), out.phase2.trace.end());
    FileMeta meta = run_meta(e);
    meta.extra = {{"model", e.label()},
                  {"epochs", std::to_string(out.phase1.epochs_run)},
                  {"phase2_iters", std::to_string(out.phase2.iterations_run)}};
    out.trace = paths::trace(e);
    auto os = open_output(out.trace);
    write_loss_trace(os, trace, meta);
    return out;
}

// ---- stage: evaluation ----

struct EvalOutcome {
    MetricsReport lattice;      // filled for lattice experiments
    SyntheticReport synthetic;  // filled for synthetic ones
    std::vector<std::string> condition_labels;
    std::filesystem::path metrics;
};

// Compares the trained model with the held-out test data: likelihood on the
// test rows, IMH acceptance, and (for lattices) observable histograms of the
// de-biased model ensemble against the reference.
inline EvalOutcome run_evaluate(const ExperimentConfig& e) {
    const FlowModel flow = load_flow_file(paths::checkpoint(e).string());
    const std::uint64_t eval_seed = Rng(e.seed).derive("evaluate." + e.label()).seed();

    EvalOutcome out;
    out.metrics = paths::metrics(e);
    FileMeta meta = run_meta(e);
    meta.extra = {{"model", e.label()}};

    if (e.synthetic()) {
        const SyntheticTarget t = e.target();
        auto is = open_input(paths::dataset(e, "test"));
        const SyntheticDataset d = read_synthetic_dataset(is);
        std::vector<SyntheticConditionEval> conds;
        for (std::size_t c = 0; c < t.n_components(); ++c) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < d.size(); ++i)
                if (d.component[i] == c) rows.push_back(i);
            if (rows.empty())
                throw ValueError("run_evaluate: test set misses component " +
                                 std::to_string(c));
            Tensor x({rows.size(), 2});
            for (std::size_t r = 0; r < rows.size(); ++r) {
                x[r * 2] = d.x[rows[r]][0];
                x[r * 2 + 1] = d.x[rows[r]][1];
            }
            conds.push_back({t.condition(c), std::move(x)});
            out.condition_labels.push_back("component=" + std::to_string(c));
        }
        out.synthetic = evaluate_synthetic_model(flow, t, conds, e.eval_samples, eval_seed);

        auto os = open_output(out.metrics);
        write_meta(os, meta);
        os << "variant,condition,nll,ar\n";
        for (std::size_t i = 0; i < conds.size(); ++i)
            os << e.label() << ',' << out.condition_labels[i] << ','
               << detail::format_double(out.synthetic.per_condition[i].nll) << ','
               << detail::format_double(out.synthetic.per_condition[i].ar) << '\n';
        os << e.label() << ",mean," << detail::format_double(out.synthetic.mean.nll) << ','
           << detail::format_double(out.synthetic.mean.ar) << '\n';

        auto oos = open_output(paths::occupancy(e));
        write_meta(oos, meta);
        oos << "mode,fraction\n";
        for (std::size_t m = 0; m < out.synthetic.occupancy.size(); ++m)
            oos << m << ',' << detail::format_double(out.synthetic.occupancy[m]) << '\n';
        return out;
    }

    std::vector<ConditionEval> conds;
    for (std::size_t i = 0; i < e.temps.size(); ++i) {
        auto is = open_input(paths::ensemble(e, "test", i));
        LatticeEnsemble ens = read_lattice_ensemble(is);
        if (ens.n != e.n)
            throw ValueError("run_evaluate: ensemble side does not match the model");
        ConditionEval ce;
        ce.lat = ens.cond;
        ce.cond = {ens.cond.T};
        ce.test_set = detail::angles_tensor(ens.configs);
        ce.reference = std::move(ens.configs);
        conds.push_back(std::move(ce));
        out.condition_labels.push_back("T=" + detail::format_double(e.temps[i]));
    }
    out.lattice = evaluate_model(flow, conds, e.eval_samples, eval_seed, e.jobs);

    auto os = open_output(out.metrics);
    write_meta(os, meta);
    write_metrics_header(os);
    write_metrics_report(os, e.label(), out.condition_labels, out.lattice);
    return out;
}

// ---- stage: sampling ----

struct SampleRequest {
    std::size_t component = 0;  // synthetic condition
    double T = 1.0;             // lattice condition
    std::size_t count = 1000;
    bool imh = false;  // de-bias through independent Metropolis-Hastings
};

struct SampleOutcome {
    std::filesystem::path file;
    std::size_t count = 0;
    double acceptance = std::nan("");  // percent; only set when IMH ran
};

// Draws samples from the trained model for one condition and writes them
// with their model log densities. With IMH the rows are the de-biased chain
// (rejected steps repeat the previous state) and the acceptance rate lands
// in the metadata.
inline SampleOutcome run_sample(const ExperimentConfig& e, const SampleRequest& req) {
    if (req.count == 0) throw ValueError("run_sample: count must be positive");
    const FlowModel flow = load_flow_file(paths::checkpoint(e).string());

    std::vector<double> cond;
    RklTarget target;
    std::string cond_tag, cond_desc;
    if (e.synthetic()) {
        const SyntheticTarget t = e.target();
        cond = t.condition(req.component).value;  // validates the index
        target = detail::synthetic_rkl_target(t, req.component);
        cond_tag = "c" + std::to_string(req.component);
        cond_desc = "component=" + std::to_string(req.component);
    } else {
        const LatticeCondition lat{req.T, e.J, e.K};
        lat.validate();
        cond = {req.T};
        target = make_lattice_rkl_target(e.n, lat);
        cond_tag = "T" + detail::format_double(req.T);
        cond_desc = "T=" + detail::format_double(req.T);
    }

    Rng rng = Rng(e.seed).derive("sample." + e.label() + "." + cond_tag);
    SampleOutcome out;
    out.count = req.count;
    out.file = e.out / ("samples_" + e.label() + (req.imh ? "_imh_" : "_") + cond_tag + ".csv");

    FileMeta meta = run_meta(e);
    meta.extra = {{"model", e.label()}, {"condition", cond_desc}};

    if (!req.imh) {
        const FlowSamples s = flow_sample(flow, cond, req.count, rng);
        auto os = open_output(out.file);
        write_samples(os, s.x, s.log_q, meta);
        return out;
    }

    // proposals come from the flow in batches; the chain keeps each row's
    // model log density so the dump stays consistent with the direct path
    using Row = std::pair<std::vector<double>, double>;
    const std::size_t dim = flow.dim;
    FlowSamples buf;
    std::size_t next = 0;
    auto sampler = [&](Rng& r) -> std::pair<Row, double> {
        if (next >= buf.log_q.size()) {
            buf = flow_sample(flow, cond, std::min<std::size_t>(256, req.count), r);
            next = 0;
        }
        Row row;
        row.first.assign(buf.x.data() + next * dim, buf.x.data() + (next + 1) * dim);
        row.second = buf.log_q[next];
        ++next;
        return {row, row.second};
    };
    auto log_p = [&](const Row& row) { return target.value(row.first.data(), dim); };
    const auto res = imh_resample<Row>(sampler, log_p, req.count, rng);
    out.acceptance = res.acceptance_rate();

    Tensor x({req.count, dim});
    std::vector<double> log_q(req.count);
    for (std::size_t r = 0; r < req.count; ++r) {
        for (std::size_t j = 0; j < dim; ++j) x[r * dim + j] = res.chain[r].first[j];
        log_q[r] = res.chain[r].second;
    }
    meta.extra.push_back({"imh_acceptance", detail::format_double(out.acceptance)});
    auto os = open_output(out.file);
    write_samples(os, x, log_q, meta);
    return out;
}

}  // namespace advnf
