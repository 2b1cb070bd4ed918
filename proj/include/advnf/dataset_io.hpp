#pragma once
// CSV readers/writers for datasets, ensembles, training traces, and sample
// dumps. Every writer starts with '#'-prefixed metadata lines carrying the
// config hash and master seed; readers skip them. Bodies are deterministic:
// identical inputs produce identical bytes.

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <advnf/checkpoint.hpp>
#include <advnf/lattice.hpp>
#include <advnf/synthetic.hpp>
#include <advnf/tensor.hpp>
#include <advnf/trainer.hpp>

namespace advnf {

struct FileMeta {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> extra;  // free-form diagnostics
};

inline void write_meta(std::ostream& os, const FileMeta& meta) {
    os << "# config_hash=" << meta.config_hash << " seed=" << meta.seed << '\n';
    for (const auto& [k, v] : meta.extra) os << "# " << k << '=' << v << '\n';
}

namespace detail {

inline bool next_data_line(std::istream& is, std::string& line) {
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        return true;
    }
    return false;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double csv_double(const std::string& s, const char* who) {
    try {
        return parse_double(s);
    } catch (const ValueError&) {
        throw ValueError(std::string(who) + ": bad number '" + s + "'");
    }
}

inline std::size_t csv_size(const std::string& s, const char* who) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ValueError(std::string(who) + ": bad integer '" + s + "'");
    }
}

}  // namespace detail

// ---- synthetic datasets ----

// Columns: x1,x2,component_index, then the condition vector of the row's
// component (two entries for mixtures, one for rings).
inline void write_synthetic_dataset(std::ostream& os, const SyntheticDataset& d,
                                    const SyntheticTarget& t, const FileMeta& meta) {
    write_meta(os, meta);
    os << "x1,x2,component_index";
    for (std::size_t j = 0; j < t.cond_dim(); ++j) os << ",cond" << (j + 1);
    os << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        os << detail::format_double(d.x[i][0]) << ',' << detail::format_double(d.x[i][1])
           << ',' << d.component[i];
        const auto cond = t.condition(d.component[i]);
        for (double v : cond.value) os << ',' << detail::format_double(v);
        os << '\n';
    }
}

inline SyntheticDataset read_synthetic_dataset(std::istream& is) {
    SyntheticDataset d;
    std::string line;
    if (!detail::next_data_line(is, line))
        throw ValueError("read_synthetic_dataset: missing header");
    if (line.rfind("x1,x2,component_index", 0) != 0)
        throw ValueError("read_synthetic_dataset: unexpected header: " + line);
    while (detail::next_data_line(is, line)) {
        auto f = detail::split_csv(line);
        if (f.size() < 3)
            throw ValueError("read_synthetic_dataset: short row: " + line);
        d.x.push_back({detail::csv_double(f[0], "read_synthetic_dataset"),
                       detail::csv_double(f[1], "read_synthetic_dataset")});
        d.component.push_back(detail::csv_size(f[2], "read_synthetic_dataset"));
    }
    return d;
}

// ---- lattice ensembles ----

// One configuration per row: n,T,J,K followed by the n*n angles row-major.
inline void write_lattice_ensemble(std::ostream& os, const std::vector<SpinConfig>& configs,
                                   const LatticeCondition& cond, const FileMeta& meta) {
    write_meta(os, meta);
    for (const auto& c : configs) {
        os << c.n << ',' << detail::format_double(cond.T) << ','
           << detail::format_double(cond.J) << ',' << detail::format_double(cond.K);
        for (double a : c.theta) os << ',' << detail::format_double(a);
        os << '\n';
    }
}

struct LatticeEnsemble {
    std::vector<SpinConfig> configs;
    LatticeCondition cond{1.0, 1.0, 0.0};
    std::size_t n = 0;
};

inline LatticeEnsemble read_lattice_ensemble(std::istream& is) {
    LatticeEnsemble e;
    std::string line;
    while (detail::next_data_line(is, line)) {
        auto f = detail::split_csv(line);
        if (f.size() < 5) throw ValueError("read_lattice_ensemble: short row: " + line);
        const std::size_t n = detail::csv_size(f[0], "read_lattice_ensemble");
        LatticeCondition cond{detail::csv_double(f[1], "read_lattice_ensemble"),
                              detail::csv_double(f[2], "read_lattice_ensemble"),
                              detail::csv_double(f[3], "read_lattice_ensemble")};
        if (f.size() != 4 + n * n)
            throw ValueError("read_lattice_ensemble: row has " + std::to_string(f.size() - 4) +
                             " angles for n=" + std::to_string(n));
        if (e.configs.empty()) {
            e.n = n;
            e.cond = cond;
        } else if (n != e.n || cond.T != e.cond.T || cond.J != e.cond.J ||
                   cond.K != e.cond.K) {
            throw ValueError("read_lattice_ensemble: mixed conditions in one file");
        }
        SpinConfig c(n);
        for (std::size_t s = 0; s < n * n; ++s)
            c.theta[s] = detail::csv_double(f[4 + s], "read_lattice_ensemble");
        e.configs.push_back(std::move(c));
    }
    if (e.configs.empty()) throw ValueError("read_lattice_ensemble: empty file");
    e.cond.validate();
    return e;
}

// ---- training traces ----

inline void write_loss_trace(std::ostream& os, const std::vector<TraceRow>& trace,
                             const FileMeta& meta) {
    write_meta(os, meta);
    os << "phase,iteration,lambda1,lambda2,lambda3,loss_total,loss_fkl,loss_rkl,loss_adv,"
          "lr_gen,lr_disc\n";
    for (const auto& r : trace) {
        os << r.phase << ',' << r.iteration << ',' << detail::format_double(r.l1) << ','
           << detail::format_double(r.l2) << ',' << detail::format_double(r.l3) << ','
           << detail::format_double(r.total) << ',' << detail::format_double(r.fkl) << ','
           << detail::format_double(r.rkl) << ',' << detail::format_double(r.adv) << ','
           << detail::format_double(r.lr_gen) << ',' << detail::format_double(r.lr_disc)
           << '\n';
    }
}

// ---- sample dumps ----

// Rows of coordinates with the model log density; x is (m, dim).
inline void write_samples(std::ostream& os, const Tensor& x, const std::vector<double>& log_q,
                          const FileMeta& meta) {
    if (x.rank() != 2 || x.dim(0) != log_q.size())
        throw ValueError("write_samples: x must be (m, dim) with one log_q per row");
    write_meta(os, meta);
    const std::size_t dim = x.dim(1);
    for (std::size_t j = 0; j < dim; ++j) os << 'x' << (j + 1) << ',';
    os << "log_q\n";
    for (std::size_t r = 0; r < x.dim(0); ++r) {
        for (std::size_t j = 0; j < dim; ++j)
            os << detail::format_double(x[r * dim + j]) << ',';
        os << detail::format_double(log_q[r]) << '\n';
    }
}

// ---- file helpers ----

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ValueError("cannot open output file: " + path.string());
    return os;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValueError("cannot open input file: " + path.string());
    return is;
}

inline std::string read_file(const std::filesystem::path& path) {
    auto is = open_input(path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// CSV body with '#' lines removed, for byte-identity comparisons.
inline std::string csv_body(const std::string& text) {
    std::istringstream is(text);
    std::string out, line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.front() == '#') continue;
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace advnf
