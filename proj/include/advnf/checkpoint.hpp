#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "flow.hpp"
#include "mlp.hpp"
#include "tensor.hpp"

namespace advnf {

// Versioned text checkpoints. Values are written as shortest round-trip
// decimals, so a save/load/save cycle is byte-identical and reloaded
// parameters are bit-for-bit the originals.

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValueError("checkpoint: bad numeric literal '" + s + "'");
    return v;
}

inline void write_param(std::ostream& os, const std::string& name, const Tensor& t) {
    if (t.rank() == 2) {
        os << "param " << name << " " << t.dim(0) << "x" << t.dim(1) << "\n";
        for (std::size_t i = 0; i < t.dim(0); ++i) {
            for (std::size_t j = 0; j < t.dim(1); ++j)
                os << (j ? " " : "") << format_double(t.at(i, j));
            os << "\n";
        }
    } else if (t.rank() == 1) {
        os << "param " << name << " " << t.dim(0) << "\n";
        for (std::size_t j = 0; j < t.dim(0); ++j)
            os << (j ? " " : "") << format_double(t[j]);
        os << "\n";
    } else {
        throw ValueError("checkpoint: only rank-1/2 parameters are stored");
    }
}

class ParamReader {
  public:
    explicit ParamReader(std::istream& is) : is_(is) {}

    // expects "param <name> <shape>" followed by the value rows
    Tensor read(const std::string& expected_name) {
        std::string line;
        if (!std::getline(is_, line))
            throw ValueError("checkpoint: unexpected end of file before " + expected_name);
        std::istringstream hs(line);
        std::string tag, name, shape;
        hs >> tag >> name >> shape;
        if (tag != "param" || name != expected_name)
            throw ValueError("checkpoint: expected param " + expected_name + ", got '" + line +
                             "'");
        const auto xpos = shape.find('x');
        if (xpos == std::string::npos) {
            const std::size_t len = std::stoul(shape);
            Tensor t({len});
            read_row(t.data(), len);
            return t;
        }
        const std::size_t rows = std::stoul(shape.substr(0, xpos));
        const std::size_t cols = std::stoul(shape.substr(xpos + 1));
        Tensor t({rows, cols});
        for (std::size_t i = 0; i < rows; ++i) read_row(t.data() + i * cols, cols);
        return t;
    }

  private:
    void read_row(double* dst, std::size_t n) {
        std::string line;
        if (!std::getline(is_, line)) throw ValueError("checkpoint: missing value row");
        std::istringstream vs(line);
        std::string tok;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(vs >> tok)) throw ValueError("checkpoint: short value row");
            dst[j] = parse_double(tok);
        }
        if (vs >> tok) throw ValueError("checkpoint: extra values in row");
    }

    std::istream& is_;
};

inline void write_mlp(std::ostream& os, const std::string& prefix, const Mlp& net) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        write_param(os, prefix + ".w" + std::to_string(l), net.weight(l)->value);
        write_param(os, prefix + ".b" + std::to_string(l), net.bias(l)->value);
    }
}

inline void read_mlp(ParamReader& rd, const std::string& prefix, Mlp& net) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        Tensor w = rd.read(prefix + ".w" + std::to_string(l));
        Tensor b = rd.read(prefix + ".b" + std::to_string(l));
        if (!w.same_shape(net.weight(l)->value) || !b.same_shape(net.bias(l)->value))
            throw ValueError("checkpoint: parameter shape mismatch at " + prefix);
        net.weight(l)->value = std::move(w);
        net.bias(l)->value = std::move(b);
    }
}

inline const char* base_name(BaseKind b) {
    return b == BaseKind::normal ? "normal" : "uniform_box";
}

inline const char* projection_name(ProjectionKind p) {
    switch (p) {
        case ProjectionKind::none: return "none";
        case ProjectionKind::sigmoid_map: return "sigmoid";
        case ProjectionKind::tan_map: return "tan";
    }
    return "?";
}

}  // namespace detail

inline void save_flow(std::ostream& os, const FlowModel& f) {
    os << "advnf-checkpoint v1\n";
    os << "kind flow\n";
    os << "dim " << f.dim << "\n";
    os << "cond_dim " << f.cond_dim << "\n";
    os << "base " << detail::base_name(f.base) << "\n";
    os << "box " << detail::format_double(f.box_lo) << " " << detail::format_double(f.box_hi)
       << "\n";
    os << "projection " << detail::projection_name(f.projection) << "\n";
    os << "alpha " << detail::format_double(f.alpha) << "\n";
    os << "lattice_n " << f.lattice_n << "\n";
    os << "hidden";
    for (std::size_t h : f.hidden) os << " " << h;
    os << "\n";
    os << "layers " << f.layers.size() << "\n";
    for (std::size_t l = 0; l < f.layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l);
        detail::write_param(os, p + ".mask", f.layers[l].mask);
        detail::write_mlp(os, p + ".scale", f.layers[l].scale_net);
        detail::write_mlp(os, p + ".translate", f.layers[l].translate_net);
    }
    os << "end\n";
}

inline void save_flow_file(const std::string& path, const FlowModel& f) {
    std::ofstream os(path);
    if (!os) throw ValueError("save_flow_file: cannot open " + path);
    save_flow(os, f);
}

namespace detail {

inline std::string expect_field(std::istream& is, const std::string& key) {
    std::string line;
    if (!std::getline(is, line)) throw ValueError("checkpoint: missing field " + key);
    if (line.rfind(key + " ", 0) != 0 && line != key)
        throw ValueError("checkpoint: expected '" + key + "', got '" + line + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
}

}  // namespace detail

inline FlowModel load_flow(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "advnf-checkpoint v1")
        throw ValueError("load_flow: not a v1 checkpoint");
    if (detail::expect_field(is, "kind") != "flow")
        throw ValueError("load_flow: checkpoint is not a flow");
    FlowModel f;
    f.dim = std::stoul(detail::expect_field(is, "dim"));
    f.cond_dim = std::stoul(detail::expect_field(is, "cond_dim"));
    const std::string base = detail::expect_field(is, "base");
    if (base == "normal")
        f.base = BaseKind::normal;
    else if (base == "uniform_box")
        f.base = BaseKind::uniform_box;
    else
        throw ValueError("load_flow: unknown base " + base);
    {
        std::istringstream bs(detail::expect_field(is, "box"));
        std::string lo, hi;
        bs >> lo >> hi;
        f.box_lo = detail::parse_double(lo);
        f.box_hi = detail::parse_double(hi);
    }
    const std::string proj = detail::expect_field(is, "projection");
    if (proj == "none")
        f.projection = ProjectionKind::none;
    else if (proj == "sigmoid")
        f.projection = ProjectionKind::sigmoid_map;
    else if (proj == "tan")
        f.projection = ProjectionKind::tan_map;
    else
        throw ValueError("load_flow: unknown projection " + proj);
    f.alpha = detail::parse_double(detail::expect_field(is, "alpha"));
    f.lattice_n = std::stoul(detail::expect_field(is, "lattice_n"));
    {
        std::istringstream hs(detail::expect_field(is, "hidden"));
        std::size_t h;
        while (hs >> h) f.hidden.push_back(h);
    }
    const std::size_t n_layers = std::stoul(detail::expect_field(is, "layers"));
    Rng dummy(0);  // immediately overwritten from the file
    detail::ParamReader rd(is);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        Tensor mask = rd.read(p + ".mask");
        CouplingLayer layer = detail::make_coupling(f.dim, f.cond_dim, f.hidden,
                                                    std::move(mask), dummy);
        detail::read_mlp(rd, p + ".scale", layer.scale_net);
        detail::read_mlp(rd, p + ".translate", layer.translate_net);
        f.layers.push_back(std::move(layer));
    }
    if (!std::getline(is, line) || line != "end")
        throw ValueError("load_flow: missing end marker");
    return f;
}

inline FlowModel load_flow_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValueError("load_flow_file: cannot open " + path);
    return load_flow(is);
}

}  // namespace advnf
