#pragma once
// Flat key-value configuration files with [section] headers. Values are kept
// as strings until typed accessors pull them out; a canonical serialization
// (sorted keys) feeds the config hash embedded in every output file.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <advnf/checkpoint.hpp>
#include <advnf/rng.hpp>
#include <advnf/tensor.hpp>

namespace advnf {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

class Config {
  public:
    Config() = default;

    static Config parse(std::istream& is) {
        Config c;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ValueError("Config: bad section header at line " +
                                     std::to_string(lineno));
                section = detail::trim(line.substr(1, line.size() - 2));
                if (section.empty())
                    throw ValueError("Config: empty section name at line " +
                                     std::to_string(lineno));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ValueError("Config: expected key = value at line " +
                                 std::to_string(lineno));
            std::string key = detail::trim(line.substr(0, eq));
            std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw ValueError("Config: empty key at line " + std::to_string(lineno));
            if (section.empty())
                throw ValueError("Config: key outside any section at line " +
                                 std::to_string(lineno));
            c.values_[section + "." + key] = value;
        }
        return c;
    }

    static Config parse_string(const std::string& text) {
        std::istringstream is(text);
        return parse(is);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ValueError("Config: missing key '" + key + "'");
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing");
            return static_cast<std::uint64_t>(v);
        } catch (const std::exception&) {
            throw ValueError("Config: key '" + key + "' is not an unsigned integer: " + s);
        }
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_u64(key) : fallback;
    }

    std::size_t get_size(const std::string& key) const {
        return static_cast<std::size_t>(get_u64(key));
    }
    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        return has(key) ? get_size(key) : fallback;
    }

    bool get_bool(const std::string& key) const {
        const std::string s = get_string(key);
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        throw ValueError("Config: key '" + key + "' is not a boolean: " + s);
    }
    bool get_bool(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split_list(get_string(key)))
            out.push_back(to_double(key, item));
        if (out.empty()) throw ValueError("Config: key '" + key + "' is an empty list");
        return out;
    }

    std::vector<std::size_t> get_sizes(const std::string& key) const {
        std::vector<std::size_t> out;
        for (const auto& item : split_list(get_string(key))) {
            try {
                std::size_t pos = 0;
                out.push_back(static_cast<std::size_t>(std::stoull(item, &pos)));
                if (pos != item.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ValueError("Config: key '" + key + "' has a non-integer entry: " + item);
            }
        }
        if (out.empty()) throw ValueError("Config: key '" + key + "' is an empty list");
        return out;
    }

    // canonical text: sections/keys sorted, one key=value per line
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

    std::uint64_t hash() const { return Rng::fnv1a(canonical()); }

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    static double to_double(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing");
            if (!std::isfinite(v)) throw std::invalid_argument("nonfinite");
            return v;
        } catch (const std::exception&) {
            throw ValueError("Config: key '" + key + "' is not a number: " + s);
        }
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream is(s);
        while (std::getline(is, cur, ',')) {
            cur = detail::trim(cur);
            if (!cur.empty()) out.push_back(cur);
        }
        return out;
    }

    std::map<std::string, std::string> values_;
};

// Evenly spaced temperature grid, endpoints included.
inline std::vector<double> temperature_grid(double lo, double hi, std::size_t count) {
    if (count == 0) throw ValueError("temperature_grid: empty grid");
    if (!(lo > 0.0) || !(hi >= lo)) throw ValueError("temperature_grid: bad range");
    std::vector<double> t(count);
    if (count == 1) {
        t[0] = lo;
        return t;
    }
    for (std::size_t i = 0; i < count; ++i)
        t[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    return t;
}

// ---- shipped experiment presets ----

// Returns the config text for a named preset. Native presets match the
// published experiment scales; desk presets shrink them to something a single
// CPU core finishes in minutes to hours.
inline std::string preset_config(const std::string& name) {
    const std::string common_train =
        "[train]\n"
        "variant = rkl\n"
        "adversarial = true\n"
        "batch_size = 256\n"
        "max_epochs = 200\n"
        "patience = 10\n"
        "tolerance = 1e-3\n"
        "lr_gen = 1e-4\n"
        "lr_disc = 5e-5\n"
        "lr_decay = true\n";
    if (name == "mog4" || name == "mog8" || name == "rings4") {
        std::string c;
        c += "[dataset]\nkind = " + name + "\n";
        c += std::string("train_size = ") + (name == "mog8" ? "500" : "1000") + "\n";
        c += "test_size = 250\n";
        c += "[model]\nlayers = 10\nhidden = 32,32\nprojection = none\nbase = normal\n";
        c += common_train;
        c += "phase2_iters = 3000\n";
        c += "[run]\nseed = 1\njobs = 1\n";
        return c;
    }
    if (name == "xy-native" || name == "xy-desk") {
        const bool desk = name == "xy-desk";
        std::string c;
        c += "[dataset]\nkind = xy\n";
        c += std::string("n = ") + (desk ? "4" : "16") + "\nJ = 1\nK = 0\n";
        if (desk)
            c += "temp_lo = 0.25\ntemp_hi = 2.0\ntemp_count = 8\n";
        else
            c += "temp_lo = 0.05\ntemp_hi = 2.05\ntemp_count = 32\n";
        c += std::string("train_size = ") + (desk ? "1000" : "5000") + "\n";
        c += std::string("val_size = ") + (desk ? "200" : "1000") + "\n";
        c += std::string("test_size = ") + (desk ? "200" : "1000") + "\n";
        c += "[mcmc]\nburn_in = 10000\nthinning = 10\nproposal = perturbation\ndelta = 1.0\n";
        c += "[model]\n";
        c += std::string("layers = ") + (desk ? "6" : "50") + "\n";
        c += std::string("hidden = ") + (desk ? "16,16" : "128,128") + "\n";
        c += "projection = sigmoid\nbase = normal\n";
        c += common_train;
        c += std::string("phase2_iters = ") + (desk ? "600" : "10000") + "\n";
        c += "[run]\nseed = 1\njobs = 1\n";
        return c;
    }
    if (name == "exy-native" || name == "exy-desk") {
        const bool desk = name == "exy-desk";
        std::string c;
        c += "[dataset]\nkind = exy\n";
        c += std::string("n = ") + (desk ? "4" : "16") + "\nJ = 1\nK = 1\n";
        if (desk)
            c += "temp_lo = 0.5\ntemp_hi = 3.5\ntemp_count = 8\n";
        else
            c += "temp_lo = 0.5\ntemp_hi = 3.5\ntemp_count = 50\n";
        c += std::string("train_size = ") + (desk ? "1000" : "5000") + "\n";
        c += std::string("val_size = ") + (desk ? "200" : "1000") + "\n";
        c += std::string("test_size = ") + (desk ? "200" : "1000") + "\n";
        c += "[mcmc]\nburn_in = 10000\nthinning = 10\nproposal = perturbation\ndelta = 1.0\n";
        c += "[model]\n";
        c += std::string("layers = ") + (desk ? "6" : "50") + "\n";
        c += std::string("hidden = ") + (desk ? "16,16" : "128,128") + "\n";
        c += "projection = sigmoid\nbase = normal\n";
        c += common_train;
        c += std::string("phase2_iters = ") + (desk ? "600" : "10000") + "\n";
        c += "[run]\nseed = 1\njobs = 1\n";
        return c;
    }
    throw ValueError("preset_config: unknown preset '" + name +
                     "' (known: mog4, mog8, rings4, xy-native, xy-desk, exy-native, exy-desk)");
}

}  // namespace advnf
