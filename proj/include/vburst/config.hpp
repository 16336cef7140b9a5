#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vburst {

/// User-facing configuration mistake: unknown key, bad value, missing file.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat "section.key" configuration with a fixed registry of known keys.
/// Every tunable in the project is a registry entry so each default can be
/// overridden from a file or the command line.
class Config {
  public:
    struct Entry {
        std::string key;
        std::string value;
    };

    static const std::vector<Entry>& registry() {
        static const std::vector<Entry> entries = {
            {"data.n", "1000"},
            {"data.seed", "1"},
            {"data.classes", "8"},
            {"data.emo_dims", "10"},
            {"data.cultures", "4"},
            {"data.wave_len", "4000"},
            {"data.train_frac", "0.7"},
            {"data.val_frac", "0.15"},
            {"backbone.conv_channels", "32"},
            {"backbone.d_model", "64"},
            {"backbone.n_layers", "4"},
            {"backbone.n_heads", "4"},
            {"backbone.ff_mult", "4"},
            {"backbone.mask_prob", "0.05"},
            {"backbone.conv_kernels", "10,8,4"},
            {"backbone.conv_strides", "8,4,4"},
            {"heads.hidden_width", "256"},
            {"heads.attn_blocks", "0"},
            {"heads.pooling", "mean"},
            {"weighting.temperature", "2"},
            {"weighting.phi", "1"},
            {"trainer.architecture", "vanilla"},
            {"trainer.strategy", "uniform"},
            {"trainer.epochs", "30"},
            {"trainer.batch_size", "8"},
            {"trainer.lr_backbone", "1e-05"},
            {"trainer.lr_heads", "0.001"},
            {"trainer.plateau_patience", "5"},
            {"trainer.plateau_factor", "0.5"},
            {"trainer.seeds", "1"},
            {"trainer.tasks", "type,two,high,culture"},
            {"optim.beta1", "0.9"},
            {"optim.beta2", "0.999"},
            {"optim.eps", "1e-08"},
            {"optim.weight_decay", "0.01"},
        };
        return entries;
    }

    static Config defaults() {
        Config c;
        for (const auto& e : registry()) c.values_[e.key] = e.value;
        return c;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) {
        if (!has(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = value;
    }

    /// Applies a "section.key=value" override.
    void apply_override(const std::string& kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }

    /// Loads an INI-style file: [section] headers, key = value lines,
    /// '#' or ';' comments. Every key must exist in the registry.
    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in.good()) throw ConfigError("cannot open config file '" + path + "'");
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string s = trim(strip_comment(line));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw ConfigError(path + ":" + std::to_string(lineno) +
                                      ": malformed section header");
                section = trim(s.substr(1, s.size() - 2));
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            if (!section.empty() && key.find('.') == std::string::npos)
                key = section + "." + key;
            set(key, trim(s.substr(eq + 1)));
        }
    }

    std::string get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    int get_int(const std::string& key) const {
        return static_cast<int>(parse_ll(key, get(key)));
    }
    std::uint64_t get_u64(const std::string& key) const {
        return static_cast<std::uint64_t>(parse_ll(key, get(key)));
    }
    double get_double(const std::string& key) const {
        const std::string v = get(key);
        try {
            size_t pos = 0;
            double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
        }
    }

    std::vector<int> get_int_list(const std::string& key) const {
        std::vector<int> out;
        for (const auto& item : split_list(get(key)))
            out.push_back(static_cast<int>(parse_ll(key, item)));
        return out;
    }
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const {
        std::vector<std::uint64_t> out;
        for (const auto& item : split_list(get(key)))
            out.push_back(static_cast<std::uint64_t>(parse_ll(key, item)));
        return out;
    }

    /// INI text with every effective value, grouped by section in registry
    /// order; sufficient to reproduce a run together with its seed.
    std::string resolved_text() const {
        std::ostringstream os;
        std::string section;
        for (const auto& e : registry()) {
            const auto dot = e.key.find('.');
            const std::string sec = e.key.substr(0, dot);
            if (sec != section) {
                if (!section.empty()) os << "\n";
                os << "[" << sec << "]\n";
                section = sec;
            }
            os << e.key.substr(dot + 1) << " = " << values_.at(e.key) << "\n";
        }
        return os.str();
    }

    void write_resolved(const std::string& path) const {
        std::ofstream out(path);
        if (!out.good()) throw ConfigError("cannot write resolved config to '" + path + "'");
        out << resolved_text();
    }

    static Config from_resolved_text(const std::string& text) {
        Config c = defaults();
        std::istringstream in(text);
        std::string line, section;
        while (std::getline(in, line)) {
            const std::string s = trim(strip_comment(line));
            if (s.empty()) continue;
            if (s.front() == '[') {
                section = trim(s.substr(1, s.size() - 2));
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) continue;
            std::string key = trim(s.substr(0, eq));
            if (!section.empty() && key.find('.') == std::string::npos)
                key = section + "." + key;
            c.set(key, trim(s.substr(eq + 1)));
        }
        return c;
    }

  private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }
    static std::string strip_comment(const std::string& s) {
        const auto pos = s.find_first_of("#;");
        return pos == std::string::npos ? s : s.substr(0, pos);
    }
    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(trim(item));
        return out;
    }
    static long long parse_ll(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            long long d = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace vburst
