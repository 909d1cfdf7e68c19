#include "hg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "hg/error.hpp"

namespace hg {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string> kClusterKeys = {"ratio",    "iterations", "temperature",  "position_weight",
                                            "candidates", "sampler",  "oversample",   "topk_fraction",
                                            "focus_weight", "seed"};
const std::set<std::string> kModuleKeys = {"layers", "channels", "batch_norm", "noise_cancel", "max_direction",
                                           "degree_eps"};

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string key_error(const std::string& key, const std::string& value) {
    return "config: invalid value '" + value + "' for " + key;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key_error(key, v));
    }
    if (used != v.size()) throw ConfigError(key_error(key, v));
    return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) throw ConfigError(key_error(key, v));
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError(key_error(key, v));
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key_error(key, v));
}

void check_keys(const pt::ptree& section, const std::string& name, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : section)
        if (!allowed.contains(key)) throw ConfigError("config: unknown key '" + key + "' in [" + name + "]");
}

// read_ini drops sections without keys, so headers are checked on the raw text.
void check_section_headers(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] != '[') continue;
        const auto close = line.find(']', first);
        if (close == std::string::npos) continue;  // read_ini reports it
        const std::string name = line.substr(first + 1, close - first - 1);
        if (name != "cluster" && name != "module") throw ConfigError("config: unknown section [" + name + "]");
    }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    check_section_headers(text);

    RunConfig cfg;
    for (const auto& [name, section] : tree) {
        if (name != "cluster" && name != "module") throw ConfigError("config: unknown section or key '" + name + "'");
    }
    if (auto c = tree.get_child_optional("cluster")) {
        check_keys(*c, "cluster", kClusterKeys);
        auto& k = cfg.cluster;
        for (const auto& [key, node] : *c) {
            const std::string v = node.data();
            const std::string full = "cluster." + key;
            if (key == "ratio") {
                try {
                    k.downsample_ratio = Ratio::parse(v);
                } catch (const std::exception&) {
                    throw ConfigError(key_error(full, v));
                }
            } else if (key == "iterations") {
                k.iterations = to_unsigned(full, v);
            } else if (key == "temperature") {
                k.temperature = to_double(full, v);
            } else if (key == "position_weight") {
                k.position_weight = to_double(full, v);
            } else if (key == "candidates") {
                k.candidates_per_pixel = to_unsigned(full, v);
            } else if (key == "sampler") {
                try {
                    k.sampler = parse_sampler(v);
                } catch (const std::exception&) {
                    throw ConfigError(key_error(full, v));
                }
            } else if (key == "oversample") {
                k.oversample = to_unsigned(full, v);
            } else if (key == "topk_fraction") {
                k.topk_fraction = to_double(full, v);
            } else if (key == "focus_weight") {
                k.focus_weight = to_double(full, v);
            } else if (key == "seed") {
                k.seed = to_unsigned(full, v);
            }
        }
        try {
            k.validate();
        } catch (const DomainError& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    if (auto m = tree.get_child_optional("module")) {
        check_keys(*m, "module", kModuleKeys);
        auto& k = cfg.module;
        for (const auto& [key, node] : *m) {
            const std::string v = node.data();
            const std::string full = "module." + key;
            if (key == "layers") k.layers = to_unsigned(full, v);
            else if (key == "channels") k.channels = to_unsigned(full, v);
            else if (key == "batch_norm") k.batch_norm = to_bool(full, v);
            else if (key == "noise_cancel") k.noise_cancel = to_bool(full, v);
            else if (key == "max_direction") k.max_direction = to_bool(full, v);
            else if (key == "degree_eps") k.degree_eps = to_double(full, v);
        }
        if (k.layers < 1) throw ConfigError("config: module.layers must be >= 1");
        if (!(k.degree_eps > 0.0)) throw ConfigError("config: module.degree_eps must be positive");
    }
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    const auto& c = cfg.cluster;
    const auto& m = cfg.module;
    const auto b = [](bool v) { return v ? "true" : "false"; };
    std::ostringstream out;
    out << "[cluster]\n"
        << "ratio = " << c.downsample_ratio.str() << '\n'
        << "iterations = " << c.iterations << '\n'
        << "temperature = " << format_double(c.temperature) << '\n'
        << "position_weight = " << format_double(c.position_weight) << '\n'
        << "candidates = " << c.candidates_per_pixel << '\n'
        << "sampler = " << to_string(c.sampler) << '\n'
        << "oversample = " << c.oversample << '\n'
        << "topk_fraction = " << format_double(c.topk_fraction) << '\n'
        << "focus_weight = " << format_double(c.focus_weight) << '\n'
        << "seed = " << c.seed << '\n'
        << "\n[module]\n"
        << "layers = " << m.layers << '\n'
        << "channels = " << m.channels << '\n'
        << "batch_norm = " << b(m.batch_norm) << '\n'
        << "noise_cancel = " << b(m.noise_cancel) << '\n'
        << "max_direction = " << b(m.max_direction) << '\n'
        << "degree_eps = " << format_double(m.degree_eps) << '\n';
    return out.str();
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

}  // namespace hg
