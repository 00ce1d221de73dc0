#include "config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mk::cli {

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
    throw ConfigError("config field '" + key + "': " + what);
}

struct Cursor {
    const std::string& text;
    std::size_t at = 0;

    bool done() const { return at >= text.size(); }
    char peek() const { return text[at]; }
    void skip_ws() {
        while (!done() && (peek() == ' ' || peek() == '\t')) ++at;
    }
};

ConfigValue parse_value(Cursor& cur, const std::string& key);

ConfigValue parse_array(Cursor& cur, const std::string& key) {
    std::vector<ConfigValue> items;
    ++cur.at;  // consume '['
    for (;;) {
        cur.skip_ws();
        if (cur.done()) fail(key, "unterminated array");
        if (cur.peek() == ']') {
            ++cur.at;
            break;
        }
        items.push_back(parse_value(cur, key));
        cur.skip_ws();
        if (!cur.done() && cur.peek() == ',') ++cur.at;
    }
    return ConfigValue{std::move(items)};
}

ConfigValue parse_value(Cursor& cur, const std::string& key) {
    cur.skip_ws();
    if (cur.done()) fail(key, "missing value");
    const char c = cur.peek();
    if (c == '[') return parse_array(cur, key);
    if (c == '"') {
        ++cur.at;
        std::string s;
        while (!cur.done() && cur.peek() != '"') s.push_back(cur.text[cur.at++]);
        if (cur.done()) fail(key, "unterminated string");
        ++cur.at;
        return ConfigValue{std::move(s)};
    }
    std::string token;
    while (!cur.done() && cur.peek() != ',' && cur.peek() != ']' && cur.peek() != '#' &&
           cur.peek() != ' ' && cur.peek() != '\t')
        token.push_back(cur.text[cur.at++]);
    if (token == "true") return ConfigValue{true};
    if (token == "false") return ConfigValue{false};
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) fail(key, "malformed number '" + token + "'");
        return ConfigValue{v};
    } catch (const std::exception&) {
        fail(key, "cannot parse value '" + token + "'");
    }
}

}  // namespace

double ConfigValue::as_number(const std::string& key) const {
    if (const double* v = std::get_if<double>(&data)) return *v;
    fail(key, "expected a number");
}

bool ConfigValue::as_bool(const std::string& key) const {
    if (const bool* v = std::get_if<bool>(&data)) return *v;
    fail(key, "expected true or false");
}

const std::string& ConfigValue::as_string(const std::string& key) const {
    if (const std::string* v = std::get_if<std::string>(&data)) return *v;
    fail(key, "expected a string");
}

const std::vector<ConfigValue>& ConfigValue::as_array(const std::string& key) const {
    if (const auto* v = std::get_if<std::vector<ConfigValue>>(&data)) return *v;
    fail(key, "expected an array");
}

ConfigTable ConfigTable::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_string(buf.str());
}

ConfigTable ConfigTable::parse_string(const std::string& text) {
    ConfigTable table;
    table.raw_ = text;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        // strip comments outside strings
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line.resize(i);
                break;
            }
        }
        std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        std::size_t end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = line.substr(0, eq);
        key.erase(key.find_last_not_of(" \t") + 1);
        const std::string full = section.empty() ? key : section + "." + key;
        Cursor cur{line, eq + 1};
        table.entries_[full] = parse_value(cur, full);
    }
    return table;
}

double ConfigTable::number(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) fail(key, "missing");
    return it->second.as_number(key);
}

double ConfigTable::number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

long ConfigTable::integer(const std::string& key) const {
    const double v = number(key);
    if (std::floor(v) != v) fail(key, "expected an integer");
    return static_cast<long>(v);
}

long ConfigTable::integer_or(const std::string& key, long fallback) const {
    return has(key) ? integer(key) : fallback;
}

bool ConfigTable::boolean_or(const std::string& key, bool fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return it->second.as_bool(key);
}

std::string ConfigTable::text(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) fail(key, "missing");
    return it->second.as_string(key);
}

std::string ConfigTable::text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
}

std::vector<double> ConfigTable::number_list(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) fail(key, "missing");
    std::vector<double> out;
    for (const auto& item : it->second.as_array(key)) out.push_back(item.as_number(key));
    return out;
}

std::vector<double> ConfigTable::number_list_or(const std::string& key,
                                                std::vector<double> fallback) const {
    return has(key) ? number_list(key) : fallback;
}

std::vector<Vec> ConfigTable::point_list(const std::string& key, int dim) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) fail(key, "missing");
    std::vector<Vec> out;
    for (const auto& item : it->second.as_array(key)) {
        const auto& coords = item.as_array(key);
        if (static_cast<int>(coords.size()) != dim)
            fail(key, "point dimension does not match physics.dimension");
        Vec p{};
        for (std::size_t d = 0; d < coords.size(); ++d)
            p[d] = coords[d].as_number(key);
        out.push_back(p);
    }
    return out;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_table(ConfigTable::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_table(ConfigTable table) {
    ExperimentConfig cfg;
    cfg.name = table.text_or("name", "experiment");
    if (!table.has("seed")) fail("seed", "missing (a seed is mandatory; no entropy default)");
    cfg.seed = static_cast<std::uint64_t>(table.integer("seed"));
    cfg.workers = static_cast<int>(table.integer_or("workers", 0));
    cfg.out_dir = table.text_or("output.dir", "out");

    const double hbar = table.number_or("physics.hbar", 1.0);
    const double mass = table.number_or("physics.mass", 1.0);
    const long dim = table.integer_or("physics.dimension", 1);
    if (hbar <= 0.0) fail("physics.hbar", "must be positive");
    if (mass <= 0.0) fail("physics.mass", "must be positive");
    if (dim < 1 || dim > 3) fail("physics.dimension", "must be 1, 2 or 3");
    cfg.physics = PhysParams(hbar, mass, static_cast<int>(dim));

    const std::string cov_kind = table.text_or("covariance.kind", "none");
    const bool transverse = table.boolean_or("covariance.transverse", true);
    const double amplitude = table.number_or("covariance.amplitude", 1.0);
    if (amplitude < 0.0) fail("covariance.amplitude", "must be >= 0");
    if (cov_kind == "none") {
        cfg.covariance = fields::CovarianceSpec::none();
    } else if (cov_kind == "constant") {
        cfg.covariance = fields::CovarianceSpec::constant(amplitude, transverse);
    } else if (cov_kind == "bounded") {
        const double length = table.number_or("covariance.length", 1.0);
        if (length <= 0.0) fail("covariance.length", "must be positive");
        cfg.covariance = fields::CovarianceSpec::bounded_isotropic(amplitude, length, transverse);
    } else if (cov_kind == "scale_invariant") {
        const double gamma = table.number_or("covariance.gamma", 0.3);
        const double kir = table.number_or("covariance.kappa_ir", 0.5);
        const double kuv = table.number_or("covariance.kappa_uv", 16.0);
        if (!(gamma > 0.0 && gamma < 1.0)) fail("covariance.gamma", "must lie in (0,1)");
        if (!(kir > 0.0 && kir < kuv)) fail("covariance.kappa_ir", "need 0 < kappa_ir < kappa_uv");
        cfg.covariance =
            fields::CovarianceSpec::scale_invariant(amplitude, gamma, kir, kuv, transverse);
    } else {
        fail("covariance.kind", "unknown kind '" + cov_kind + "'");
    }

    if (table.has("field_grid.spacing") || table.has("field_grid.half_extent")) {
        const double spacing = table.number_or("field_grid.spacing", 0.25);
        const double half = table.number_or("field_grid.half_extent", 8.0);
        if (spacing <= 0.0) fail("field_grid.spacing", "must be positive");
        if (half <= 0.0) fail("field_grid.half_extent", "must be positive");
        cfg.field_grid = fields::GridSpec::centered_box(cfg.physics.dimension, half, spacing);
    }

    if (table.has("fixed_field.kind")) {
        const std::string kind = table.text("fixed_field.kind");
        if (kind != "constant_b") fail("fixed_field.kind", "unknown kind '" + kind + "'");
        const double b = table.number_or("fixed_field.b", 1.0);
        if (b <= 0.0) fail("fixed_field.b", "must be positive");
        if (cfg.physics.dimension < 2)
            fail("fixed_field.kind", "constant_b needs dimension >= 2");
        cfg.fixed_field_b = b;
    }

    const std::string pot_kind = table.text_or("potential.kind", "zero");
    if (pot_kind == "zero") {
        cfg.potential = estimator::ScalarPotential::zero();
    } else if (pot_kind == "quadratic") {
        const double omega = table.number_or("potential.omega", 1.0);
        if (omega <= 0.0) fail("potential.omega", "must be positive");
        cfg.potential = estimator::ScalarPotential::quadratic(
            omega, static_cast<int>(table.integer_or("potential.axis", -1)));
    } else if (pot_kind == "power") {
        const double coeff = table.number_or("potential.coefficient", 1.0);
        const double beta = table.number_or("potential.beta", 1.0);
        if (coeff < 0.0) fail("potential.coefficient", "must be >= 0");
        if (beta <= 0.0) fail("potential.beta", "must be positive");
        cfg.potential = estimator::ScalarPotential::power_law(
            coeff, beta, table.number_or("potential.shift", 0.0));
    } else if (pot_kind == "bump") {
        const double height = table.number_or("potential.height", 1.0);
        const double width = table.number_or("potential.width", 1.0);
        if (height < 0.0) fail("potential.height", "must be >= 0");
        if (width <= 0.0) fail("potential.width", "must be positive");
        cfg.potential = estimator::ScalarPotential::custom(
            [height, width](const Vec& p) { return height * std::exp(-norm2(p) / (width * width)); },
            0.0, height, "bump(h=" + std::to_string(height) + ")");
    } else {
        fail("potential.kind", "unknown kind '" + pot_kind + "'");
    }

    cfg.n_fields = static_cast<int>(table.integer_or("mc.n_fields", 16));
    cfg.budget.n_paths = table.integer_or("mc.n_paths", 10000);
    cfg.budget.n_steps = static_cast<int>(table.integer_or("mc.n_steps", 128));
    if (cfg.n_fields < 1) fail("mc.n_fields", "must be >= 1");
    if (cfg.budget.n_paths < 1) fail("mc.n_paths", "must be >= 1");
    if (cfg.budget.n_steps < 2) fail("mc.n_steps", "must be >= 2");

    const int dim_i = cfg.physics.dimension;
    if (table.has("points.x")) cfg.points_x = table.point_list("points.x", dim_i);
    if (table.has("points.x_prime"))
        cfg.points_x_prime = table.point_list("points.x_prime", dim_i);
    if (table.has("points.tau")) {
        cfg.points_tau = table.number_list("points.tau");
        for (const double t : cfg.points_tau)
            if (t <= 0.0) fail("points.tau", "tau values must be positive");
    }
    if (table.has("points.mass_m")) {
        cfg.points_mass = table.number_list("points.mass_m");
        for (const double m : cfg.points_mass)
            if (m <= 0.0) fail("points.mass_m", "mass values must be positive");
    }

    cfg.table = std::move(table);
    return cfg;
}

std::uint64_t ExperimentConfig::config_hash() const {
    // FNV-1a over the raw config bytes
    std::uint64_t h = 1469598103934665603ull;
    for (const char c : table.raw_text()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

fields::PairCovariance ExperimentConfig::pair_covariance() const {
    const fields::GridSpec* grid = field_grid ? &*field_grid : nullptr;
    return fields::PairCovariance::for_spec(covariance, grid);
}

const fields::GridSpec& ExperimentConfig::require_grid(const std::string& why) const {
    if (!field_grid)
        throw ConfigError("config field 'field_grid': required " + why +
                          " (set field_grid.spacing and field_grid.half_extent)");
    return *field_grid;
}

}  // namespace mk::cli
