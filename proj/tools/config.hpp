#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "magnetokernel/estimator.hpp"
#include "magnetokernel/fields.hpp"
#include "magnetokernel/geometry.hpp"

namespace mk::cli {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One parsed value: scalar, string, bool, or (nested) array.
struct ConfigValue {
    std::variant<double, bool, std::string, std::vector<ConfigValue>> data;

    double as_number(const std::string& key) const;
    bool as_bool(const std::string& key) const;
    const std::string& as_string(const std::string& key) const;
    const std::vector<ConfigValue>& as_array(const std::string& key) const;
};

/// Key-value config with TOML-style [section] tables, e.g. "mc.n_paths".
/// Supports numbers, booleans, quoted strings, arrays and arrays of arrays.
class ConfigTable {
  public:
    static ConfigTable parse_file(const std::string& path);
    static ConfigTable parse_string(const std::string& text);

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    long integer(const std::string& key) const;
    long integer_or(const std::string& key, long fallback) const;
    bool boolean_or(const std::string& key, bool fallback) const;
    std::string text(const std::string& key) const;
    std::string text_or(const std::string& key, const std::string& fallback) const;
    std::vector<double> number_list(const std::string& key) const;
    std::vector<double> number_list_or(const std::string& key,
                                       std::vector<double> fallback) const;
    std::vector<Vec> point_list(const std::string& key, int dim) const;

    const std::string& raw_text() const { return raw_; }

  private:
    std::map<std::string, ConfigValue> entries_;
    std::string raw_;
};

/// Everything a run needs, validated; construction throws ConfigError with
/// the offending field name.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    int workers = 0;
    std::string out_dir = "out";

    PhysParams physics = PhysParams::natural(1);
    fields::CovarianceSpec covariance;
    std::optional<fields::GridSpec> field_grid;
    std::optional<double> fixed_field_b;  // deterministic constant-B field
    estimator::ScalarPotential potential;

    int n_fields = 16;
    estimator::McBudget budget;

    std::vector<Vec> points_x;
    std::vector<Vec> points_x_prime;
    std::vector<double> points_tau;
    std::vector<double> points_mass;

    ConfigTable table;  // raw access for subcommand-specific knobs

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_table(ConfigTable table);

    std::uint64_t config_hash() const;
    fields::PairCovariance pair_covariance() const;
    const fields::GridSpec& require_grid(const std::string& why) const;
};

}  // namespace mk::cli
