#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "reid/data.hpp"
#include "reid/evaluation.hpp"
#include "reid/model.hpp"
#include "reid/training.hpp"

namespace reid {

// Flat key = value run configuration. Values resolve as defaults overridden
// by a config file overridden by CLI flags; unknown keys are rejected and
// every run can echo its fully resolved configuration.
class RunConfig {
public:
    enum class Type { integer, real, boolean, text };

    struct OptionSpec {
        std::string key;
        Type type;
        std::string default_value;
        std::string help;
    };

    static const std::vector<OptionSpec>& schema();

    RunConfig();  // defaults

    // Parses `key = value` lines; '#' starts a comment. All problems are
    // collected and reported together.
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);

    bool is_set(const std::string& key) const { return set_keys_.count(key) > 0; }
    const std::string& get(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Fully resolved config, sorted by key, one line each.
    std::string echo() const;

    ModelConfig model_config(std::size_t num_classes) const;
    TrainPlan train_plan() const;
    AugmentConfig augment_config() const;
    EvalProtocol protocol() const;
    SynthConfig synth_config() const;

private:
    const OptionSpec& spec_for(const std::string& key) const;
    std::map<std::string, std::string> values_;
    std::set<std::string> set_keys_;
};

}  // namespace reid
