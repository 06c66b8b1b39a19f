#include "reid/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "reid/errors.hpp"

namespace reid {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::size_t> parse_csv_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    return out;
}

}  // namespace

const std::vector<RunConfig::OptionSpec>& RunConfig::schema() {
    using T = Type;
    static const std::vector<OptionSpec> specs = {
        // model
        {"preset", T::text, "desk", "model preset: desk | paper | custom"},
        {"input_h", T::integer, "0", "input height (0: preset default)"},
        {"input_w", T::integer, "0", "input width (0: preset default)"},
        {"conv_channels", T::text, "", "comma list of conv widths (empty: preset default)"},
        {"pool_after", T::text, "", "comma list of 1-based conv indices followed by a pool"},
        {"embedding_dim", T::integer, "0", "embedding dimension D (0: preset default)"},
        {"frw_enabled", T::boolean, "true", "enable the feature reweighting layer"},
        {"lrelu_slope", T::real, "0.1", "leaky ReLU negative slope"},
        // training
        {"iterations", T::integer, "25000", "training iterations"},
        {"lr", T::real, "0.001", "initial learning rate"},
        {"lr_decay_factor", T::real, "0.1", "learning rate decay factor"},
        {"lr_decay_step", T::integer, "22000", "iteration at which the decay applies"},
        {"batch_size", T::integer, "100", "batch size M"},
        {"weight_decay", T::real, "0.001", "decoupled weight decay"},
        {"lambda", T::real, "0.01", "center-loss balance coefficient"},
        {"beta", T::real, "0.001", "reweighting-constraint weight"},
        {"c", T::real, "200", "reweighting norm target C"},
        {"alpha", T::real, "0.5", "center update rate"},
        {"loss_mode", T::text, "IC", "loss mode: IC | I | IV"},
        {"seed", T::integer, "0", "run seed"},
        {"log_every", T::integer, "10", "log cadence in iterations"},
        // fine-tuning
        {"checkpoint", T::text, "", "input checkpoint path"},
        {"phase1_iterations", T::integer, "500", "head-only iterations"},
        {"phase1_early_stop", T::boolean, "true", "stop phase 1 on plateau"},
        {"phase2_iterations", T::integer, "1000", "all-parameter iterations"},
        // data
        {"dataset", T::text, "", "dataset directory (with manifest.txt)"},
        {"augment", T::boolean, "true", "augment the training partition"},
        {"translations_per_image", T::integer, "3", "random translated copies per image"},
        {"max_shift_h", T::real, "0.05", "max vertical shift fraction"},
        {"max_shift_w", T::real, "0.05", "max horizontal shift fraction"},
        {"horizontal_flip", T::boolean, "true", "add one mirrored copy per image"},
        // evaluation protocol
        {"train_frac", T::real, "0.8", "identity fraction assigned to training"},
        {"num_splits", T::integer, "1", "random splits for evaluation"},
        {"protocol_seed", T::integer, "0", "seed for identity partitions"},
        {"max_rank", T::integer, "10", "CMC ranks reported"},
        {"swap_views", T::boolean, "false", "swap probe and gallery camera views"},
        // synthetic generation
        {"synth_ids", T::integer, "50", "synthetic identity count"},
        {"synth_cams", T::integer, "2", "synthetic camera count"},
        {"synth_shots", T::integer, "4", "shots per identity per camera"},
        {"synth_height", T::integer, "32", "synthetic image height"},
        {"synth_width", T::integer, "16", "synthetic image width"},
        {"synth_noise", T::real, "0.04", "per-shot pixel noise sigma"},
        // comparison harness
        {"budget", T::integer, "600", "iteration budget per comparison arm"},
        {"compare_seeds", T::integer, "3", "number of seeds per arm"},
        {"compare_modes", T::text, "IC,IV", "comma list of loss modes to compare"},
        // output
        {"out", T::text, "out", "output directory"},
    };
    return specs;
}

RunConfig::RunConfig() {
    for (const auto& s : schema()) values_[s.key] = s.default_value;
}

const RunConfig::OptionSpec& RunConfig::spec_for(const std::string& key) const {
    for (const auto& s : schema())
        if (s.key == key) return s;
    throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& spec = spec_for(key);
    // type check now so bad values fail at the door
    try {
        switch (spec.type) {
            case Type::integer: (void)std::stoll(value); break;
            case Type::real: (void)std::stod(value); break;
            case Type::boolean:
                if (value != "true" && value != "false" && value != "1" && value != "0")
                    throw std::invalid_argument(value);
                break;
            case Type::text: break;
        }
    } catch (const std::exception&) {
        throw ConfigError("bad value for '" + key + "': '" + value + "'");
    }
    values_[key] = value;
    set_keys_.insert(key);
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::vector<std::string> problems;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            set(key, value);
        } catch (const ConfigError& e) {
            problems.push_back(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "config file errors:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::exception&) {
        throw ConfigError("bad integer for '" + key + "': '" + get(key) + "'");
    }
}

double RunConfig::get_real(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::exception&) {
        throw ConfigError("bad number for '" + key + "': '" + get(key) + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for '" + key + "': '" + v + "'");
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
}

ModelConfig RunConfig::model_config(std::size_t num_classes) const {
    const std::string preset = get("preset");
    ModelConfig cfg;
    if (preset == "desk") cfg = ModelConfig::desk_preset(num_classes);
    else if (preset == "paper") cfg = ModelConfig::paper_preset(num_classes);
    else {
        cfg.preset = Preset::custom;
        cfg.num_classes = num_classes;
    }
    if (get_int("input_h") > 0) cfg.input_h = static_cast<std::size_t>(get_int("input_h"));
    if (get_int("input_w") > 0) cfg.input_w = static_cast<std::size_t>(get_int("input_w"));
    if (!get("conv_channels").empty()) cfg.conv_channels = parse_csv_sizes(get("conv_channels"));
    if (!get("pool_after").empty()) cfg.pool_after = parse_csv_sizes(get("pool_after"));
    if (get_int("embedding_dim") > 0)
        cfg.embedding_dim = static_cast<std::size_t>(get_int("embedding_dim"));
    cfg.frw_enabled = get_bool("frw_enabled");
    cfg.lrelu_slope = get_real("lrelu_slope");
    cfg.frw_norm_target = get_real("c");
    cfg.validate();
    return cfg;
}

TrainPlan RunConfig::train_plan() const {
    TrainPlan plan;
    plan.iterations = static_cast<int>(get_int("iterations"));
    plan.lr0 = get_real("lr");
    plan.lr_decay_factor = get_real("lr_decay_factor");
    plan.lr_decay_step = static_cast<int>(get_int("lr_decay_step"));
    plan.batch_size = static_cast<int>(get_int("batch_size"));
    plan.weight_decay = get_real("weight_decay");
    plan.loss.lambda = get_real("lambda");
    plan.loss.beta = get_real("beta");
    plan.loss.c_target = get_real("c");
    plan.alpha = get_real("alpha");
    plan.mode = loss_mode_from_name(get("loss_mode"));
    plan.seed = static_cast<std::uint64_t>(get_int("seed"));
    plan.log_every = static_cast<int>(get_int("log_every"));
    plan.validate();
    return plan;
}

AugmentConfig RunConfig::augment_config() const {
    AugmentConfig cfg;
    cfg.translations_per_image = static_cast<int>(get_int("translations_per_image"));
    cfg.max_shift_h = get_real("max_shift_h");
    cfg.max_shift_w = get_real("max_shift_w");
    cfg.horizontal_flip = get_bool("horizontal_flip");
    cfg.validate();
    return cfg;
}

EvalProtocol RunConfig::protocol() const {
    EvalProtocol proto;
    proto.num_splits = static_cast<std::size_t>(get_int("num_splits"));
    proto.train_frac = get_real("train_frac");
    proto.seed = static_cast<std::uint64_t>(get_int("protocol_seed"));
    proto.max_rank = static_cast<std::size_t>(get_int("max_rank"));
    proto.swap_views = get_bool("swap_views");
    if (proto.num_splits < 1) throw ConfigError("num_splits must be >= 1");
    if (!(proto.train_frac > 0.0 && proto.train_frac < 1.0))
        throw ConfigError("train_frac must be in (0, 1)");
    return proto;
}

SynthConfig RunConfig::synth_config() const {
    SynthConfig cfg;
    cfg.num_ids = static_cast<std::size_t>(get_int("synth_ids"));
    cfg.cams = static_cast<std::size_t>(get_int("synth_cams"));
    cfg.shots_per_cam = static_cast<std::size_t>(get_int("synth_shots"));
    cfg.height = static_cast<std::size_t>(get_int("synth_height"));
    cfg.width = static_cast<std::size_t>(get_int("synth_width"));
    cfg.seed = static_cast<std::uint64_t>(get_int("seed"));
    cfg.noise_sigma = get_real("synth_noise");
    return cfg;
}

}  // namespace reid
