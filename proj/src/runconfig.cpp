#include "milasc/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "milasc/errors.hpp"

namespace milasc {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int n = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ValidationError("config: " + key + " expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ValidationError("config: " + key + " expects a number, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ValidationError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::string cur;
    for (char ch : v + ",") {
        if (ch == ',') {
            if (!trim(cur).empty()) out.push_back(to_int(key, trim(cur)));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (out.empty()) throw ValidationError("config: " + key + " expects a comma-separated list");
    return out;
}

} // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config: line " + std::to_string(line_no) +
                                  " is not key = value: '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ValidationError("config: line " + std::to_string(line_no) + " has an empty key");
        }
        if (kv.count(key)) {
            throw ValidationError("config: duplicate key '" + key + "'");
        }
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_key_values(text.str());
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::defaults() { return RunConfig{}; }

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "model.head") {
            if (value == "sd") {
                model.head = HeadKind::sd;
            } else if (value == "md") {
                model.head = HeadKind::md;
            } else {
                throw ValidationError("config: model.head expects sd or md, got '" + value + "'");
            }
        } else if (key == "model.mts") {
            model.mts = to_bool(key, value);
        } else if (key == "model.k") {
            model.sub_detectors = to_int(key, value);
        } else if (key == "model.classes") {
            model.classes = to_int(key, value);
        } else if (key == "model.channels") {
            model.block_channels = to_int_list(key, value);
        } else if (key == "model.instance_dim") {
            model.instance_dim = to_int(key, value);
        } else if (key == "model.bands") {
            model.bands = to_int(key, value);
        } else if (key == "model.frames") {
            model.frames = to_int(key, value);
        } else if (key == "loss.alpha") {
            train.loss.alpha = value == "auto" ? 0.0 : to_double(key, value);
        } else if (key == "loss.type") {
            if (value == "wbce") {
                train.loss.type = LossType::weighted_bce;
            } else if (value == "cce") {
                train.loss.type = LossType::categorical_ce;
            } else {
                throw ValidationError("config: loss.type expects wbce or cce, got '" + value + "'");
            }
        } else if (key == "optim.lr") {
            train.lr = to_double(key, value);
        } else if (key == "optim.beta1") {
            train.beta1 = to_double(key, value);
        } else if (key == "optim.beta2") {
            train.beta2 = to_double(key, value);
        } else if (key == "optim.eps") {
            train.eps = to_double(key, value);
        } else if (key == "sched.factor") {
            train.sched_factor = to_double(key, value);
        } else if (key == "sched.patience") {
            train.sched_patience = to_int(key, value);
        } else if (key == "train.epochs") {
            train.epochs = to_int(key, value);
        } else if (key == "train.batch") {
            train.batch = to_int(key, value);
        } else if (key == "train.seed") {
            train.seed = to_u64(key, value);
        } else if (key == "data.train") {
            data_train = value;
        } else if (key == "data.val") {
            data_val = value;
        } else if (key == "out.dir") {
            out_dir = value;
        } else {
            throw ValidationError("config: unknown key '" + key + "'");
        }
    }
    model.seed = train.seed;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c = defaults();
    c.apply(parse_key_values(text));
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig c = defaults();
    c.apply(parse_key_value_file(path));
    return c;
}

std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "model.head = " << (model.head == HeadKind::sd ? "sd" : "md") << "\n";
    os << "model.mts = " << (model.mts ? "true" : "false") << "\n";
    os << "model.k = " << model.sub_detectors << "\n";
    os << "model.classes = " << model.classes << "\n";
    os << "model.channels = ";
    for (std::size_t i = 0; i < model.block_channels.size(); ++i) {
        if (i) os << ",";
        os << model.block_channels[i];
    }
    os << "\n";
    os << "model.instance_dim = " << model.instance_dim << "\n";
    os << "model.bands = " << model.bands << "\n";
    os << "model.frames = " << model.frames << "\n";
    os << "loss.alpha = " << train.loss.resolved_alpha(model.classes) << "\n";
    os << "loss.type = " << (train.loss.type == LossType::weighted_bce ? "wbce" : "cce") << "\n";
    os << "optim.lr = " << train.lr << "\n";
    os << "optim.beta1 = " << train.beta1 << "\n";
    os << "optim.beta2 = " << train.beta2 << "\n";
    os << "optim.eps = " << train.eps << "\n";
    os << "sched.factor = " << train.sched_factor << "\n";
    os << "sched.patience = " << train.sched_patience << "\n";
    os << "train.epochs = " << train.epochs << "\n";
    os << "train.batch = " << train.batch << "\n";
    os << "train.seed = " << train.seed << "\n";
    os << "data.train = " << data_train << "\n";
    os << "data.val = " << data_val << "\n";
    os << "out.dir = " << out_dir << "\n";
    return os.str();
}

ModelConfig model_config_from_text(const std::string& text) {
    return RunConfig::from_text(text).model;
}

// ---------------------------------------------------------------------------
// SynthConfig
// ---------------------------------------------------------------------------

SynthConfig SynthConfig::defaults() { return SynthConfig{}; }

void SynthConfig::apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "synth.classes") {
            spec.classes = to_int(key, value);
        } else if (key == "synth.events_per_class") {
            spec.events_per_class = to_int(key, value);
        } else if (key == "synth.bands") {
            spec.bands = to_int(key, value);
        } else if (key == "synth.frames") {
            spec.frames = to_int(key, value);
        } else if (key == "synth.events_per_clip_min") {
            spec.events_per_clip_min = to_int(key, value);
        } else if (key == "synth.events_per_clip_max") {
            spec.events_per_clip_max = to_int(key, value);
        } else if (key == "synth.event_duration_min") {
            spec.event_duration_min = to_int(key, value);
        } else if (key == "synth.event_duration_max") {
            spec.event_duration_max = to_int(key, value);
        } else if (key == "synth.common_pool") {
            spec.common_pool = to_int(key, value);
        } else if (key == "synth.common_per_clip_min") {
            spec.common_per_clip_min = to_int(key, value);
        } else if (key == "synth.common_per_clip_max") {
            spec.common_per_clip_max = to_int(key, value);
        } else if (key == "synth.noise") {
            spec.noise_level = to_double(key, value);
        } else if (key == "synth.event_amplitude") {
            spec.event_amplitude = to_double(key, value);
        } else if (key == "synth.overlap") {
            spec.overlap_allowed = to_bool(key, value);
        } else if (key == "synth.train_clips_per_class") {
            spec.clips_per_class = to_int(key, value);
        } else if (key == "synth.val_clips_per_class") {
            val_clips_per_class = to_int(key, value);
        } else if (key == "synth.seed") {
            spec.seed = to_u64(key, value);
        } else {
            throw ValidationError("config: unknown key '" + key + "'");
        }
    }
}

SynthConfig SynthConfig::from_file(const std::string& path) {
    SynthConfig c = defaults();
    c.apply(parse_key_value_file(path));
    return c;
}

std::string SynthConfig::resolved_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "synth.classes = " << spec.classes << "\n";
    os << "synth.events_per_class = " << spec.events_per_class << "\n";
    os << "synth.bands = " << spec.bands << "\n";
    os << "synth.frames = " << spec.frames << "\n";
    os << "synth.events_per_clip_min = " << spec.events_per_clip_min << "\n";
    os << "synth.events_per_clip_max = " << spec.events_per_clip_max << "\n";
    os << "synth.event_duration_min = " << spec.event_duration_min << "\n";
    os << "synth.event_duration_max = " << spec.event_duration_max << "\n";
    os << "synth.common_pool = " << spec.common_pool << "\n";
    os << "synth.common_per_clip_min = " << spec.common_per_clip_min << "\n";
    os << "synth.common_per_clip_max = " << spec.common_per_clip_max << "\n";
    os << "synth.noise = " << spec.noise_level << "\n";
    os << "synth.event_amplitude = " << spec.event_amplitude << "\n";
    os << "synth.overlap = " << (spec.overlap_allowed ? "true" : "false") << "\n";
    os << "synth.train_clips_per_class = " << spec.clips_per_class << "\n";
    os << "synth.val_clips_per_class = " << val_clips_per_class << "\n";
    os << "synth.seed = " << spec.seed << "\n";
    return os.str();
}

} // namespace milasc
