#include "shapenet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "shapenet/error.hpp"

namespace shapenet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream s(v);
    std::string item;
    while (std::getline(s, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T> T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw InvalidArgument("bad value for '" + key + "': '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidArgument("bad value for '" + key + "': '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InvalidArgument("bad value for '" + key + "': '" + v + "' (true/false)");
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T> std::string show(T v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

#define INT_FIELD(name, member)                                                                                        \
    {name,                                                                                                             \
     {[](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<int>(k, v); },           \
      [](const RunConfig& c) { return show(c.member); }}}
#define SIZE_FIELD(name, member)                                                                                       \
    {name,                                                                                                             \
     {[](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<std::size_t>(k, v); },   \
      [](const RunConfig& c) { return show(c.member); }}}
#define REAL_FIELD(name, member)                                                                                       \
    {name,                                                                                                             \
     {[](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_real(k, v); },                  \
      [](const RunConfig& c) { return show(c.member); }}}
#define BOOL_FIELD(name, member)                                                                                       \
    {name,                                                                                                             \
     {[](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); },                  \
      [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        REAL_FIELD("learning_rate", train.learning_rate),
        REAL_FIELD("dense_learning_rate", train.dense_learning_rate),
        REAL_FIELD("top_learning_rate", train.top_learning_rate),
        REAL_FIELD("momentum", train.momentum),
        REAL_FIELD("initial_momentum", train.initial_momentum),
        INT_FIELD("momentum_switch_epoch", train.momentum_switch_epoch),
        REAL_FIELD("weight_decay", train.weight_decay),
        INT_FIELD("cd_k", train.cd_k),
        INT_FIELD("batch_size", train.batch_size),
        INT_FIELD("epochs_per_layer", train.epochs_per_layer),
        INT_FIELD("top_epochs", train.top_epochs),
        REAL_FIELD("sparsity_target", train.sparsity_target),
        REAL_FIELD("sparsity_weight", train.sparsity_weight),
        REAL_FIELD("fpcd_fast_decay", train.fpcd_fast_decay),
        REAL_FIELD("fpcd_fast_lr", train.fpcd_fast_lr),
        INT_FIELD("persistent_chains", train.persistent_chains),
        INT_FIELD("finetune_epochs", train.finetune_epochs),
        REAL_FIELD("finetune_learning_rate", train.finetune_learning_rate),
        INT_FIELD("discriminative_epochs", train.discriminative_epochs),
        REAL_FIELD("discriminative_learning_rate", train.discriminative_learning_rate),
        {"seed",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              c.seed = parse_number<std::uint64_t>(k, v);
              c.train.seed = c.seed;
              c.svm.seed = c.seed;
              c.seed_set = true;
          },
          [](const RunConfig& c) { return show(c.seed); }}},
        INT_FIELD("outer_samples", nbv.outer_samples),
        INT_FIELD("inner_particles", nbv.inner_particles),
        INT_FIELD("outer_iterations", nbv.outer_iterations),
        INT_FIELD("inner_iterations", nbv.inner_iterations),
        INT_FIELD("classify_particles", nbv.classify_particles),
        INT_FIELD("classify_iterations", nbv.classify_iterations),
        REAL_FIELD("svm_lambda", svm.lambda),
        INT_FIELD("svm_epochs", svm.epochs),
        {"classes",
         {[](RunConfig& c, const std::string&, const std::string& v) {
              c.classes.clear();
              for (const auto& name : split_list(v)) c.classes.push_back(parse_shape_class(name));
          },
          [](const RunConfig& c) {
              std::string s;
              for (auto cls : c.classes) s += (s.empty() ? "" : ",") + std::string(shape_class_name(cls));
              return s;
          }}},
        {"architecture",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v != "desk" && v != "paper") throw InvalidArgument("bad value for '" + k + "': '" + v + "' (desk/paper)");
              c.architecture = v;
          },
          [](const RunConfig& c) { return c.architecture; }}},
        INT_FIELD("samples_per_class", samples_per_class),
        REAL_FIELD("test_fraction", test_fraction),
        INT_FIELD("particles", particles),
        INT_FIELD("iterations", iterations),
        INT_FIELD("eval_particles", eval_particles),
        INT_FIELD("eval_iterations", eval_iterations),
        SIZE_FIELD("knn_k", knn_k),
        SIZE_FIELD("candidates", candidates),
        INT_FIELD("nbv_episodes_per_class", nbv_episodes_per_class),
        {"strategies",
         {[](RunConfig& c, const std::string&, const std::string& v) {
              c.strategies.clear();
              for (const auto& name : split_list(v)) c.strategies.push_back(parse_strategy(name));
          },
          [](const RunConfig& c) {
              std::string s;
              for (auto st : c.strategies) s += (s.empty() ? "" : ",") + strategy_name(st);
              return s;
          }}},
        INT_FIELD("train_views", train_views),
        BOOL_FIELD("wake_sleep", wake_sleep),
        BOOL_FIELD("discriminative", discriminative),
        INT_FIELD("threads", threads),
    };
    return table;
}

#undef INT_FIELD
#undef SIZE_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

} // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source) {
    KeyValues kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(line_no);
        if (eq == std::string::npos) throw InvalidArgument(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw InvalidArgument(where + ": empty key");
        if (!kv.emplace(key, value).second) throw InvalidArgument(where + ": duplicate key '" + key + "'");
    }
    return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InvalidArgument("cannot open config " + path.string());
    return parse_key_values(f, path.string());
}

void RunConfig::validate() const {
    train.validate();
    nbv.validate();
    if (classes.size() < 2) throw InvalidArgument("need at least two classes");
    if (samples_per_class < 2) throw InvalidArgument("samples_per_class must be at least 2");
    if (!(test_fraction > 0 && test_fraction < 1)) throw InvalidArgument("test_fraction must lie in (0, 1)");
    if (particles < 1 || iterations < 1 || eval_particles < 1 || eval_iterations < 1)
        throw InvalidArgument("particle and iteration counts must be at least 1");
    if (knn_k < 1) throw InvalidArgument("knn_k must be at least 1");
    if (candidates < 1) throw InvalidArgument("candidates must be at least 1");
    if (nbv_episodes_per_class < 0 || train_views < 1) throw InvalidArgument("episode and view counts out of range");
    if (threads < 1) throw InvalidArgument("threads must be at least 1");
}

void apply_key_values(RunConfig& cfg, const KeyValues& kv) {
    const auto& table = fields();
    for (const auto& [k, v] : kv) {
        const auto it = table.find(k);
        if (it == table.end()) throw InvalidArgument("unknown config key '" + k + "'");
        it->second.set(cfg, k, v);
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    RunConfig cfg;
    apply_key_values(cfg, read_key_values(path));
    return cfg;
}

std::string format_run_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : fields()) keys.push_back(k);
    return keys;
}

} // namespace shapenet
