#include "berm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace berm {

namespace pt = boost::property_tree;

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"format", "version", "integer", "config dialect version; must be 1"},
        {"model", "dim", "count", "number of assets d (default 2)"},
        {"model", "rate", "1/year", "riskless rate r"},
        {"model", "dividends", "1/year", "dividend yields delta_i; one value or d values"},
        {"model", "volatilities", "1/sqrt(year)", "volatilities sigma_i; one value or d values"},
        {"model", "correlation", "dimensionless", "'identity' or d*d row-major entries"},
        {"model", "spot", "currency", "initial prices x0_i; one value or d values"},
        {"model", "maturity", "years", "maturity T"},
        {"model", "exercise_dates", "count", "number of exercise dates J (dates T/J, ..., T)"},
        {"model", "strike", "currency", "max-call strike"},
        {"fit", "tv_degree", "degree", "total-degree cap of the lower-bound regression basis"},
        {"fit", "tv_include_payoff", "bool", "append the payoff to the lower-bound basis"},
        {"fit", "training_paths", "paths", "training paths for the lower-bound fit"},
        {"fit", "cv_blocks", "count", "Hermite truncation K"},
        {"fit", "cv_index_mode", "blocks|functions", "whether K counts degree blocks or single functions"},
        {"fit", "cv_degree", "degree", "total-degree cap of the control-variate basis"},
        {"fit", "cv_include_payoff", "bool", "append the payoff to the control-variate basis"},
        {"fit", "cv_training_paths", "paths", "training paths N_r for the control-variate fit"},
        {"estimator", "outer_paths", "paths", "N"},
        {"estimator", "inner_samples", "samples", "N_d"},
        {"estimator", "exercise_at_zero", "bool", "allow exercise at t = 0"},
        {"estimator", "ml_levels", "count", "finest multilevel level L (levels 0..L)"},
        {"estimator", "ml_inner_base", "samples", "multilevel (N_d)_0; (N_d)_l = base 4^l"},
        {"estimator", "ml_outer_base", "paths", "multilevel N_0; N_l = base / 2^l"},
        {"estimator", "lower_paths", "paths", "fresh paths for the lower-bound policy value"},
        {"estimator", "reference_replications", "count", "independent runs averaged by 'reference'"},
        {"estimator", "reference_outer", "paths", "N of each reference run"},
        {"estimator", "reference_inner", "samples", "N_d of each reference run"},
        {"sweep", "estimators", "names", "subset of: standard cv multilevel eep"},
        {"sweep", "standard_eps_exponents", "exponents i", "eps = 2^-i for standard and eep"},
        {"sweep", "cv_eps_exponents", "exponents i", "eps = 2^-i for cv"},
        {"sweep", "multilevel_eps_exponents", "exponents i", "eps = 2^-i for multilevel"},
        {"sweep", "replications", "count", "macro-replications R per epsilon"},
        {"sweep", "scale", "factor in (0,1]", "multiplies N, N_d, N_r and N_l"},
        {"sweep", "outer_paths", "paths", "unscaled N of standard and cv runs"},
        {"sweep", "standard_inner_coef", "samples", "standard N_d = c eps^-2"},
        {"sweep", "cv_inner_coef", "samples", "cv N_d = c eps^-1"},
        {"sweep", "cv_training_coef", "paths", "cv N_r = c eps^-1"},
        {"sweep", "ml_inner_base", "samples", "multilevel (N_d)_l = c 4^l"},
        {"sweep", "ml_outer_log2", "log2(paths)", "multilevel N_l = 2^(c - l)"},
        {"sweep", "timing", "bool", "record wall-clock seconds (false writes 0 for reproducible files)"},
        {"run", "seed", "uint64", "master seed"},
        {"output", "value_functions", "file name", "lower-bound artifact"},
        {"output", "cv_model", "file name", "control-variate artifact"},
        {"output", "reference", "file name", "reference price artifact"},
        {"output", "prices", "file name", "CSV that 'price' appends to"},
        {"output", "runs", "file name", "sweep run records"},
        {"output", "rmse", "file name", "sweep RMSE table"},
        {"output", "slopes", "file name", "sweep slope report"},
    };
    return keys;
}

std::string config_help() {
    std::ostringstream out;
    out << "Config keys (INI; '#' or ';' comment lines; lists are whitespace separated):\n";
    std::string section;
    for (const auto& k : config_keys()) {
        if (k.section != section) {
            section = k.section;
            out << "  [" << section << "]\n";
        }
        out << "    " << k.name << " (" << k.unit << "): " << k.description << '\n';
    }
    return out.str();
}

namespace {

class Reader {
public:
    Reader(const pt::ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {}

    const std::string* raw(const std::string& section, const std::string& key) const {
        const auto sec = tree_.get_child_optional(section);
        if (!sec) return nullptr;
        const auto v = sec->get_child_optional(key);
        if (!v) return nullptr;
        return &v->data();
    }

    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const {
        throw ConfigError(source_ + ": [" + section + "] " + key + ": " + what);
    }

    template <class T>
    void number(const std::string& section, const std::string& key, T& out) const {
        if (const auto* s = raw(section, key)) out = parse<T>(section, key, trim(*s));
    }

    void boolean(const std::string& section, const std::string& key, bool& out) const {
        const auto* s = raw(section, key);
        if (!s) return;
        const std::string v = trim(*s);
        if (v == "true" || v == "yes" || v == "1") {
            out = true;
        } else if (v == "false" || v == "no" || v == "0") {
            out = false;
        } else {
            fail(section, key, "expected true or false, got '" + v + "'");
        }
    }

    void text(const std::string& section, const std::string& key, std::string& out) const {
        if (const auto* s = raw(section, key)) {
            out = trim(*s);
            if (out.empty()) fail(section, key, "empty value");
        }
    }

    std::vector<std::string> words(const std::string& section, const std::string& key) const {
        std::vector<std::string> out;
        if (const auto* s = raw(section, key)) {
            std::istringstream in(*s);
            std::string w;
            while (in >> w) out.push_back(w);
            if (out.empty()) fail(section, key, "empty list");
        }
        return out;
    }

    template <class T>
    bool list(const std::string& section, const std::string& key, std::vector<T>& out) const {
        const auto w = words(section, key);
        if (w.empty()) return false;
        out.clear();
        for (const auto& s : w) out.push_back(parse<T>(section, key, s));
        return true;
    }

    template <class T>
    T parse(const std::string& section, const std::string& key, const std::string& s) const {
        T v{};
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
            fail(section, key, "cannot parse '" + s + "'");
        }
        return v;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

private:
    const pt::ptree& tree_;
    std::string source_;
};

void check_known(const pt::ptree& tree, const std::string& source) {
    std::map<std::string, std::set<std::string>> known;
    for (const auto& k : config_keys()) known[k.section].insert(k.name);
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(source + ": key '" + section + "' outside any section");
        }
        const auto it = known.find(section);
        if (it == known.end()) throw ConfigError(source + ": unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            if (!it->second.contains(key)) {
                throw ConfigError(source + ": unknown key '" + key + "' in [" + section + "] (see --help)");
            }
        }
    }
}

std::vector<double> broadcast(const Reader& r, const std::string& key, std::vector<double> fallback,
                              std::size_t d) {
    std::vector<double> v;
    if (!r.list("model", key, v)) v = std::move(fallback);
    if (v.size() == 1) v.assign(d, v[0]);
    if (v.size() != d) {
        r.fail("model", key, "expected 1 or " + std::to_string(d) + " values, got " + std::to_string(v.size()));
    }
    return v;
}

}  // namespace

EstimatorConfig Config::estimator_config(unsigned threads) const {
    EstimatorConfig cfg;
    cfg.outer_paths = estimator.outer_paths;
    cfg.inner_samples = estimator.inner_samples;
    cfg.exercise_at_zero = estimator.exercise_at_zero;
    cfg.threads = threads;
    cfg.multilevel = MultilevelSchedule::geometric(estimator.ml_finest, estimator.ml_inner_base,
                                                   estimator.ml_outer_base);
    return cfg;
}

Config parse_config(const std::string& text, const std::string& source) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(source + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    check_known(tree, source);
    const Reader r(tree, source);

    const auto* version = r.raw("format", "version");
    if (!version) throw ConfigError(source + ": missing [format] version (this build reads version 1)");
    if (r.parse<int>("format", "version", Reader::trim(*version)) != kConfigVersion) {
        r.fail("format", "version", "unsupported version '" + Reader::trim(*version) + "' (expected 1)");
    }

    Config c;
    std::size_t d = 2;
    r.number("model", "dim", d);
    if (d < 1) r.fail("model", "dim", "must be at least 1");
    r.number("model", "rate", c.model.rate);
    c.model.dividends = broadcast(r, "dividends", {0.02}, d);
    c.model.volatilities = broadcast(r, "volatilities", {0.2}, d);
    c.model.spot = broadcast(r, "spot", {100.0}, d);
    c.model.maturity = 1.0;
    r.number("model", "maturity", c.model.maturity);
    c.model.exercise_dates = 20;
    r.number("model", "exercise_dates", c.model.exercise_dates);
    r.number("model", "strike", c.strike);
    const auto corr = r.words("model", "correlation");
    if (!(corr.empty() || (corr.size() == 1 && corr[0] == "identity"))) {
        r.list("model", "correlation", c.model.correlation);
        if (c.model.correlation.size() != d * d) {
            r.fail("model", "correlation", "expected 'identity' or " + std::to_string(d * d) + " values");
        }
    }

    auto& f = c.fit;
    r.number("fit", "tv_degree", f.tv_degree);
    r.boolean("fit", "tv_include_payoff", f.tv_include_payoff);
    r.number("fit", "training_paths", f.training_paths);
    r.number("fit", "cv_blocks", f.cv_blocks);
    if (const auto* mode = r.raw("fit", "cv_index_mode")) {
        const auto m = Reader::trim(*mode);
        if (m == "blocks") {
            f.cv_selection = HermiteSelection::blocks;
        } else if (m == "functions") {
            f.cv_selection = HermiteSelection::functions;
        } else {
            r.fail("fit", "cv_index_mode", "expected blocks or functions, got '" + m + "'");
        }
    }
    r.number("fit", "cv_degree", f.cv_degree);
    r.boolean("fit", "cv_include_payoff", f.cv_include_payoff);
    r.number("fit", "cv_training_paths", f.cv_training_paths);

    auto& e = c.estimator;
    r.number("estimator", "outer_paths", e.outer_paths);
    r.number("estimator", "inner_samples", e.inner_samples);
    r.boolean("estimator", "exercise_at_zero", e.exercise_at_zero);
    r.number("estimator", "ml_levels", e.ml_finest);
    r.number("estimator", "ml_inner_base", e.ml_inner_base);
    r.number("estimator", "ml_outer_base", e.ml_outer_base);
    r.number("estimator", "lower_paths", e.lower_paths);
    r.number("estimator", "reference_replications", e.reference_replications);
    r.number("estimator", "reference_outer", e.reference_outer);
    r.number("estimator", "reference_inner", e.reference_inner);

    auto& s = c.sweep;
    if (const auto names = r.words("sweep", "estimators"); !names.empty()) s.estimators = names;
    r.list("sweep", "standard_eps_exponents", s.standard_exponents);
    r.list("sweep", "cv_eps_exponents", s.cv_exponents);
    r.list("sweep", "multilevel_eps_exponents", s.multilevel_exponents);
    r.number("sweep", "replications", s.replications);
    r.number("sweep", "scale", s.scale);
    r.number("sweep", "outer_paths", s.outer_paths);
    r.number("sweep", "standard_inner_coef", s.standard_inner_coef);
    r.number("sweep", "cv_inner_coef", s.cv_inner_coef);
    r.number("sweep", "cv_training_coef", s.cv_training_coef);
    r.number("sweep", "ml_inner_base", s.ml_inner_base);
    r.number("sweep", "ml_outer_log2", s.ml_outer_log2);
    r.boolean("sweep", "timing", s.record_timing);
    s.cv_blocks = f.cv_blocks;
    s.cv_selection = f.cv_selection;
    s.cv_degree = f.cv_degree;
    s.cv_include_payoff = f.cv_include_payoff;
    s.exercise_at_zero = e.exercise_at_zero;

    r.number("run", "seed", c.seed);

    auto& o = c.output;
    r.text("output", "value_functions", o.value_functions);
    r.text("output", "cv_model", o.cv_model);
    r.text("output", "reference", o.reference);
    r.text("output", "prices", o.prices);
    r.text("output", "runs", o.runs);
    r.text("output", "rmse", o.rmse);
    r.text("output", "slopes", o.slopes);

    // Semantic checks; constructors throw ConfigError with their own message.
    try {
        (void)c.model_spec();
        if (f.training_paths < 1 || f.cv_training_paths < 1) throw ConfigError("training paths must be >= 1");
        c.estimator_config(1).validate();
        c.estimator_config(1).multilevel.validate();
        if (e.reference_replications < 2) throw ConfigError("reference_replications must be >= 2");
        s.validate(d);
    } catch (const ConfigError& err) {
        throw ConfigError(source + ": " + err.what());
    }
    return c;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.string());
}

}  // namespace berm
