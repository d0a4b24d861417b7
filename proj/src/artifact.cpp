#include "berm/artifact.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace berm {

using nlohmann::json;

namespace {

json to_json(const LinearModel& m) {
    return {{"coef", m.coef}, {"residual_rms", m.residual_rms}, {"condition", m.condition},
            {"rank", m.rank}, {"ridge", m.ridge}};
}

LinearModel linear_from_json(const json& j) {
    LinearModel m;
    m.coef = j.at("coef").get<std::vector<double>>();
    m.residual_rms = j.at("residual_rms").get<double>();
    m.condition = j.at("condition").get<double>();
    m.rank = j.at("rank").get<std::size_t>();
    m.ridge = j.at("ridge").get<bool>();
    return m;
}

json basis_json(const StateBasis& b) {
    return {{"dim", b.dim()}, {"degree_cap", b.degree_cap()}, {"include_payoff", b.includes_payoff()}};
}

StateBasis basis_from_json(const json& j) {
    return StateBasis(j.at("dim").get<std::size_t>(), j.at("degree_cap").get<std::size_t>(),
                      j.at("include_payoff").get<bool>());
}

void write_json(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot open '" + path.string() + "' for writing");
    out << doc.dump(1) << '\n';
    if (!out) throw ArtifactError("write failed for '" + path.string() + "'");
}

json read_json(const std::filesystem::path& path, const std::string& format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open artifact '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ArtifactError("artifact '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object() || doc.value("format", std::string{}) != format) {
        throw ArtifactError("artifact '" + path.string() + "' is not a " + format + " file");
    }
    const int version = doc.value("version", -1);
    if (version != kArtifactVersion) {
        throw ArtifactError("artifact '" + path.string() + "' has version " + std::to_string(version) +
                            ", this build reads version " + std::to_string(kArtifactVersion));
    }
    return doc;
}

// Wraps schema and validation failures of a parsed document.
template <class F>
auto decode(const std::filesystem::path& path, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ArtifactError("artifact '" + path.string() + "' is corrupt: " + e.what());
    } catch (const ConfigError& e) {
        throw ArtifactError("artifact '" + path.string() + "' is corrupt: " + e.what());
    } catch (const ArtifactError& e) {
        throw ArtifactError("artifact '" + path.string() + "': " + e.what());
    }
}

}  // namespace

void save_value_functions(const ValueFunctions& vfun, const std::filesystem::path& path) {
    json cont = json::array();
    for (const auto& m : vfun.continuation_models()) cont.push_back(to_json(m));
    const json doc{{"format", "berm.value_functions"},
                   {"version", kArtifactVersion},
                   {"strike", vfun.payoff().strike},
                   {"basis", basis_json(vfun.basis())},
                   {"exercise_dates", vfun.exercise_count()},
                   {"bounds", std::vector<double>(vfun.bounds().begin(), vfun.bounds().end())},
                   {"continuation", cont}};
    write_json(doc, path);
}

ValueFunctions load_value_functions(const std::filesystem::path& path) {
    const json doc = read_json(path, "berm.value_functions");
    return decode(path, [&] {
        std::vector<LinearModel> cont;
        for (const auto& m : doc.at("continuation")) cont.push_back(linear_from_json(m));
        return ValueFunctions(MaxCallPayoff{doc.at("strike").get<double>()}, basis_from_json(doc.at("basis")),
                              doc.at("exercise_dates").get<std::size_t>(), std::move(cont),
                              doc.at("bounds").get<std::vector<double>>());
    });
}

void save_cv_model(const CVModel& cv, const std::filesystem::path& path) {
    json coef = json::array();
    for (std::size_t l = 1; l <= cv.exercise_count(); ++l) {
        json per_date = json::array();
        for (std::size_t i = 0; i < cv.function_count(); ++i) per_date.push_back(to_json(cv.model(l, i)));
        coef.push_back(per_date);
    }
    const json doc{{"format", "berm.cv_model"},
                   {"version", kArtifactVersion},
                   {"strike", cv.payoff().strike},
                   {"basis", basis_json(cv.basis())},
                   {"innovation_dim", cv.system().dim()},
                   {"max_block", cv.system().max_block()},
                   {"truncation", cv.truncation()},
                   {"selection", cv.selection() == HermiteSelection::blocks ? "blocks" : "functions"},
                   {"exercise_dates", cv.exercise_count()},
                   {"bound", cv.bound()},
                   {"regress_flops", cv.regress_flops},
                   {"training_paths", cv.training_paths},
                   {"coefficients", coef}};
    write_json(doc, path);
}

CVModel load_cv_model(const std::filesystem::path& path) {
    const json doc = read_json(path, "berm.cv_model");
    return decode(path, [&] {
        const std::string sel = doc.at("selection").get<std::string>();
        if (sel != "blocks" && sel != "functions") throw ArtifactError("unknown selection '" + sel + "'");
        std::vector<std::vector<LinearModel>> coef;
        for (const auto& per_date : doc.at("coefficients")) {
            coef.emplace_back();
            for (const auto& m : per_date) coef.back().push_back(linear_from_json(m));
        }
        CVModel cv(basis_from_json(doc.at("basis")), MaxCallPayoff{doc.at("strike").get<double>()},
                   HermiteSystem(doc.at("innovation_dim").get<std::size_t>(), doc.at("max_block").get<std::size_t>()),
                   doc.at("truncation").get<std::size_t>(),
                   sel == "blocks" ? HermiteSelection::blocks : HermiteSelection::functions,
                   doc.at("exercise_dates").get<std::size_t>(), doc.at("bound").get<double>(), std::move(coef));
        cv.regress_flops = doc.at("regress_flops").get<std::uint64_t>();
        cv.training_paths = doc.at("training_paths").get<std::size_t>();
        return cv;
    });
}

void save_reference(const ReferencePrice& ref, const std::filesystem::path& path) {
    const json doc{{"format", "berm.reference"},     {"version", kArtifactVersion},
                   {"value", ref.value},             {"std_error", ref.std_error},
                   {"replications", ref.replications}, {"N", ref.N},
                   {"N_d", ref.N_d},                 {"estimates", ref.estimates}};
    write_json(doc, path);
}

ReferencePrice load_reference(const std::filesystem::path& path) {
    const json doc = read_json(path, "berm.reference");
    return decode(path, [&] {
        ReferencePrice r;
        r.value = doc.at("value").get<double>();
        r.std_error = doc.at("std_error").get<double>();
        r.replications = doc.at("replications").get<std::size_t>();
        r.N = doc.at("N").get<std::size_t>();
        r.N_d = doc.at("N_d").get<std::size_t>();
        r.estimates = doc.at("estimates").get<std::vector<double>>();
        return r;
    });
}

}  // namespace berm
