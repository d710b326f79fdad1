#include "ktrade/serde.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

namespace ktrade {

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw std::runtime_error("expected a non-empty matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw std::runtime_error("ragged matrix rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
    }
    return v;
}

} // namespace

json to_json(const Path& p) {
    json j;
    j["times"] = p.times();
    j["values"] = matrix_to_json(p.values());
    return j;
}

Path path_from_json(const json& j) {
    std::vector<double> times = j.at("times").get<std::vector<double>>();
    return Path(std::move(times), matrix_from_json(j.at("values")));
}

json to_json(const PathBatch& b) {
    json j;
    j["label"] = b.label;
    json paths = json::array();
    for (const auto& p : b.paths) paths.push_back(to_json(p));
    j["paths"] = std::move(paths);
    return j;
}

PathBatch batch_from_json(const json& j) {
    std::vector<Path> paths;
    for (const auto& pj : j.at("paths")) paths.push_back(path_from_json(pj));
    return PathBatch(std::move(paths), j.value("label", std::string()));
}

json to_json(const KernelSpec& k) {
    json j;
    switch (k.variant) {
        case KernelVariant::SigPde:
            j["variant"] = "sig_pde";
            j["dyadic_order"] = k.dyadic_order;
            break;
        case KernelVariant::TruncatedSig:
            j["variant"] = "truncated_sig";
            j["order"] = k.order;
            break;
        case KernelVariant::RandomizedSig:
            j["variant"] = "randomized_sig";
            j["reservoir_dim"] = k.reservoir_dim;
            j["activation"] = k.activation == Activation::Tanh ? "tanh" : "identity";
            j["seed"] = k.seed;
            break;
    }
    return j;
}

KernelSpec kernel_spec_from_json(const json& j) {
    const std::string variant = j.at("variant").get<std::string>();
    KernelSpec k;
    if (variant == "sig_pde") {
        k = KernelSpec::sig_pde(j.value("dyadic_order", 1));
    } else if (variant == "truncated_sig") {
        k = KernelSpec::truncated_sig(j.at("order").get<int>());
    } else if (variant == "randomized_sig") {
        const std::string act = j.value("activation", "tanh");
        if (act != "tanh" && act != "identity") {
            throw std::runtime_error("kernel spec: unknown activation '" + act + "'");
        }
        k = KernelSpec::randomized_sig(j.at("reservoir_dim").get<int>(),
                                       act == "tanh" ? Activation::Tanh : Activation::Identity,
                                       j.value("seed", std::uint64_t{0}));
    } else {
        throw std::runtime_error("kernel spec: unknown variant '" + variant + "'");
    }
    return k;
}

json to_json(const EmbeddingSpec& e) {
    json j;
    j["time_augment"] = e.time_augment;
    j["scale_gamma"] = e.scale_gamma;
    j["basepoint"] = e.basepoint == Basepoint::TranslateToZero ? "translate_to_zero" : "none";
    if (e.signal_channels) j["signal_channels"] = to_json(*e.signal_channels);
    if (e.time_horizon) j["time_horizon"] = *e.time_horizon;
    return j;
}

EmbeddingSpec embedding_spec_from_json(const json& j) {
    EmbeddingSpec e;
    e.time_augment = j.value("time_augment", true);
    e.scale_gamma = j.value("scale_gamma", 1.0);
    const std::string bp = j.value("basepoint", "translate_to_zero");
    if (bp == "translate_to_zero") {
        e.basepoint = Basepoint::TranslateToZero;
    } else if (bp == "none") {
        e.basepoint = Basepoint::None;
    } else {
        throw std::runtime_error("embedding spec: unknown basepoint '" + bp + "'");
    }
    if (j.contains("signal_channels")) e.signal_channels = path_from_json(j.at("signal_channels"));
    if (j.contains("time_horizon")) e.time_horizon = j.at("time_horizon").get<double>();
    e.validate();
    return e;
}

json to_json(const OperatorLift& lift) {
    json j;
    j["matrix"] = matrix_to_json(lift.A);
    return j;
}

OperatorLift lift_from_json(const json& j) {
    OperatorLift lift{matrix_from_json(j.at("matrix"))};
    lift.validate();
    return lift;
}

json to_json(const GramMatrix& g) {
    json j;
    j["n"] = g.size();
    json flat = json::array();
    for (Eigen::Index i = 0; i < g.values.rows(); ++i) {
        for (Eigen::Index c = 0; c < g.values.cols(); ++c) flat.push_back(g.values(i, c));
    }
    j["values"] = std::move(flat);
    j["fingerprint"] = g.fingerprint;
    return j;
}

GramMatrix gram_from_json(const json& j) {
    const auto n = j.at("n").get<Eigen::Index>();
    const auto& flat = j.at("values");
    if (static_cast<Eigen::Index>(flat.size()) != n * n) {
        throw std::runtime_error("gram: value count does not match n");
    }
    GramMatrix g;
    g.values.resize(n, n);
    std::size_t idx = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < n; ++c) g.values(i, c) = flat.at(idx++).get<double>();
    }
    g.fingerprint = j.at("fingerprint").get<std::string>();
    return g;
}

json to_json(const FitConfig& c) {
    json j;
    j["lambda"] = c.lambda;
    j["eta"] = c.eta;
    if (c.rank_m <= 0) {
        j["rank_m"] = "full";
    } else {
        j["rank_m"] = c.rank_m;
    }
    j["use_spectral"] = c.use_spectral;
    return j;
}

FitConfig fit_config_from_json(const json& j) {
    FitConfig c;
    c.lambda = j.at("lambda").get<double>();
    c.eta = j.at("eta").get<double>();
    const auto& m = j.at("rank_m");
    c.rank_m = m.is_string() ? 0 : m.get<Eigen::Index>();
    c.use_spectral = j.value("use_spectral", true);
    return c;
}

json to_json(const FittedWeights& w) {
    json j;
    j["alpha"] = vector_to_json(w.alpha);
    j["eigvals"] = vector_to_json(w.eigvals);
    j["eigvecs"] = matrix_to_json(w.eigvecs);
    j["config"] = to_json(w.config);
    j["gram_fingerprint"] = w.gram_fingerprint;
    return j;
}

FittedWeights weights_from_json(const json& j) {
    FittedWeights w;
    w.alpha = vector_from_json(j.at("alpha"));
    w.eigvals = vector_from_json(j.at("eigvals"));
    if (!j.at("eigvecs").empty()) w.eigvecs = matrix_from_json(j.at("eigvecs"));
    w.config = fit_config_from_json(j.at("config"));
    w.gram_fingerprint = j.at("gram_fingerprint").get<std::string>();
    return w;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return json::parse(in); // parse errors carry the byte position
}

void save_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const auto& a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw std::runtime_error(context + ": unknown key '" + key + "'");
    }
}

} // namespace ktrade
