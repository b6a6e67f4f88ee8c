#include "balancemix/serialize.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace balancemix {

using nlohmann::json;

namespace {

constexpr const char* kDatasetFormat = "balancemix-dataset";
constexpr const char* kCheckpointFormat = "balancemix-checkpoint";
constexpr int kFormatVersion = 1;

void write_f32_le(std::ofstream& out, double value) {
    const float f = static_cast<float>(value);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(bits & 0xff),
        static_cast<unsigned char>((bits >> 8) & 0xff),
        static_cast<unsigned char>((bits >> 16) & 0xff),
        static_cast<unsigned char>((bits >> 24) & 0xff),
    };
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

double read_f32_le(std::ifstream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                               (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return static_cast<double>(f);
}

json optional_to_json(const std::optional<double>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}

}  // namespace

void require_known_keys(const json& j, std::initializer_list<const char*> keys,
                        const std::string& where) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : keys) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

json noise_to_json(const NoiseSpec& spec) {
    return json{{"type", NoiseSpec::type_name(spec.type)},
                {"tau", spec.tau},
                {"seed", spec.seed}};
}

NoiseSpec noise_from_json(const json& j) {
    require_known_keys(j, {"type", "tau", "seed"}, "noise");
    NoiseSpec spec;
    spec.type = NoiseSpec::parse_type(j.value("type", "none"));
    spec.tau = j.value("tau", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (spec.type != NoiseSpec::Type::None && spec.type != NoiseSpec::Type::SinglePositive) {
        if (spec.tau < 0.0 || spec.tau >= 1.0) throw ConfigError("noise: tau must be in [0, 1)");
    }
    return spec;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());

    json header{{"format", kDatasetFormat},
                {"version", kFormatVersion},
                {"n", ds.size()},
                {"d", ds.feature_dim()},
                {"k", ds.num_classes()},
                {"seed", ds.seed},
                {"noise", noise_to_json(ds.noise)}};
    out << header.dump() << '\n';

    for (std::size_t i = 0; i < ds.features.size(); ++i) {
        write_f32_le(out, ds.features.data()[i]);
    }
    out.write(reinterpret_cast<const char*>(ds.true_labels.data()),
              static_cast<std::streamsize>(ds.true_labels.size()));
    out.write(reinterpret_cast<const char*>(ds.observed_labels.data()),
              static_cast<std::streamsize>(ds.observed_labels.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("truncated dataset header in " + path.string());
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::parse_error& e) {
        throw IoError("invalid dataset header in " + path.string() + ": " + e.what());
    }
    if (header.value("format", "") != kDatasetFormat) {
        throw IoError(path.string() + " is not a dataset file");
    }
    if (header.value("version", 0) != kFormatVersion) {
        throw IoError("unsupported dataset version in " + path.string());
    }

    const std::size_t n = header.at("n").get<std::size_t>();
    const std::size_t d = header.at("d").get<std::size_t>();
    const std::size_t k = header.at("k").get<std::size_t>();

    Dataset ds;
    ds.seed = header.value("seed", std::uint64_t{0});
    ds.noise = noise_from_json(header.at("noise"));
    ds.features = Matrix(n, d);
    ds.true_labels = ByteMatrix(n, k);
    ds.observed_labels = ByteMatrix(n, k);

    for (std::size_t i = 0; i < ds.features.size(); ++i) {
        ds.features.data()[i] = read_f32_le(in);
    }
    in.read(reinterpret_cast<char*>(ds.true_labels.data()),
            static_cast<std::streamsize>(ds.true_labels.size()));
    in.read(reinterpret_cast<char*>(ds.observed_labels.data()),
            static_cast<std::streamsize>(ds.observed_labels.size()));
    if (!in) throw IoError("truncated dataset payload in " + path.string());

    for (std::size_t i = 0; i < ds.true_labels.size(); ++i) {
        if (ds.true_labels.data()[i] > 1 || ds.observed_labels.data()[i] > 1) {
            throw IoError("corrupt label byte in " + path.string());
        }
    }
    return ds;
}

json dataset_manifest(const Dataset& ds) {
    const auto observed = ds.observed_positive_counts();
    json manifest{{"n", ds.size()},
                  {"d", ds.feature_dim()},
                  {"k", ds.num_classes()},
                  {"seed", ds.seed},
                  {"noise", noise_to_json(ds.noise)},
                  {"observed_positive_counts", observed},
                  {"pn_imbalance", pn_imbalance(ds)},
                  {"label_disagreement", ds.label_disagreement()}};
    const bool any_zero = std::any_of(observed.begin(), observed.end(),
                                      [](std::size_t c) { return c == 0; });
    manifest["cls_imbalance"] = any_zero ? json(nullptr) : json(cls_imbalance(observed));
    return manifest;
}

json generator_config_to_json(const GeneratorConfig& config) {
    return json{{"n", config.n},
                {"feature_dim", config.feature_dim},
                {"num_classes", config.num_classes},
                {"decay_ratio", config.decay_ratio},
                {"label_correlation", config.label_correlation},
                {"separability", config.separability},
                {"seed", config.seed}};
}

GeneratorConfig generator_config_from_json(const json& j) {
    require_known_keys(j,
                       {"n", "feature_dim", "num_classes", "decay_ratio", "label_correlation",
                        "separability", "seed"},
                       "generator");
    GeneratorConfig config;
    config.n = j.value("n", config.n);
    config.feature_dim = j.value("feature_dim", config.feature_dim);
    config.num_classes = j.value("num_classes", config.num_classes);
    config.decay_ratio = j.value("decay_ratio", config.decay_ratio);
    config.label_correlation = j.value("label_correlation", config.label_correlation);
    config.separability = j.value("separability", config.separability);
    config.seed = j.value("seed", config.seed);
    config.validate();
    return config;
}

json train_config_to_json(const TrainConfig& config) {
    return json{{"epochs", config.epochs},
                {"warmup_epochs", config.warmup_epochs},
                {"batch_size", config.batch_size},
                {"alpha", config.alpha},
                {"epsilon", config.epsilon},
                {"learning_rate", config.learning_rate},
                {"momentum", config.momentum},
                {"weight_decay", config.weight_decay},
                {"hidden_dim", config.hidden_dim},
                {"seed", config.seed},
                {"mode", train_mode_name(config.mode)},
                {"sampler_label_source", label_source_name(config.sampler_label_source)},
                {"relabel_from_original", config.relabel_from_original},
                {"cosine_learning_rate", config.cosine_learning_rate},
                {"augment_noise_sigma", config.augment_noise_sigma},
                {"augment_dropout", config.augment_dropout},
                {"threads", config.threads}};
}

TrainConfig train_config_from_json(const json& j) {
    require_known_keys(j,
                       {"epochs", "warmup_epochs", "batch_size", "alpha", "epsilon",
                        "learning_rate", "momentum", "weight_decay", "hidden_dim", "seed", "mode",
                        "sampler_label_source", "relabel_from_original", "cosine_learning_rate",
                        "augment_noise_sigma", "augment_dropout", "threads", "val_fraction"},
                       "train");
    TrainConfig config;
    config.epochs = j.value("epochs", config.epochs);
    config.warmup_epochs = j.value("warmup_epochs", config.warmup_epochs);
    config.batch_size = j.value("batch_size", config.batch_size);
    config.alpha = j.value("alpha", config.alpha);
    config.epsilon = j.value("epsilon", config.epsilon);
    config.learning_rate = j.value("learning_rate", config.learning_rate);
    config.momentum = j.value("momentum", config.momentum);
    config.weight_decay = j.value("weight_decay", config.weight_decay);
    config.hidden_dim = j.value("hidden_dim", config.hidden_dim);
    config.seed = j.value("seed", config.seed);
    config.mode = parse_train_mode(j.value("mode", "balancemix"));
    config.sampler_label_source =
        parse_label_source(j.value("sampler_label_source", "refined"));
    config.relabel_from_original = j.value("relabel_from_original", config.relabel_from_original);
    config.cosine_learning_rate = j.value("cosine_learning_rate", config.cosine_learning_rate);
    config.augment_noise_sigma = j.value("augment_noise_sigma", config.augment_noise_sigma);
    config.augment_dropout = j.value("augment_dropout", config.augment_dropout);
    config.threads = j.value("threads", config.threads);
    config.validate();
    return config;
}

json group_spec_to_json(const GroupSpec& spec) {
    return json{{"many_min", spec.many_min}, {"few_max", spec.few_max}};
}

GroupSpec group_spec_from_json(const json& j) {
    require_known_keys(j, {"many_min", "few_max", "many_fraction", "few_fraction"}, "groups");
    if (j.contains("many_fraction") || j.contains("few_fraction")) {
        throw ConfigError("groups: fractional thresholds are resolved by the caller, "
                          "use many_min/few_max here");
    }
    GroupSpec spec;
    spec.many_min = j.value("many_min", spec.many_min);
    spec.few_max = j.value("few_max", spec.few_max);
    spec.validate();
    return spec;
}

json diagnostics_to_json(const ManagementDiagnostics& d) {
    return json{{"label_precision", optional_to_json(d.label_precision)},
                {"label_recall", optional_to_json(d.label_recall)},
                {"relabel_proportion", d.relabel_proportion},
                {"relabel_accuracy", optional_to_json(d.relabel_accuracy)},
                {"clean_count", d.clean_count},
                {"relabel_count", d.relabel_count},
                {"ambiguous_count", d.ambiguous_count},
                {"total_labels", d.total_labels},
                {"clean_correct", d.clean_correct},
                {"relabel_correct", d.relabel_correct},
                {"true_clean_count", d.true_clean_count}};
}

json metrics_to_json(const MetricsSnapshot& snapshot, const ManagementDiagnostics* diagnostics) {
    json per_class = json::array();
    for (std::size_t k = 0; k < snapshot.per_class_ap.size(); ++k) {
        per_class.push_back(json{{"class", k},
                                 {"ap", optional_to_json(snapshot.per_class_ap[k])},
                                 {"positives", snapshot.group_counts[k]}});
    }
    json out{{"map_all", optional_to_json(snapshot.map.all)},
             {"map_many", optional_to_json(snapshot.map.many)},
             {"map_medium", optional_to_json(snapshot.map.medium)},
             {"map_few", optional_to_json(snapshot.map.few)},
             {"per_class", std::move(per_class)}};
    out["diagnostics"] = diagnostics ? diagnostics_to_json(*diagnostics) : json(nullptr);
    return out;
}

json epoch_report_to_json(const EpochReport& report) {
    return json{{"epoch", report.epoch},
                {"mean_loss", report.mean_loss},
                {"clean", report.counts.clean},
                {"relabeled", report.counts.relabeled},
                {"ambiguous", report.counts.ambiguous},
                {"sampler_entropy", optional_to_json(report.sampler_entropy)},
                {"val", metrics_to_json(report.validation)}};
}

namespace {

json gmm_to_json(const Gmm1D& g) {
    return json{{"means", g.means},
                {"variances", g.variances},
                {"weights", g.weights},
                {"status", g.status == Gmm1D::FitStatus::Converged ? "converged"
                                                                   : "degenerate_fallback"},
                {"iterations", g.iterations}};
}

}  // namespace

json epoch_diagnostics_to_json(const EpochDiagnostics& diag) {
    json gmms = json::array();
    for (std::size_t k = 0; k < diag.bank.size(); ++k) {
        gmms.push_back(json{{"class", k},
                            {"positive", gmm_to_json(diag.bank[k].positive)},
                            {"negative", gmm_to_json(diag.bank[k].negative)}});
    }
    return json{{"epoch", diag.epoch},
                {"probs", diag.sampler_probs},
                {"presence", diag.presence},
                {"absence", diag.absence},
                {"gmms", std::move(gmms)},
                {"counts",
                 json{{"clean", diag.counts.clean},
                      {"relabeled", diag.counts.relabeled},
                      {"ambiguous", diag.counts.ambiguous}}}};
}

namespace {

json matrix_to_json(const Matrix& m) {
    json values = json::array();
    for (std::size_t i = 0; i < m.size(); ++i) values.push_back(m.data()[i]);
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto& values = j.at("values");
    if (values.size() != m.size()) throw IoError("checkpoint matrix size mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = values[i].get<double>();
    return m;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    json j{{"format", kCheckpointFormat},
           {"version", kFormatVersion},
           {"config", train_config_to_json(checkpoint.config)},
           {"model",
            json{{"w1", matrix_to_json(checkpoint.model.w1)},
                 {"b1", checkpoint.model.b1},
                 {"w2", matrix_to_json(checkpoint.model.w2)},
                 {"b2", checkpoint.model.b2}}}};
    write_text_file(path, j.dump(2) + "\n");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    if (j.value("format", "") != kCheckpointFormat) {
        throw IoError(path.string() + " is not a checkpoint file");
    }
    Checkpoint checkpoint;
    checkpoint.config = train_config_from_json(j.at("config"));
    const json& m = j.at("model");
    checkpoint.model.w1 = matrix_from_json(m.at("w1"));
    checkpoint.model.b1 = m.at("b1").get<std::vector<double>>();
    checkpoint.model.w2 = matrix_from_json(m.at("w2"));
    checkpoint.model.b2 = m.at("b2").get<std::vector<double>>();
    if (checkpoint.model.b1.size() != checkpoint.model.w1.rows() ||
        checkpoint.model.b2.size() != checkpoint.model.w2.rows() ||
        checkpoint.model.w2.cols() != checkpoint.model.w1.rows()) {
        throw IoError("checkpoint model shapes inconsistent in " + path.string());
    }
    return checkpoint;
}

}  // namespace balancemix
