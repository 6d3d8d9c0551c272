#include "cts/checkpoint.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "cts/features.hpp"
#include "cts/hash.hpp"
#include "cts/neural_model.hpp"

namespace cts {

using nlohmann::json;

std::string config_hash(const ModelConfig& config) { return sha256_hex(to_json(config).dump()); }

Manifest manifest_of(const Model& m) {
    Manifest out;
    out.variant = std::string(to_string(m.config.variant));
    out.seed = m.config.seed;
    out.config_hash = config_hash(m.config);
    out.fv_layout_version = fv_layout::kVersion;
    out.fv_layout = fv_layout::describe();
    out.training_corpus_hash = m.training_corpus_hash;
    return out;
}

namespace {

json head_to_json(const TopicHead& h) {
    return {{"in_dim", h.in_dim()}, {"hidden", h.hidden()}, {"params", h.params()}};
}

TopicHead head_from_json(const json& j, int expected_hidden, double dropout) {
    const int hidden = j.at("hidden").get<int>();
    if (hidden != expected_hidden) throw CheckpointError("head width does not match the config");
    TopicHead h(j.at("in_dim").get<int>(), hidden, dropout);
    h.set_params(j.at("params").get<std::vector<double>>());
    return h;
}

}  // namespace

json checkpoint_to_json(const Model& m) {
    const Manifest man = manifest_of(m);
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["manifest"] = {{"variant", man.variant},
                     {"seed", man.seed},
                     {"config_hash", man.config_hash},
                     {"fv_layout_version", man.fv_layout_version},
                     {"fv_layout", man.fv_layout},
                     {"training_corpus_hash", man.training_corpus_hash}};
    j["config"] = to_json(m.config);
    j["training_log"] = {{"loss", m.log.loss},
                         {"validation_loss", m.log.validation_loss},
                         {"status", m.log.status},
                         {"iterations", m.log.iterations}};
    if (m.cf) j["cf"] = {{"k", m.cf->k()}, {"users", to_json(m.cf->users())}};
    const Variant v = m.config.variant;
    if (v == Variant::CF || v == Variant::ContextualCF) j["cf_head"] = head_to_json(m.cf_head);
    if (v == Variant::ContextualCF) j["ccf_head"] = head_to_json(m.ccf_head);
    if (is_crf(v)) j["crf"] = crf::to_json(m.crf);
    if (is_neural(v)) {
        if (!m.net) throw CheckpointError("neural model has no network");
        j["neural"] = m.net->to_json();
    }
    return j;
}

Manifest read_manifest(const json& j) {
    if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat)
        throw CheckpointError("not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported");
    const json& mj = j.at("manifest");
    Manifest m;
    m.variant = mj.at("variant").get<std::string>();
    m.seed = mj.at("seed").get<std::uint64_t>();
    m.config_hash = mj.at("config_hash").get<std::string>();
    m.fv_layout_version = mj.at("fv_layout_version").get<int>();
    m.fv_layout = mj.at("fv_layout").get<std::string>();
    m.training_corpus_hash = mj.at("training_corpus_hash").get<std::string>();
    return m;
}

Model checkpoint_from_json(const json& j) {
    try {
        const Manifest man = read_manifest(j);
        if (man.fv_layout_version != fv_layout::kVersion || man.fv_layout != fv_layout::describe())
            throw CheckpointError("fv layout mismatch: checkpoint has " + man.fv_layout + ", this build uses " +
                                  fv_layout::describe());
        Model m;
        m.config = model_config_from_json(j.at("config"));
        if (config_hash(m.config) != man.config_hash) throw CheckpointError("config hash mismatch");
        if (std::string(to_string(m.config.variant)) != man.variant)
            throw CheckpointError("variant mismatch between manifest and config");
        m.training_corpus_hash = man.training_corpus_hash;
        const json& log = j.at("training_log");
        m.log.loss = log.at("loss").get<std::vector<double>>();
        m.log.validation_loss = log.at("validation_loss").get<std::vector<double>>();
        m.log.status = log.at("status").get<std::string>();
        m.log.iterations = log.at("iterations").get<int>();

        const Variant v = m.config.variant;
        if (uses_cf(v)) {
            if (!j.contains("cf")) throw CheckpointError("checkpoint lacks the CF population");
            m.cf.emplace(training_users_from_json(j.at("cf").at("users")), j.at("cf").at("k").get<int>());
        }
        if (v == Variant::CF || v == Variant::ContextualCF)
            m.cf_head = head_from_json(j.at("cf_head"), m.config.cf_head_hidden, m.config.dims.dropout);
        if (v == Variant::ContextualCF)
            m.ccf_head = head_from_json(j.at("ccf_head"), m.config.ccf_head_hidden, m.config.dims.dropout);
        if (is_crf(v)) m.crf = crf::crf_from_json(j.at("crf"));
        if (is_neural(v)) {
            auto net = std::make_shared<NeuralNet>(NeuralNet::from_json(j.at("neural")));
            if (net->hybrid() != is_hybrid(v)) throw CheckpointError("network does not match the variant");
            m.net = std::move(net);
        }
        return m;
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    out << checkpoint_to_json(m).dump() << '\n';
    if (!out) throw CheckpointError("write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception&) {
        throw CheckpointError("checkpoint " + path + " is not valid JSON");
    }
    return checkpoint_from_json(j);
}

}  // namespace cts
