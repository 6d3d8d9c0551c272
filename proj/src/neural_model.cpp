#include "cts/neural_model.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace cts {

namespace {
constexpr std::uint64_t kInitPurpose = 10;
}

NeuralNet::NeuralNet(EncoderKind kind, const NeuralDims& dims, nn::Vocabulary vocab, bool hybrid,
                     FeatureGroups groups)
    : kind_(kind), dims_(dims), vocab_(std::move(vocab)), hybrid_(hybrid), groups_(groups) {
    embedding_.declare(layout_, "embedding", vocab_.size(), dims_.embedding);
    if (kind_ == EncoderKind::Cnn)
        cnn_.declare(layout_, "cnn", dims_.embedding, dims_.filters, dims_.widths, dims_.conv_layers);
    else
        rnn_.declare(layout_, "rnn", dims_.embedding, dims_.rnn_hidden, dims_.attention);
    aggregator_.declare(layout_, "window", rep_dim(), dims_.window_hidden, dims_.dense, kNumSuggestible,
                        dims_.dropout);
    params.assign(layout_.size(), 0.0);
}

int NeuralNet::encoder_dim() const { return kind_ == EncoderKind::Cnn ? cnn_.out_dim() : rnn_.out_dim(); }

void NeuralNet::init(std::uint64_t seed, const std::string& embeddings_path) {
    params.assign(layout_.size(), 0.0);
    Rng rng = make_rng(seed, {kInitPurpose});
    embedding_.init(params, layout_, rng);
    if (kind_ == EncoderKind::Cnn)
        cnn_.init(params, layout_, rng);
    else
        rnn_.init(params, layout_, rng);
    aggregator_.init(params, layout_, rng);
    if (!embeddings_path.empty()) {
        std::ifstream in(embeddings_path);
        if (!in) throw std::runtime_error("cannot open embeddings file " + embeddings_path);
        embedding_.load_text(in, vocab_, params, layout_);
    }
}

SlotWindow NeuralNet::make_window(const Conversation& c, int i, int m, const CfIndex* cf) const {
    if (hybrid_ && (!cf || cf->empty())) throw std::logic_error("hybrid network needs a trained CF model");
    const ContextWindow w = cts::make_window(c, i, m);
    SlotWindow out(m);
    for (int s = 0; s < m; ++s) {
        const TurnView& v = w.turns[s];
        if (v.pad) continue;
        Slot& slot = out[s];
        slot.pad = false;
        slot.ids = vocab_.encode(*v.tokens);
        FeatureVector fv = assemble_fv(v.state);
        mask_fv(fv, groups_);
        std::copy(fv.begin(), fv.end(), slot.side.begin());
        if (hybrid_) {
            const auto dist = cf_distribution(cf->predict(c, v.turn_index));
            std::copy(dist.begin(), dist.end(), slot.side.begin() + fv_layout::kDim);
        }
    }
    return out;
}

nn::Matrix NeuralNet::representations(std::span<const double> p, const SlotWindow& w,
                                      std::vector<SlotCache>* caches) const {
    const int enc = encoder_dim();
    nn::Matrix reps = nn::Matrix::Zero(rep_dim(), static_cast<Eigen::Index>(w.size()));
    if (caches) caches->assign(w.size(), SlotCache{});
    for (std::size_t s = 0; s < w.size(); ++s) {
        const Slot& slot = w[s];
        if (slot.pad) continue;
        SlotCache local;
        SlotCache& cache = caches ? (*caches)[s] : local;
        cache.x = embedding_.forward(p, layout_, slot.ids);
        const nn::Vector y = kind_ == EncoderKind::Cnn ? cnn_.forward(p, layout_, cache.x, cache.cnn)
                                                       : rnn_.forward(p, layout_, cache.x, cache.rnn);
        const auto col = static_cast<Eigen::Index>(s);
        reps.col(col).head(enc) = y;
        for (int k = 0; k < kSideDim; ++k) reps(enc + k, col) = slot.side[k];
    }
    return reps;
}

nn::Vector NeuralNet::logits(std::span<const double> p, const SlotWindow& w, Rng* rng) const {
    const nn::Matrix reps = representations(p, w, nullptr);
    nn::WindowAggregator::Cache cache;
    return aggregator_.forward(p, layout_, reps, cache, rng);
}

double NeuralNet::loss(std::span<const double> p, std::span<double> grads, const SlotWindow& w, int target,
                       Rng* rng) const {
    std::vector<SlotCache> caches;
    const nn::Matrix reps = representations(p, w, &caches);
    nn::WindowAggregator::Cache agg;
    const nn::Vector z = aggregator_.forward(p, layout_, reps, agg, rng);
    const nn::SoftmaxCE ce = nn::softmax_ce(z, target);
    const nn::Matrix d_reps = aggregator_.backward(p, grads, layout_, agg, ce.grad);
    const int enc = encoder_dim();
    for (std::size_t s = 0; s < w.size(); ++s) {
        if (w[s].pad) continue;
        const nn::Vector d_y = d_reps.col(static_cast<Eigen::Index>(s)).head(enc);
        const nn::Matrix d_x = kind_ == EncoderKind::Cnn ? cnn_.backward(p, grads, layout_, caches[s].cnn, d_y)
                                                         : rnn_.backward(p, grads, layout_, caches[s].rnn, d_y);
        embedding_.backward(grads, layout_, w[s].ids, d_x);
    }
    return ce.loss;
}

std::array<double, kNumSuggestible> NeuralNet::predict(const SlotWindow& w) const {
    const nn::Vector prob = nn::softmax(logits(params, w, nullptr));
    std::array<double, kNumSuggestible> out{};
    for (int t = 0; t < kNumSuggestible; ++t) out[t] = prob[t];
    return out;
}

nlohmann::json NeuralNet::to_json() const {
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& s : layout_.slices())
        tensors[s.name] = std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                              params.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size()));
    return {{"encoder", kind_ == EncoderKind::Cnn ? "cnn" : "rnn"},
            {"hybrid", hybrid_},
            {"features", std::string(to_string(groups_))},
            {"dims",
             {{"embedding", dims_.embedding},
              {"filters", dims_.filters},
              {"widths", dims_.widths},
              {"conv_layers", dims_.conv_layers},
              {"rnn_hidden", dims_.rnn_hidden},
              {"attention", dims_.attention},
              {"window_hidden", dims_.window_hidden},
              {"dense", dims_.dense},
              {"dropout", dims_.dropout},
              {"min_token_count", dims_.min_token_count}}},
            {"vocabulary", vocab_.tokens()},
            {"tensors", tensors}};
}

NeuralNet NeuralNet::from_json(const nlohmann::json& j) {
    const auto& d = j.at("dims");
    NeuralDims dims;
    dims.embedding = d.at("embedding");
    dims.filters = d.at("filters");
    dims.widths = d.at("widths").get<std::vector<int>>();
    dims.conv_layers = d.at("conv_layers");
    dims.rnn_hidden = d.at("rnn_hidden");
    dims.attention = d.at("attention");
    dims.window_hidden = d.at("window_hidden");
    dims.dense = d.at("dense");
    dims.dropout = d.at("dropout");
    dims.min_token_count = d.at("min_token_count");
    const std::string enc = j.at("encoder");
    if (enc != "cnn" && enc != "rnn") throw std::runtime_error("unknown encoder \"" + enc + "\"");
    NeuralNet net(enc == "cnn" ? EncoderKind::Cnn : EncoderKind::Rnn, dims,
                  nn::Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>()),
                  j.at("hybrid").get<bool>(), parse_feature_groups(j.at("features").get<std::string>()));
    const auto& tensors = j.at("tensors");
    if (tensors.size() != net.layout_.slices().size()) throw std::runtime_error("checkpoint tensor count mismatch");
    for (const auto& s : net.layout_.slices()) {
        const auto values = tensors.at(s.name).get<std::vector<double>>();
        if (values.size() != s.size()) throw std::runtime_error("checkpoint tensor " + s.name + " has wrong size");
        std::copy(values.begin(), values.end(), net.params.begin() + static_cast<std::ptrdiff_t>(s.offset));
    }
    return net;
}

}  // namespace cts
