#pragma once

#include <array>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <vector>

#include "cts/models.hpp"
#include "cts/nn/layers.hpp"

namespace cts {

enum class EncoderKind : std::uint8_t { Cnn, Rnn };

/// Inputs of one window slot. Padding slots contribute an all-zero
/// representation.
struct Slot {
    bool pad = true;
    std::vector<int> ids;
    std::array<double, fv_layout::kDim + kNumSuggestible> side{};  // masked fv ; CF block
};
using SlotWindow = std::vector<Slot>;

/// Utterance encoder per slot, merged with [fv ; CF], window LSTM, MLP head.
class NeuralNet {
public:
    static constexpr int kSideDim = fv_layout::kDim + kNumSuggestible;

    NeuralNet(EncoderKind kind, const NeuralDims& dims, nn::Vocabulary vocab, bool hybrid, FeatureGroups groups);

    EncoderKind kind() const { return kind_; }
    bool hybrid() const { return hybrid_; }
    FeatureGroups groups() const { return groups_; }
    const NeuralDims& dims() const { return dims_; }
    const nn::Vocabulary& vocab() const { return vocab_; }
    const nn::ParamLayout& layout() const { return layout_; }
    int encoder_dim() const;
    int rep_dim() const { return encoder_dim() + kSideDim; }

    std::vector<double> params;

    /// Random initialization; loads embeddings from `embeddings_path` when set.
    void init(std::uint64_t seed, const std::string& embeddings_path = {});

    /// Window of m slots ending at turn i. The CF block is filled only for
    /// hybrid nets.
    SlotWindow make_window(const Conversation& c, int i, int m, const CfIndex* cf) const;

    /// Class logits; `rng` enables dropout.
    nn::Vector logits(std::span<const double> p, const SlotWindow& w, Rng* rng) const;
    /// Cross-entropy of `target`; adds the gradient into grads.
    double loss(std::span<const double> p, std::span<double> grads, const SlotWindow& w, int target,
                Rng* rng) const;
    std::array<double, kNumSuggestible> predict(const SlotWindow& w) const;

    nlohmann::json to_json() const;
    static NeuralNet from_json(const nlohmann::json& j);

private:
    struct SlotCache {
        nn::Matrix x;
        nn::CnnEncoder::Cache cnn;
        nn::RnnEncoder::Cache rnn;
    };
    nn::Matrix representations(std::span<const double> p, const SlotWindow& w,
                               std::vector<SlotCache>* caches) const;

    EncoderKind kind_;
    NeuralDims dims_;
    nn::Vocabulary vocab_;
    bool hybrid_;
    FeatureGroups groups_;
    nn::ParamLayout layout_;
    nn::Embedding embedding_;
    nn::CnnEncoder cnn_;
    nn::RnnEncoder rnn_;
    nn::WindowAggregator aggregator_;
};

}  // namespace cts
