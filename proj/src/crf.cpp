#include "cts/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>

namespace cts::crf {

int label_id(const TurnLabel& l) {
    switch (l.kind) {
    case TurnLabel::Kind::Accept: return code(l.topic);
    case TurnLabel::Kind::Reject: return kNumSuggestible + code(l.topic);
    case TurnLabel::Kind::FollowUp: return kFollowUp;
    case TurnLabel::Kind::Chat: return kChat;
    }
    throw std::invalid_argument("unknown label kind");
}

TurnLabel label_from_id(int id) {
    if (id < 0 || id >= kNumLabels) throw std::out_of_range("label id out of range");
    TurnLabel l;
    if (id < kNumSuggestible) {
        l.kind = TurnLabel::Kind::Accept;
        l.topic = suggestible_from_code(id);
    } else if (id < 2 * kNumSuggestible) {
        l.kind = TurnLabel::Kind::Reject;
        l.topic = suggestible_from_code(id - kNumSuggestible);
    } else {
        l.kind = id == kFollowUp ? TurnLabel::Kind::FollowUp : TurnLabel::Kind::Chat;
    }
    return l;
}

std::string label_name(int id) { return to_string(label_from_id(id)); }

SparseInput SparseInput::from_dense(std::span<const double> x) {
    SparseInput s;
    for (std::size_t d = 0; d < x.size(); ++d)
        if (x[d] != 0.0) {
            s.index.push_back(static_cast<int>(d));
            s.value.push_back(x[d]);
        }
    return s;
}

double SparseInput::at(int d) const {
    auto it = std::lower_bound(index.begin(), index.end(), d);
    return it != index.end() && *it == d ? value[it - index.begin()] : 0.0;
}

CrfModel CrfModel::make(int fv_dim) {
    std::vector<int> ctx;
    for (int k = 0; k < kNumTimesOfDay; ++k) ctx.push_back(fv_layout::kTime + k);
    return make_generic(kNumLabels, fv_dim, std::move(ctx));
}

CrfModel CrfModel::make_generic(int n_labels, int fv_dim, std::vector<int> context) {
    if (n_labels < 1 || fv_dim < 0) throw std::invalid_argument("bad CRF shape");
    for (int c : context)
        if (c < 0 || c >= fv_dim) throw std::invalid_argument("transition context outside the input");
    CrfModel m;
    m.n_labels = n_labels;
    m.fv_dim = fv_dim;
    m.context = std::move(context);
    m.weights.assign(m.n_weights(), 0.0);
    return m;
}

std::vector<Feature> activate_features(const CrfModel& m, const SparseInput& x, int label,
                                       std::optional<int> prev_label) {
    std::vector<Feature> out;
    for (std::size_t k = 0; k < x.index.size(); ++k)
        out.push_back({m.state_index(x.index[k], label), x.value[k]});
    out.push_back({m.bias_index(label), 1.0});
    if (prev_label) {
        out.push_back({m.transition_index(0, *prev_label, label), 1.0});
        for (std::size_t c = 0; c < m.context.size(); ++c) {
            const double v = x.at(m.context[c]);
            if (v != 0.0) out.push_back({m.transition_index(static_cast<int>(c) + 1, *prev_label, label), v});
        }
    }
    return out;
}

namespace {

double log_sum_exp(const double* v, int n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) mx = std::max(mx, v[i]);
    if (!std::isfinite(mx)) return mx;
    double s = 0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

void check_finite(const CrfModel& m) {
    for (double w : m.weights)
        if (std::isnan(w)) throw std::domain_error("CRF weights contain NaN");
    if (m.weights.size() != m.n_weights()) throw std::invalid_argument("CRF weight count mismatch");
}

// Potentials of one sequence: unary[j*L + y]; positions j >= 1 share one
// transition matrix per distinct context vector, pair(j)[prev*L + y].
struct Potentials {
    int n = 0, L = 0;
    std::vector<double> unary;
    std::vector<int> group;                   // per position, -1 at j = 0
    std::vector<std::vector<double>> pairs;   // per group, L*L
    std::vector<std::vector<double>> ctx;     // per group, context coordinate values
    const double* pair(int j) const { return pairs[group[j]].data(); }
};

Potentials potentials(const CrfModel& m, const std::vector<SparseInput>& x) {
    Potentials p;
    p.n = static_cast<int>(x.size());
    p.L = m.n_labels;
    const int L = p.L;
    const std::size_t C = m.context.size();
    p.unary.assign(static_cast<std::size_t>(p.n) * L, 0.0);
    p.group.assign(p.n, -1);
    const double* w = m.weights.data();
    std::vector<double> cv(C);
    for (int j = 0; j < p.n; ++j) {
        double* u = &p.unary[static_cast<std::size_t>(j) * L];
        for (int y = 0; y < L; ++y) u[y] = w[m.bias_index(y)];
        for (std::size_t k = 0; k < x[j].index.size(); ++k) {
            const int d = x[j].index[k];
            if (d >= m.fv_dim) throw std::invalid_argument("CRF input index beyond fv_dim");
            const double v = x[j].value[k];
            const double* row = w + m.state_index(d, 0);
            for (int y = 0; y < L; ++y) u[y] += v * row[y];
        }
        if (j == 0) continue;
        for (std::size_t c = 0; c < C; ++c) cv[c] = x[j].at(m.context[c]);
        const auto hit = std::find(p.ctx.begin(), p.ctx.end(), cv);
        if (hit != p.ctx.end()) {
            p.group[j] = static_cast<int>(hit - p.ctx.begin());
            continue;
        }
        p.group[j] = static_cast<int>(p.ctx.size());
        p.ctx.push_back(cv);
        std::vector<double> pr(w + m.transition_index(0, 0, 0), w + m.transition_index(0, 0, 0) + L * L);
        for (std::size_t c = 0; c < C; ++c) {
            if (cv[c] == 0.0) continue;
            const double* tc = w + m.transition_index(static_cast<int>(c) + 1, 0, 0);
            for (int k = 0; k < L * L; ++k) pr[k] += cv[c] * tc[k];
        }
        p.pairs.push_back(std::move(pr));
    }
    return p;
}

// Normalizer plus node (n*L) and edge (n*L*L, j >= 1) marginals.
struct Inference {
    double log_z = 0, log_z_backward = 0;
    std::vector<double> node, edge;
};

Inference infer_log_space(const Potentials& p) {
    const int n = p.n, L = p.L;
    std::vector<double> alpha(static_cast<std::size_t>(n) * L), beta(static_cast<std::size_t>(n) * L, 0.0);
    std::vector<double> tmp(L);
    for (int y = 0; y < L; ++y) alpha[y] = p.unary[y];
    for (int j = 1; j < n; ++j) {
        const double* pr = p.pair(j);
        for (int y = 0; y < L; ++y) {
            for (int q = 0; q < L; ++q) tmp[q] = alpha[(j - 1) * L + q] + pr[q * L + y];
            alpha[j * L + y] = p.unary[j * L + y] + log_sum_exp(tmp.data(), L);
        }
    }
    for (int j = n - 2; j >= 0; --j) {
        const double* pr = p.pair(j + 1);
        for (int q = 0; q < L; ++q) {
            for (int y = 0; y < L; ++y) tmp[y] = pr[q * L + y] + p.unary[(j + 1) * L + y] + beta[(j + 1) * L + y];
            beta[j * L + q] = log_sum_exp(tmp.data(), L);
        }
    }
    Inference r;
    r.log_z = log_sum_exp(&alpha[static_cast<std::size_t>(n - 1) * L], L);
    for (int y = 0; y < L; ++y) tmp[y] = p.unary[y] + beta[y];
    r.log_z_backward = log_sum_exp(tmp.data(), L);
    r.node.resize(static_cast<std::size_t>(n) * L);
    r.edge.assign(static_cast<std::size_t>(n) * L * L, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int y = 0; y < L; ++y) r.node[j * L + y] = std::exp(alpha[j * L + y] + beta[j * L + y] - r.log_z);
        if (j == 0) continue;
        const double* pr = p.pair(j);
        double* e = &r.edge[static_cast<std::size_t>(j) * L * L];
        for (int q = 0; q < L; ++q)
            for (int y = 0; y < L; ++y)
                e[q * L + y] = std::exp(alpha[(j - 1) * L + q] + pr[q * L + y] + p.unary[j * L + y] +
                                        beta[j * L + y] - r.log_z);
    }
    return r;
}

// Scaled recursions in probability space; nullopt when a scale underflows.
std::optional<Inference> infer_scaled(const Potentials& p) {
    const int n = p.n, L = p.L;
    std::vector<std::vector<double>> ep(p.pairs.size());
    std::vector<double> pair_max(p.pairs.size());
    for (std::size_t g = 0; g < p.pairs.size(); ++g) {
        pair_max[g] = *std::max_element(p.pairs[g].begin(), p.pairs[g].end());
        ep[g].resize(p.pairs[g].size());
        for (std::size_t k = 0; k < ep[g].size(); ++k) ep[g][k] = std::exp(p.pairs[g][k] - pair_max[g]);
    }
    std::vector<double> eu(static_cast<std::size_t>(n) * L), offset(n), scale(n);
    for (int j = 0; j < n; ++j) {
        const double* u = &p.unary[static_cast<std::size_t>(j) * L];
        const double mx = *std::max_element(u, u + L);
        for (int y = 0; y < L; ++y) eu[j * L + y] = std::exp(u[y] - mx);
        offset[j] = mx + (j > 0 ? pair_max[p.group[j]] : 0.0);
    }
    std::vector<double> alpha(static_cast<std::size_t>(n) * L), beta(static_cast<std::size_t>(n) * L);
    for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int y = 0; y < L; ++y) {
            double a = 1.0;
            if (j > 0) {
                const double* e = ep[p.group[j]].data();
                a = 0;
                for (int q = 0; q < L; ++q) a += alpha[(j - 1) * L + q] * e[q * L + y];
            }
            alpha[j * L + y] = a * eu[j * L + y];
            s += alpha[j * L + y];
        }
        if (!(s > 0) || !std::isfinite(s)) return std::nullopt;
        scale[j] = s;
        for (int y = 0; y < L; ++y) alpha[j * L + y] /= s;
    }
    for (int y = 0; y < L; ++y) beta[(n - 1) * L + y] = 1.0;
    for (int j = n - 2; j >= 0; --j) {
        const double* e = ep[p.group[j + 1]].data();
        for (int q = 0; q < L; ++q) {
            double b = 0;
            for (int y = 0; y < L; ++y) b += e[q * L + y] * eu[(j + 1) * L + y] * beta[(j + 1) * L + y];
            beta[j * L + q] = b / scale[j + 1];
        }
    }
    Inference r;
    double tail = 0;
    for (int j = 1; j < n; ++j) tail += std::log(scale[j]) + offset[j];
    r.log_z = std::log(scale[0]) + offset[0] + tail;
    double b0 = 0;
    for (int y = 0; y < L; ++y) b0 += eu[y] * beta[y];
    if (!(b0 > 0)) return std::nullopt;
    r.log_z_backward = std::log(b0) + offset[0] + tail;
    r.node.resize(static_cast<std::size_t>(n) * L);
    r.edge.assign(static_cast<std::size_t>(n) * L * L, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int y = 0; y < L; ++y) r.node[j * L + y] = alpha[j * L + y] * beta[j * L + y];
        if (j == 0) continue;
        const double* e = ep[p.group[j]].data();
        double* out = &r.edge[static_cast<std::size_t>(j) * L * L];
        for (int q = 0; q < L; ++q) {
            const double a = alpha[(j - 1) * L + q] / scale[j];
            for (int y = 0; y < L; ++y) out[q * L + y] = a * e[q * L + y] * eu[j * L + y] * beta[j * L + y];
        }
    }
    return r;
}

Inference infer(const Potentials& p) {
    if (auto r = infer_scaled(p)) return *std::move(r);
    return infer_log_space(p);
}

// NLL of one labeled sequence; adds expected minus empirical feature counts
// into grad.
double sequence_nll(const CrfModel& m, const Sequence& s, std::span<double> grad) {
    if (s.labels.size() != s.x.size()) throw std::invalid_argument("sequence label count mismatch");
    const Potentials p = potentials(m, s.x);
    const Inference t = infer(p);
    const int n = p.n, L = p.L;
    double score = 0;
    for (int j = 0; j < n; ++j) {
        const int y = s.labels[j];
        if (y < 0 || y >= L) throw std::out_of_range("label outside the label set");
        score += p.unary[j * L + y];
        if (j > 0) score += p.pair(j)[s.labels[j - 1] * L + y];
    }
    std::vector<double> marg(L);
    const std::size_t LL = static_cast<std::size_t>(L) * L;
    std::vector<std::vector<double>> edge_sum(p.pairs.size(), std::vector<double>(LL, 0.0));
    double* gb = grad.data() + m.bias_index(0);
    for (int j = 0; j < n; ++j) {
        for (int y = 0; y < L; ++y) marg[y] = t.node[j * L + y];
        marg[s.labels[j]] -= 1.0;
        for (std::size_t k = 0; k < s.x[j].index.size(); ++k) {
            const double v = s.x[j].value[k];
            double* g = grad.data() + m.state_index(s.x[j].index[k], 0);
            for (int y = 0; y < L; ++y) g[y] += v * marg[y];
        }
        for (int y = 0; y < L; ++y) gb[y] += marg[y];
        if (j == 0) continue;
        std::vector<double>& es = edge_sum[p.group[j]];
        const double* e = &t.edge[static_cast<std::size_t>(j) * L * L];
        for (int k = 0; k < L * L; ++k) es[k] += e[k];
        es[s.labels[j - 1] * L + s.labels[j]] -= 1.0;
    }
    double* g0 = grad.data() + m.transition_index(0, 0, 0);
    for (std::size_t g = 0; g < p.pairs.size(); ++g) {
        for (int k = 0; k < L * L; ++k) g0[k] += edge_sum[g][k];
        for (std::size_t c = 0; c < m.context.size(); ++c) {
            const double v = p.ctx[g][c];
            if (v == 0.0) continue;
            double* gc = grad.data() + m.transition_index(static_cast<int>(c) + 1, 0, 0);
            for (int k = 0; k < L * L; ++k) gc[k] += v * edge_sum[g][k];
        }
    }
    return t.log_z - score;
}

}  // namespace

Marginals log_partition_and_marginals(const CrfModel& m, const std::vector<SparseInput>& x) {
    if (x.empty()) throw std::invalid_argument("empty CRF sequence");
    check_finite(m);
    const Potentials p = potentials(m, x);
    const Inference t = infer(p);
    const int n = p.n, L = p.L;
    Marginals out;
    out.log_z = t.log_z;
    out.log_z_backward = t.log_z_backward;
    out.node.assign(n, std::vector<double>(L));
    out.edge.assign(n, {});
    for (int j = 0; j < n; ++j) {
        for (int y = 0; y < L; ++y) out.node[j][y] = t.node[j * L + y];
        if (j == 0) continue;
        out.edge[j].assign(L, std::vector<double>(L));
        for (int q = 0; q < L; ++q)
            for (int y = 0; y < L; ++y) out.edge[j][q][y] = t.edge[(static_cast<std::size_t>(j) * L + q) * L + y];
    }
    return out;
}

double path_score(const CrfModel& m, const std::vector<SparseInput>& x, const std::vector<int>& labels) {
    double s = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const auto feats = activate_features(m, x[j], labels[j],
                                             j == 0 ? std::nullopt : std::optional<int>(labels[j - 1]));
        for (const Feature& f : feats) s += m.weights[f.id] * f.value;
    }
    return s;
}

std::vector<int> viterbi(const CrfModel& m, const std::vector<SparseInput>& x) {
    if (x.empty()) return {};
    check_finite(m);
    const Potentials p = potentials(m, x);
    const int n = p.n, L = p.L;
    std::vector<double> best(static_cast<std::size_t>(n) * L);
    std::vector<int> back(static_cast<std::size_t>(n) * L, 0);
    for (int y = 0; y < L; ++y) best[y] = p.unary[y];
    for (int j = 1; j < n; ++j) {
        const double* pr = p.pair(j);
        for (int y = 0; y < L; ++y) {
            int arg = 0;
            double mx = -std::numeric_limits<double>::infinity();
            for (int q = 0; q < L; ++q) {
                const double v = best[(j - 1) * L + q] + pr[q * L + y];
                if (v > mx) {
                    mx = v;
                    arg = q;
                }
            }
            best[j * L + y] = mx + p.unary[j * L + y];
            back[j * L + y] = arg;
        }
    }
    std::vector<int> path(n);
    path[n - 1] = static_cast<int>(std::max_element(best.begin() + (n - 1) * L, best.end()) -
                                   (best.begin() + (n - 1) * L));
    for (int j = n - 1; j > 0; --j) path[j - 1] = back[j * L + path[j]];
    return path;
}

double nll_and_gradient(const CrfModel& m, const std::vector<Sequence>& data, double l2,
                        std::span<double> grad, Exec exec) {
    if (data.empty()) throw std::invalid_argument("nll_and_gradient: empty dataset");
    check_finite(m);
    if (grad.size() != m.n_weights()) throw std::invalid_argument("gradient size mismatch");
    double nll = 0;
    if (exec == Exec::Serial) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const Sequence& s : data) nll += sequence_nll(m, s, grad);
    } else {
        nll = chunked_reduce(data.size(), 256, grad,
                             [&](std::size_t i, std::span<double> acc) { return sequence_nll(m, data[i], acc); });
    }
    for (std::size_t k = 0; k < grad.size(); ++k) {
        nll += l2 * m.weights[k] * m.weights[k];
        grad[k] += 2 * l2 * m.weights[k];
    }
    return nll;
}

CrfTrainResult train_crf(const std::vector<Sequence>& data, const CrfTrainConfig& config, CrfModel init,
                         Exec exec) {
    if (config.l1 < 0 || config.l2 < 0) throw std::invalid_argument("l1 and l2 must be >= 0");
    if (data.empty()) throw std::invalid_argument("train_crf: empty dataset");
    if (init.weights.size() != init.n_weights()) init.weights.assign(init.n_weights(), 0.0);

    nn::LbfgsConfig lc;
    lc.memory = config.memory;
    lc.max_iterations = config.max_iterations;
    lc.gradient_tolerance = config.gradient_tolerance;
    lc.relative_tolerance = config.relative_tolerance;
    lc.l1 = config.l1;
    if (config.l1 > 0) {
        lc.l1_mask.assign(init.n_weights(), true);
        for (int y = 0; y < init.n_labels; ++y) lc.l1_mask[init.bias_index(y)] = false;
    }
    CrfModel work = init;
    auto objective = [&](std::span<const double> w, std::span<double> g) {
        std::copy(w.begin(), w.end(), work.weights.begin());
        return nll_and_gradient(work, data, config.l2, g, exec);
    };
    nn::LbfgsResult r = nn::lbfgs_minimize(objective, init.weights, lc);
    CrfTrainResult out;
    out.model = std::move(init);
    out.model.weights = std::move(r.x);
    out.status = r.status;
    out.iterations = r.iterations;
    out.history = std::move(r.history);
    return out;
}

SparseInput turn_input(const Conversation& c, const std::vector<StateFeatures>& trajectory, int j,
                       const ExtraFeatures& extra) {
    if (j < 1 || j >= static_cast<int>(trajectory.size()) + 1)
        throw std::out_of_range("turn_input: position outside the trajectory");
    const FeatureVector fv = assemble_fv(trajectory[j - 1]);
    if (!extra) return SparseInput::from_dense(fv);
    std::vector<double> x(fv.begin(), fv.end());
    const std::vector<double> e = extra(c, j - 1);
    x.insert(x.end(), e.begin(), e.end());
    return SparseInput::from_dense(x);
}

std::vector<Sequence> build_dataset(const Corpus& labeled, const CrfTrainConfig& config,
                                    const ExtraFeatures& extra, const Corpus* targets) {
    if (config.window < 1) throw std::invalid_argument("CRF window must be >= 1");
    if (targets && targets->size() != labeled.size())
        throw std::invalid_argument("build_dataset: target corpus does not match");
    std::vector<std::vector<Sequence>> per(labeled.conversations.size());
    parallel_for(static_cast<std::ptrdiff_t>(per.size()), [&](std::ptrdiff_t ci) {
        const Conversation& c = labeled.conversations[ci];
        const std::vector<StateFeatures> traj = state_trajectory(c);
        const int n = static_cast<int>(c.turns.size());
        std::vector<SparseInput> xs(n);
        std::vector<int> ys(n);
        const Conversation& tc = targets ? targets->conversations[ci] : c;
        if (tc.conversation_id != c.conversation_id || tc.turns.size() != c.turns.size())
            throw std::invalid_argument("build_dataset: target labels for " + c.conversation_id + " do not match");
        for (int j = 1; j <= n; ++j) {
            const auto& label = tc.turns[j - 1].label;
            if (!label) throw std::invalid_argument("build_dataset: unlabeled turn in " + c.conversation_id);
            xs[j - 1] = turn_input(c, traj, j, extra);
            ys[j - 1] = label_id(*label);
        }
        if (config.whole_conversation) {
            per[ci].push_back({xs, ys});
            return;
        }
        for (int end = 1; end <= n; ++end) {
            const int begin = std::max(1, end - config.window + 1);
            Sequence s;
            s.x.assign(xs.begin() + (begin - 1), xs.begin() + end);
            s.labels.assign(ys.begin() + (begin - 1), ys.begin() + end);
            per[ci].push_back(std::move(s));
        }
    });
    std::vector<Sequence> out;
    for (auto& v : per)
        for (auto& s : v) out.push_back(std::move(s));
    return out;
}

TopicScores project_accept(std::span<const double> marginal) {
    TopicScores s;
    double total = 0;
    for (int k = 0; k < kNumSuggestible; ++k) total += marginal[k];
    for (int k = 0; k < kNumSuggestible; ++k)
        s.score[k] = total > 0 ? marginal[k] / total : 1.0 / kNumSuggestible;
    return s;
}

TopicScores predict_next_topic(const CrfModel& m, const Conversation& c, int i, int window,
                               const ExtraFeatures& extra) {
    const int n = static_cast<int>(c.turns.size());
    if (i < 0 || i > n) throw std::out_of_range("suggestion point outside the conversation");
    const std::vector<StateFeatures> traj = state_trajectory(c);
    const int last = i + 1;
    const int begin = std::max(1, last - window + 1);
    std::vector<SparseInput> xs;
    for (int j = begin; j <= last; ++j) xs.push_back(turn_input(c, traj, j, extra));
    const Marginals mg = log_partition_and_marginals(m, xs);
    return project_accept(mg.node.back());
}

nlohmann::json to_json(const CrfModel& m) {
    nlohmann::json labels = nlohmann::json::array();
    for (int y = 0; y < m.n_labels; ++y) labels.push_back(m.n_labels == kNumLabels ? label_name(y) : std::to_string(y));
    return {{"labels", labels},
            {"fv_dim", m.fv_dim},
            {"fv_layout_version", m.fv_layout_version},
            {"transition_context", m.context},
            {"weights", m.weights}};
}

CrfModel crf_from_json(const nlohmann::json& j) {
    const int version = j.at("fv_layout_version").get<int>();
    if (version != fv_layout::kVersion)
        throw std::runtime_error("CRF checkpoint fv layout version " + std::to_string(version) +
                                 " does not match " + std::to_string(fv_layout::kVersion));
    CrfModel m = CrfModel::make_generic(static_cast<int>(j.at("labels").size()), j.at("fv_dim").get<int>(),
                                        j.at("transition_context").get<std::vector<int>>());
    if (m.n_labels == kNumLabels)
        for (int y = 0; y < m.n_labels; ++y)
            if (j.at("labels")[y].get<std::string>() != label_name(y))
                throw std::runtime_error("CRF checkpoint label order mismatch");
    m.weights = j.at("weights").get<std::vector<double>>();
    if (m.weights.size() != m.n_weights()) throw std::runtime_error("CRF checkpoint weight count mismatch");
    return m;
}

}  // namespace cts::crf
