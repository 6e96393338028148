#include "afen/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "afen/error.hpp"

namespace afen::gbdt {

void BoostConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, "gbdt: " + m); };
    if (n_rounds < 1) fail("n_rounds must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must be in (0, 1]");
    if (max_depth < 1) fail("max_depth must be >= 1");
    if (!(min_child_weight >= 0.0)) fail("min_child_weight must be >= 0");
    if (!(lambda >= 0.0)) fail("lambda must be >= 0");
    if (!(gamma >= 0.0)) fail("gamma must be >= 0");
    if (class_count < 2) fail("class_count must be >= 2");
}

FeatureTable FeatureTable::from_matrix(const Matrix& m) {
    FeatureTable t(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) t.values[i] = static_cast<float>(m.data[i]);
    return t;
}

float Tree::predict(std::span<const float> x) const {
    std::size_t i = 0;
    while (!nodes[i].leaf) {
        const auto& n = nodes[i];
        const float v = x[n.feature];
        const bool left = std::isnan(v) ? n.default_left : v < n.threshold;
        i = static_cast<std::size_t>(left ? n.left : n.right);
    }
    return nodes[i].value;
}

std::size_t Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes[i].leaf) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return best;
}

Matrix softmax_rows(const Matrix& margins) {
    Matrix p(margins.rows, margins.cols);
    for (std::size_t i = 0; i < margins.rows; ++i) {
        const auto in = margins.row(i);
        auto out = p.row(i);
        const double peak = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t k = 0; k < in.size(); ++k) total += out[k] = std::exp(in[k] - peak);
        for (auto& v : out) v /= total;
    }
    return p;
}

namespace {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows)
        throw Error(Errc::ShapeMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= classes)
            throw Error(Errc::LabelOutOfRange, "label " + std::to_string(l) + " outside 0.." + std::to_string(classes - 1));
}

}  // namespace

GradHess grad_hess(const Matrix& probs, std::span<const int> labels) {
    check_labels(labels, probs.rows, probs.cols);
    GradHess out{Matrix(probs.rows, probs.cols), Matrix(probs.rows, probs.cols)};
    for (std::size_t i = 0; i < probs.rows; ++i)
        for (std::size_t k = 0; k < probs.cols; ++k) {
            const double p = probs(i, k);
            out.g(i, k) = p - (static_cast<std::size_t>(labels[i]) == k ? 1.0 : 0.0);
            out.h(i, k) = p * (1.0 - p);
        }
    return out;
}

double mlogloss(const Matrix& probs, std::span<const int> labels) {
    check_labels(labels, probs.rows, probs.cols);
    if (probs.rows == 0) throw Error(Errc::EmptyDataset, "log loss of zero samples");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i)
        total -= std::log(std::max(probs(i, static_cast<std::size_t>(labels[i])), 1e-15));
    return total / static_cast<double>(probs.rows);
}

std::vector<std::vector<std::uint32_t>> presort(const FeatureTable& x) {
    std::vector<std::vector<std::uint32_t>> out(x.cols);
    for (std::size_t f = 0; f < x.cols; ++f) {
        auto& o = out[f];
        o.resize(x.rows);
        std::iota(o.begin(), o.end(), 0u);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    }
    return out;
}

std::optional<Split> best_split(const FeatureTable& x, const std::vector<std::span<const std::uint32_t>>& sorted,
                                std::span<const double> g, std::span<const double> h, const BoostConfig& config) {
    if (sorted.empty() || sorted.front().size() < 2) return std::nullopt;
    double gt = 0.0, ht = 0.0;
    for (auto s : sorted.front()) {
        gt += g[s];
        ht += h[s];
    }
    const double lambda = config.lambda, mcw = config.min_child_weight;
    const double parent = gt * gt / (ht + lambda);

    std::optional<Split> best;
    double best_gain = 0.0;
    for (std::size_t f = 0; f < sorted.size(); ++f) {
        const auto list = sorted[f];
        double gl = 0.0, hl = 0.0;
        for (std::size_t i = 0; i + 1 < list.size(); ++i) {
            const auto s = list[i];
            gl += g[s];
            hl += h[s];
            const float a = x(s, f), b = x(list[i + 1], f);
            if (!(a < b)) continue;
            const double hr = ht - hl;
            if (hl < mcw || hr < mcw) continue;
            const double gr = gt - gl;
            const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent) - config.gamma;
            if (gain > best_gain) {
                best_gain = gain;
                float thr = static_cast<float>(0.5 * (static_cast<double>(a) + static_cast<double>(b)));
                if (!(thr > a)) thr = b;
                best = Split{f, thr, gain, hl, hr};
            }
        }
    }
    return best;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const FeatureTable& x, const std::vector<std::vector<std::uint32_t>>& order, std::span<const double> g,
                std::span<const double> h, const BoostConfig& config)
        : x_(x), order_(order), g_(g), h_(h), config_(config), go_left_(x.rows), scratch_(x.rows) {}

    Tree build() {
        tree_.nodes.clear();
        grow(0, x_.rows, 0);
        return std::move(tree_);
    }

private:
    std::int32_t grow(std::size_t lo, std::size_t hi, std::size_t depth) {
        const auto index = static_cast<std::int32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();

        std::optional<Split> split;
        if (depth < config_.max_depth && hi - lo >= 2) {
            std::vector<std::span<const std::uint32_t>> views;
            views.reserve(order_.size());
            for (const auto& o : order_) views.emplace_back(o.data() + lo, hi - lo);
            split = best_split(x_, views, g_, h_, config_);
        }
        if (!split) {
            double gt = 0.0, ht = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                gt += g_[order_.front()[i]];
                ht += h_[order_.front()[i]];
            }
            tree_.nodes[static_cast<std::size_t>(index)].value =
                static_cast<float>(-config_.learning_rate * gt / (ht + config_.lambda));
            return index;
        }

        std::size_t n_left = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            const auto s = order_.front()[i];
            go_left_[s] = x_(s, split->feature) < split->threshold;
            n_left += go_left_[s];
        }
        for (auto& o : order_) {
            std::size_t l = lo, r = 0;
            for (std::size_t i = lo; i < hi; ++i) {
                const auto s = o[i];
                if (go_left_[s]) o[l++] = s;
                else scratch_[r++] = s;
            }
            std::copy_n(scratch_.begin(), r, o.begin() + static_cast<std::ptrdiff_t>(l));
        }

        auto& node = tree_.nodes[static_cast<std::size_t>(index)];
        node.leaf = false;
        node.feature = static_cast<std::uint16_t>(split->feature);
        node.threshold = split->threshold;
        node.default_left = split->left_hess >= split->right_hess;
        const auto left = grow(lo, lo + n_left, depth + 1);
        const auto right = grow(lo + n_left, hi, depth + 1);
        tree_.nodes[static_cast<std::size_t>(index)].left = left;
        tree_.nodes[static_cast<std::size_t>(index)].right = right;
        return index;
    }

    const FeatureTable& x_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::span<const double> g_, h_;
    const BoostConfig& config_;
    std::vector<std::uint8_t> go_left_;
    std::vector<std::uint32_t> scratch_;
    Tree tree_;
};

}  // namespace

GbdtModel fit_gbdt(const FeatureTable& x, std::span<const int> labels, const BoostConfig& config,
                   FitHistory* history) {
    config.validate();
    const std::size_t n = x.rows, k_count = config.class_count;
    check_labels(labels, n, k_count);
    if (n < 2) throw Error(Errc::DegenerateData, "need at least two samples");
    if (x.cols == 0 || x.cols > 65535) throw Error(Errc::ShapeMismatch, "feature count must be in 1..65535");
    for (float v : x.values)
        if (!std::isfinite(v)) throw Error(Errc::DegenerateData, "non-finite feature value");

    std::vector<std::size_t> counts(k_count, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t k = 0; k < k_count; ++k)
        if (counts[k] == 0) throw Error(Errc::DegenerateData, "class " + std::to_string(k) + " has no samples");

    GbdtModel model;
    model.config = config;
    model.feature_count = x.cols;
    for (auto c : counts) model.base_score.push_back(std::log(static_cast<double>(c) / static_cast<double>(n)));

    Matrix margins(n, k_count);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < k_count; ++k) margins(i, k) = model.base_score[k];

    const auto order = presort(x);
    double prev = mlogloss(softmax_rows(margins), labels);
    std::vector<double> g(n), h(n);
    if (history) history->train_mlogloss.clear();

    for (std::size_t round = 0; round < config.n_rounds; ++round) {
        const auto gh = grad_hess(softmax_rows(margins), labels);
        for (std::size_t k = 0; k < k_count; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                g[i] = gh.g(i, k);
                h[i] = gh.h(i, k);
            }
            TreeBuilder builder(x, order, g, h, config);
            model.trees.push_back(builder.build());
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < k_count; ++k)
                margins(i, k) += model.trees[round * k_count + k].predict(x.row(i));

        const double loss = mlogloss(softmax_rows(margins), labels);
        // Slack covers summation roundoff only; real increases are orders larger.
        if (!std::isfinite(loss) || loss > prev * (1.0 + 1e-12))
            throw Error(Errc::NumericFailure, "training mlogloss rose from " + std::to_string(prev) + " to " +
                                                  std::to_string(loss) + " at round " + std::to_string(round + 1));
        prev = loss;
        if (history) history->train_mlogloss.push_back(loss);
    }
    return model;
}

Matrix predict_margins(const GbdtModel& model, const FeatureTable& x) {
    if (x.cols != model.feature_count)
        throw Error(Errc::ShapeMismatch, "model expects " + std::to_string(model.feature_count) + " features, got " +
                                             std::to_string(x.cols));
    const std::size_t k_count = model.config.class_count;
    Matrix m(x.rows, k_count);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto row = x.row(i);
        for (std::size_t k = 0; k < k_count; ++k) m(i, k) = model.base_score[k];
        for (std::size_t t = 0; t < model.trees.size(); ++t) m(i, t % k_count) += model.trees[t].predict(row);
    }
    return m;
}

Matrix predict_gbdt(const GbdtModel& model, const FeatureTable& x) { return softmax_rows(predict_margins(model, x)); }

std::string history_csv(const FitHistory& history) {
    std::string out = "round,train_mlogloss\n";
    char buf[64];
    for (std::size_t r = 0; r < history.train_mlogloss.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g\n", r + 1, history.train_mlogloss[r]);
        out += buf;
    }
    return out;
}

// ------------------------------------------------------------ persistence

namespace {

constexpr std::uint8_t kLeafTag = 0, kSplitLeftTag = 1, kSplitRightTag = 2;

void write_node(ByteWriter& w, const Tree& t, std::size_t i) {
    const auto& n = t.nodes[i];
    if (n.leaf) {
        w.put<std::uint8_t>(kLeafTag);
        w.put<float>(n.value);
        w.put<std::uint16_t>(0);
        return;
    }
    w.put<std::uint8_t>(n.default_left ? kSplitLeftTag : kSplitRightTag);
    w.put<float>(n.threshold);
    w.put<std::uint16_t>(n.feature);
    write_node(w, t, static_cast<std::size_t>(n.left));
    write_node(w, t, static_cast<std::size_t>(n.right));
}

std::int32_t read_node(ByteReader& r, Tree& t, std::size_t depth, std::size_t feature_count) {
    if (depth > 64) throw Error(Errc::CacheFormatError, "tree deeper than 64 levels");
    const auto tag = r.get<std::uint8_t>();
    const float value = r.get<float>();
    const auto feature = r.get<std::uint16_t>();
    const auto index = static_cast<std::int32_t>(t.nodes.size());
    t.nodes.emplace_back();
    if (tag == kLeafTag) {
        t.nodes.back().value = value;
        return index;
    }
    if (tag != kSplitLeftTag && tag != kSplitRightTag) throw Error(Errc::CacheFormatError, "bad node tag");
    if (feature >= feature_count) throw Error(Errc::CacheFormatError, "split feature out of range");
    const auto left = read_node(r, t, depth + 1, feature_count);
    const auto right = read_node(r, t, depth + 1, feature_count);
    auto& n = t.nodes[static_cast<std::size_t>(index)];
    n.leaf = false;
    n.threshold = value;
    n.feature = feature;
    n.default_left = tag == kSplitLeftTag;
    n.left = left;
    n.right = right;
    return index;
}

}  // namespace

Bytes encode_forest(const GbdtModel& model) {
    ByteWriter w;
    w.put_bytes("AFENGBDT");
    w.put<std::uint32_t>(kForestVersion);
    const auto& c = model.config;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.n_rounds));
    w.put<double>(c.learning_rate);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.max_depth));
    w.put<double>(c.min_child_weight);
    w.put<double>(c.lambda);
    w.put<double>(c.gamma);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.class_count));
    w.put<std::uint64_t>(c.seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.feature_count));
    for (double b : model.base_score) w.put<double>(b);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.trees.size()));
    for (const auto& t : model.trees) write_node(w, t, 0);
    return w.take();
}

GbdtModel decode_forest(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, Errc::CacheFormatError);
    if (r.get_bytes(8) != "AFENGBDT") throw Error(Errc::CacheFormatError, "not a forest file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kForestVersion)
        throw Error(Errc::CacheFormatError, "forest version " + std::to_string(version) + ", expected " +
                                                std::to_string(kForestVersion));
    GbdtModel m;
    auto& c = m.config;
    c.n_rounds = r.get<std::uint32_t>();
    c.learning_rate = r.get<double>();
    c.max_depth = r.get<std::uint32_t>();
    c.min_child_weight = r.get<double>();
    c.lambda = r.get<double>();
    c.gamma = r.get<double>();
    c.class_count = r.get<std::uint32_t>();
    c.seed = r.get<std::uint64_t>();
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(Errc::CacheFormatError, e.detail());
    }
    m.feature_count = r.get<std::uint32_t>();
    m.base_score.resize(c.class_count);
    for (auto& b : m.base_score) b = r.get<double>();
    const auto count = r.get<std::uint32_t>();
    if (count % c.class_count != 0) throw Error(Errc::CacheFormatError, "tree count is not a multiple of class count");
    m.trees.resize(count);
    for (auto& t : m.trees) read_node(r, t, 0, m.feature_count);
    if (r.remaining() != 0) throw Error(Errc::CacheFormatError, "trailing bytes after forest");
    return m;
}

void save_forest(const std::filesystem::path& path, const GbdtModel& model) { write_file(path, encode_forest(model)); }

GbdtModel load_forest(const std::filesystem::path& path) {
    try {
        return decode_forest(read_file(path));
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

}  // namespace afen::gbdt
