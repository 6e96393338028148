#include "afen/nn/model.hpp"

#include <algorithm>

#include "afen/error.hpp"

namespace afen::nn {

ArchSpec ArchSpec::standard() {
    ArchSpec a;
    a.blocks = {
        {32, 5, 5, 2, 3, 2, 2},
        {64, 3, 3, 2, 2, 2, 2},
        {96, 2, 2, 1, 1, 1, 1},
        {128, 2, 2, 1, 1, 1, 1},
        {128, 2, 2, 1, 1, 1, 1},
    };
    return a;
}

ArchSpec ArchSpec::compact() {
    ArchSpec a;
    a.blocks = {
        {8, 5, 5, 2, 3, 2, 2},
        {16, 3, 3, 2, 2, 2, 2},
    };
    a.hidden = {32};
    return a;
}

ArchSpec ArchSpec::tiny(std::vector<std::size_t> rows, std::size_t frames) {
    ArchSpec a;
    a.branch_rows = std::move(rows);
    a.frames = frames;
    a.blocks = {
        {4, 3, 3, 2, 2, 2, 2},
        {4, 2, 2, 1, 1, 1, 1},
    };
    a.hidden = {8};
    return a;
}

bool operator==(const ConvBlockSpec& a, const ConvBlockSpec& b) {
    return a.filters == b.filters && a.kh == b.kh && a.kw == b.kw && a.sh == b.sh && a.sw == b.sw &&
           a.ph == b.ph && a.pw == b.pw;
}

bool operator==(const ArchSpec& a, const ArchSpec& b) {
    return a.branch_rows == b.branch_rows && a.frames == b.frames && a.blocks == b.blocks &&
           a.hidden == b.hidden && a.classes == b.classes && a.dropout == b.dropout;
}

void ArchSpec::validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::InvalidArgument, "architecture: " + m); };
    if (branch_rows.empty()) fail("no branches");
    for (auto r : branch_rows)
        if (r == 0) fail("branch with zero rows");
    if (frames == 0) fail("zero frames");
    if (blocks.empty()) fail("no conv blocks");
    for (const auto& b : blocks)
        if (b.filters == 0 || b.kh == 0 || b.kw == 0 || b.sh == 0 || b.sw == 0 || b.ph == 0 || b.pw == 0)
            fail("conv block components must be >= 1");
    for (auto h : hidden)
        if (h == 0) fail("zero-width hidden layer");
    if (classes < 2) fail("need at least two classes");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

std::vector<std::array<std::size_t, 3>> branch_shapes(const ArchSpec& arch, std::size_t rows) {
    std::vector<std::array<std::size_t, 3>> shapes;
    std::size_t h = rows, w = arch.frames;
    for (const auto& b : arch.blocks) {
        h = Conv2d<float>::out_size(h, b.sh);
        w = Conv2d<float>::out_size(w, b.sw);
        const std::size_t eh = h < b.ph ? 1 : b.ph, ew = w < b.pw ? 1 : b.pw;
        h = (h + eh - 1) / eh;
        w = (w + ew - 1) / ew;
        shapes.push_back({h, w, b.filters});
    }
    return shapes;
}

// ---------------------------------------------------------------- Branch

template <typename T>
Branch<T>::Branch(const std::string& name, const ArchSpec& arch, std::size_t rows_)
    : rows(rows_),
      input_mean{name + ".input_mean", std::vector<T>(rows_, T(0))},
      input_scale{name + ".input_scale", std::vector<T>(rows_, T(1))} {
    std::size_t cin = 1;
    for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
        const auto& b = arch.blocks[i];
        const std::string prefix = name + ".block" + std::to_string(i + 1);
        convs.emplace_back(prefix + ".conv", cin, b.filters, b.kh, b.kw, b.sh, b.sw);
        norms.emplace_back(prefix + ".bn", b.filters);
        relus.emplace_back();
        pools.emplace_back(b.ph, b.pw);
        cin = b.filters;
    }
    convs.front().propagate_input_grad = false;
    attention = SelfAttention<T>(name + ".attention", cin);
}

template <typename T>
void Branch<T>::init(Rng& rng) {
    for (auto& c : convs) c.init_he_uniform(rng);
    attention.init_glorot_uniform(rng);
}

template <typename T>
Tensor<T> Branch<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.height() != rows || x.channels() != 1)
        throw Error(Errc::ShapeMismatch, attention.wq.name + ": input " + shape_string(x.dims) + ", expected (b, " +
                                             std::to_string(rows) + ", w, 1)");
    Tensor<T> h = x;
    const std::size_t w = x.width();
    for (std::size_t b = 0; b < x.batch(); ++b)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t t = 0; t < w; ++t) {
                T& v = h.at(b, r, t, 0);
                v = (v - input_mean.value[r]) * input_scale.value[r];
            }
    for (std::size_t i = 0; i < convs.size(); ++i) {
        h = convs[i].forward(h);
        h = norms[i].forward(h, mode);
        h = relus[i].forward(h);
        if (pools[i].ph != 1 || pools[i].pw != 1) h = pools[i].forward(h);
    }
    h = attention.forward(h);
    return gmp.forward(h);
}

template <typename T>
void Branch<T>::backward(const Tensor<T>& dy) {
    Tensor<T> g = gmp.backward(dy);
    g = attention.backward(g);
    for (std::size_t i = convs.size(); i-- > 0;) {
        if (pools[i].ph != 1 || pools[i].pw != 1) g = pools[i].backward(g);
        g = relus[i].backward(g);
        g = norms[i].backward(g);
        g = convs[i].backward(g);
    }
}

template <typename T>
void Branch<T>::collect(std::vector<Param<T>*>& out) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
        convs[i].collect(out);
        norms[i].collect(out);
    }
    attention.collect(out);
}

template <typename T>
void Branch<T>::collect_buffers(std::vector<Buffer<T>*>& out) {
    out.push_back(&input_mean);
    out.push_back(&input_scale);
    for (auto& n : norms) n.collect_buffers(out);
}

// -------------------------------------------------------------- CnnModel

template <typename T>
CnnModel<T>::CnnModel(ArchSpec arch) : arch_(std::move(arch)) {
    arch_.validate();
    for (std::size_t i = 0; i < arch_.branch_rows.size(); ++i)
        branches.emplace_back("branch" + std::to_string(i), arch_, arch_.branch_rows[i]);
    std::size_t width = arch_.branch_rows.size() * arch_.branch_width();
    for (std::size_t i = 0; i <= arch_.hidden.size(); ++i) {
        const std::size_t out = i < arch_.hidden.size() ? arch_.hidden[i] : arch_.classes;
        dropouts.emplace_back(arch_.dropout);
        dense.emplace_back("head.dense" + std::to_string(i + 1), width, out);
        if (i < arch_.hidden.size()) relus.emplace_back();
        width = out;
    }
    branch_out_.resize(branches.size());
}

template <typename T>
void CnnModel<T>::init(std::uint64_t seed) {
    for (std::size_t i = 0; i < branches.size(); ++i) {
        Rng rng = Rng::substream(seed, i + 1);
        branches[i].init(rng);
    }
    Rng rng = Rng::substream(seed, 1000);
    for (auto& d : dense) d.init_he_uniform(rng);
}

template <typename T>
void CnnModel<T>::set_dropout(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::InvalidArgument, "dropout must be in [0, 1)");
    arch_.dropout = rate;
    for (auto& d : dropouts) d.rate = rate;
}

template <typename T>
Tensor<T> CnnModel<T>::forward(const std::vector<Tensor<T>>& inputs) {
    Rng unused(0);
    return forward(inputs, Mode::Infer, unused);
}

template <typename T>
Tensor<T> CnnModel<T>::forward(const std::vector<Tensor<T>>& inputs, Mode mode, Rng& rng) {
    if (inputs.size() != branches.size())
        throw Error(Errc::ShapeMismatch, "expected " + std::to_string(branches.size()) + " branch inputs, got " +
                                             std::to_string(inputs.size()));
    const std::size_t nb = inputs.front().batch();
    for (const auto& x : inputs)
        if (x.batch() != nb) throw Error(Errc::ShapeMismatch, "branch inputs disagree on batch size");

    const std::size_t bw = arch_.branch_width();
    Tensor<T> h(nb, 1, 1, branches.size() * bw);
    for (std::size_t i = 0; i < branches.size(); ++i) {
        branch_out_[i] = branches[i].forward(inputs[i], mode);
        for (std::size_t b = 0; b < nb; ++b)
            std::copy_n(branch_out_[i].sample(b).data(), bw, h.sample(b).data() + i * bw);
    }
    for (std::size_t i = 0; i < dense.size(); ++i) {
        h = dropouts[i].forward(h, mode, rng);
        h = dense[i].forward(h);
        if (i < relus.size()) h = relus[i].forward(h);
    }
    return softmax(h);
}

template <typename T>
void CnnModel<T>::backward(const Tensor<T>& probs, std::span<const int> labels) {
    const std::size_t nb = probs.batch(), k = probs.sample_size();
    if (labels.size() != nb) throw Error(Errc::ShapeMismatch, "label count differs from batch size");
    Tensor<T> g = probs;
    for (std::size_t b = 0; b < nb; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k)
            throw Error(Errc::LabelOutOfRange, "label " + std::to_string(labels[b]));
        g.data[b * k + static_cast<std::size_t>(labels[b])] -= T(1);
    }
    const T inv = static_cast<T>(1.0 / static_cast<double>(nb));
    for (auto& v : g.data) v *= inv;

    for (std::size_t i = dense.size(); i-- > 0;) {
        if (i < relus.size()) g = relus[i].backward(g);
        g = dense[i].backward(g);
        g = dropouts[i].backward(g);
    }
    const std::size_t bw = arch_.branch_width();
    for (std::size_t i = 0; i < branches.size(); ++i) {
        Tensor<T> gi(nb, 1, 1, bw);
        for (std::size_t b = 0; b < nb; ++b)
            std::copy_n(g.sample(b).data() + i * bw, bw, gi.sample(b).data());
        branches[i].backward(gi);
    }
}

template <typename T>
std::vector<Param<T>*> CnnModel<T>::parameters() {
    std::vector<Param<T>*> out;
    for (auto& b : branches) b.collect(out);
    for (auto& d : dense) d.collect(out);
    return out;
}

template <typename T>
std::vector<Buffer<T>*> CnnModel<T>::buffers() {
    std::vector<Buffer<T>*> out;
    for (auto& b : branches) b.collect_buffers(out);
    return out;
}

template <typename T>
void CnnModel<T>::zero_grad() {
    for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template class Branch<float>;
template class Branch<double>;
template class CnnModel<float>;
template class CnnModel<double>;

}  // namespace afen::nn
