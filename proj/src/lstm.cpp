#include "smmkit/lstm.hpp"

#include <cmath>

namespace smm {

LstmCell::LstmCell(std::size_t neurons_n, std::size_t input_size_n)
    : q_(neurons_n), d_(input_size_n) {
    if (q_ < 1 || d_ < 1) {
        throw ArgumentError("lstm cell needs neurons and input size >= 1");
    }
    const std::vector<std::size_t> wshape{q_, q_ + d_};
    w_f = Tensor(wshape);
    w_i = Tensor(wshape);
    w_c = Tensor(wshape);
    w_o = Tensor(wshape);
    b_f = Tensor({q_});
    b_i = Tensor({q_});
    b_c = Tensor({q_});
    b_o = Tensor({q_});
    gw_f_ = Tensor(wshape);
    gw_i_ = Tensor(wshape);
    gw_c_ = Tensor(wshape);
    gw_o_ = Tensor(wshape);
    gb_f_ = Tensor({q_});
    gb_i_ = Tensor({q_});
    gb_c_ = Tensor({q_});
    gb_o_ = Tensor({q_});
}

void LstmCell::init_normal(Rng& rng, double stddev, double forget_bias) {
    w_f = rand_normal(rng, w_f.shape(), 0.0, stddev);
    w_i = rand_normal(rng, w_i.shape(), 0.0, stddev);
    w_c = rand_normal(rng, w_c.shape(), 0.0, stddev);
    w_o = rand_normal(rng, w_o.shape(), 0.0, stddev);
    b_f.fill(forget_bias);
    b_i.fill(0.0);
    b_c.fill(0.0);
    b_o.fill(0.0);
}

LstmState LstmCell::zero_state() const {
    return LstmState{Tensor({q_}), Tensor({q_})};
}

LstmCell::StepTrace LstmCell::compute_step(const LstmState& state, const Tensor& x) const {
    if (x.rank() != 1 || x.dim(0) != d_) {
        throw DimensionError("lstm step expects input of length " + std::to_string(d_) +
                             ", got " + shape_str(x.shape()));
    }
    if (state.h.rank() != 1 || state.h.dim(0) != q_ || state.c.rank() != 1 ||
        state.c.dim(0) != q_) {
        throw DimensionError("lstm state dimension must be " + std::to_string(q_));
    }
    StepTrace t;
    t.concat = Tensor({q_ + d_});
    for (std::size_t i = 0; i < q_; ++i) t.concat[i] = state.h[i];
    for (std::size_t i = 0; i < d_; ++i) t.concat[q_ + i] = x[i];

    auto gate = [&](const Tensor& w, const Tensor& b) {
        Tensor z = matvec(w, t.concat);
        for (std::size_t i = 0; i < q_; ++i) z[i] += b[i];
        return z;
    };
    t.f = map_sigmoid(gate(w_f, b_f));
    t.i = map_sigmoid(gate(w_i, b_i));
    t.cand = map_tanh(gate(w_c, b_c));
    t.o = map_sigmoid(gate(w_o, b_o));

    t.c_prev = state.c;
    t.c = Tensor({q_});
    for (std::size_t i = 0; i < q_; ++i) t.c[i] = t.f[i] * state.c[i] + t.i[i] * t.cand[i];
    t.tanh_c = map_tanh(t.c);
    return t;
}

LstmState LstmCell::step(const LstmState& state, const Tensor& x) const {
    StepTrace t = compute_step(state, x);
    LstmState next;
    next.c = t.c;
    next.h = ewise(t.o, t.tanh_c, EwiseOp::mul);
    return next;
}

Tensor LstmCell::forward_sequence(const std::vector<Tensor>& inputs, const LstmState& init) {
    if (inputs.empty()) {
        throw ArgumentError("lstm forward_sequence on an empty sequence");
    }
    trace_.clear();
    trace_.reserve(inputs.size());
    LstmState state = init;
    for (const Tensor& x : inputs) {
        StepTrace t = compute_step(state, x);
        state.c = t.c;
        state.h = ewise(t.o, t.tanh_c, EwiseOp::mul);
        trace_.push_back(std::move(t));
    }
    has_trace_ = true;
    return state.h;
}

Tensor LstmCell::forward_sequence(const std::vector<Tensor>& inputs) {
    return forward_sequence(inputs, zero_state());
}

LstmCell::SequenceGrads LstmCell::backward_sequence(const Tensor& grad_h_final) {
    if (!has_trace_) {
        throw StateError("lstm backward_sequence called before forward_sequence");
    }
    if (grad_h_final.rank() != 1 || grad_h_final.dim(0) != q_) {
        throw DimensionError("grad_h_final must have length " + std::to_string(q_) + ", got " +
                             shape_str(grad_h_final.shape()));
    }
    SequenceGrads g;
    g.w_f = Tensor(w_f.shape());
    g.w_i = Tensor(w_i.shape());
    g.w_c = Tensor(w_c.shape());
    g.w_o = Tensor(w_o.shape());
    g.b_f = Tensor({q_});
    g.b_i = Tensor({q_});
    g.b_c = Tensor({q_});
    g.b_o = Tensor({q_});
    g.inputs.assign(trace_.size(), Tensor({d_}));

    Tensor dh = grad_h_final;
    Tensor dc({q_});
    for (std::size_t step_back = trace_.size(); step_back-- > 0;) {
        const StepTrace& t = trace_[step_back];
        Tensor dz_f({q_}), dz_i({q_}), dz_c({q_}), dz_o({q_});
        Tensor dc_prev({q_});
        for (std::size_t i = 0; i < q_; ++i) {
            const double do_i = dh[i] * t.tanh_c[i];
            const double dct = dc[i] + dh[i] * t.o[i] * (1.0 - t.tanh_c[i] * t.tanh_c[i]);
            const double df = dct * t.c_prev[i];
            const double di = dct * t.cand[i];
            const double dcand = dct * t.i[i];
            dc_prev[i] = dct * t.f[i];
            dz_f[i] = df * t.f[i] * (1.0 - t.f[i]);
            dz_i[i] = di * t.i[i] * (1.0 - t.i[i]);
            dz_o[i] = do_i * t.o[i] * (1.0 - t.o[i]);
            dz_c[i] = dcand * (1.0 - t.cand[i] * t.cand[i]);
        }
        Tensor dconcat({q_ + d_});
        auto absorb = [&](const Tensor& dz, Tensor& gw, Tensor& gb, const Tensor& w) {
            for (std::size_t i = 0; i < q_; ++i) {
                const double z = dz[i];
                gb[i] += z;
                if (z == 0.0) continue;
                for (std::size_t j = 0; j < q_ + d_; ++j) {
                    gw.at(i, j) += z * t.concat[j];
                    dconcat[j] += z * w.at(i, j);
                }
            }
        };
        absorb(dz_f, g.w_f, g.b_f, w_f);
        absorb(dz_i, g.w_i, g.b_i, w_i);
        absorb(dz_c, g.w_c, g.b_c, w_c);
        absorb(dz_o, g.w_o, g.b_o, w_o);

        for (std::size_t j = 0; j < d_; ++j) g.inputs[step_back][j] = dconcat[q_ + j];
        for (std::size_t i = 0; i < q_; ++i) dh[i] = dconcat[i];
        dc = std::move(dc_prev);
    }

    auto add_into = [](Tensor& acc, const Tensor& src) {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
    };
    add_into(gw_f_, g.w_f);
    add_into(gw_i_, g.w_i);
    add_into(gw_c_, g.w_c);
    add_into(gw_o_, g.w_o);
    add_into(gb_f_, g.b_f);
    add_into(gb_i_, g.b_i);
    add_into(gb_c_, g.b_c);
    add_into(gb_o_, g.b_o);
    return g;
}

void LstmCell::bind_params(const std::string& prefix, std::vector<ParamBinding>& out) {
    out.push_back({prefix + ".w_f", &w_f, &gw_f_});
    out.push_back({prefix + ".w_i", &w_i, &gw_i_});
    out.push_back({prefix + ".w_c", &w_c, &gw_c_});
    out.push_back({prefix + ".w_o", &w_o, &gw_o_});
    out.push_back({prefix + ".b_f", &b_f, &gb_f_});
    out.push_back({prefix + ".b_i", &b_i, &gb_i_});
    out.push_back({prefix + ".b_c", &b_c, &gb_c_});
    out.push_back({prefix + ".b_o", &b_o, &gb_o_});
}

void LstmCell::zero_grads() {
    gw_f_.fill(0.0);
    gw_i_.fill(0.0);
    gw_c_.fill(0.0);
    gw_o_.fill(0.0);
    gb_f_.fill(0.0);
    gb_i_.fill(0.0);
    gb_c_.fill(0.0);
    gb_o_.fill(0.0);
}

} // namespace smm
