#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "earn/autodiff.hpp"

namespace earn::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

/// glorot: U(-a, a) with a = sqrt(6 / (rows + cols)); uniform: U(-0.08, 0.08).
enum class InitScheme { glorot, uniform };

/// Seeded initializer shared by every learned layer; biases start at zero.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed, InitScheme scheme = InitScheme::uniform) : rng_(seed), scheme_(scheme) {}

    Parameter make(int rows, int cols) {
        Parameter p{Matrix(rows, cols)};
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        const double a = scheme_ == InitScheme::glorot ? std::sqrt(6.0 / static_cast<double>(rows + cols)) : 0.08;
        for (ad::Index c = 0; c < p.value.cols(); ++c) {
            for (ad::Index r = 0; r < p.value.rows(); ++r) p.value(r, c) = a * dist(rng_);
        }
        return p;
    }

    static Parameter zeros(int rows, int cols) { return Parameter{Matrix::Zero(rows, cols)}; }

private:
    std::mt19937_64 rng_;
    InitScheme scheme_;
};

/// y = x W + b, applied row-wise.
struct Linear {
    Parameter weight;
    Parameter bias;

    Linear() = default;
    Linear(int in, int out, Initializer& init) : weight(init.make(in, out)), bias(Initializer::zeros(1, out)) {}

    int in_dim() const { return static_cast<int>(weight.value.rows()); }
    int out_dim() const { return static_cast<int>(weight.value.cols()); }

    Var operator()(Tape& t, const Var& x) const {
        return ad::add_row(ad::matmul(x, t.parameter(weight)), t.parameter(bias));
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".weight", weight);
        f(prefix + ".bias", bias);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + ".weight", weight);
        f(prefix + ".bias", bias);
    }
};

/// Two-layer perceptron W2 ReLU(W1 x + b1) + b2.
struct Mlp2 {
    Linear hidden;
    Linear output;

    Mlp2() = default;
    Mlp2(int in, int width, int out, Initializer& init) : hidden(in, width, init), output(width, out, init) {}

    int in_dim() const { return hidden.in_dim(); }

    Var operator()(Tape& t, const Var& x) const { return output(t, ad::relu(hidden(t, x))); }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        hidden.visit(prefix + ".hidden", f);
        output.visit(prefix + ".output", f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        hidden.visit(prefix + ".hidden", f);
        output.visit(prefix + ".output", f);
    }
};

struct LstmState {
    Var h;
    Var c;
};

/// Standard LSTM cell; gate order in the packed weight is input, forget, cell, output.
struct LstmCell {
    Linear gates;
    int hidden_dim = 0;

    LstmCell() = default;
    LstmCell(int in, int hidden, Initializer& init) : gates(in + hidden, 4 * hidden, init), hidden_dim(hidden) {}

    int in_dim() const { return gates.in_dim() - hidden_dim; }

    LstmState zero_state(Tape& t) const {
        return {t.constant(Matrix::Zero(1, hidden_dim)), t.constant(Matrix::Zero(1, hidden_dim))};
    }

    LstmState step(Tape& t, const Var& x, const LstmState& s) const {
        const Var z = gates(t, ad::concat_cols({x, s.h}));
        const int h = hidden_dim;
        const Var i = ad::sigmoid(ad::slice_cols(z, 0, h));
        const Var f = ad::sigmoid(ad::slice_cols(z, h, h));
        const Var g = ad::tanh(ad::slice_cols(z, 2 * h, h));
        const Var o = ad::sigmoid(ad::slice_cols(z, 3 * h, h));
        const Var c = ad::add(ad::hadamard(f, s.c), ad::hadamard(i, g));
        return {ad::hadamard(o, ad::tanh(c)), c};
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        gates.visit(prefix, f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        gates.visit(prefix, f);
    }
};

}  // namespace earn::nn
