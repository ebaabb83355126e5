#include "smmkit/optim.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace smm {

namespace {

constexpr char kMagic[8] = {'S', 'M', 'M', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

void check_aligned(const ParamSet& params, const ParamSet& grads) {
    if (params.size() != grads.size()) {
        throw ArgumentError("params and grads differ in length: " +
                            std::to_string(params.size()) + " vs " +
                            std::to_string(grads.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != grads[i].name) {
            throw ArgumentError("param/grad name mismatch at index " + std::to_string(i) + ": " +
                                params[i].name + " vs " + grads[i].name);
        }
        if (!params[i].value.same_shape(grads[i].value)) {
            throw ArgumentError("param/grad shape mismatch for " + params[i].name + ": " +
                                shape_str(params[i].value.shape()) + " vs " +
                                shape_str(grads[i].value.shape()));
        }
    }
}

Tensor& accumulator_for(OptimizerState& state, const NamedTensor& param) {
    auto it = state.accum.find(param.name);
    if (it == state.accum.end()) {
        it = state.accum.emplace(param.name, Tensor(param.value.shape())).first;
    } else if (!it->second.same_shape(param.value)) {
        throw ArgumentError("optimizer accumulator shape changed for " + param.name);
    }
    return it->second;
}

} // namespace

OptimizerState make_sgd_momentum(double learning_rate, double momentum) {
    if (learning_rate <= 0.0) throw ArgumentError("learning rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("momentum must lie in [0, 1)");
    OptimizerState s;
    s.kind = OptimKind::sgd_momentum;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    return s;
}

OptimizerState make_rmsprop(double learning_rate, double decay, double epsilon) {
    if (learning_rate <= 0.0) throw ArgumentError("learning rate must be > 0");
    if (decay <= 0.0 || decay >= 1.0) throw ArgumentError("decay must lie in (0, 1)");
    if (epsilon <= 0.0) throw ArgumentError("epsilon must be > 0");
    OptimizerState s;
    s.kind = OptimKind::rmsprop;
    s.learning_rate = learning_rate;
    s.decay = decay;
    s.epsilon = epsilon;
    return s;
}

ParamSet sgd_momentum_step(OptimizerState& state, const ParamSet& params, const ParamSet& grads) {
    check_aligned(params, grads);
    ParamSet out = params;
    for (std::size_t i = 0; i < out.size(); ++i) {
        Tensor& velocity = accumulator_for(state, params[i]);
        Tensor& p = out[i].value;
        const Tensor& g = grads[i].value;
        for (std::size_t j = 0; j < p.size(); ++j) {
            velocity[j] = state.momentum * velocity[j] - state.learning_rate * g[j];
            p[j] += velocity[j];
        }
    }
    return out;
}

ParamSet rmsprop_step(OptimizerState& state, const ParamSet& params, const ParamSet& grads) {
    check_aligned(params, grads);
    ParamSet out = params;
    for (std::size_t i = 0; i < out.size(); ++i) {
        Tensor& sq = accumulator_for(state, params[i]);
        Tensor& p = out[i].value;
        const Tensor& g = grads[i].value;
        for (std::size_t j = 0; j < p.size(); ++j) {
            sq[j] = state.decay * sq[j] + (1.0 - state.decay) * g[j] * g[j];
            p[j] -= state.learning_rate * g[j] / (std::sqrt(sq[j]) + state.epsilon);
        }
    }
    return out;
}

ParamSet optimizer_step(OptimizerState& state, const ParamSet& params, const ParamSet& grads) {
    return state.kind == OptimKind::sgd_momentum ? sgd_momentum_step(state, params, grads)
                                                 : rmsprop_step(state, params, grads);
}

ParamSet snapshot(const std::vector<ParamBinding>& bindings) {
    ParamSet out;
    out.reserve(bindings.size());
    for (const ParamBinding& b : bindings) out.push_back({b.name, *b.value});
    return out;
}

void apply_step(OptimizerState& state, const std::vector<ParamBinding>& bindings,
                double grad_scale) {
    ParamSet params, grads;
    params.reserve(bindings.size());
    grads.reserve(bindings.size());
    for (const ParamBinding& b : bindings) {
        params.push_back({b.name, *b.value});
        Tensor g = *b.grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= grad_scale;
        grads.push_back({b.name, std::move(g)});
    }
    ParamSet updated = optimizer_step(state, params, grads);
    for (std::size_t i = 0; i < bindings.size(); ++i) {
        *bindings[i].value = std::move(updated[i].value);
    }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(os, bits);
}

bool get_bytes(std::istream& is, void* out, std::size_t n) {
    is.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(is.gcount()) == n;
}

bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!get_bytes(is, b, 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

bool get_u64(std::istream& is, std::uint64_t& v) {
    unsigned char b[8];
    if (!get_bytes(is, b, 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

bool get_f64(std::istream& is, double& v) {
    std::uint64_t bits;
    if (!get_u64(is, bits)) return false;
    std::memcpy(&v, &bits, sizeof(v));
    return true;
}

} // namespace

void save_params(const ParamSet& params, const std::string& path) {
    {
        std::set<std::string> names;
        for (const NamedTensor& p : params) {
            if (!names.insert(p.name).second) {
                throw ArgumentError("duplicate parameter name " + p.name);
            }
        }
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + path + " for writing");
    }
    os.write(kMagic, sizeof(kMagic));
    put_u32(os, kVersion);
    for (const NamedTensor& p : params) {
        put_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u64(os, p.value.rank());
        for (std::size_t d : p.value.shape()) put_u64(os, d);
        for (std::size_t i = 0; i < p.value.size(); ++i) put_f64(os, p.value[i]);
    }
    if (!os) {
        throw IoError("write failed for " + path);
    }
}

ParamSet load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path + " for reading");
    }
    char magic[8];
    if (!get_bytes(is, magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw FormatError(path + " is not a parameter file (bad magic)");
    }
    std::uint32_t version = 0;
    if (!get_u32(is, version)) {
        throw FormatError(path + " is truncated before the version field");
    }
    if (version != kVersion) {
        throw VersionError(path + " has unsupported version " + std::to_string(version));
    }
    ParamSet params;
    while (true) {
        std::uint32_t name_len = 0;
        if (!get_u32(is, name_len)) {
            if (is.eof() && is.gcount() == 0) break; // clean end of file
            throw FormatError(path + " has a truncated record header");
        }
        std::string name(name_len, '\0');
        if (name_len > 0 && !get_bytes(is, name.data(), name_len)) {
            throw FormatError(path + " has a truncated tensor name");
        }
        std::uint64_t rank = 0;
        if (!get_u64(is, rank) || rank == 0 || rank > 8) {
            throw FormatError(path + " has an invalid rank for tensor " + name);
        }
        std::vector<std::size_t> shape(rank);
        std::size_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            std::uint64_t d = 0;
            if (!get_u64(is, d) || d == 0) {
                throw FormatError(path + " has an invalid dimension for tensor " + name);
            }
            shape[i] = static_cast<std::size_t>(d);
            count *= shape[i];
        }
        std::vector<double> values(count);
        for (std::size_t i = 0; i < count; ++i) {
            if (!get_f64(is, values[i])) {
                throw FormatError(path + " has truncated values for tensor " + name);
            }
        }
        params.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
    }
    return params;
}

} // namespace smm
