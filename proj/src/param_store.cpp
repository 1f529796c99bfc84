#include "led/param_store.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "led/errors.hpp"
#include "led/rng.hpp"

namespace led {

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

Array& ParameterStore::create(const std::string& name, std::vector<int> shape) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
        throw ContractError("parameter names must be non-empty and whitespace-free: '" + name + "'");
    }
    if (entries_.count(name)) throw ContractError("duplicate parameter: " + name);
    Entry e;
    e.value = Array(shape);
    e.grad = Array(shape);
    e.m = Array(shape);
    e.v = Array(std::move(shape));
    return entries_.emplace(name, std::move(e)).first->second.value;
}

Array& ParameterStore::create_uniform(const std::string& name, std::vector<int> shape, int fan_in,
                                      std::uint64_t seed) {
    Array& v = create(name, std::move(shape));
    Rng rng(mix64(seed) ^ fnv1a64(name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (2.0 * rng.next_uniform() - 1.0) * bound;
    return v;
}

void ParameterStore::freeze_prefix(const std::string& prefix, bool frozen) {
    for (auto& [name, e] : entries_) {
        if (name.rfind(prefix, 0) == 0) e.frozen = frozen;
    }
}

bool ParameterStore::all_frozen_with_prefix(const std::string& prefix) const {
    bool any = false;
    for (const auto& [name, e] : entries_) {
        if (name.rfind(prefix, 0) == 0) {
            any = true;
            if (!e.frozen) return false;
        }
    }
    return any;
}

VarId ParameterStore::use(Tape& tape, const std::string& name) const {
    VarId id = tape.input(entry(name).value);
    tape.bind_param(id, name);
    return id;
}

void ParameterStore::accumulate_grads(const Tape& tape) {
    for (const auto& [id, name] : tape.param_bindings()) {
        Entry& e = entry(name);
        if (e.frozen) continue;
        const Array& g = tape.grad(id);
        if (g.size() != e.grad.size()) {
            throw ContractError("gradient shape mismatch for parameter " + name);
        }
        for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
    }
}

void ParameterStore::zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

void ParameterStore::adam_step(double lr, double beta1, double beta2, double eps) {
    for (auto& [name, e] : entries_) {
        if (e.frozen) continue;
        for (std::size_t i = 0; i < e.grad.size(); ++i) {
            if (!std::isfinite(e.grad[i])) {
                throw NumericError("non-finite gradient in parameter " + name);
            }
        }
        e.step += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(e.step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(e.step));
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g;
            e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    zero_grads();
}

double ParameterStore::grad_norm() const {
    double acc = 0.0;
    for (const auto& [name, e] : entries_) {
        for (std::size_t i = 0; i < e.grad.size(); ++i) acc += e.grad[i] * e.grad[i];
    }
    return std::sqrt(acc);
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
}

std::size_t ParameterStore::value_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
}

void ParameterStore::save(const std::string& path, const std::vector<std::string>& headers) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    for (const auto& h : headers) out << "# " << h << "\n";
    out << "ledckpt 1\n";
    out << "nparams " << entries_.size() << "\n";
    char buf[40];
    for (const auto& [name, e] : entries_) {
        out << "param " << name << " frozen=" << (e.frozen ? 1 : 0) << " shape=";
        const auto& sh = e.value.shape();
        for (std::size_t i = 0; i < sh.size(); ++i) out << (i ? "x" : "") << sh[i];
        out << "\n";
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", e.value[i]);
            out << buf << ((i + 1) % 8 == 0 || i + 1 == e.value.size() ? '\n' : ' ');
        }
    }
    out << "end\n";
    if (!out) throw DataError("write failure on checkpoint: " + path);
}

ParameterStore ParameterStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string line;
    // Skip leading comment lines.
    std::streampos body;
    do {
        body = in.tellg();
        if (!std::getline(in, line)) throw DataError("checkpoint truncated: " + path);
    } while (!line.empty() && line[0] == '#');
    in.seekg(body);

    std::string tag;
    int version = 0;
    in >> tag >> version;
    if (tag != "ledckpt" || version != 1) {
        throw DataError("unsupported checkpoint format in " + path);
    }
    std::size_t nparams = 0;
    in >> tag >> nparams;
    if (tag != "nparams") throw DataError("malformed checkpoint header in " + path);

    ParameterStore store;
    for (std::size_t p = 0; p < nparams; ++p) {
        std::string name, frozen_kv, shape_kv;
        in >> tag >> name >> frozen_kv >> shape_kv;
        if (!in || tag != "param" || frozen_kv.rfind("frozen=", 0) != 0 ||
            shape_kv.rfind("shape=", 0) != 0) {
            throw DataError("malformed param record " + std::to_string(p) + " in " + path);
        }
        std::vector<int> shape;
        {
            std::string dims = shape_kv.substr(6);
            std::size_t pos = 0;
            while (pos < dims.size()) {
                std::size_t x = dims.find('x', pos);
                if (x == std::string::npos) x = dims.size();
                shape.push_back(std::stoi(dims.substr(pos, x - pos)));
                pos = x + 1;
            }
        }
        Array& v = store.create(name, shape);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(in >> v[i])) {
                throw DataError("truncated values for parameter " + name + " in " + path);
            }
        }
        store.set_frozen(name, frozen_kv == "frozen=1");
    }
    in >> tag;
    if (tag != "end") throw DataError("missing end marker in " + path);
    return store;
}

}  // namespace led
