#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "led/array.hpp"
#include "led/tape.hpp"

namespace led {

// Named trainable arrays with gradient slots and Adam state. Iteration is
// name-ordered everywhere, so updates and reports are deterministic.
class ParameterStore {
public:
    struct Entry {
        Array value;
        Array grad;
        Array m;  // Adam first moment
        Array v;  // Adam second moment
        long step = 0;
        bool frozen = false;
    };

    Array& create(const std::string& name, std::vector<int> shape);

    // Weight init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], on a
    // stream keyed by (seed, name) so creation order does not matter.
    Array& create_uniform(const std::string& name, std::vector<int> shape, int fan_in,
                          std::uint64_t seed);

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    const Array& value(const std::string& name) const { return entry(name).value; }
    Array& value(const std::string& name) { return entry(name).value; }
    const Array& grad(const std::string& name) const { return entry(name).grad; }

    void set_frozen(const std::string& name, bool frozen) { entry(name).frozen = frozen; }
    void freeze_prefix(const std::string& prefix, bool frozen);
    bool frozen(const std::string& name) const { return entry(name).frozen; }
    bool all_frozen_with_prefix(const std::string& prefix) const;

    // Registers the parameter value on a tape and binds it for harvesting.
    VarId use(Tape& tape, const std::string& name) const;

    // Adds tape gradients of bound parameters into the store. Frozen
    // parameters keep zero gradient.
    void accumulate_grads(const Tape& tape);

    void zero_grads();

    // Bias-corrected Adam on non-frozen parameters; zeroes all gradients
    // afterwards. A non-finite gradient aborts, naming the parameter.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    double grad_norm() const;  // Frobenius norm over all gradients

    std::vector<std::string> names() const;
    std::size_t size() const { return entries_.size(); }
    std::size_t value_count() const;

    // Text checkpoint: format-version header, then name -> shape -> values
    // with 17 significant digits (value-exact f64 round trip). `headers`
    // become leading comment lines.
    void save(const std::string& path, const std::vector<std::string>& headers) const;
    static ParameterStore load(const std::string& path);

    const std::map<std::string, Entry>& entries() const { return entries_; }

private:
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::map<std::string, Entry> entries_;
};

}  // namespace led
