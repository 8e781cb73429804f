#pragma once

// Finite-difference gradient oracle used by the test suites. It evaluates the
// function on the 64-bit instantiation with central differences and compares
// against the tape's analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "ddseg/rng.hpp"
#include "ddseg/tensor.hpp"

namespace ddseg::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;  // entries with |grad| above the floor
    std::size_t total = 0;
};

// One coordinate to probe: (input index, flat element index).
struct Probe {
    std::size_t input;
    std::size_t index;
};

// f maps the inputs to a scalar Tensor64. If `probes` is empty every element of
// every input is checked.
inline GradCheckResult grad_check(std::vector<Tensor64> inputs,
                                  const std::function<Tensor64(const std::vector<Tensor64>&)>& f,
                                  std::vector<Probe> probes = {}, double h = 1e-3, double floor = 1e-6) {
    for (auto& in : inputs) {
        in.clear_grad();
        in.set_requires_grad(true);
    }
    {
        Tape64 tape;
        TapeScope64 scope(tape);
        const Tensor64 loss = f(inputs);
        tape.backward(loss);
    }
    if (probes.empty()) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            for (std::size_t j = 0; j < static_cast<std::size_t>(inputs[i].numel()); ++j) probes.push_back({i, j});
        }
    }
    GradCheckResult r;
    BasicNoGradScope<double> no_grad;
    for (const Probe& p : probes) {
        auto data = inputs[p.input].data();
        const double saved = data[p.index];
        data[p.index] = saved + h;
        const double up = f(inputs).item();
        data[p.index] = saved - h;
        const double down = f(inputs).item();
        data[p.index] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = inputs[p.input].has_grad() ? inputs[p.input].grad()[p.index] : 0.0;
        ++r.total;
        const double mag = std::max(std::abs(an), std::abs(fd));
        if (mag <= floor) continue;
        ++r.checked;
        r.max_rel_error = std::max(r.max_rel_error, std::abs(an - fd) / mag);
    }
    return r;
}

inline Tensor64 random_tensor64(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor64 t(std::move(shape));
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

inline Tensor random_tensor(Shape shape, Rng& rng, float scale = 1.0f) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = scale * static_cast<float>(rng.normal());
    return t;
}

// Random probe subset of size n across the given inputs.
inline std::vector<Probe> random_probes(const std::vector<Tensor64>& inputs, std::size_t n, Rng& rng) {
    std::size_t total = 0;
    for (const auto& t : inputs) total += static_cast<std::size_t>(t.numel());
    std::vector<Probe> out;
    for (std::size_t k = 0; k < n; ++k) {
        auto flat = static_cast<std::size_t>(rng.next_u64() % total);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto sz = static_cast<std::size_t>(inputs[i].numel());
            if (flat < sz) {
                out.push_back({i, flat});
                break;
            }
            flat -= sz;
        }
    }
    return out;
}

}  // namespace ddseg::testing
