#pragma once

// Batched forward-Euler integration, written once for both the tape (training)
// and eager (inference) executors.

#include <cstddef>
#include <span>

namespace inode {

// h + dtau * f, with dtau a B x 1 column of per-row steps.
template <class Ops>
typename Ops::Value euler_step(Ops& ops, const typename Ops::Value& h, const typename Ops::Value& f,
                               const typename Ops::Value& dtau) {
    return ops.add(h, ops.scale_rows(f, dtau));
}

// Integrates h' = dynamics(h, i) over the given steps. After step i the
// observer receives (i, h(t_{i+1})). Returns the final state.
template <class Ops, class Dynamics, class Observer>
typename Ops::Value integrate(Ops& ops, typename Ops::Value h, std::span<const typename Ops::Value> dtaus,
                              Dynamics&& dynamics, Observer&& observer) {
    for (std::size_t i = 0; i < dtaus.size(); ++i) {
        auto f = dynamics(h, i);
        h = euler_step(ops, h, f, dtaus[i]);
        observer(i, h);
    }
    return h;
}

}  // namespace inode
