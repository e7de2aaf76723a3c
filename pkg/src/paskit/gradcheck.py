"""Central finite-difference verification of analytic gradients.

Runs only in 64-bit mode. For each unfrozen parameter the checker perturbs
a set of coordinates (all of them, or a seeded sample for larger tensors),
re-evaluates the graph forward both ways and compares the two-sided
difference quotient against the backward pass. The graph's dropout stream
is pinned to the same state before every forward pass so masks are held
constant across evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import precision
from .autodiff import Graph
from .errors import PaskitError
from .rng import RngStream


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    worst_coord: tuple
    analytic: float
    numeric: float
    checked: int


@dataclass
class GradCheckReport:
    tolerance: float
    params: list[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        lines = [
            f"{'PASS' if self.passed else 'FAIL'} max_rel_error={self.max_rel_error:.3e} "
            f"tolerance={self.tolerance:.1e}"
        ]
        for p in sorted(self.params, key=lambda p: -p.max_rel_error):
            lines.append(
                f"  {p.name}: max_rel={p.max_rel_error:.3e} at {p.worst_coord} "
                f"(analytic={p.analytic:.6e} numeric={p.numeric:.6e}, {p.checked} coords)"
            )
        return "\n".join(lines)


def _rel_error(a: float, b: float) -> float:
    denom = max(abs(a), abs(b))
    if denom < 1e-10:
        return 0.0
    return abs(a - b) / denom


def check_gradients(
    graph: Graph,
    output: str,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    samples_per_param: int | None = None,
    sample_seed: int = 0,
) -> GradCheckReport:
    """Compare backward-pass gradients with central finite differences.

    samples_per_param limits how many coordinates of each tensor are
    perturbed (the coordinate with the largest analytic gradient is always
    included); None checks every coordinate.
    """
    if precision.get_precision() != "f64":
        raise PaskitError("check_gradients requires 64-bit mode")

    rng_state = graph.rng.get_state() if graph.rng is not None else None

    def forward() -> float:
        if rng_state is not None:
            graph.rng.set_state(rng_state)
        graph.invalidate()
        graph.evaluate()
        return graph.output(output).item()

    forward()
    analytic = graph.gradients(output)

    coord_rng = RngStream(sample_seed)
    report = GradCheckReport(tolerance=tolerance)
    for (_, name), pnode in sorted(graph._param_nodes.items(), key=lambda kv: kv[0][1]):
        store, pname = pnode.meta
        if store.frozen:
            continue
        values = store.params[pname]
        grad = analytic[pname]
        size = values.size
        if samples_per_param is None or size <= samples_per_param:
            flat_coords = list(range(size))
        else:
            picks = {int(np.abs(grad).argmax())}
            while len(picks) < samples_per_param:
                picks.add(coord_rng.integers(0, size))
            flat_coords = sorted(picks)

        worst = ParamCheck(pname, 0.0, (), 0.0, 0.0, len(flat_coords))
        flat = values.reshape(-1)
        for c in flat_coords:
            original = flat[c]
            flat[c] = original + step
            f_plus = forward()
            flat[c] = original - step
            f_minus = forward()
            flat[c] = original
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(grad.reshape(-1)[c])
            err = _rel_error(a, numeric)
            if err >= worst.max_rel_error:
                worst.max_rel_error = err
                worst.worst_coord = np.unravel_index(c, values.shape)
                worst.analytic = a
                worst.numeric = numeric
        report.params.append(worst)

    forward()  # leave the graph evaluated at the unperturbed point
    return report
