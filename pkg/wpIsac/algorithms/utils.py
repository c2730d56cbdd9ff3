import numpy as np


def cartesian(axes) -> np.ndarray:
    """Every combination of the 1-D ``axes``, one per row, last axis fastest."""
    grids = np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def relative_change(new, old) -> float:
    return abs(new - old) / max(1.0, abs(old))


def monotonicity_violations(values, rel_tol=1e-6) -> list:
    """Indices ``i`` where ``values[i]`` falls below ``values[i-1]`` by more than ``rel_tol`` relative."""
    values = list(values)
    violations = []
    for i in range(1, len(values)):
        if values[i] < values[i - 1] - rel_tol * abs(values[i - 1]):
            violations.append(i)
    return violations


def zoom_axis(axis, best_index, width=2):
    """Bounds of the neighbourhood ``width`` grid steps around ``axis[best_index]``."""
    lo = axis[max(best_index - width, 0)]
    hi = axis[min(best_index + width, len(axis) - 1)]
    return lo, hi
