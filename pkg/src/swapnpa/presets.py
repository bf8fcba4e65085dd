"""Named coefficient matrices, hard-coded to five significant figures.

``paper-33a`` repeats the first diagonal entry 0.31993 on the whole diagonal
and ``paper-33b`` repeats 0.31933; ``paper-33-printed`` keeps the mixed
diagonal exactly as printed. ``paper-33`` is an alias of ``paper-33a``, the
variant whose evaluator value matches the reported complex bound.
"""
from __future__ import annotations

from .scenario import CoefficientMatrix, Scenario


def _e33(d1: float, d2: float, d3: float) -> list[list[float]]:
    return [[d1, 0.5, -0.5], [0.5, d2, 0.5], [-0.5, 0.5, d3]]


_MATRICES = {
    "paper-33a": _e33(0.31993, 0.31993, 0.31993),
    "paper-33b": _e33(0.31933, 0.31933, 0.31933),
    "paper-33-printed": _e33(0.31993, 0.31933, 0.31933),
    "paper-34": [[-1, 1, 1, 1], [1, -1, 1, 1], [1, 1, -1, 1]],
    "paper-34-raw": [
        [-0.19883, 0.1996, 0.20026, 0.19944],
        [0.20094, -0.19971, 0.20083, 0.1987],
        [0.2006, 0.19961, -0.2, 0.19971],
    ],
}
ALIASES = {"paper-33": "paper-33a"}

# reported values keyed by preset: complex bound, real bound, ratio
REPORTED = {
    "paper-33": {"F_q": 2.3283, "F_r": 2.1134, "R": 0.9077},
    "paper-34": {"F_q": 6.9282, "F_r": 6.4722, "R": 0.8847},
}
# earlier rows of the comparison table, quoted and never recomputed
CITED_RATIOS = (("(3,3)", 0.9381, False), ("(3,4)", 0.9341, False), ("(3,6)", 0.9028, False))


def names() -> list[str]:
    return sorted(set(_MATRICES) | set(ALIASES))


def resolve(name: str) -> str:
    return ALIASES.get(name, name)


def preset(name: str) -> CoefficientMatrix:
    """Coefficient matrix for a preset name; ``KeyError`` if unknown."""
    key = resolve(name)
    if key not in _MATRICES:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(names())}")
    return CoefficientMatrix(_MATRICES[key])


def preset_scenario(name: str, degree: int = 2, causal: bool = True) -> Scenario:
    E = preset(name)
    return Scenario(E.shape[0], E.shape[1], degree, causal)
