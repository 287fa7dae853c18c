"""Synthetic true models used by the simulation scripts and calibration tests.

Both presets mimic the shape of a four-disease comorbidity study: binary
responses b, c, d, r and either one binary covariate (h) or two (a, h).
The zero patterns follow the kind of structure stepwise selection tends to
find on such data — covariate effects present for every single response,
several associations with no covariate effect, and no covariate
interactions in the two-covariate case.  Values were chosen so that every
cell probability stays comfortably positive, expected counts at the
suggested sample sizes are not sparse, and every free coefficient is
detectable (|z| above 6 at the selection sample size).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import ModelSpec
from .lattice import SubsetLattice
from .params import ParamMatrix


@dataclass(frozen=True)
class ModelPreset:
    """A true coefficient matrix, its zero-set model, and suggested cell sizes."""

    beta_gamma: ParamMatrix
    spec: ModelSpec
    column_totals: tuple[int, ...]

    @property
    def responses(self) -> SubsetLattice:
        return self.beta_gamma.rows

    @property
    def covariates(self) -> SubsetLattice:
        return self.beta_gamma.cols


def _build(labels_u: tuple[str, ...], values: dict[tuple[int, int], float],
           zeros: frozenset[tuple[int, int]], totals: tuple[int, ...]) -> ModelPreset:
    V = SubsetLattice(("b", "c", "d", "r"))
    U = SubsetLattice(labels_u)
    bg = np.zeros((V.size, U.size))
    for (d, e), v in values.items():
        bg[d, e] = v
    spec = ModelSpec("lml", zeros).validate_for(V, U)
    assert all(bg[d, e] == 0.0 for d, e in zeros)
    return ModelPreset(ParamMatrix("beta_gamma", V, U, bg), spec, totals)


def single_covariate_preset() -> ModelPreset:
    """p=4, q=1: seven associations carry no covariate effect (12 zeros)."""
    b, c, d, r = 1, 2, 4, 8
    zeros = set()
    no_effect = {b | c: [1], b | d: [0, 1], b | r: [0, 1], c | r: [0, 1],
                 d | r: [1], b | c | d: [0, 1], c | d | r: [0, 1]}
    for dd, es in no_effect.items():
        zeros.update((dd, e) for e in es)
    values = {
        (b, 0): -2.6, (b, 1): 1.1,
        (c, 0): -2.4, (c, 1): 0.7,
        (d, 0): -1.9, (d, 1): 0.5,
        (r, 0): -3.0, (r, 1): 1.4,
        (b | c, 0): 0.45,
        (c | d, 0): 0.9, (c | d, 1): -0.65,
        (d | r, 0): 0.5,
        (b | c | r, 0): 0.9, (b | c | r, 1): -0.9,
        (b | d | r, 0): 0.75, (b | d | r, 1): -0.7,
        (b | c | d | r, 0): -1.0, (b | c | d | r, 1): 0.85,
    }
    return _build(("h",), values, frozenset(zeros), (12000, 8000))


def two_covariate_preset() -> ModelPreset:
    """p=4, q=2: no covariate interactions plus row/entry zeros (33 zeros)."""
    b, c, d, r = 1, 2, 4, 8
    A, H, AH = 1, 2, 3
    zeros = {(dd, AH) for dd in range(1, 16)}
    more = {b | c: [A], b | d: [0, A, H], c | r: [A], c | d | r: [A],
            b | c | d: [0, A, H], b | c | r: [0, A, H],
            b | d | r: [0, A, H], b | c | d | r: [0, A, H]}
    for dd, es in more.items():
        zeros.update((dd, e) for e in es)
    values = {
        (b, 0): -2.6, (b, A): 0.25, (b, H): 1.1,
        (c, 0): -2.7, (c, A): 0.55, (c, H): 0.7,
        (d, 0): -2.2, (d, A): 0.5, (d, H): 0.5,
        (r, 0): -3.1, (r, A): 0.4, (r, H): 1.4,
        (b | c, 0): 0.5, (b | c, H): -0.45,
        (b | r, 0): 0.9, (b | r, A): -0.35, (b | r, H): -0.8,
        (c | d, 0): 0.9, (c | d, A): -0.45, (c | d, H): -0.55,
        (c | r, 0): 0.8, (c | r, H): -0.7,
        (d | r, 0): 0.8, (d | r, A): -0.3, (d | r, H): -0.5,
        (c | d | r, 0): -0.65, (c | d | r, H): 0.6,
    }
    return _build(("a", "h"), values, frozenset(zeros), (20000, 15000, 9000, 6000))
