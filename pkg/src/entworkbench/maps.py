"""Operator <-> map isomorphism and map-based detection.

A map ``E`` from operators on ``H_B`` to operators on ``H_C`` is stored as its
operator ``O`` on ``H_B (x) H_C`` with ``E(rho) = Tr_B[O (rho^T (x) 1)]``.
The inverse is ``O = sum_ij |i><j| (x) E(|i><j|)``, i.e. ``1 (x) E`` applied
to the *unnormalized* maximally entangled projector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import PSD_TOL, DimensionError, check_dims, min_eigenvalue, partial_transpose, psd_check
from .productopt import OptConfig
from .witnesses import VALIDITY_TOL, WitnessOperator, nondecomposability_probe, validate_witness


@dataclass
class LinearMapRep:
    source_dim: int
    target_dim: int
    operator: np.ndarray

    def __post_init__(self):
        check_dims(self.operator, [self.source_dim, self.target_dim])

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        db, dc = self.source_dim, self.target_dim
        if rho.shape != (db, db):
            raise DimensionError(f"map acts on {db}x{db} operators, got {rho.shape}")
        o = self.operator.reshape(db, dc, db, dc)
        # Tr_B[O (rho^T x 1)]: sum_{b,b'} O[b,c,b',c'] rho^T[b',b] = O[b,c,b',c'] rho[b,b']
        return np.einsum("icjd,ij->cd", o, rho)

    def adjoint(self) -> "LinearMapRep":
        """Hilbert-Schmidt adjoint, a map from ``H_C`` back to ``H_B``."""
        db, dc = self.source_dim, self.target_dim
        o = self.operator.reshape(db, dc, db, dc).transpose(1, 0, 3, 2).reshape(db * dc, db * dc)
        return LinearMapRep(dc, db, o.conj())


def map_from_operator(op: np.ndarray, dims: Sequence[int]) -> LinearMapRep:
    dims = check_dims(op, dims)
    if len(dims) != 2:
        raise DimensionError("a map operator needs exactly two factors")
    return LinearMapRep(dims[0], dims[1], np.asarray(op, dtype=complex))


def operator_from_map(fn: Callable[[np.ndarray], np.ndarray], source_dim: int,
                      target_dim: int | None = None) -> np.ndarray:
    """``sum_ij |i><j| (x) E(|i><j|)``."""
    db = source_dim
    blocks = {}
    for i in range(db):
        for j in range(db):
            unit = np.zeros((db, db), dtype=complex)
            unit[i, j] = 1
            blocks[i, j] = np.asarray(fn(unit), dtype=complex)
    dc = target_dim or blocks[0, 0].shape[0]
    out = np.zeros((db, dc, db, dc), dtype=complex)
    for (i, j), b in blocks.items():
        if b.shape != (dc, dc):
            raise DimensionError(f"map output has shape {b.shape}, expected {(dc, dc)}")
        out[i, :, j, :] = b
    return out.reshape(db * dc, db * dc)


@dataclass
class MapDetection:
    output: np.ndarray
    detected: bool
    psi_value: float
    min_eig: float


def adjoint_detect(op: np.ndarray, dims: Sequence[int], rho: np.ndarray, rho_dims: Sequence[int],
                   psd_tol: float = PSD_TOL) -> MapDetection:
    """Apply ``1 (x) E^dag`` to ``rho`` on ``B' (x) C``, giving an operator on ``B' (x) B``.

    ``output = Tr_C[(1 (x) O^{T_B})(rho (x) 1_B)]``. Its expectation in the
    normalized maximally entangled state of ``B' B`` (needs ``d_B' = d_B``)
    equals ``Tr(O rho) / d_B``, so every witness detection is a map detection.
    """
    db, dc = check_dims(op, dims)
    dp, dc2 = check_dims(rho, rho_dims)
    if dc2 != dc:
        raise DimensionError(f"rho factor {dc2} does not match map target {dc}")
    ot = partial_transpose(op, (db, dc), 0).reshape(db, dc, db, dc)
    r = rho.reshape(dp, dc, dp, dc)
    out = np.einsum("bcBC,pCPc->pbPB", ot, r).reshape(dp * db, dp * db)
    ok, lo = psd_check(out, psd_tol)
    psi = float("nan")
    if dp == db:
        psi_vec = np.eye(db).reshape(-1) / np.sqrt(db)
        psi = float(np.real(np.vdot(psi_vec, out @ psi_vec)))
        if np.real(np.trace(op @ rho)) < -psd_tol and not psi < 0:
            raise ArithmeticError("witness detection not reproduced by the map")
    return MapDetection(out, not ok, psi, lo)


MAP_CLASSES = ("CPM", "PM", "decomposable-PM", "nd-PM-evidence", "unknown")


@dataclass
class MapClass:
    label: str
    heuristic: bool
    details: dict = field(default_factory=dict)


def classify_operator_map(op, dims: Sequence[int] | None = None, cfg: OptConfig | None = None,
                          psd_tol: float = PSD_TOL, validity_tol: float = VALIDITY_TOL,
                          probe_trials: int = 32) -> MapClass:
    """CPM if the operator is PSD; otherwise positivity rests on the product optimizer.

    A positive map is labelled decomposable when its provenance records a
    ``P + Q^T`` construction, and ``nd-PM-evidence`` when the probe finds a
    PPT state it detects. Anything not positive on products is ``unknown``.
    """
    w = op if isinstance(op, WitnessOperator) else None
    mat = w.matrix if w is not None else np.asarray(op)
    dims = tuple(dims or w.dims)
    lo = min_eigenvalue(mat)
    if lo >= -psd_tol * max(1.0, np.max(np.abs(mat))):
        return MapClass("CPM", False, {"min_eig": lo})
    val = validate_witness(mat, dims, cfg, validity_tol)
    info = {"min_eig": lo, "product_min": val.product_min}
    if not val.is_witness:
        return MapClass("unknown", True, {**info, "reason": "negative on a product vector"})
    if w is not None and w.kind == "decomposable":
        return MapClass("decomposable-PM", True, {**info, "construction": w.provenance.get("construction")})
    probe = nondecomposability_probe(w if w is not None else mat, dims, cfg, trials=probe_trials)
    if probe.success:
        return MapClass("nd-PM-evidence", False, {**info, "ppt_value": probe.value})
    return MapClass("PM", True, info)
