"""Epsilon-connected components, decomposability and extremality.

Two occupied cells are joined when their centers are strictly closer than
eps; components are the transitive closure (chains of gaps < eps).  Ties
at exactly eps are NOT joined, matching the strict inequality of the
chain definition and the >= eps separation of the distance
characterization.  Labels are deterministic: each component is
represented by the smallest linear cell index it contains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, NumericError, PreconditionError
from .gagliardo import DEFAULT_QUADRATURE, QuadratureConfig, _horizon, cross_term, \
    gagliardo_perimeter
from .gridset import GridField, GridSet, Lattice, essential_distance
from .kernels import KernelSpec

__all__ = [
    "Decomposition", "epsilon_components", "is_epsilon_decomposable",
    "additivity_residual", "is_epsilon_simple", "extremality_witness",
    "ExtremalityVerdict", "component_set",
]


def _ball_offsets(d: int, eps: float, h: float) -> np.ndarray:
    """Integer offsets z != 0 with |z| h < eps (strict), half-space reduced."""
    kmax = int(math.ceil(eps / h))
    axes = [np.arange(-kmax, kmax + 1)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    ks = np.stack([g.ravel() for g in grids], axis=-1)
    r2 = np.sum(ks.astype(float) ** 2, axis=1)
    keep = (r2 > 0) & (r2 * h * h < eps * eps * (1 - 1e-14))
    ks = ks[keep]
    # keep one representative of each {z, -z} pair (lexicographic positive)
    sel = np.zeros(len(ks), dtype=bool)
    for i, k in enumerate(ks):
        for c in k:
            if c > 0:
                sel[i] = True
                break
            if c < 0:
                break
    return ks[sel]


@dataclass
class ComponentInfo:
    label: int
    cells: int
    volume: float
    bbox_lo: tuple
    bbox_hi: tuple
    touches_window: bool


@dataclass
class Decomposition:
    lattice: Lattice
    labels: np.ndarray            # -1 outside the set
    eps: float
    components: list
    complement: bool = False
    _pairwise: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_components(self) -> int:
        return len(self.components)

    def component_mask(self, i: int) -> np.ndarray:
        return self.labels == i

    def pairwise_distances(self) -> np.ndarray:
        """Minimum center distance between each pair of components."""
        if self._pairwise is None:
            n = self.n_components
            out = np.zeros((n, n))
            grids = np.meshgrid(*[self.lattice.axis_centers(i) for i in range(self.lattice.d)],
                                indexing="ij")
            pts = [np.stack([g[self.labels == i] for g in grids], axis=-1) for i in range(n)]
            for i in range(n):
                for j in range(i + 1, n):
                    a, b = (pts[i], pts[j]) if len(pts[i]) <= len(pts[j]) else (pts[j], pts[i])
                    dmin = cKDTree(b).query(a, k=1)[0].min()
                    out[i, j] = out[j, i] = dmin
            self._pairwise = out
        return self._pairwise


def epsilon_components(gs: GridSet, eps: float, verify: bool = True) -> Decomposition:
    """Decompose the occupied cells into eps-connected components.

    Offset-vectorized minimum-label propagation over the strict-inequality
    neighbor graph; converges to the smallest-linear-index representative
    per component.  With ``verify`` (default) every cell pair closer than
    eps is re-checked to carry equal labels.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    occ = gs.occupancy()
    shape = occ.shape
    d = occ.ndim
    h = gs.h
    labels = np.where(occ, np.arange(occ.size, dtype=np.int64).reshape(shape), np.int64(occ.size))
    offsets = _ball_offsets(d, eps, h)
    if occ.any() and len(offsets):
        changed = True
        while changed:
            changed = False
            for k in offsets:
                src = tuple(slice(max(-s, 0), shape[i] - max(s, 0)) for i, s in enumerate(k))
                dst = tuple(slice(max(s, 0), shape[i] + min(s, 0)) for i, s in enumerate(k))
                m = occ[src] & occ[dst]
                if not m.any():
                    continue
                a = labels[src]
                b = labels[dst]
                mn = np.minimum(a, b)
                upd_a = m & (a > mn)
                upd_b = m & (b > mn)
                if upd_a.any():
                    a[upd_a] = mn[upd_a]
                    changed = True
                if upd_b.any():
                    b[upd_b] = mn[upd_b]
                    changed = True
    reps = np.unique(labels[occ]) if occ.any() else np.asarray([], dtype=np.int64)
    remap = {int(r): i for i, r in enumerate(sorted(reps))}
    out = np.full(shape, -1, dtype=np.int64)
    if occ.any():
        flat = labels[occ]
        out[occ] = np.vectorize(remap.get, otypes=[np.int64])(flat)
    comps = []
    hd = h ** d
    for i in range(len(reps)):
        m = out == i
        idx = np.nonzero(m)
        cells = int(m.sum())
        lo = tuple(gs.lattice.origin[a] + (int(idx[a].min()) + 0.5) * h for a in range(d))
        hi = tuple(gs.lattice.origin[a] + (int(idx[a].max()) + 0.5) * h for a in range(d))
        touches = any(int(idx[a].min()) == 0 or int(idx[a].max()) == shape[a] - 1 for a in range(d))
        comps.append(ComponentInfo(i, cells, cells * hd, lo, hi,
                                   touches_window=touches))
    dec = Decomposition(gs.lattice, out, eps, comps, complement=gs.complement)
    if verify and len(reps) > 1:
        _verify_separation(gs, dec)
    return dec


def _verify_separation(gs: GridSet, dec: Decomposition):
    """Every cell pair strictly closer than eps must share a label."""
    pts = gs.occupied_points()
    labs = dec.labels[gs.occupancy()]
    tree = cKDTree(pts)
    pairs = tree.query_pairs(dec.eps * (1 - 1e-12), output_type="ndarray")
    if len(pairs) and np.any(labs[pairs[:, 0]] != labs[pairs[:, 1]]):
        raise NumericError("component labeling violates the eps-separation invariant")


def component_set(gs: GridSet, dec: Decomposition, i: int, crop: bool = True) -> GridSet:
    """Extract one component as a GridSet (bbox-cropped by default)."""
    m = dec.component_mask(i)
    if not crop:
        return GridSet(gs.lattice, m)
    idx = np.nonzero(m)
    sl = tuple(slice(int(a.min()), int(a.max()) + 1) for a in idx)
    origin = tuple(gs.lattice.origin[a] + sl[a].start * gs.h for a in range(gs.d))
    lat = Lattice(origin, gs.h, m[sl].shape)
    return GridSet(lat, m[sl])


def is_epsilon_decomposable(gs: GridSet, eps: float):
    """True (with a witness partition) iff there are >= 2 eps-components.

    The witness is (first component, union of the rest); its essential
    distance is >= eps by the separation lemma, lattice-exactly.
    """
    dec = epsilon_components(gs, eps)
    if dec.n_components < 2:
        return False, None
    first = GridSet(gs.lattice, dec.component_mask(0))
    rest = GridSet(gs.lattice, (dec.labels > 0))
    return True, (first, rest)


def additivity_residual(gs: GridSet, eps: float, spec: KernelSpec,
                        q: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """|P(E) - sum_i P(E_i)| over the eps-decomposition.

    Requires the kernel horizon <= eps, so that no cross pair falls
    strictly inside the horizon and the identity is exact.
    """
    H = _horizon(spec, q)
    if H > eps * (1 + 1e-12):
        raise PreconditionError("additivity identity needs kernel horizon <= eps")
    dec = epsilon_components(gs, eps)
    total = gagliardo_perimeter(gs, spec, q)
    parts = sum(gagliardo_perimeter(component_set(gs, dec, i), spec, q)
                for i in range(dec.n_components))
    return abs(total - parts)


def is_epsilon_simple(gs: GridSet, eps: float) -> str:
    """Classify E against the eps-simplicity definition.

    Returns 'Simple', 'NotIndecomposable', 'ComplementHasFiniteComponent'
    or 'Indeterminate' (window margin below 2 eps, so complement
    components cannot be certified infinite).
    """
    if gs.complement:
        raise PreconditionError("eps-simplicity applies to finite-measure sets")
    occ = gs.occupancy()
    if not occ.any():
        raise PreconditionError("empty set")
    idx = np.nonzero(occ)
    margin_cells = min(min(int(a.min()), gs.mask.shape[i] - 1 - int(a.max()))
                       for i, a in enumerate(idx))
    if (margin_cells + 1) * gs.h < 2 * eps:
        return "Indeterminate"
    dec = epsilon_components(gs, eps)
    if dec.n_components > 1:
        return "NotIndecomposable"
    comp = GridSet(gs.lattice, ~gs.mask)
    dec_c = epsilon_components(comp, eps)
    for info in dec_c.components:
        if not info.touches_window:
            return "ComplementHasFiniteComponent"
    return "Simple"


@dataclass
class ExtremalityVerdict:
    kind: str                     # 'extreme' | 'witness'
    u: GridField
    u1: GridField | None = None
    u2: GridField | None = None
    lam: float | None = None
    diagnostics: dict = field(default_factory=dict)


def extremality_witness(gs: GridSet, eps: float, spec: KernelSpec,
                        q: QuadratureConfig = DEFAULT_QUADRATURE) -> ExtremalityVerdict:
    """Test u = 1_E / P(E) for extremality of the unit Gagliardo ball.

    Finite eps (matching the kernel horizon): if E splits into
    eps-components, returns the convex-combination witness built from the
    components; if the complement has a finite eps-component, returns the
    complement witness pair.  eps = inf selects the fractional criterion,
    for which every set of positive finite measure is extreme; when the
    set has well-separated parts the strictly positive interaction term
    is reported as a diagnostic.
    """
    if gs.complement:
        raise PreconditionError("extremality applies to finite-measure sets")
    if not gs.mask.any():
        raise PreconditionError("empty set")
    fractional = math.isinf(eps)
    if not fractional and math.isfinite(spec.eps) and abs(eps - spec.eps) > 1e-12 * eps:
        raise PreconditionError("eps must match the kernel horizon")
    P = gagliardo_perimeter(gs, spec, q)
    if not P > 0:
        raise NumericError("perimeter of a nontrivial set must be positive")
    u = GridField(gs.lattice, gs.mask.astype(float) / P)
    if fractional:
        diag = {}
        dec = epsilon_components(gs, 1.5 * gs.h, verify=False)
        if dec.n_components >= 2:
            first = GridSet(gs.lattice, dec.component_mask(0))
            rest = GridSet(gs.lattice, dec.labels > 0)
            diag["cross_term"] = cross_term(first, rest, spec, q)
        return ExtremalityVerdict("extreme", u, diagnostics=diag)

    dec = epsilon_components(gs, eps)
    if dec.n_components >= 2:
        first = GridSet(gs.lattice, dec.component_mask(0))
        rest = GridSet(gs.lattice, dec.labels > 0)
        P1 = gagliardo_perimeter(first, spec, q)
        P2 = gagliardo_perimeter(rest, spec, q)
        lam = P1 / (P1 + P2)
        u1 = GridField(gs.lattice, first.mask.astype(float) / P1)
        u2 = GridField(gs.lattice, rest.mask.astype(float) / P2)
        _check_convex_identity(u, u1, u2, lam)
        gap = essential_distance(first, rest)
        return ExtremalityVerdict("witness", u, u1, u2, lam,
                                  {"additivity_residual": abs(P1 + P2 - P),
                                   "component_gap": gap})
    comp = GridSet(gs.lattice, ~gs.mask)
    dec_c = epsilon_components(comp, eps)
    finite = [i for i, info in enumerate(dec_c.components) if not info.touches_window]
    if finite:
        i = finite[0]
        f1 = dec_c.component_mask(i)
        f2 = comp.mask & ~f1
        P1 = gagliardo_perimeter(GridSet(gs.lattice, f1), spec, q)
        # P(F2) = P(F2^c); the complement of the unbounded component is the
        # bounded set E u F1, fully contained in the window
        P2 = gagliardo_perimeter(GridSet(gs.lattice, ~f2), spec, q)
        lam = P1 / (P1 + P2)
        u1 = GridField(gs.lattice, -f1.astype(float) / P1)
        u2 = GridField(gs.lattice, (1.0 - f2.astype(float)) / P2)
        _check_convex_identity(u, u1, u2, lam)
        return ExtremalityVerdict("witness", u, u1, u2, lam,
                                  {"complement_route": True})
    return ExtremalityVerdict("extreme", u)


def _check_convex_identity(u: GridField, u1: GridField, u2: GridField, lam: float,
                           tol: float = 1e-10):
    recon = lam * u1.values + (1 - lam) * u2.values
    scale = float(np.abs(u.values).max())
    err = float(np.abs(recon - u.values).max())
    if err > tol * max(scale, 1.0):
        raise NumericError(f"witness convex identity fails: max error {err:.3e}")
