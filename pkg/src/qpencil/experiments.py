"""Splitting experiment, stability metrics, and cross-formulation checks.

The experiment approximates a pencil having a double eigenvalue by a family
of pencils with simple eigenvalues: the double eigenvalue at 1/2 splits by
+-sqrt(delta) while the residue coefficients blow up like 1/sqrt(delta), yet
the recovered potentials stay O(delta)-close to the double-eigenvalue ones.
Closeness is measured on the reconstruction grid (d1 for the first
potential, d0 for the antiderivative of the zeroth) and, independently, by
the maximum of the rational Weyl-part difference on a contour enclosing the
cluster.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass, field
from math import pi, sqrt
from pathlib import Path

import numpy as np

from . import zindex
from .errors import (
    ContourTouchesPoleError,
    GridMismatchError,
    NegativeDeltaError,
    QPencilError,
    ValidationError,
)
from .forward import find_eigenvalues, integrate, weyl_residues, winding_number
from .inverse import RecoveredPotentials, active_layout, default_grid, run_reconstruction
from .model import BackgroundProblem, ZeroBackground
from .spectral_data import SpectralDataSet, SpectralEntry, compute_diagnostics

# Double-eigenvalue reference data: eigenvalue 1/2 with Laurent pair
# (-1/pi, -i/(2 pi)); all other indices carry the zero-background values.
SPLIT_CENTER = 0.5
SPLIT_M0 = -1.0 / pi          # coefficient at the simple pole
SPLIT_M1 = -1j / (2.0 * pi)   # coefficient at the double pole

REFERENCE_DELTAS = (0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 0.0005, 0.0002, 0.0001)


@dataclass(frozen=True)
class SplitExperimentConfig:
    delta_list: tuple[float, ...] = REFERENCE_DELTAS
    n_grid: int = 200
    contour_radius: float = 0.85   # encloses the 1/2-cluster, excludes +-1
    n_star: int = 1

    def __post_init__(self):
        if any(d < 0 for d in self.delta_list):
            raise NegativeDeltaError("splitting parameters must be nonnegative")
        dmax = max([d for d in self.delta_list if d > 0], default=0.0)
        if not (SPLIT_CENTER + sqrt(dmax) < self.contour_radius < 1.0):
            raise ValidationError(
                f"contour radius {self.contour_radius} must lie in "
                f"({SPLIT_CENTER + sqrt(dmax):.4f}, 1) for the default cluster")


def make_split_data(delta: float) -> SpectralDataSet:
    """Perturbed spectral data with the double eigenvalue split by sqrt(delta).

    With a = M1~/2 and c = M0~/a the split keeps the pole-part moments of
    orders 0 and 1 exact: lam+ + lam- = 1 + c delta and M+ + M- = M0~.
    delta = 0 returns the double-eigenvalue data itself.
    """
    if delta < 0:
        raise NegativeDeltaError(f"delta must be nonnegative, got {delta}")
    tail = ZeroBackground()
    if delta == 0:
        entries = [SpectralEntry(n=-1, lam=SPLIT_CENTER, M=SPLIT_M0),
                   SpectralEntry(n=1, lam=SPLIT_CENTER, M=SPLIT_M1)]
        return SpectralDataSet.from_entries(entries, tail=tail, omega0=0.0)
    a = SPLIT_M1 / 2.0
    c = SPLIT_M0 / a
    rt = sqrt(delta)
    entries = [
        SpectralEntry(n=1, lam=SPLIT_CENTER + rt, M=a / rt + SPLIT_M0),
        SpectralEntry(n=-1, lam=SPLIT_CENTER - rt + c * delta, M=-a / rt),
    ]
    return SpectralDataSet.from_entries(entries, tail=tail, omega0=0.0)


def compute_d_metrics(recovered: RecoveredPotentials,
                      reference) -> tuple[float, float]:
    """Max-norm distances of the potentials to a reference on the same grid.

    ``reference`` is either another reconstruction (grids must agree) or a
    background problem (compared against its own potentials, i.e. zero
    perturbation).
    """
    if isinstance(reference, RecoveredPotentials):
        if recovered.x.shape != reference.x.shape \
                or not np.allclose(recovered.x, reference.x, atol=1e-12):
            raise GridMismatchError("reconstructions live on different grids")
        d1 = float(np.max(np.abs(recovered.q1 - reference.q1)))
        d0 = float(np.max(np.abs(recovered.q0_antideriv - reference.q0_antideriv)))
        return d1, d0
    if isinstance(reference, BackgroundProblem):
        d1 = float(np.max(np.abs(recovered.q1 - reference.q1_values(recovered.x))))
        d0 = float(np.max(np.abs(recovered.q0_antideriv)))
        return d1, d0
    raise ValidationError(f"unsupported reference type {type(reference)!r}")


# ---------------------------------------------------------------------------
# contour metric and contour-equation solve

def rational_pole_part(dataset: SpectralDataSet, n_star: int):
    """The rational function with the data's poles of |index| <= n_star."""
    groups = [g for g in dataset.groups if abs(g.start) <= n_star]
    terms = [(g.lam, dataset.group_coefficients(g)) for g in groups]

    def fun(lam):
        lam = np.asarray(lam, dtype=complex)
        acc = np.zeros(lam.shape, dtype=complex)
        for pole, Ms in terms:
            for nu, M in enumerate(Ms):
                acc += M / (lam - pole) ** (nu + 1)
        return acc

    poles = [t[0] for t in terms]
    return fun, poles


def compute_split_delta_metric(data: SpectralDataSet, reference: SpectralDataSet,
                               n_star: int, contour_radius: float,
                               n_nodes: int = 512) -> float:
    """max(contour max of |pole-part difference|, tail l2 of index-weighted xi).

    The contour is the circle |lam| = contour_radius; it must separate the
    low-index cluster (inside) from everything else (outside).
    """
    f_data, p_data = rational_pole_part(data, n_star)
    f_ref, p_ref = rational_pole_part(reference, n_star)
    for pole in p_data + p_ref:
        gap = abs(abs(pole) - contour_radius)
        if gap < 1e-6 * max(1.0, contour_radius):
            raise ContourTouchesPoleError(f"pole {pole} lies on the contour")
        if abs(pole) > contour_radius:
            raise ValidationError(f"cluster pole {pole} lies outside the contour")
    width = max(data.max_abs_index, reference.max_abs_index)
    for n in zindex.window(width):
        if abs(n) <= n_star:
            continue
        for ds in (data, reference):
            lam = ds.entry(n).lam
            if abs(lam) <= contour_radius:
                raise ValidationError(f"tail eigenvalue {lam} (n={n}) inside the contour")

    zs = contour_radius * np.exp(2j * pi * np.arange(n_nodes) / n_nodes)
    contour_part = float(np.max(np.abs(f_data(zs) - f_ref(zs))))
    diag = compute_diagnostics(data, reference, n_star)
    return max(contour_part, diag.tail_norm(n_star))


def solve_contour_equation(data: SpectralDataSet, model: BackgroundProblem,
                           x, contour_radius: float, n_star: int,
                           n_nodes: int = 256) -> dict[tuple[int, int], np.ndarray]:
    """Solve the contour form of the main equation and evaluate at the poles.

    Discretizes v(x, lam) = S(x, lam) + (1/2 pi i) oint D(x, lam, mu)
    (pole-part difference)(mu) v(x, mu) d mu with the trapezoid rule on the
    circle |mu| = contour_radius (spectrally accurate there), then evaluates
    the continuation at the active eigenvalues of both sides.  Returns values
    keyed by (index, side), comparable with the sequence-space solve.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    model_set = model.spectral_data(max(data.max_abs_index, n_star))
    f_data, p_data = rational_pole_part(data, n_star)
    f_model, p_model = rational_pole_part(model_set, n_star)
    for pole in p_data + p_model:
        if abs(abs(pole) - contour_radius) < 1e-6:
            raise ContourTouchesPoleError(f"pole {pole} lies on the contour")
        if abs(pole) > contour_radius:
            raise ValidationError(f"cluster pole {pole} outside the contour")
    for n in zindex.window(max(data.max_abs_index, n_star + 2)):
        if abs(n) > n_star and abs(model_set.entry(n).lam) <= contour_radius:
            raise ValidationError(f"background eigenvalue at index {n} inside the contour")

    zs = contour_radius * np.exp(2j * pi * np.arange(n_nodes) / n_nodes)
    weights = zs / n_nodes          # (1/2 pi i) oint f dmu -> sum f(z) z / N
    mhat = f_data(zs) - f_model(zs)

    # chains on the contour: S and S' at every node, for all grid points
    s0 = np.array([model.s_chain(x, complex(z), 1) for z in zs])   # (N, 2, nx)
    c0 = np.array([model.sx_chain(x, complex(z), 1) for z in zs])

    out: dict[tuple[int, int], np.ndarray] = {}
    layout = active_layout(data, model)
    # evaluation points: active eigenvalues on both sides (simple only)
    targets = [(e.n, 0, e.lam) for e in layout.side0] + \
              [(e.n, 1, e.lam) for e in layout.side1]
    for _, _, lam in targets:
        if any(abs(lam - z) < 1e-9 for z in zs):
            raise ContourTouchesPoleError("evaluation point on the contour")

    for k, xk in enumerate(x):
        sv = s0[:, 0, k]
        sd = c0[:, 0, k]
        s1 = s0[:, 1, k]
        c1 = c0[:, 1, k]
        dz = zs[:, None] - zs[None, :]
        num = sv[:, None] * sd[None, :] - sd[:, None] * sv[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            D = num / dz
        np.fill_diagonal(D, s1 * sd - c1 * sv)   # coalescent value on the diagonal
        K = D * (weights * mhat)[None, :]
        vg = np.linalg.solve(np.eye(n_nodes) - K, sv)
        for n, side, lam in targets:
            svx = model.s_chain(np.array([xk]), lam, 0)[0, 0]
            row_num = svx * sd - model.sx_chain(np.array([xk]), lam, 0)[0, 0] * sv
            Drow = row_num / (lam - zs)
            val = svx + np.sum(Drow * weights * mhat * vg)
            out.setdefault((n, side), np.zeros(x.size, dtype=complex))[k] = val
    return out


def expected_weyl(data: SpectralDataSet, lam) -> np.ndarray:
    """Analytic Weyl function of the pencil with the given data (zero tail).

    Background part for the zero problem is -lam cot(lam pi); the window
    contributes the data pole parts minus the background pole parts.
    """
    if data.tail is None or data.tail.kind != "zero":
        raise ValidationError("expected_weyl requires a zero-background tail")
    lam = np.asarray(lam, dtype=complex)
    base = -lam * np.cos(lam * pi) / np.sin(lam * pi)
    n_win = data.max_abs_index
    f_data, _ = rational_pole_part(data, n_win)
    model_set = data.tail.spectral_data(n_win)
    f_model, _ = rational_pole_part(model_set, n_win)
    return base + f_data(lam) - f_model(lam)


# ---------------------------------------------------------------------------
# the delta sweep

@dataclass
class ExperimentRow:
    delta: float
    d1: float
    d0: float
    lambda_plus: complex
    lambda_minus: complex
    M_plus: complex
    M_minus: complex
    note: str = ""
    error: str = ""


TABLE_HEADER = ["delta", "d1", "d0", "re_l1", "im_l1", "re_lm1", "im_lm1",
                "re_M1", "im_M1", "re_Mm1", "im_Mm1"]


def write_table_csv(rows: list[ExperimentRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _csv.writer(f)
        w.writerow(TABLE_HEADER)
        for r in rows:
            if r.error:
                continue
            w.writerow([f"{v:.17g}" for v in (
                r.delta, r.d1, r.d0,
                r.lambda_plus.real, r.lambda_plus.imag,
                r.lambda_minus.real, r.lambda_minus.imag,
                r.M_plus.real, r.M_plus.imag,
                r.M_minus.real, r.M_minus.imag)])


def read_table_csv(path) -> list[ExperimentRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        r = _csv.reader(f)
        header = next(r)
        if header != TABLE_HEADER:
            raise ValidationError(f"unexpected table header: {header}")
        for line in r:
            vals = [float(v) for v in line]
            rows.append(ExperimentRow(
                delta=vals[0], d1=vals[1], d0=vals[2],
                lambda_plus=complex(vals[3], vals[4]),
                lambda_minus=complex(vals[5], vals[6]),
                M_plus=complex(vals[7], vals[8]),
                M_minus=complex(vals[9], vals[10])))
    return rows


def write_recovered_csv(rec: RecoveredPotentials, path) -> None:
    """Grid functions of the reconstruction: x,re_q1,im_q1,re_q0ad,im_q0ad."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _csv.writer(f)
        w.writerow(["x", "re_q1", "im_q1", "re_q0ad", "im_q0ad"])
        for xi, q, s in zip(rec.x, rec.q1, rec.q0_antideriv):
            w.writerow([f"{xi:.17g}", f"{q.real:.17g}", f"{q.imag:.17g}",
                        f"{s.real:.17g}", f"{s.imag:.17g}"])


def format_table(rows: list[ExperimentRow]) -> str:
    """Display table with 4-decimal metrics and 3-decimal spectral columns."""
    lines = [f"{'delta':<8} {'d1':<8} {'d0':<8} {'lambda_+':<16} "
             f"{'lambda_-':<20} {'M_+':<22} {'M_-':<14} note"]
    for r in rows:
        if r.error:
            lines.append(f"{r.delta:<8g} failed: {r.error}")
            continue
        lines.append(
            f"{r.delta:<8g} {r.d1:<8.4f} {r.d0:<8.4f} "
            f"{r.lambda_plus:<16.3f} {r.lambda_minus:<20.3f} "
            f"{r.M_plus:<22.3f} {r.M_minus:<14.3f} {r.note}")
    return "\n".join(lines)


def run_table(config: SplitExperimentConfig, out_dir=None,
              verify_multiplicity: bool = True) -> list[ExperimentRow]:
    """Run the delta sweep against the double-eigenvalue reference.

    For every delta the split data are reconstructed against the zero
    background; d1/d0 measure the distance to the delta = 0 reconstruction.
    A delta = 0 entry in the list is reported as a multiplicity extension and
    (optionally) verified by the winding count of the forward characteristic
    function around the double eigenvalue.
    """
    model = ZeroBackground()
    grid = default_grid(config.n_grid)
    reference = run_reconstruction(make_split_data(0.0), model, grid)
    rows: list[ExperimentRow] = []
    for delta in config.delta_list:
        data = make_split_data(delta)
        lam_p, lam_m = data.entry(1).lam, data.entry(-1).lam
        m_p, m_m = data.entry(1).M, data.entry(-1).M
        try:
            rec = reference if delta == 0 else run_reconstruction(data, model, grid)
            d1, d0 = compute_d_metrics(rec, reference)
            note = ""
            if delta == 0:
                note = "multiplicity extension (double eigenvalue)"
                if verify_multiplicity:
                    w = winding_number(rec.as_potentials(), SPLIT_CENTER, 0.05)
                    note += f"; forward winding at 1/2: {w}"
            row = ExperimentRow(delta=delta, d1=d1, d0=d0, lambda_plus=lam_p,
                                lambda_minus=lam_m, M_plus=m_p, M_minus=m_m,
                                note=note)
            if out_dir is not None:
                write_recovered_csv(rec, Path(out_dir) / f"potentials_delta={delta:g}.csv")
        except QPencilError as err:
            row = ExperimentRow(delta=delta, d1=float("nan"), d0=float("nan"),
                                lambda_plus=lam_p, lambda_minus=lam_m,
                                M_plus=m_p, M_minus=m_m, error=str(err))
        rows.append(row)
    if out_dir is not None:
        write_table_csv(rows, Path(out_dir) / "table.csv")
    return rows


# ---------------------------------------------------------------------------
# roundtrip verification

@dataclass
class RoundtripRow:
    n: int
    lam_in: complex
    lam_out: complex
    lam_err: float
    M_in: complex
    M_out: complex
    M_rel_err: float


@dataclass
class RoundtripReport:
    rows: list[RoundtripRow] = field(default_factory=list)
    windings: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def max_lam_err(self) -> float:
        return max((r.lam_err for r in self.rows), default=0.0)

    @property
    def max_m_rel_err(self) -> float:
        return max((r.M_rel_err for r in self.rows), default=0.0)

    def format(self) -> str:
        lines = [f"{'n':>4} {'|lam_in - lam_out|':>20} {'|M rel err|':>14}"]
        for r in self.rows:
            lines.append(f"{r.n:>4} {r.lam_err:>20.3e} {r.M_rel_err:>14.3e}")
        for start, (want, got) in self.windings.items():
            lines.append(f"group at {start}: winding expected {want}, measured {got}")
        return "\n".join(lines)


def _cluster_disc(data: SpectralDataSet, model: BackgroundProblem,
                  n_star: int) -> tuple[complex, float]:
    lams = [data.entry(n).lam for n in zindex.window(n_star)]
    center = complex(np.mean(lams))
    spread = max(abs(l - center) for l in lams)
    model_set = model.spectral_data(n_star + 3)
    nearest = min(abs(center - model_set.entry(n).lam)
                  for n in zindex.window(n_star + 3) if abs(n) > n_star)
    radius = min(0.6 * nearest, max(1.3 * spread + 0.05, 0.1))
    if radius <= spread:
        raise ValidationError("cannot build a disc separating cluster from tail")
    return center, radius


def roundtrip_check(data: SpectralDataSet, model: BackgroundProblem,
                    n_check: int, grid=None, refine: int = 10,
                    min_window: int = 0) -> RoundtripReport:
    """Reconstruct, solve the direct problem on the result, compare the data.

    Eigenvalues are matched greedily by proximity inside the comparison
    window, so the report does not depend on index-assignment conventions of
    the root search.  Multiplicity groups additionally get an
    argument-principle winding verification.
    """
    rec = run_reconstruction(data, model, grid, min_window=min_window)
    pot = rec.as_potentials()
    # index the output in the data's numbering frame: the mean of the
    # recovered q1 can differ from the data's mean shift by an integer when
    # the accumulated phase of the first potential passes through +-pi
    omega0 = complex(data.omega0)
    layout = active_layout(data, model, min_window=min_window)
    n_star = max((abs(n) for n in layout.indices), default=0)

    report = RoundtripReport()
    grouped: set[int] = set()
    for g in data.groups:
        if g.size == 1:
            continue
        # Discretization splits a multiple root at the sqrt scale of the grid
        # error, so per-root residues are meaningless there; compare the
        # contour-stable quantities instead: the winding count, the mean root
        # location, and the Laurent coefficients on a fixed circle.
        w = winding_number(pot, g.lam, 0.05, refine=refine, check_halving=True)
        report.windings[g.start] = (g.size, w)
        zs = g.lam + 0.05 * np.exp(2j * pi * np.arange(256) / 256)
        res = integrate(pot, zs, n_derivs=1, with_c=True, refine=refine)
        mvals = -res.c / res.s[0]
        center_out = complex(np.mean(zs * res.s[1] / res.s[0] * (zs - g.lam))) / g.size
        for nu, member in enumerate(g.members):
            grouped.add(member)
            m_in = data.entry(member).M
            m_out = complex(np.mean((zs - g.lam) ** (nu + 1) * mvals))
            report.rows.append(RoundtripRow(
                n=member, lam_in=g.lam, lam_out=center_out,
                lam_err=abs(center_out - g.lam),
                M_in=m_in, M_out=m_out,
                M_rel_err=abs(m_out - m_in) / max(abs(m_in), 1e-300)))

    cluster = None
    if n_star > 0:
        center, radius = _cluster_disc(data, model, n_star)
        cluster = (center, radius, n_star)
    eigs = find_eigenvalues(pot, max(n_check, n_star), omega0,
                            cluster=cluster, refine=refine)
    full = weyl_residues(pot, eigs, refine=refine)

    window = [n for n in zindex.window(n_check) if n not in grouped]
    outs = {n: full.entry(n) for n in window}
    used: set[int] = set()
    for n in window:
        e_in = data.entry(n)
        best = min((k for k in window if k not in used),
                   key=lambda k: abs(outs[k].lam - e_in.lam))
        used.add(best)
        e_out = outs[best]
        report.rows.append(RoundtripRow(
            n=n, lam_in=e_in.lam, lam_out=e_out.lam,
            lam_err=abs(e_out.lam - e_in.lam),
            M_in=e_in.M, M_out=e_out.M,
            M_rel_err=abs(e_out.M - e_in.M) / max(abs(e_in.M), 1e-300)))
    report.rows.sort(key=lambda r: r.n)
    return report
