"""
Reconstruction module for the Stokes workbench.

This module inverts measurement records into the four first-order and nine
second-order field moments, assembles the Stokes means, variances and
normally ordered correlations from them, and attaches bootstrap error bars
when the records come from finite-shot sampling.

The solve is staged: intensities of the first-order settings give n1, n2 and
<a1†a2>; the phi = 0 family gives A, B and three combinations of N12, G, X, Y;
the phi = pi/2 family (with A, B known) gives three more; the mixed
(pi/4, pi/4) setting fixes Im G.
"""

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tabulate import tabulate
from tqdm import tqdm

from config import config
from fockspace import TwoModeState
from measurement import (
    OBSERVABLES,
    MeasurementRecord,
    MeasurementSetting,
    Role,
    estimate_from_counts,
    intensity_rows,
    phi0_row,
    phi_half_row,
)
from stokes import (
    PARAMETER_NAMES,
    CorrelationSet,
    StokesSummary,
    correlations_from_state,
    stokes_oracle,
    summarize,
)

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
ANGLE_TOLERANCE = 1e-9

FIRST_ORDER_DIRECTIONS = ('<a1†a1>', '<a2†a2>', 'Re<a1†a2>', 'Im<a1†a2>')
PHI0_DIRECTIONS = ('A', 'B', '4 N12 + 2 Re G', 'Re X', 'Re Y')
PHI_HALF_DIRECTIONS = ('4 N12 - 2 Re G', 'Im X', 'Im Y')

IM_G = PARAMETER_NAMES.index('G_im')
G11, G22, G12 = (OBSERVABLES.index(name) for name in ('G11', 'G22', 'G12'))


class ReconstructionError(ValueError):
    """Raised when records do not determine the field moments."""


class ConsistencyWarning(UserWarning):
    """Redundant measurements disagree with the reconstructed moments."""


@dataclass(frozen=True)
class ReconstructionReport:
    """Reconstructed moments, Stokes summary and solve diagnostics."""

    corr: CorrelationSet
    summary: StokesSummary
    residuals: Dict[str, float]
    condition_numbers: Dict[str, float]
    checks: Dict[str, float] = field(default_factory=dict)
    mixed_check: bool = True
    mode: str = 'exact'
    bootstrap: int = 0
    seed: Optional[int] = None
    stderr_corr: Optional[Dict[str, float]] = None
    stderr_S: Optional[np.ndarray] = None
    stderr_V: Optional[np.ndarray] = None
    stderr_checks: Optional[Dict[str, float]] = None
    skipped_checks: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, object]:
        data = {
            'mode': self.mode,
            'parameters': dict(zip(PARAMETER_NAMES, self.corr.as_vector().tolist())),
            'summary': self.summary.to_dict(),
            'degree_of_polarization': self.summary.degree_of_polarization,
            'residuals': self.residuals,
            'condition_numbers': self.condition_numbers,
            'mixed_check': self.mixed_check,
            'checks': self.checks,
            'skipped_checks': list(self.skipped_checks),
            'bootstrap': self.bootstrap,
            'seed': self.seed,
        }
        if self.stderr_corr is not None:
            data['stderr'] = {
                'parameters': self.stderr_corr,
                'S': self.stderr_S.tolist(),
                'V': [[float(self.stderr_V[i, j]) for j in range(i + 1)] for i in range(4)],
                'checks': self.stderr_checks,
            }
        return data


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    measured: float
    assembled: float

    @property
    def discrepancy(self) -> float:
        return abs(self.measured - self.assembled)


@dataclass(frozen=True)
class _Layout:
    """Design rows and record indices of each solve stage."""

    first_index: np.ndarray
    first_rows: np.ndarray
    phi0_index: np.ndarray
    phi0_rows: np.ndarray
    half_index: np.ndarray
    half_thetas: np.ndarray
    mixed_index: np.ndarray
    mixed_rows: np.ndarray
    ab_index: np.ndarray
    ab_thetas: np.ndarray


def observable_rows(setting: MeasurementSetting) -> np.ndarray:
    """
    5 x 13 matrix mapping the parameter vector to the setting's observables.

    Built column by column by transforming unit parameter vectors with the
    setting's unitary, so it holds for any rotation, ideal or gadget.
    """
    u = setting.unitary()
    columns = []
    for k in range(len(PARAMETER_NAMES)):
        rotated = CorrelationSet.from_vector(np.eye(len(PARAMETER_NAMES))[k]).transformed(u)
        columns.append([rotated.n1, rotated.n2, rotated.A, rotated.B, rotated.N12])
    return np.array(columns).T


def _indices(records: Sequence[MeasurementRecord], role: Role) -> np.ndarray:
    return np.array([i for i, r in enumerate(records) if r.setting.role is role], dtype=int)


def _layout(records: Sequence[MeasurementRecord]) -> _Layout:
    if any(r.setting.role is None for r in records):
        raise ReconstructionError("every record needs a setting role to be reconstructed")

    first = _indices(records, Role.FIRST_ORDER)
    phi0 = _indices(records, Role.FAMILY_PHI0)
    half = _indices(records, Role.FAMILY_PHI_HALF)
    mixed = _indices(records, Role.MIXED)

    for role, index in ((Role.FIRST_ORDER, first), (Role.FAMILY_PHI0, phi0),
                        (Role.FAMILY_PHI_HALF, half), (Role.MIXED, mixed)):
        if index.size == 0:
            raise ReconstructionError(f"no {role.value} records")

    def setting(i):
        return records[i].setting

    # phi = pi/2 records usable for the free A/B solve, identity angles included
    ab = np.array([
        i for i, r in enumerate(records)
        if r.setting.role in (Role.FAMILY_PHI_HALF, Role.IDENTITY)
        and abs(r.setting.phi - np.pi / 2) <= ANGLE_TOLERANCE
    ], dtype=int)

    return _Layout(
        first_index=first,
        first_rows=np.vstack([intensity_rows(setting(i).theta, setting(i).phi) for i in first]),
        phi0_index=phi0,
        phi0_rows=np.array([phi0_row(setting(i).theta) for i in phi0]),
        half_index=half,
        half_thetas=np.array([setting(i).theta for i in half]),
        mixed_index=mixed,
        mixed_rows=np.array([observable_rows(setting(i)) for i in mixed]),
        ab_index=ab,
        ab_thetas=np.array([setting(i).theta for i in ab]),
    )


def _distinct_angles(thetas: Sequence[float]) -> int:
    """Number of distinct angles modulo pi."""
    kept = []
    for theta in np.mod(thetas, np.pi):
        if all(min(abs(theta - k), np.pi - abs(theta - k)) > ANGLE_TOLERANCE for k in kept):
            kept.append(theta)
    return len(kept)


def _missing_directions(rows: np.ndarray, names: Sequence[str]) -> List[str]:
    _, singular, vh = np.linalg.svd(rows)
    rank = int(np.sum(singular > RANK_TOLERANCE * singular[0])) if singular.size and singular[0] > 0 else 0
    null = vh[rank:]
    weights = np.linalg.norm(null, axis=0) if null.size else np.zeros(len(names))
    return [name for name, weight in zip(names, weights) if weight > 1e-6]


def _lstsq(rows: np.ndarray, rhs: np.ndarray, names: Sequence[str],
           stage: str) -> Tuple[np.ndarray, float, float]:
    """
    Least-squares solve of one stage.

    Returns:
        tuple: (solution, residual norm, condition number)

    Raises:
        ReconstructionError: If the design matrix is rank deficient
    """
    singular = np.linalg.svd(rows, compute_uv=False)
    underdetermined = rows.shape[0] < rows.shape[1]
    condition = float('inf') if underdetermined or singular[-1] == 0 else float(singular[0] / singular[-1])
    if underdetermined or singular[-1] <= RANK_TOLERANCE * singular[0]:
        missing = _missing_directions(rows, names)
        raise ReconstructionError(
            f"{stage}: rank-deficient design matrix (condition number {condition:.3e}); "
            f"no setting sensitive to {', '.join(missing)}"
        )

    solution, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    residual = float(np.linalg.norm(rows @ solution - rhs))
    return solution, residual, condition


def _solve(layout: _Layout, obs: np.ndarray, mixed_check: bool = True):
    """Parameter vector, residuals, condition numbers and redundancy checks."""
    residuals, conditions, checks = {}, {}, {}

    rhs = obs[layout.first_index][:, :2].ravel()
    first, residuals['first_order'], conditions['first_order'] = _lstsq(
        layout.first_rows, rhs, FIRST_ORDER_DIRECTIONS, 'first_order')

    phi0, residuals['family_phi0'], conditions['family_phi0'] = _lstsq(
        layout.phi0_rows, obs[layout.phi0_index, G11], PHI0_DIRECTIONS, 'family_phi0')
    A, B, c_plus, d_plus, e_plus = phi0

    c, s = np.cos(layout.half_thetas), np.sin(layout.half_thetas)
    rhs = obs[layout.half_index, G11] - c ** 4 * A - s ** 4 * B
    rows = np.array([phi_half_row(t) for t in layout.half_thetas])
    half, residuals['family_phi_half'], conditions['family_phi_half'] = _lstsq(
        rows, rhs, PHI_HALF_DIRECTIONS, 'family_phi_half')
    c_minus, d_minus, e_minus = half

    params = np.array([
        *first,
        A, B, (c_plus + c_minus) / 8,
        (c_plus - c_minus) / 4, 0.0,
        d_plus / 4, -d_minus / 4,
        e_plus / 4, -e_minus / 4,
    ])

    coupling = layout.mixed_rows[:, G12, :]
    rhs = obs[layout.mixed_index, G12] - coupling @ params
    im_g, residuals['mixed'], conditions['mixed'] = _lstsq(
        coupling[:, [IM_G]], rhs, ('Im G',), 'mixed')
    params[IM_G] = im_g[0]

    if mixed_check:
        predicted = layout.mixed_rows[:, [G11, G22], :] @ params
        measured = obs[layout.mixed_index][:, [G11, G22]]
        checks['mixed_G11'] = float(np.max(np.abs(measured[:, 0] - predicted[:, 0])))
        checks['mixed_G22'] = float(np.max(np.abs(measured[:, 1] - predicted[:, 1])))

    if _distinct_angles(layout.ab_thetas) >= len(PHI0_DIRECTIONS):
        free = np.array([phi0_row(t) for t in layout.ab_thetas])
        solution, *_ = np.linalg.lstsq(free, obs[layout.ab_index, G11], rcond=None)
        checks['family_A'] = float(abs(solution[0] - A))
        checks['family_B'] = float(abs(solution[1] - B))

    return params, residuals, conditions, checks


def first_order_from_records(records: Sequence[MeasurementRecord]) -> Tuple[float, float, complex]:
    """
    Solve the intensities of the given records for n1, n2 and <a1†a2>.

    Both output ports are used, so every record contributes two rows.

    Args:
        records: Records whose settings span the four first-order unknowns

    Returns:
        tuple: (n1, n2, cross)

    Raises:
        ReconstructionError: If no setting is sensitive to some direction
    """
    if not records:
        raise ReconstructionError("first_order: no records")
    rows = np.vstack([intensity_rows(r.setting.theta, r.setting.phi) for r in records])
    rhs = np.array([[r.I1, r.I2] for r in records]).ravel()
    (n1, n2, re, im), residual, condition = _lstsq(rows, rhs, FIRST_ORDER_DIRECTIONS, 'first_order')
    logger.debug("first order: residual %.3e, condition %.3e", residual, condition)
    return float(n1), float(n2), complex(re, im)


def second_order_from_records(records: Sequence[MeasurementRecord]) -> CorrelationSet:
    """
    Staged solve of the nine second-order parameters from a full plan.

    The returned set also carries the first-order moments.

    Raises:
        ReconstructionError: On a missing stage or a singular family
    """
    layout = _layout(records)
    obs = np.array([r.observables() for r in records])
    params, *_ = _solve(layout, obs, mixed_check=False)
    return CorrelationSet.from_vector(params)


def _resampler(records: Sequence[MeasurementRecord]):
    """Function drawing one bootstrap replica of the observables matrix."""
    base = np.array([r.observables() for r in records])
    tables = [np.array(r.counts, dtype=float) if r.counts else None for r in records]
    errors = [r.stderr for r in records]

    def draw(rng: np.random.Generator) -> np.ndarray:
        obs = base.copy()
        for i, record in enumerate(records):
            if record.mode != 'sampled':
                continue
            if tables[i] is not None:
                table = tables[i].copy()
                table[:, 2] = rng.multinomial(record.shots, tables[i][:, 2] / tables[i][:, 2].sum())
                obs[i], _ = estimate_from_counts(table)
            elif errors[i] is not None:
                spread = np.array([getattr(errors[i], name) for name in OBSERVABLES])
                obs[i] = base[i] + spread * rng.standard_normal(len(OBSERVABLES))
        return obs

    return draw


def _bootstrap(records, layout, resamples, seed, mixed_check, progress):
    draw = _resampler(records)
    rng = np.random.default_rng(seed)
    params, means, variances, checks = [], [], [], []

    rounds = range(resamples)
    if progress:
        rounds = tqdm(rounds, desc='bootstrap', unit='resample')

    for _ in rounds:
        vector, _, _, check = _solve(layout, draw(rng), mixed_check)
        summary = summarize(CorrelationSet.from_vector(vector))
        params.append(vector)
        means.append(summary.S)
        variances.append(summary.V)
        checks.append(check)

    def spread(samples):
        return np.std(np.array(samples), axis=0, ddof=1)

    names = sorted(checks[0]) if checks and checks[0] else []
    stderr_checks = dict(zip(names, spread([[c[k] for k in names] for c in checks]).tolist())) if names else {}
    return (
        dict(zip(PARAMETER_NAMES, spread(params).tolist())),
        spread(means),
        spread(variances),
        stderr_checks,
    )


def reconstruct_all(records: Sequence[MeasurementRecord], bootstrap: Optional[int] = None,
                    seed: int = 0, mixed_check: bool = True, tolerance: float = 1e-6,
                    progress: bool = False) -> ReconstructionReport:
    """
    Full reconstruction of the moments and Stokes summary from plan records.

    Identity records are ignored by the solves. When any record is sampled,
    standard errors are estimated by bootstrap: shot-level multinomial
    resampling of each record's outcome histogram, or Gaussian resampling
    from its stderr when no histogram was kept.

    Args:
        records: Records of a complete plan
        bootstrap: Number of resamples (default from STOKES_BOOTSTRAP_RESAMPLES; 0 disables)
        seed: Bootstrap seed
        mixed_check: Compare G11 and G22 at the mixed setting with predictions
        tolerance: Discrepancy allowed for exact records before warning
        progress: Show a progress bar during the bootstrap

    Returns:
        ReconstructionReport: Moments, summary, residuals and conditioning

    Raises:
        ReconstructionError: Propagated from the stage solves
    """
    layout = _layout(records)
    obs = np.array([r.observables() for r in records])
    params, residuals, conditions, checks = _solve(layout, obs, mixed_check)
    for stage, condition in conditions.items():
        logger.info("%s: condition %.3e, residual %.3e", stage, condition, residuals[stage])

    corr = CorrelationSet.from_vector(params)
    summary = summarize(corr)
    mode = 'sampled' if any(r.mode == 'sampled' for r in records) else 'exact'

    resamples = config.bootstrap_resamples if bootstrap is None else bootstrap
    stderr = (None, None, None, None)
    if mode == 'sampled' and resamples >= 2:
        logger.info("bootstrap with %d resamples (seed %d)", resamples, seed)
        stderr = _bootstrap(records, layout, resamples, seed, mixed_check, progress)
    else:
        resamples = 0

    skipped = ()
    if 'family_A' not in checks:
        distinct = _distinct_angles(layout.ab_thetas)
        skipped = (f"family_A, family_B: need {len(PHI0_DIRECTIONS)} distinct theta (mod pi) "
                   f"at phi = pi/2, have {distinct}",)
        logger.info("cross-family A/B check skipped (%d distinct theta at phi = pi/2)", distinct)

    stderr_checks = stderr[3] or {}
    for name, value in checks.items():
        allowed = tolerance + 5 * stderr_checks.get(name, 0.0)
        if value > allowed:
            warnings.warn(
                f"{name}: redundant measurement disagrees by {value:.3e} (allowed {allowed:.3e})",
                ConsistencyWarning,
                stacklevel=2,
            )

    return ReconstructionReport(
        corr=corr,
        summary=summary,
        residuals=residuals,
        condition_numbers=conditions,
        checks=checks,
        mixed_check=mixed_check,
        mode=mode,
        bootstrap=resamples,
        seed=seed if resamples else None,
        stderr_corr=stderr[0],
        stderr_S=stderr[1],
        stderr_V=stderr[2],
        stderr_checks=stderr[3],
        skipped_checks=skipped,
    )


def _find_g11(records: Sequence[MeasurementRecord], theta: float, phi: float) -> Optional[float]:
    for record in records:
        if (abs(record.setting.theta - theta) <= ANGLE_TOLERANCE
                and abs(record.setting.phi - phi) <= ANGLE_TOLERANCE):
            return record.G11
    return None


def verify_identities(report: ReconstructionReport,
                      records: Sequence[MeasurementRecord]) -> List[IdentityCheck]:
    """
    Compare sums and differences of raw G11 at theta = pi/4, 3pi/4 with the
    assembled normally ordered Stokes correlations.

    For phi = 0 the sum is ½(<°S0S0°> + <°S2S2°>) and the difference
    <°S0S2°>; for phi = pi/2 the sum is ½(<°S0S0°> + <°S3S3°>), which equals
    ½(<°S0S0°> - <°S2S2°>) + 2 N12, and the difference is <°S0S3°>.

    Args:
        report: Reconstruction of the same records
        records: Records including both identity angles for both phases

    Returns:
        list: One IdentityCheck per identity

    Raises:
        ReconstructionError: If a required setting is missing
    """
    wanted = {
        (theta, phi): _find_g11(records, theta, phi)
        for phi in (0.0, np.pi / 2)
        for theta in (np.pi / 4, 3 * np.pi / 4)
    }
    missing = [key for key, value in wanted.items() if value is None]
    if missing:
        listed = ', '.join(f"(theta={t:.6g}, phi={p:.6g})" for t, p in missing)
        raise ReconstructionError(f"identity checks need records at {listed}")

    q, h = np.pi / 4, np.pi / 2
    plus0, minus0 = wanted[(q, 0.0)], wanted[(3 * q, 0.0)]
    plus_h, minus_h = wanted[(q, h)], wanted[(3 * q, h)]
    NO = report.summary.NO
    N12 = report.corr.N12

    return [
        IdentityCheck('S0S0 + S2S2', 2 * (plus0 + minus0), NO[0, 0] + NO[2, 2]),
        IdentityCheck('S0S2', plus0 - minus0, NO[0, 2]),
        IdentityCheck('S0S0 + S3S3', 2 * (plus_h + minus_h), NO[0, 0] + NO[3, 3]),
        IdentityCheck('S0S0 - S2S2', 2 * (plus_h + minus_h) - 4 * N12, NO[0, 0] - NO[2, 2]),
        IdentityCheck('S0S3', minus_h - plus_h, NO[0, 3]),
    ]


def oracle_deviation(report: ReconstructionReport, state: TwoModeState) -> float:
    """Max |reconstructed - oracle| over S, V, NO and the 13 parameters."""
    truth = correlations_from_state(state).as_vector()
    return max(
        report.summary.max_deviation(stokes_oracle(state)),
        float(np.max(np.abs(report.corr.as_vector() - truth))),
    )


def _matrix_table(matrix: np.ndarray) -> str:
    rows = [[f'S{i}', *matrix[i]] for i in range(4)]
    return tabulate(rows, headers=['', 'S0', 'S1', 'S2', 'S3'], floatfmt='.6g')


def report_to_text(report: ReconstructionReport) -> str:
    """Human-readable summary of a report."""
    S = report.summary.S
    if report.stderr_S is not None:
        means = [[f'S{i}', S[i], report.stderr_S[i]] for i in range(4)]
        headers = ['', 'value', 'stderr']
    else:
        means = [[f'S{i}', S[i]] for i in range(4)]
        headers = ['', 'value']

    stages = [
        [stage, report.residuals[stage], report.condition_numbers[stage]]
        for stage in report.residuals
    ]

    parts = [
        f"Mode: {report.mode}",
        "",
        "Stokes means:",
        tabulate(means, headers=headers, floatfmt='.6g'),
        f"Degree of polarization: {report.summary.degree_of_polarization:.6g}",
        "",
        "Variance matrix V:",
        _matrix_table(report.summary.V),
        "",
        "Normally ordered correlations:",
        _matrix_table(report.summary.NO),
        "",
        "Solves:",
        tabulate(stages, headers=['stage', 'residual', 'condition'], floatfmt='.3e'),
    ]
    if report.checks:
        parts += ["", "Redundancy checks:",
                  tabulate(sorted(report.checks.items()), headers=['check', 'discrepancy'], floatfmt='.3e')]
    if report.skipped_checks:
        parts += ["", "Skipped checks:"] + [f"  {note}" for note in report.skipped_checks]
    return '\n'.join(parts) + '\n'


def save_report(report: ReconstructionReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n', encoding='utf-8')
