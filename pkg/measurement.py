"""
Measurement module for the Stokes workbench.

This module simulates the detector side of the scheme: the polarization
modes are rotated into b = u a (ideal SU(2) matrix or the composed Q-Q-H
gadget), separated, and photon-counted. A record holds the intensities
<b_i† b_i> and the intensity correlations <b1†b1†b1b1>, <b2†b2†b2b2>,
<b1†b2†b1b2>, either exact or estimated from a finite number of shots.

It also holds the measurement plan and the forward model (design-matrix
rows) that tells the reconstruction how each observable depends on the
field moments.
"""

import csv
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from config import config
from fockspace import TruncationWarning, TwoModeState, apply_two_mode_unitary
from optics import SU2Element, compose_gadget, gadget_for, is_supported, su2
from stokes import CorrelationSet, correlations_from_state

logger = logging.getLogger(__name__)

OBSERVABLES = ('I1', 'I2', 'G11', 'G22', 'G12')
ANGLE_TOLERANCE = 1e-9
SINGULAR_CONDITION = 1e10

DEFAULT_THETA_PHI0 = (np.pi / 12, np.pi / 6, np.pi / 4, np.pi / 3, 5 * np.pi / 12)
DEFAULT_THETA_PHI_HALF = (np.pi / 6, np.pi / 4, np.pi / 3)
FIRST_ORDER_SETTINGS = ((0.0, 0.0), (np.pi / 2, 0.0), (np.pi / 4, 0.0), (np.pi / 4, np.pi / 2))
IDENTITY_THETAS = (np.pi / 4, 3 * np.pi / 4)


class MeasurementError(ValueError):
    """Raised when a measurement cannot be simulated faithfully."""


class PlanError(ValueError):
    """Raised for degenerate or incomplete measurement plans."""


class Realization(str, Enum):
    ABSTRACT_SU2 = 'abstract_su2'
    QQH_GADGET = 'qqh_gadget'


class Role(str, Enum):
    FIRST_ORDER = 'first_order'
    FAMILY_PHI0 = 'family_phi0'
    FAMILY_PHI_HALF = 'family_phi_half'
    MIXED = 'mixed'
    IDENTITY = 'identity'


class MeasurementSetting(BaseModel):
    """One rotation (theta, phi) of the polarization modes before detection."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    theta: float
    phi: float
    realization: Realization = Realization.ABSTRACT_SU2
    role: Optional[Role] = None

    @model_validator(mode='after')
    def _gadget_supported(self):
        if self.realization is Realization.QQH_GADGET and not is_supported(self.theta, self.phi):
            raise ValueError(
                f"setting (theta={self.theta:.6g}, phi={self.phi:.6g}) has no Q-Q-H realization"
            )
        return self

    def unitary(self) -> SU2Element:
        if self.realization is Realization.QQH_GADGET:
            return compose_gadget(gadget_for(self.theta, self.phi))
        return su2(self.theta, self.phi)


class ObservableErrors(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    I1: float = Field(ge=0)
    I2: float = Field(ge=0)
    G11: float = Field(ge=0)
    G22: float = Field(ge=0)
    G12: float = Field(ge=0)


class MeasurementRecord(BaseModel):
    """Intensities and intensity correlations measured at one setting."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    setting: MeasurementSetting
    I1: float
    I2: float
    G11: float
    G22: float
    G12: float
    mode: Literal['exact', 'sampled']
    shots: int = Field(0, ge=0)
    seed: Optional[int] = None
    stream: Optional[int] = None
    stderr: Optional[ObservableErrors] = None
    counts: Optional[List[Tuple[int, int, int]]] = None

    @model_validator(mode='after')
    def _nonnegative(self):
        for name in OBSERVABLES:
            slack = 3 * getattr(self.stderr, name) if self.stderr is not None else 1e-10
            if getattr(self, name) < -max(slack, 1e-10):
                raise ValueError(f"{name} = {getattr(self, name):.3e} is negative beyond tolerance")
        if self.mode == 'sampled' and (self.shots < 1 or self.seed is None):
            raise ValueError("sampled records need shots >= 1 and a seed")
        return self

    def observables(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in OBSERVABLES])


class MeasurementPlan(BaseModel):
    """Ordered settings of a full reconstruction run."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    settings: List[MeasurementSetting]

    def by_role(self, role: Role) -> List[MeasurementSetting]:
        return [s for s in self.settings if s.role is role]

    def check_invariants(self) -> None:
        """
        Raise PlanError unless the plan has >= 4 first-order settings, >= 5
        phi = 0 and >= 3 phi = pi/2 settings with distinct theta (mod pi), and
        exactly one mixed setting.
        """
        minimum = {Role.FIRST_ORDER: 4, Role.FAMILY_PHI0: 5, Role.FAMILY_PHI_HALF: 3}
        for role, count in minimum.items():
            if len(self.by_role(role)) < count:
                raise PlanError(f"{role.value} needs at least {count} settings, got {len(self.by_role(role))}")
        if len(self.by_role(Role.MIXED)) != 1:
            raise PlanError(f"plan needs exactly one mixed setting, got {len(self.by_role(Role.MIXED))}")
        for role in (Role.FAMILY_PHI0, Role.FAMILY_PHI_HALF):
            _check_distinct([s.theta for s in self.by_role(role)], role.value)


# Forward model: how observables depend on the field moments.

def intensity_rows(theta: float, phi: float) -> np.ndarray:
    """
    Rows of I1 and I2 against (n1, n2, Re<a1†a2>, Im<a1†a2>).

    I1 = c² n1 + s² n2 + 2cs (cos phi Re<a1†a2> - sin phi Im<a1†a2>), and I2
    is the same with c² <-> s² and the cross term negated.
    """
    c, s = np.cos(theta), np.sin(theta)
    cross = 2 * c * s * np.array([np.cos(phi), -np.sin(phi)])
    return np.array([
        [c * c, s * s, *cross],
        [s * s, c * c, *(-cross)],
    ])


def phi0_row(theta: float) -> np.ndarray:
    """G11 at phi = 0 against (A, B, 4N12 + 2Re G, 4Re X, 4Re Y)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([c ** 4, s ** 4, c * c * s * s, c ** 3 * s, c * s ** 3])


def phi_half_row(theta: float) -> np.ndarray:
    """G11 - c⁴A - s⁴B at phi = pi/2 against (4N12 - 2Re G, -4Im X, -4Im Y)."""
    return phi0_row(theta)[2:]


def design_condition(rows: np.ndarray) -> float:
    return float(np.linalg.cond(rows))


def _check_distinct(thetas: Sequence[float], family: str) -> None:
    for i in range(len(thetas)):
        for j in range(i + 1, len(thetas)):
            gap = np.mod(thetas[i] - thetas[j], np.pi)
            if min(gap, np.pi - gap) <= ANGLE_TOLERANCE:
                raise PlanError(
                    f"{family}: repeated theta (mod pi) between "
                    f"theta[{i}] = {thetas[i]:.6g} and theta[{j}] = {thetas[j]:.6g}"
                )


def _check_design(rows: np.ndarray, family: str) -> float:
    condition = design_condition(rows)
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise PlanError(f"{family}: design matrix is singular (condition number {condition:.3e})")
    return condition


def default_plan(theta_set_phi0: Optional[Sequence[float]] = None,
                 theta_set_phi_half: Optional[Sequence[float]] = None,
                 realization: Realization = Realization.ABSTRACT_SU2,
                 include_identities: bool = False) -> MeasurementPlan:
    """
    The thirteen-setting plan: four first-order settings, five phi = 0 and
    three phi = pi/2 fourth-order settings, and the (pi/4, pi/4) setting.

    Args:
        theta_set_phi0: Five angles for the phi = 0 family
        theta_set_phi_half: Three angles for the phi = pi/2 family
        realization: Ideal rotations or the Q-Q-H gadget
        include_identities: Append theta = pi/4, 3pi/4 for both families

    Returns:
        MeasurementPlan: The validated plan

    Raises:
        PlanError: If a theta set has the wrong size, repeats an angle
            (mod pi) or gives a singular design matrix
    """
    phi0 = tuple(DEFAULT_THETA_PHI0 if theta_set_phi0 is None else theta_set_phi0)
    phi_half = tuple(DEFAULT_THETA_PHI_HALF if theta_set_phi_half is None else theta_set_phi_half)

    if len(phi0) != 5:
        raise PlanError(f"family_phi0 needs 5 theta values, got {len(phi0)}")
    if len(phi_half) != 3:
        raise PlanError(f"family_phi_half needs 3 theta values, got {len(phi_half)}")

    _check_distinct(phi0, 'family_phi0')
    _check_distinct(phi_half, 'family_phi_half')
    _check_design(np.array([phi0_row(t) for t in phi0]), 'family_phi0')
    _check_design(np.array([phi_half_row(t) for t in phi_half]), 'family_phi_half')

    def setting(theta, phi, role):
        return MeasurementSetting(theta=theta, phi=phi, realization=realization, role=role)

    settings = [setting(t, p, Role.FIRST_ORDER) for t, p in FIRST_ORDER_SETTINGS]
    settings += [setting(t, 0.0, Role.FAMILY_PHI0) for t in phi0]
    settings += [setting(t, np.pi / 2, Role.FAMILY_PHI_HALF) for t in phi_half]
    settings.append(setting(np.pi / 4, np.pi / 4, Role.MIXED))

    if include_identities:
        for phi in (0.0, np.pi / 2):
            settings += [setting(t, phi, Role.IDENTITY) for t in IDENTITY_THETAS]

    plan = MeasurementPlan(settings=settings)
    plan.check_invariants()
    logger.info("measurement plan with %d settings", len(settings))
    return plan


def record_from_correlations(corr: CorrelationSet, setting: MeasurementSetting) -> MeasurementRecord:
    """Exact record from already evaluated field moments."""
    rotated = corr.transformed(setting.unitary())
    return MeasurementRecord(
        setting=setting,
        I1=rotated.n1, I2=rotated.n2,
        G11=rotated.A, G22=rotated.B, G12=rotated.N12,
        mode='exact',
    )


def _warn_boundary(state: TwoModeState) -> None:
    if state.boundary_mass > config.boundary_threshold:
        warnings.warn(
            f"state boundary mass {state.boundary_mass:.3e} exceeds "
            f"{config.boundary_threshold:.1e}; measured moments are truncated",
            TruncationWarning,
            stacklevel=3,
        )


def measure_exact(state: TwoModeState, setting: MeasurementSetting) -> MeasurementRecord:
    """
    Exact intensities and intensity correlations of the rotated modes.

    The b-moments are obtained by transforming the first- and fourth-order
    a-moment tensors with u, not by rotating the state.

    Args:
        state: Normalized two-mode state
        setting: Rotation to apply before detection

    Returns:
        MeasurementRecord: Exact record (mode 'exact', shots 0)
    """
    _warn_boundary(state)
    return record_from_correlations(correlations_from_state(state), setting)


def estimate_from_counts(counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Factorial-moment estimates and their standard errors from a histogram.

    Args:
        counts: Rows of (n1, n2, count)

    Returns:
        tuple: (means, stderr) over OBSERVABLES
    """
    counts = np.asarray(counts, dtype=float)
    n1, n2, weight = counts[:, 0], counts[:, 1], counts[:, 2]
    shots = weight.sum()
    values = np.stack([n1, n2, n1 * (n1 - 1), n2 * (n2 - 1), n1 * n2])
    means = values @ weight / shots
    if shots < 2:
        return means, np.zeros_like(means)
    spread = ((values - means[:, None]) ** 2) @ weight / (shots - 1)
    return means, np.sqrt(spread / shots)


def sampling_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for the (seed, stream) substream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def measure_sampled(state: TwoModeState, setting: MeasurementSetting, shots: int,
                    seed: int, stream: int = 0) -> MeasurementRecord:
    """
    Photon-counting Monte Carlo estimate of a record.

    The rotated state's joint distribution P(n1, n2) is sampled by inverse
    CDF with ideal number-resolving detectors; I1 = mean(n1),
    G11 = mean(n1(n1-1)), G12 = mean(n1 n2) and so on.

    Args:
        state: Normalized two-mode state
        setting: Rotation to apply before detection
        shots: Number of detection events
        seed: Base seed
        stream: Substream index (plan position), so settings sample independently

    Returns:
        MeasurementRecord: Sampled record with stderr and outcome histogram

    Raises:
        MeasurementError: If shots < 1 or P(n1, n2) fails to normalize
    """
    if shots < 1:
        raise MeasurementError(f"shots must be >= 1, got {shots}")

    rotated = apply_two_mode_unitary(state, setting.unitary())
    probs = rotated.photon_distribution().ravel()
    total = probs.sum()
    if abs(total - 1.0) > config.sampling_tolerance:
        raise MeasurementError(
            f"photon-number distribution sums to {total:.12f}; the cutoff "
            f"{state.cutoff} is too small for this state"
        )

    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    draws = sampling_generator(seed, stream).random(shots)
    outcome = np.searchsorted(cdf, draws, side='right')

    bins, tally = np.unique(outcome, return_counts=True)
    width = state.cutoff + 1
    counts = np.column_stack([bins // width, bins % width, tally]).astype(int)
    means, errors = estimate_from_counts(counts)

    return MeasurementRecord(
        setting=setting,
        **dict(zip(OBSERVABLES, means.tolist())),
        mode='sampled',
        shots=shots,
        seed=seed,
        stream=stream,
        stderr=ObservableErrors(**dict(zip(OBSERVABLES, errors.tolist()))),
        counts=[tuple(row) for row in counts.tolist()],
    )


def measure_plan(state: TwoModeState, plan: MeasurementPlan, mode: str = 'exact',
                 shots: int = 0, seed: int = 0, workers: int = 1) -> List[MeasurementRecord]:
    """
    Records for every setting of a plan, in plan order.

    Sampled settings use substream = plan index, so the result does not
    depend on `workers`.
    """
    if mode == 'exact':
        _warn_boundary(state)
        corr = correlations_from_state(state)
        return [record_from_correlations(corr, s) for s in plan.settings]

    if mode != 'sampled':
        raise MeasurementError(f"unknown mode {mode!r}; use 'exact' or 'sampled'")

    def run(indexed):
        index, setting = indexed
        return measure_sampled(state, setting, shots, seed, stream=index)

    jobs = list(enumerate(plan.settings))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))
    return [run(job) for job in jobs]


CSV_COLUMNS = (
    'theta', 'phi', 'realization', 'role', 'mode',
    'I1', 'I2', 'G11', 'G22', 'G12',
    'stderr_I1', 'stderr_I2', 'stderr_G11', 'stderr_G22', 'stderr_G12',
    'shots', 'seed', 'stream',
)

_RECORDS = TypeAdapter(List[MeasurementRecord])


def records_to_json(records: Sequence[MeasurementRecord]) -> str:
    payload = [r.model_dump(mode='json') for r in records]
    return json.dumps(payload, indent=2, sort_keys=True) + '\n'


def save_records(records: Sequence[MeasurementRecord], path) -> None:
    Path(path).write_text(records_to_json(records), encoding='utf-8')


def load_records(path) -> List[MeasurementRecord]:
    """
    Read and validate a records file.

    Raises:
        pydantic.ValidationError: If the file violates the record schema
    """
    return _RECORDS.validate_json(Path(path).read_text(encoding='utf-8'))


def _csv_row(record: MeasurementRecord) -> Dict[str, object]:
    row = {
        'theta': record.setting.theta,
        'phi': record.setting.phi,
        'realization': record.setting.realization.value,
        'role': record.setting.role.value if record.setting.role else '',
        'mode': record.mode,
        'shots': record.shots,
        'seed': '' if record.seed is None else record.seed,
        'stream': '' if record.stream is None else record.stream,
    }
    for name in OBSERVABLES:
        row[name] = getattr(record, name)
        row[f'stderr_{name}'] = getattr(record.stderr, name) if record.stderr else ''
    return row


def records_to_csv(records: Sequence[MeasurementRecord], path) -> None:
    """One row per record with the fixed CSV_COLUMNS header."""
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for record in records:
            writer.writerow(_csv_row(record))
