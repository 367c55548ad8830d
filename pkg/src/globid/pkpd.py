"""Three-compartment PK/PD simulation and synthetic dataset generation.

The continuous-time model is a linear four-state system (three drug
compartments plus a first-order effect-site filter) driven by the propofol
mass-flow, followed by a static Hill nonlinearity mapping effect-site
concentration to the BIS score.  Because the infusion profile is piecewise
constant on the sampling grid, zero-order-hold discretization is exact, and
the sampled effect-site concentration obeys a fourth-order ARX recursion
exactly (Cayley-Hamilton).  That exactness is exercised by fit_arx tests.

PK rate constants are configuration inputs: the demographic-to-rate
regressions used in the clinical literature are out of scope here, and the
bundled patient table carries documented sample rates of plausible magnitude.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .numerics import expm, least_squares


@dataclass(frozen=True)
class PkRates:
    """Compartment transfer/elimination rates (1/s) and primary volume (L)."""

    k10: float
    k12: float
    k13: float
    k21: float
    k31: float
    ke0: float
    k1e: float
    V1: float

    def validate(self) -> None:
        for name in ("k10", "k12", "k13", "k21", "k31", "ke0", "k1e", "V1"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"PK rate {name} must be strictly positive")


@dataclass(frozen=True)
class HillParams:
    """Static output nonlinearity: BIS = e0 - emax * Ce^g / (Ce^g + ce50^g)."""

    ce50: float
    gamma: float
    e0: float
    emax: float


@dataclass(frozen=True)
class PatientRecord:
    id: int
    age: float
    height_cm: float
    weight_kg: float
    sex: str
    rates: PkRates
    hill: HillParams


@dataclass(frozen=True)
class InputProfile:
    """Piecewise-constant infusion: value v_i on [t_i, t_{i+1}), 0 after last."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ts = [t for t, _ in self.breakpoints]
        vs = [v for _, v in self.breakpoints]
        if not ts or ts[0] != 0.0:
            raise ValueError("input profile must start at t=0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("input profile breakpoints must be strictly increasing")
        if any(v < 0.0 for v in vs):
            raise ValueError("infusion rates must be nonnegative")

    def check_alignment(self, T: float) -> None:
        for t, _ in self.breakpoints:
            if abs(t / T - round(t / T)) > 1e-9:
                raise ValueError(
                    f"breakpoint t={t} is not an integer multiple of the "
                    f"sampling period T={T}"
                )

    def sample(self, T: float, n: int) -> np.ndarray:
        """v(kT) for k = 0..n."""
        ts = np.array([t for t, _ in self.breakpoints])
        vs = np.array([v for _, v in self.breakpoints])
        k = np.arange(n + 1) * T
        idx = np.searchsorted(ts, k + 1e-12 * max(T, 1.0), side="right") - 1
        return vs[idx]


@dataclass(frozen=True)
class Dataset:
    """Sampled input/output record: u(k) in mg/s, y(k) in BIS units."""

    T: float
    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.u) != len(self.y):
            raise ValueError("u and y must have the same length")

    @property
    def n(self) -> int:
        return len(self.y) - 1

    @property
    def E0(self) -> float:
        return float(self.y[0])


@dataclass
class ArxFit:
    alpha: np.ndarray
    beta: np.ndarray
    residual: float
    rank_deficient: bool = False


# Paper-protocol infusion: 10 mg/s bolus for 10 s, 3 mg/s for the next 15 s,
# then off.
BOLUS_INPUT = InputProfile(breakpoints=((0.0, 10.0), (10.0, 3.0), (25.0, 0.0)))


def system_matrices(rates: PkRates) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time (Ac, Bc) for state (q1, q2, q3, Ce)."""
    Ac = np.array(
        [
            [-(rates.k10 + rates.k12 + rates.k13), rates.k21, rates.k31, 0.0],
            [rates.k12, -rates.k21, 0.0, 0.0],
            [rates.k13, 0.0, -rates.k31, 0.0],
            [rates.k1e / rates.V1, 0.0, 0.0, -rates.ke0],
        ]
    )
    Bc = np.array([1.0, 0.0, 0.0, 0.0])
    return Ac, Bc


def zoh_step(Ac: np.ndarray, Bc: np.ndarray, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization over one period T.

    Computed from the exponential of the augmented block [[Ac, Bc], [0, 0]],
    whose top row is [expm(Ac T), integral_0^T expm(Ac s) ds Bc].
    """
    if T <= 0.0:
        raise ValueError("sampling period must be positive")
    n = Ac.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = Ac * T
    aug[:n, n] = np.asarray(Bc, dtype=float) * T
    E = expm(aug)
    return E[:n, :n], E[:n, n]


def simulate(
    rates: PkRates, profile: InputProfile, T: float, horizon: float
) -> np.ndarray:
    """States (q1, q2, q3, Ce) at t = 0, T, ..., horizon from a zero start.

    Exact discrete recursion: the infusion is constant on each sampling
    interval, so the ZOH step matrices reproduce the continuous solution at
    the sample instants.
    """
    profile.check_alignment(T)
    n = int(round(horizon / T))
    Ac, Bc = system_matrices(rates)
    Ad, Bd = zoh_step(Ac, Bc, T)
    v = profile.sample(T, n)
    states = np.zeros((n + 1, 4))
    for k in range(n):
        states[k + 1] = Ad @ states[k] + Bd * v[k]
    return states


def hill(hp: HillParams, ce):
    """BIS value(s) for effect-site concentration(s) ce >= 0."""
    ce = np.asarray(ce, dtype=float)
    cg = ce**hp.gamma
    out = hp.e0 - hp.emax * cg / (cg + hp.ce50**hp.gamma)
    return out if out.ndim else float(out)


def synthesize_dataset(
    patient: PatientRecord, profile: InputProfile, T: float, horizon: float
) -> Dataset:
    """Noiseless sampled dataset u(k)=v(kT), y(k)=hill(Ce(kT))."""
    states = simulate(patient.rates, profile, T, horizon)
    n = states.shape[0] - 1
    u = profile.sample(T, n)
    y = hill(patient.hill, states[:, 3])
    return Dataset(T=T, u=u, y=np.asarray(y, dtype=float))


def fit_arx(c: np.ndarray, u: np.ndarray, N: int, M: int) -> ArxFit:
    """Ordinary least squares for c(k) = -sum a_i c(k-i) + sum b_j u(k-j).

    Returns the coefficient estimates and the sum of squared one-step
    prediction residuals.  A rank-deficient regressor yields the minimum-norm
    solution, flagged in the result.
    """
    c = np.asarray(c, dtype=float)
    u = np.asarray(u, dtype=float)
    ell = max(N, M)
    n = len(c) - 1
    if n < ell or len(u) != len(c):
        raise ValueError("sequences too short for the requested lag orders")
    rows = n - ell + 1
    X = np.empty((rows, N + M))
    for i in range(1, N + 1):
        X[:, i - 1] = -c[ell - i : n + 1 - i]
    for j in range(1, M + 1):
        X[:, N + j - 1] = u[ell - j : n + 1 - j]
    target = c[ell : n + 1]
    theta = least_squares(X, target)
    rank = np.linalg.matrix_rank(X)
    resid = float(np.sum((target - X @ theta) ** 2))
    return ArxFit(
        alpha=theta[:N],
        beta=theta[N:],
        residual=resid,
        rank_deficient=rank < N + M,
    )


# --- serialization -------------------------------------------------------


def patient_from_dict(d: dict) -> PatientRecord:
    pk = d["pk"]
    pd_ = d["pd"]
    rates = PkRates(
        k10=pk["k10"], k12=pk["k12"], k13=pk["k13"], k21=pk["k21"],
        k31=pk["k31"], ke0=pk["ke0"], k1e=pk["k1e"], V1=pk["V1"],
    )
    rates.validate()
    return PatientRecord(
        id=int(d["id"]),
        age=float(d["age"]),
        height_cm=float(d["height_cm"]),
        weight_kg=float(d["weight_kg"]),
        sex=str(d["sex"]),
        rates=rates,
        hill=HillParams(
            ce50=pd_["ce50"], gamma=pd_["gamma"], e0=pd_["e0"], emax=pd_["emax"]
        ),
    )


def load_patient(path: str | Path) -> PatientRecord:
    with open(path) as fh:
        return patient_from_dict(json.load(fh))


def load_patient_table() -> list[PatientRecord]:
    """The 13 bundled patients (12 individuals plus their average row)."""
    text = resources.files("globid.data").joinpath("patients_table1.json").read_text()
    return [patient_from_dict(d) for d in json.loads(text)]


def load_input_profile(path: str | Path) -> InputProfile:
    with open(path) as fh:
        raw = json.load(fh)
    return InputProfile(breakpoints=tuple((float(b["t"]), float(b["v"])) for b in raw))


def dataset_to_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "y"])
        for k in range(ds.n + 1):
            w.writerow(
                [repr(k * ds.T), repr(float(ds.u[k])), repr(float(ds.y[k]))]
            )


def dataset_from_csv(path: str | Path) -> Dataset:
    with open(path) as fh:
        r = csv.reader(fh)
        header = next(r)
        if [h.strip() for h in header] != ["t", "u", "y"]:
            raise ValueError(f"expected header t,u,y in {path}, got {header}")
        t, u, y = [], [], []
        for row in r:
            t.append(float(row[0]))
            u.append(float(row[1]))
            y.append(float(row[2]))
    t = np.asarray(t)
    if len(t) < 2:
        raise ValueError("dataset needs at least two samples")
    T = t[1] - t[0]
    if np.max(np.abs(np.diff(t) - T)) > 1e-9 * max(T, 1.0):
        raise ValueError("dataset time stamps are not uniformly spaced")
    return Dataset(T=float(T), u=np.asarray(u), y=np.asarray(y))
