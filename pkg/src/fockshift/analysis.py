"""Analytic spin-population models and population estimation from Ramsey
time series.

The fitting model for a dataset taken at per-mode shift ratios rho_j
(rho_1 = 1) is

    P_up(t) = sum_n (p_n / 2) (1 - exp(-gamma_n t) cos(chi_1 G_n t + 2 chi_res t))

with G_n = sum_j rho_j (s_j(n) - 1), where s_j(n) is the finite-eta
occupation scaling of mode j including spectator factors (s -> 2n+1 as
eta -> 0), and gamma_n = gamma_1 sum_j |rho_j| (2 n_j + 1).  The linear
offset compensation applied by the sequence is already subtracted, which is
why G_n carries the "- 1" per mode.  Populations are shared across
datasets; chi_1 and chi_res are fitted per dataset, gamma_1 jointly.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit, least_squares

from .errors import FitError, RegressionError
from .laguerre import bystander_factor, shift_scaling

DEGENERACY_CONDITION_THRESHOLD = 1e8

# weight of the sum(p) = 1 penalty row relative to the per-point residuals;
# without it the vacuum population is nearly unconstrained (its fringe term
# is flat up to decay) and the optimizer can inflate it freely
NORMALIZATION_WEIGHT = 10.0


@dataclass(frozen=True)
class FitSetting:
    """Per-dataset model constants: Lamb-Dicke parameters, fixed shift
    ratios rho_j = chi_eff_j / chi_eff_1, and the design value of chi_eff_1
    (rad/s) used to seed the fit."""

    etas: tuple
    ratios: tuple
    chi1_design: float

    def __post_init__(self):
        if len(self.etas) != len(self.ratios):
            raise ValueError("etas and ratios must have one entry per mode")
        if abs(self.ratios[0] - 1.0) > 1e-12:
            raise ValueError("ratios are relative to mode 1, so ratios[0] must be 1")

    @property
    def n_modes(self) -> int:
        return len(self.etas)


def setting_from_spec(spec, modes) -> FitSetting:
    """Build a FitSetting from a scheduled Ramsey spec."""
    chi = np.asarray(spec.chi_eff, dtype=float)
    return FitSetting(
        etas=tuple(m.eta for m in modes),
        ratios=tuple(chi / chi[0]),
        chi1_design=float(chi[0]),
    )


@dataclass
class RamseyDataset:
    """One measured or simulated P_up(t) trace at a fixed ratio setting."""

    times: np.ndarray
    p_up: np.ndarray
    shots: int
    ratio_label: float
    setting: FitSetting

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p_up = np.asarray(self.p_up, dtype=float)
        if self.times.shape != self.p_up.shape:
            raise ValueError("times and p_up must match in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any((self.p_up < -1e-9) | (self.p_up > 1 + 1e-9)):
            raise ValueError("p_up values must lie in [0, 1]")


def occupation_grid(n_max: int, n_modes: int):
    """All occupation tuples with every n_j <= n_max, lexicographic."""
    return [tuple(n) for n in itertools.product(range(n_max + 1), repeat=n_modes)]


def phase_coefficient(ns, setting: FitSetting) -> float:
    """G_n: offset-compensated phase per unit (chi_1 t) for occupation n."""
    total = 0.0
    for j, (rho, eta) in enumerate(zip(setting.ratios, setting.etas)):
        m = 1.0
        for ell, eta_l in enumerate(setting.etas):
            if ell != j:
                m *= bystander_factor(int(ns[ell]), eta_l)
        total += rho * (m * m * shift_scaling(int(ns[j]), eta) - 1.0)
    return total


def decay_coefficient(ns, setting: FitSetting) -> float:
    """gamma_n / gamma_1 for occupation n."""
    return sum(abs(rho) * (2 * int(n) + 1) for rho, n in zip(setting.ratios, ns))


def pup_model_linear(populations: dict, thetas) -> np.ndarray:
    """Ideal-dispersive spin-up probability: 1/2 - 1/2 sum_n p_n cos(theta . n).

    ``thetas`` is an (T, M) array of per-mode angle vectors (or a single
    vector)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    out = np.full(thetas.shape[0], 0.5)
    for ns, p in populations.items():
        arg = thetas @ np.asarray(ns, dtype=float)
        out -= 0.5 * p * np.cos(arg)
    return out


@dataclass
class FitModelParams:
    gamma_1: float
    chi_eff_1: float
    chi_res: float
    populations: dict


def pup_model_full(params: FitModelParams, setting: FitSetting, times) -> np.ndarray:
    """Decaying, finite-eta fitting model for one dataset (see module doc)."""
    times = np.asarray(times, dtype=float)
    out = np.zeros_like(times)
    for ns, p in params.populations.items():
        g = phase_coefficient(ns, setting)
        d = decay_coefficient(ns, setting)
        envelope = np.exp(-params.gamma_1 * d * times)
        arg = params.chi_eff_1 * g * times + 2.0 * params.chi_res * times
        out += 0.5 * p * (1.0 - envelope * np.cos(arg))
    return out


@dataclass
class SingleFockFit:
    gamma: float
    gamma_err: float
    chi: float
    chi_err: float
    phase: float
    phase_err: float
    vacuum: bool = False


def fit_single_fock(times, p_up, flat_std: float = 0.02) -> SingleFockFit:
    """Fit one Fock-state trace to f(t) = (1 - exp(-g t) cos(2 chi t + phi))/2.

    Flat traces near zero are the vacuum by convention and return chi = 0
    without a sinusoidal fit; a flat trace away from zero is a degenerate
    fit and raises FitError.  The returned chi is a magnitude (the cosine
    cannot fix its sign).
    """
    times = np.asarray(times, dtype=float)
    p_up = np.asarray(p_up, dtype=float)
    if p_up.std() < flat_std:
        if p_up.mean() < 0.1:
            return SingleFockFit(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, vacuum=True)
        raise FitError("trace does not oscillate but is not a vacuum trace")

    def model(t, gamma, chi, phase):
        return 0.5 * (1.0 - np.exp(-gamma * t) * np.cos(2.0 * chi * t + phase))

    # seed the frequency from the dominant Fourier component
    dt = np.mean(np.diff(times))
    spectrum = np.abs(np.fft.rfft(p_up - p_up.mean()))
    freqs = np.fft.rfftfreq(len(p_up), d=dt)
    f0 = freqs[1 + int(np.argmax(spectrum[1:]))]
    chi0 = math.pi * f0
    try:
        popt, pcov = curve_fit(model, times, p_up, p0=[1.0, chi0, 0.0],
                               bounds=([0.0, 0.0, -math.pi], [np.inf, np.inf, math.pi]),
                               maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"single-Fock fit failed: {exc}") from exc
    errs = np.sqrt(np.diag(pcov))
    return SingleFockFit(popt[0], errs[0], popt[1], errs[1], popt[2], errs[2])


@dataclass
class FitResult:
    populations: dict
    population_errors: dict
    gamma_1: float
    gamma_1_err: float
    chi_eff_1: list
    chi_eff_1_err: list
    chi_res: list
    chi_res_err: list
    residual_norm: float
    sum_p: float
    condition_number: float
    degenerate: bool
    degenerate_groups: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        twopi = 2 * math.pi
        key = lambda ns: ",".join(str(int(n)) for n in ns)
        return {
            "populations": {key(ns): p for ns, p in self.populations.items()},
            "population_errors": {key(ns): e for ns, e in self.population_errors.items()},
            "gamma_1_per_s": self.gamma_1,
            "gamma_1_err_per_s": self.gamma_1_err,
            "chi_eff_1_hz": [c / twopi for c in self.chi_eff_1],
            "chi_eff_1_err_hz": [c / twopi for c in self.chi_eff_1_err],
            "chi_res_hz": [c / twopi for c in self.chi_res],
            "chi_res_err_hz": [c / twopi for c in self.chi_res_err],
            "residual_norm": self.residual_norm,
            "sum_p": self.sum_p,
            "condition_number": self.condition_number,
            "degenerate": self.degenerate,
            "degenerate_groups": [[list(ns) for ns in g] for g in self.degenerate_groups],
        }


def _model_tables(datasets, grid):
    """Per-dataset (G_n, D_n) coefficient vectors over the population grid."""
    tables = []
    for ds in datasets:
        g = np.array([phase_coefficient(ns, ds.setting) for ns in grid])
        d = np.array([decay_coefficient(ns, ds.setting) for ns in grid])
        tables.append((g, d))
    return tables


def fit_populations(datasets, n_max: int, n_starts: int = 8) -> FitResult:
    """Joint bounded least-squares fit of Fock populations across datasets.

    Populations over the full grid n_j <= n_max are shared; each dataset
    contributes its own chi_eff_1 and chi_res, and one gamma_1 is shared.
    Multi-start over the chi_eff_1 seed and initial thermal profile; the
    best converged optimum wins.  Near-singular Jacobians (condition number
    above 1e8) flag the result degenerate and report the indistinguishable
    population groups instead of pretending the split is meaningful.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    n_modes = datasets[0].setting.n_modes
    if any(ds.setting.n_modes != n_modes for ds in datasets):
        raise ValueError("datasets must share one mode count")
    grid = occupation_grid(n_max, n_modes)
    k_pop = len(grid)
    n_sets = len(datasets)
    tables = _model_tables(datasets, grid)
    times = [ds.times for ds in datasets]
    y = np.concatenate([ds.p_up for ds in datasets])
    m_rows = y.size

    def unpack(x):
        p = x[:k_pop]
        gamma1 = x[k_pop]
        chi1 = x[k_pop + 1::2]
        chires = x[k_pop + 2::2]
        return p, gamma1, chi1, chires

    def residuals(x):
        p, gamma1, chi1, chires = unpack(x)
        rows = []
        for d, (g, dcf) in enumerate(tables):
            t = times[d][:, None]
            env = np.exp(-gamma1 * dcf[None, :] * t)
            arg = chi1[d] * g[None, :] * t + 2.0 * chires[d] * t
            model = 0.5 * (p[None, :] * (1.0 - env * np.cos(arg))).sum(axis=1)
            rows.append(model - datasets[d].p_up)
        rows.append([NORMALIZATION_WEIGHT * (p.sum() - 1.0)])
        return np.concatenate(rows)

    def jacobian(x):
        p, gamma1, chi1, chires = unpack(x)
        jac = np.zeros((m_rows + 1, x.size))
        jac[-1, :k_pop] = NORMALIZATION_WEIGHT
        row0 = 0
        for d, (g, dcf) in enumerate(tables):
            t = times[d][:, None]
            nt = times[d].size
            env = np.exp(-gamma1 * dcf[None, :] * t)
            arg = chi1[d] * g[None, :] * t + 2.0 * chires[d] * t
            cos, sin = np.cos(arg), np.sin(arg)
            sl = slice(row0, row0 + nt)
            jac[sl, :k_pop] = 0.5 * (1.0 - env * cos)
            jac[sl, k_pop] = 0.5 * ((p[None, :] * dcf[None, :] * t * env * cos).sum(axis=1))
            jac[sl, k_pop + 1 + 2 * d] = 0.5 * ((p[None, :] * env * sin * g[None, :] * t).sum(axis=1))
            jac[sl, k_pop + 2 + 2 * d] = 0.5 * ((p[None, :] * env * sin * 2.0 * t).sum(axis=1))
            row0 += nt
        return jac

    lower = np.concatenate([np.zeros(k_pop), [0.0], np.full(2 * n_sets, -np.inf)])
    upper = np.full(k_pop + 1 + 2 * n_sets, np.inf)

    best = None
    nbar_options = (0.5, 1.5)
    for s in range(n_starts):
        factor = 0.8 + 0.4 * (s % 4) / 3.0
        nbar = nbar_options[(s // 4) % len(nbar_options)]
        p0 = np.array([math.prod((nbar / (1 + nbar)) ** n / (1 + nbar) for n in ns)
                       for ns in grid])
        p0 /= p0.sum()
        x0 = np.concatenate([p0, [5.0]])
        for ds in datasets:
            x0 = np.concatenate([x0, [factor * ds.setting.chi1_design, 0.0]])
        sol = least_squares(residuals, x0, jac=jacobian, bounds=(lower, upper),
                            method="trf", max_nfev=4000)
        if sol.status > 0 and (best is None or sol.cost < best.cost):
            best = sol
    if best is None:
        raise FitError("population fit did not converge in the multi-start budget")

    jac = jacobian(best.x)
    cond = float(np.linalg.cond(jac))
    dof = max(m_rows - best.x.size, 1)
    s2 = 2.0 * best.cost / dof
    cov = s2 * np.linalg.pinv(jac.T @ jac)
    errs = np.sqrt(np.maximum(np.diag(cov), 0.0))

    p, gamma1, chi1, chires = unpack(best.x)
    p_err = errs[:k_pop]
    degenerate = cond > DEGENERACY_CONDITION_THRESHOLD
    groups = _degenerate_groups(grid, tables) if degenerate else []
    return FitResult(
        populations={ns: float(v) for ns, v in zip(grid, p)},
        population_errors={ns: float(e) for ns, e in zip(grid, p_err)},
        gamma_1=float(gamma1),
        gamma_1_err=float(errs[k_pop]),
        chi_eff_1=[float(c) for c in chi1],
        chi_eff_1_err=[float(e) for e in errs[k_pop + 1::2]],
        chi_res=[float(c) for c in chires],
        chi_res_err=[float(e) for e in errs[k_pop + 2::2]],
        residual_norm=float(math.sqrt(2.0 * best.cost)),
        sum_p=float(p.sum()),
        condition_number=cond,
        degenerate=degenerate,
        degenerate_groups=groups,
    )


def _degenerate_groups(grid, tables):
    """Group occupations whose model signatures coincide across datasets."""
    buckets: dict[tuple, list] = {}
    for i, ns in enumerate(grid):
        sig = tuple(
            (round(g[i], 9), round(d[i], 9)) for g, d in tables
        )
        buckets.setdefault(sig, []).append(ns)
    return [members for members in buckets.values() if len(members) > 1]


def parity_from_populations(populations: dict, mode_mask, errors: dict | None = None):
    """Normalized parity over a mode subset, with propagated uncertainty.

    parity = sum_n p_n (-1)^(sum over mask) / sum_n p_n.
    """
    total = sum(populations.values())
    if total <= 0:
        raise ValueError("populations sum to zero")
    signed = sum(p * (-1) ** sum(ns[m] for m in mode_mask)
                 for ns, p in populations.items())
    parity = signed / total
    err = 0.0
    if errors is not None:
        for ns, p in populations.items():
            c = (-1) ** sum(ns[m] for m in mode_mask)
            dpdp = (c - parity) / total
            err += (dpdp * errors.get(ns, 0.0)) ** 2
        err = math.sqrt(err)
    return parity, err


def linearity_regression(results):
    """Per-mode dispersive-shift slopes from single-Fock fit results.

    ``results`` is a list of (occupation vector, fitted chi) pairs; the
    fitted chi of |n> oscillates at 2 chi = 2 sum_j chi_eff_j n_j, so a
    linear regression of chi against n (with intercept) returns the
    chi_eff_j slopes and their standard errors.
    """
    ns = np.atleast_2d(np.array([np.atleast_1d(n) for n, _ in results], dtype=float))
    chis = np.array([c for _, c in results], dtype=float)
    n_modes = ns.shape[1]
    design = np.hstack([ns, np.ones((ns.shape[0], 1))])
    if ns.shape[0] < n_modes + 1 or np.linalg.matrix_rank(design) < n_modes + 1:
        raise RegressionError("regression design is rank deficient; vary each mode's occupation")
    coef, residual, *_ = np.linalg.lstsq(design, chis, rcond=None)
    dof = max(ns.shape[0] - (n_modes + 1), 1)
    rss = float(residual[0]) if residual.size else float(np.sum((design @ coef - chis) ** 2))
    cov = (rss / dof) * np.linalg.inv(design.T @ design)
    slopes = coef[:n_modes]
    slope_errs = np.sqrt(np.diag(cov))[:n_modes]
    return slopes, slope_errs


def spin_string_probabilities(populations: dict, theta_matrix) -> dict:
    """Joint spin-readout distribution for several ions, analytic model.

    ``theta_matrix`` has one per-mode angle vector per ion.  Each ion reads
    up with probability sin^2(theta_i . n / 2) given occupation n; the
    returned map covers every spin string (tuple of 0s and 1s).
    """
    theta_matrix = np.atleast_2d(np.asarray(theta_matrix, dtype=float))
    n_ions = theta_matrix.shape[0]
    out: dict[tuple, float] = {}
    for string in itertools.product((0, 1), repeat=n_ions):
        total = 0.0
        for ns, p in populations.items():
            term = p
            for i, s in enumerate(string):
                half = float(theta_matrix[i] @ np.asarray(ns, dtype=float)) / 2.0
                term *= math.sin(half) ** 2 if s == 1 else math.cos(half) ** 2
            total += term
        out[string] = total
    return out


# -- CSV persistence ----------------------------------------------------------

CSV_COLUMNS = ("time_s", "p_up", "shots", "ratio_label")


def write_trace_csv(path, rows) -> None:
    """Write (time_s, p_up, shots, ratio_label) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row)


def read_trace_csv(path) -> dict:
    """Read a trace CSV and group rows by ratio label.

    Returns {ratio_label: (times, p_up, shots)}.
    """
    groups: dict[float, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"trace CSV is missing columns: {sorted(missing)}")
        for row in reader:
            label = float(row["ratio_label"])
            groups.setdefault(label, []).append(
                (float(row["time_s"]), float(row["p_up"]), int(float(row["shots"])))
            )
    out = {}
    for label, rows in groups.items():
        rows.sort()
        t, p, s = zip(*rows)
        out[label] = (np.array(t), np.array(p), s[0])
    return out
