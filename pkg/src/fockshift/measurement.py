"""Photon-count detection, mid-circuit measurement with collapse, and the
single-shot Fock-measurement Monte Carlo with its event-conditioned
population estimator.

Two thresholds are tracked per step: the pass threshold (count <= 0 keeps
the shot in the postselected chain) and the looser discrimination threshold
(count <= 1 decides the reported spin outcome).  Per shot the pass event at
a step always implies the discrimination event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .protocol import FilterPlan, FilterStep, ideal_ramsey_unitary
from .space import HilbertSpace
from .states import is_density, project_spin, prob_up

RENORM_FLOOR = 1e-14


@dataclass(frozen=True)
class DetectionModel:
    """Poisson photon-count detection for one spin readout."""

    lambda_bright: float = 5.0
    lambda_dark: float = 0.05
    threshold_pass: int = 0
    threshold_discriminate: int = 1

    def __post_init__(self):
        if not self.lambda_bright > self.lambda_dark >= 0:
            raise ValueError("need lambda_bright > lambda_dark >= 0")
        if self.threshold_pass < 0 or self.threshold_discriminate < self.threshold_pass:
            raise ValueError("thresholds must satisfy 0 <= pass <= discriminate")

    @classmethod
    def perfect(cls) -> "DetectionModel":
        return cls(lambda_bright=math.inf, lambda_dark=0.0)

    def sample_count(self, spin_up: bool, rng: np.random.Generator) -> int:
        lam = self.lambda_bright if spin_up else self.lambda_dark
        if math.isinf(lam):
            return self.threshold_discriminate + 1
        return int(rng.poisson(lam))

    def to_json_dict(self) -> dict:
        return {
            "lambda_bright": self.lambda_bright,
            "lambda_dark": self.lambda_dark,
            "threshold_pass": self.threshold_pass,
            "threshold_discriminate": self.threshold_discriminate,
        }


def detect_spin(space: HilbertSpace, state: np.ndarray, model: DetectionModel,
                rng: np.random.Generator, ion: int = 0):
    """Projectively measure one ion's spin, then sample a photon count.

    Returns (photon_count, spin_outcome, collapsed_state).  The motional
    part is conditioned on the projection only; the dark branch is left
    undisturbed.
    """
    p_up = prob_up(space, state, ion)
    spin = 1 if rng.random() < p_up else 0
    collapsed, _ = project_spin(space, state, spin, ion)
    count = model.sample_count(spin == 1, rng)
    return count, spin, collapsed


def run_filter_step(space: HilbertSpace, state: np.ndarray, step: FilterStep,
                    model: DetectionModel, rng: np.random.Generator,
                    unitary: np.ndarray | None = None):
    """Apply one filter step and its readout.

    Returns (passed, outcome_dark, photon_count, collapsed_state).
    ``passed`` uses the strict pass threshold, ``outcome_dark`` the
    discrimination threshold.  ``unitary`` overrides the ideal sequence
    unitary when a simulated one is wanted.
    """
    u = unitary if unitary is not None else ideal_ramsey_unitary(space, step.theta, step.phi)
    if is_density(state):
        state = u @ state @ u.conj().T
    else:
        norm_in = np.linalg.norm(state)
        if norm_in < RENORM_FLOOR:
            raise FloatingPointError("state norm below the renormalization floor")
        state = u @ state
    count, _, collapsed = detect_spin(space, state, model, rng)
    # decisions come from photon counts alone; the true spin stays hidden
    passed = count <= model.threshold_pass
    outcome_dark = count <= model.threshold_discriminate
    return passed, outcome_dark, count, collapsed


def pass_probability(space: HilbertSpace, state: np.ndarray, step: FilterStep) -> float:
    """Born-rule probability of the dark (pass) outcome for one step."""
    u = ideal_ramsey_unitary(space, step.theta, step.phi)
    if is_density(state):
        rotated = u @ state @ u.conj().T
    else:
        rotated = u @ state
    return 1.0 - prob_up(space, rotated)


@dataclass
class EventLedger:
    """Per-step event counters from a single-shot Monte Carlo run.

    ``b_conditional[ell]`` counts shots where the discrimination event held
    at step ell and the pass event held at every earlier step;
    ``a_prefix[ell]`` counts shots passing steps 0..ell inclusive.
    """

    n_steps: int
    shots: int = 0
    a_prefix: list = field(default_factory=list)
    b_conditional: list = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        if not self.a_prefix:
            self.a_prefix = [0] * self.n_steps
        if not self.b_conditional:
            self.b_conditional = [0] * self.n_steps

    def record_shot(self, passes: list, outcomes: list) -> None:
        """Fold one shot's per-step (pass, outcome) decisions in."""
        self.shots += 1
        ok = True
        for ell, (a, b) in enumerate(zip(passes, outcomes)):
            if not ok:
                break
            if b:
                self.b_conditional[ell] += 1
            if a:
                self.a_prefix[ell] += 1
            else:
                ok = False

    def merge(self, other: "EventLedger") -> "EventLedger":
        if other.n_steps != self.n_steps:
            raise ValueError("ledgers cover different plans")
        out = EventLedger(self.n_steps, self.shots + other.shots,
                          [a + b for a, b in zip(self.a_prefix, other.a_prefix)],
                          [a + b for a, b in zip(self.b_conditional, other.b_conditional)],
                          self.seed)
        return out

    def factors(self):
        """Empirical (numerator, denominator) per estimator factor."""
        out = []
        for ell in range(self.n_steps):
            denom = self.shots if ell == 0 else self.a_prefix[ell - 1]
            out.append((self.b_conditional[ell], denom))
        return out

    def to_json_dict(self) -> dict:
        estimate, err, degenerate = estimate_population(self)
        return {
            "shots": self.shots,
            "n_steps": self.n_steps,
            "a_prefix": list(self.a_prefix),
            "b_conditional": list(self.b_conditional),
            "estimate": estimate,
            "uncertainty": err,
            "degenerate_factors": degenerate,
            "seed": self.seed,
        }


def shot_rng(seed: int, shot: int) -> np.random.Generator:
    """Independent counter-based stream for one shot; order-insensitive."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(shot,))
    return np.random.Generator(np.random.Philox(ss))


def single_shot_measure(space: HilbertSpace, state: np.ndarray, plan: FilterPlan,
                        shots: int, model: DetectionModel, seed: int = 0,
                        unitaries=None) -> EventLedger:
    """Monte Carlo of the full filter plan over independent shots.

    Each shot replays every step on a fresh copy of the input state,
    recording pass and discrimination events; the conditioning chain stops
    contributing once a pass event fails.  ``unitaries`` optionally replaces
    the ideal per-step sequence unitaries with simulated ones.
    """
    if shots < 1:
        raise ValueError("need at least one shot")
    if unitaries is None:
        unitaries = [ideal_ramsey_unitary(space, s.theta, s.phi) for s in plan.steps]
    ledger = EventLedger(n_steps=len(plan.steps), seed=seed)
    for shot in range(shots):
        rng = shot_rng(seed, shot)
        st = state.copy()
        passes, outcomes = [], []
        chain_ok = True
        for step, u in zip(plan.steps, unitaries):
            if not chain_ok:
                break
            passed, dark, _, st = run_filter_step(space, st, step, model, rng, unitary=u)
            passes.append(passed)
            outcomes.append(dark)
            chain_ok = passed
        ledger.record_shot(passes, outcomes)
    return ledger


def estimate_population(ledger: EventLedger):
    """Product-of-conditional-frequencies population estimate.

    p ~ P(B_0) prod_ell P(B_ell | A_0 ... A_{ell-1}), with binomial standard
    errors combined in quadrature.  A zero denominator yields estimate 0
    with that factor flagged degenerate.
    """
    if ledger.shots < 1:
        raise ValueError("ledger holds no shots")
    freqs, ses, degenerate = [], [], []
    for ell, (num, den) in enumerate(ledger.factors()):
        if den == 0:
            degenerate.append(ell)
            freqs.append(0.0)
            ses.append(0.0)
            continue
        f = num / den
        freqs.append(f)
        ses.append(math.sqrt(f * (1.0 - f) / den))
    estimate = float(np.prod(freqs)) if not degenerate else 0.0
    var = 0.0
    for ell in range(len(freqs)):
        others = 1.0
        for k in range(len(freqs)):
            if k != ell:
                others *= freqs[k]
        var += (others * ses[ell]) ** 2
    return estimate, math.sqrt(var), degenerate
