"""Bundled trap parameters and experiment presets.

The default trap has two radial modes at 0.94 and 1.27 MHz with Lamb-Dicke
parameters 0.10 and 0.087 and a 100 kHz carrier Rabi frequency.  The four
drive settings place the two sideband-detuned steps so the effective
per-mode shift ratios come out 1:0 (single mode), 1:2, 1:1, and 2:1.
"""

from __future__ import annotations

import math

from .dynamics import ModeSpec

TWO_PI = 2 * math.pi

OMEGA_RABI = TWO_PI * 100e3

MODE_1 = ModeSpec(omega=TWO_PI * 0.94e6, eta=0.10)
MODE_2 = ModeSpec(omega=TWO_PI * 1.27e6, eta=0.087)


def trap_modes(n_modes: int = 2):
    if n_modes == 1:
        return (MODE_1,)
    if n_modes == 2:
        return (MODE_1, MODE_2)
    raise ValueError("presets cover one or two modes")


# Step placements as ((mode index, detuning from that mode's blue sideband),
# (mode index, detuning)) for steps 1 and 2.
RATIO_SETTINGS = {
    "single_mode": ((0, TWO_PI * 110e3), (0, -TWO_PI * 110e3)),
    "ratio_1_2": ((1, TWO_PI * 60e3), (0, -TWO_PI * 142.0e3)),
    "ratio_1_1": ((1, TWO_PI * 80e3), (0, -TWO_PI * 77.8e3)),
    "ratio_2_1": ((1, TWO_PI * 150e3), (0, -TWO_PI * 59.5e3)),
}


def preset_config(name: str) -> dict:
    """Bundled experiment configurations for the CLI."""
    if name == "fig2_even_cat":
        return {
            "schema_version": 1,
            "protocol": "fit",
            "setting": "single_mode",
            "initial_state": {"kind": "cat", "alpha": 1.5, "sign": 1},
            "n_max": 6,
            "mode_dims": [13, 3],
            "times_s": {"start": 5e-5, "stop": 6e-3, "num": 61},
            "shots": 300,
            "gamma_per_s": [12.0, 0.0],
            "seed": 1,
        }
    if name == "fig4_single_shot":
        return {
            "schema_version": 1,
            "protocol": "single_shot",
            "n_max": 3,
            "bits": 2,
            "shots": 500,
            "phase_mode": "exact",
            "detection": {"lambda_bright": 5.0, "lambda_dark": 0.05},
            "seed": 7,
        }
    raise KeyError(f"unknown preset {name!r}")


PRESET_NAMES = ("fig2_even_cat", "fig4_single_shot")
