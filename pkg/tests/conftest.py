import math

import numpy as np
import pytest

from talbotlau import physics as ph


PAPER_D1_UM = 1.210
PAPER_D2_UM = 1.004
PAPER_ENERGY_KEV = 14.0


@pytest.fixture(scope="session")
def particle_14():
    return ph.ParticleState(PAPER_ENERGY_KEV)


@pytest.fixture(scope="session")
def designed_geometry(particle_14):
    return ph.design_geometry(PAPER_D1_UM, PAPER_D2_UM, particle_14)


@pytest.fixture(scope="session")
def beam_14(particle_14):
    return ph.BeamModel(particle=particle_14)


def synth_fringe_hits(
    n_target,
    contrast,
    d3_um=5.90,
    alpha_rad=0.0,
    phase_rad=0.0,
    noise_density_per_1000um3=0.0,
    seed=0,
    view_w=370.0,
    view_h=294.0,
    thickness=50.0,
    implant_mean=2.0,
    implant_sigma=1.0,
):
    """Hits in the tile [0,w)x[0,h) from density 1 + C sin(2πX(α)/d3 + φ),
    with a truncated-Gaussian depth profile and optional uniform noise."""
    from scipy.special import ndtr, ndtri

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 917])))
    n_prop = int(round(n_target * (1.0 + contrast)))
    x = view_w * rng.random(n_prop)
    y = view_h * rng.random(n_prop)
    xr = x * math.cos(alpha_rad) - y * math.sin(alpha_rad)
    dens = 1.0 + contrast * np.sin(2.0 * np.pi * xr / d3_um + phase_rad)
    keep = rng.random(n_prop) * (1.0 + contrast) < dens
    x, y = x[keep], y[keep]
    a = ndtr((0.0 - implant_mean) / implant_sigma)
    b = ndtr((thickness - implant_mean) / implant_sigma)
    z = implant_mean + implant_sigma * ndtri(a + rng.random(len(x)) * (b - a))
    kind = np.zeros(len(x), dtype=np.int8)
    if noise_density_per_1000um3 > 0.0:
        lam = noise_density_per_1000um3 / 1000.0 * view_w * view_h * thickness
        m = int(rng.poisson(lam))
        x = np.concatenate([x, view_w * rng.random(m)])
        y = np.concatenate([y, view_h * rng.random(m)])
        z = np.concatenate([z, thickness * rng.random(m)])
        kind = np.concatenate([kind, np.ones(m, dtype=np.int8)])
    from talbotlau.hitgen import HitSet

    return HitSet(x, y, z, kind)
