"""Shared strategies and helpers for the test suite."""

import numpy as np
from hypothesis import settings
from hypothesis import strategies as st

from conducta.phases import PhaseSet

# property tests double as regression tests; keep them reproducible
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")


@st.composite
def phase_sets(draw, min_phases=1, max_phases=5, dims=(2, 3)):
    """Valid phase sets with distinct conductivities and normalized fractions."""
    k = draw(st.integers(min_phases, max_phases))
    sigmas = draw(
        st.lists(
            st.floats(0.1, 50.0, allow_nan=False, allow_infinity=False),
            min_size=k,
            max_size=k,
            unique=True,
        )
    )
    sigmas = sorted(sigmas)
    # keep the conductivities separated so merging never kicks in
    for a, b in zip(sigmas, sigmas[1:]):
        if b - a < 1e-6:
            sigmas = [s + 1e-3 * i for i, s in enumerate(sigmas)]
            break
    weights = draw(
        st.lists(st.floats(0.05, 1.0, allow_nan=False), min_size=k, max_size=k)
    )
    total = sum(weights)
    fractions = [w / total for w in weights]
    dimension = draw(st.sampled_from(dims))
    return PhaseSet.from_pairs(sigmas, fractions, dimension)


def random_phase_set(rng, k, dimension, sigma_range=(0.5, 8.0)):
    lo, hi = sigma_range
    sig = np.sort(rng.uniform(lo, hi, k))
    while k > 1 and float(np.diff(sig).min()) < 1e-3 * (hi - lo):
        sig = np.sort(rng.uniform(lo, hi, k))
    mu = rng.dirichlet(np.ones(k))
    return PhaseSet.from_pairs(sig, mu, dimension)
