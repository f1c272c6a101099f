import numpy as np
import pytest

from decaylab import _accel
from decaylab.errors import UsageError
from decaylab.feedback import FeedbackLaw
from decaylab.modulation import ModulationProfile
from decaylab.waves import build_system, initial_state, simulate


def test_env_var_selects_numpy(monkeypatch):
    monkeypatch.setenv("DECAYLAB_BACKEND", "numpy")
    assert _accel.resolve_backend(None) == "numpy"
    monkeypatch.setenv("DECAYLAB_BACKEND", " NumBa ")
    assert _accel.resolve_backend(None) == ("numba" if _accel.HAVE_NUMBA else "numpy")


def test_explicit_backend_wins(monkeypatch):
    monkeypatch.setenv("DECAYLAB_BACKEND", "numpy")
    assert _accel.resolve_backend("numba") == ("numba" if _accel.HAVE_NUMBA else "numpy")


def test_bad_backend(monkeypatch):
    with pytest.raises(UsageError):
        _accel.resolve_backend("fortran")
    monkeypatch.setenv("DECAYLAB_BACKEND", "gpu")
    with pytest.raises(UsageError):
        _accel.resolve_backend(None)


@pytest.mark.parametrize("law", [FeedbackLaw.linear(1.0), FeedbackLaw.power(0.5, 0.5), FeedbackLaw.power(1.0, 3.0)])
def test_env_var_and_argument_agree(monkeypatch, law):
    system = build_system({"model": "wave_boundary", "n": 50, "a": 1.0, "k": 1.0}, law,
                          ModulationProfile.power_decay(0.5))
    u0, v0 = initial_state(system, {"kind": "modes", "n_modes": 4}, seed=3)
    monkeypatch.setenv("DECAYLAB_BACKEND", "numpy")
    env_tr = simulate(system, u0, v0, 5.0, 0.01, 10)
    arg_tr = simulate(system, u0, v0, 5.0, 0.01, 10, backend="numba")
    np.testing.assert_allclose(env_tr.E, arg_tr.E, rtol=1e-10, atol=1e-15 * env_tr.E0)
