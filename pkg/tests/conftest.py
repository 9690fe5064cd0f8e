import numpy as np
import pytest

from critmet.models import (EffectiveParams, INFINITE_ETA, QuantumRabiParams,
                            map_quantum_rabi, rabi_coupling_for_g)


def rabi_effective(g: float, eta: float, omega: float = 1.0) -> EffectiveParams:
    """QR-model effective parameters at coupling g; eta may be inf (the
    physical back-reference then pins the frequency ratio at 1e8)."""
    ratio = 1e8 if np.isinf(eta) else eta
    lam = rabi_coupling_for_g(omega, omega * ratio, g)
    p = QuantumRabiParams(omega=omega, Omega=omega * ratio, lam=lam)
    e = map_quantum_rabi(p)
    if np.isinf(eta):
        return EffectiveParams(omega=e.omega, eta=INFINITE_ETA, g=e.g,
                               quartic=e.quartic, physical=p)
    return e


@pytest.fixture(scope="session")
def rabi_critical_thermo():
    return rabi_effective(1.0, INFINITE_ETA)
