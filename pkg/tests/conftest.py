import os
import tempfile
from pathlib import Path

# Point the run registry and report storage at a scratch directory before app.config loads.
_SCRATCH = Path(tempfile.mkdtemp(prefix="atm-tests-"))
os.environ["DATABASE_URL"] = f"sqlite:///{_SCRATCH / 'runs.db'}"
os.environ["STORAGE_PATH"] = str(_SCRATCH / "storage")
os.environ.setdefault("ATM_THREADS", "2")

import pytest  # noqa: E402

from app.services.garside import compute_garside  # noqa: E402
from app.services.mobius import MobiusService  # noqa: E402
from app.services.presentation import (  # noqa: E402
    braid,
    dihedral,
    dual_a,
    free,
    heap,
    parse_presentation,
)

A2_TILDE_SPEC = """\
# affine type A~2
generators: a b c
m: a b = 3
m: b c = 3
m: a c = 3
"""


@pytest.fixture(scope="session")
def a2_tilde_spec() -> str:
    return A2_TILDE_SPEC


@pytest.fixture(scope="session")
def braid3():
    return compute_garside(braid(3))


@pytest.fixture(scope="session")
def braid4():
    return compute_garside(braid(4))


@pytest.fixture(scope="session")
def a2_tilde():
    return compute_garside(parse_presentation(A2_TILDE_SPEC))


@pytest.fixture(scope="session")
def free2():
    return compute_garside(free(2))


@pytest.fixture(scope="session")
def heap3():
    # a and c commute, b commutes with nobody: irreducible
    return compute_garside(heap(["a", "b", "c"], [("a", "c")]))


@pytest.fixture(scope="session")
def dual_a3():
    return compute_garside(dual_a(3))


@pytest.fixture(scope="session")
def dihedral4():
    return compute_garside(dihedral(4))


@pytest.fixture(scope="session")
def mobius_of():
    cache = {}

    def get(g):
        if id(g) not in cache:
            cache[id(g)] = MobiusService(g)
        return cache[id(g)]

    return get
