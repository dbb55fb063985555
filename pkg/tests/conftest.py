import importlib.util
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

from foundations import FinFun  # noqa: E402
from induction import StepFunctional  # noqa: E402
import battery  # noqa: E402


@pytest.fixture(scope='session')
def cli():
    """The induct-cli.py script loaded as a module."""
    spec = importlib.util.spec_from_file_location('induct_cli', os.path.join(ROOT, 'induct-cli.py'))
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


@pytest.fixture
def chain3():
    return battery.chain_functional(3)


@pytest.fixture
def flip2():
    """The non-monotone functional F(A) = complement of A over n=2."""
    return StepFunctional.from_callable(2, lambda a: [x for x in range(2) if x not in a], name='flip')


@pytest.fixture
def witness_fn():
    return FinFun((0, 0, 1))
