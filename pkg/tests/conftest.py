import pytest

from shapgraph import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so timed tests measure the algorithms,
    not JIT compilation."""
    _kernels.warmup()
