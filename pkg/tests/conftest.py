import pytest

from stability_lab import kernels


@pytest.fixture(autouse=True)
def _default_backend():
    # individual tests switch backends; restore the default afterwards
    before = kernels.get_backend()
    yield
    kernels.set_backend(before)
