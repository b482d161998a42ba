"""Shared fixtures: the learned mask library is reused across modules."""

import pytest

from hyperscene.synthetic import build_mask_library


@pytest.fixture(scope="session")
def mask_library():
    return build_mask_library()
