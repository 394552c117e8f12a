"""Every worked example from the operation contracts, one test each."""
import pytest

import example_suite


@pytest.mark.parametrize("check", example_suite.ALL,
                         ids=lambda c: c.__name__)
def test_example(check):
    check()
