import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from simulate import random_reference  # noqa: E402

from fqzkit.ref_index import build_index, forward_from_contigs  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_ref():
    """A 200 kb random reference with its k=12 index."""
    bases = random_reference(200_000, np.random.default_rng(20240601))
    fseq = forward_from_contigs([("chrT", bases)])
    return fseq, build_index(fseq, 12)
