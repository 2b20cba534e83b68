import random

import pytest

from codedmem.codes import Address
from codedmem.controller import AccessRequest, Controller, ControllerConfig, Kind

R, W = Kind.READ, Kind.WRITE


def random_image(layout, seed=0):
    rng = random.Random(seed)
    return [[rng.getrandbits(64 * layout.W) for _ in range(layout.L)]
            for _ in range(layout.num_data_banks)]


def make_controller(layout, config=None, seed=0, **kw):
    ctl = Controller(layout, config or ControllerConfig(), **kw)
    ctl.state.initialize_from_oracle(random_image(layout, seed), ctl.rowmap)
    return ctl


def queue(ctl, items, start=0):
    """Accept (kind, bank, row) triples in order; returns the requests."""
    out = []
    for i, (kind, bank, row) in enumerate(items, start):
        payload = (0xC0FFEE00 + i) if kind is W else None
        req = AccessRequest(i, i % 8, kind, Address(bank, row), 0, payload)
        assert ctl.accept(req)
        out.append(req)
    return out


@pytest.fixture
def rng():
    return random.Random(1234)
