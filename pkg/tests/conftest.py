import random

import pytest

from brickcms.flowkey import FlowKey


def random_key(rng: random.Random) -> FlowKey:
    return FlowKey(rng.getrandbits(32), rng.getrandbits(32), rng.getrandbits(16),
                   rng.getrandbits(16), rng.getrandbits(8))


@pytest.fixture
def rng():
    return random.Random(1234)
