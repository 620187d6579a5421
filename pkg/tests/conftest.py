import json

import pytest

from xsim.machine import default_spec
from xsim.parser import parse_program


@pytest.fixture
def spec():
    return default_spec("startkit")


def program(main, tasks=None, channels=(), **extra):
    """Build a Program from JSON-shaped statement lists."""
    doc = {"name": extra.pop("name", "t"), "channels": list(channels),
           "tasks": tasks or {}, "main": main, **extra}
    return parse_program(json.dumps(doc))
