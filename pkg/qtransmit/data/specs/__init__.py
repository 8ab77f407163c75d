"""Experiment specs bundled with the package."""

import os
from typing import List

from qtransmit.core.errors import ArgumentError

SPEC_DIR = os.path.dirname(os.path.abspath(__file__))


def list_specs() -> List[str]:
    """Names of the bundled specs, without the .toml suffix."""
    return sorted(f[:-5] for f in os.listdir(SPEC_DIR) if f.endswith(".toml"))


def spec_path(name: str) -> str:
    path = os.path.join(SPEC_DIR, name if name.endswith(".toml") else f"{name}.toml")
    if not os.path.isfile(path):
        raise ArgumentError(f"no bundled spec named {name!r} (have: {', '.join(list_specs())})")
    return path


def load_bundled(name: str):
    """Parse and validate a bundled spec into an ExperimentSpec."""
    from qtransmit.services.experiment import load_spec

    return load_spec(spec_path(name))
