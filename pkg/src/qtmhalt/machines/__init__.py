"""Example machines shipped with the package."""
from __future__ import annotations

from importlib import resources

from ..machine import MachineSpec, parse_machine

BUNDLED = ("two_phase", "permutation", "halt_violator")


def bundled_text(name: str) -> str:
    name = name.removesuffix(".qtm")
    if name not in BUNDLED:
        raise KeyError(f"no bundled machine named {name!r}")
    return resources.files(__package__).joinpath(f"{name}.qtm").read_text(encoding="utf-8")


def load_bundled(name: str) -> MachineSpec:
    """Parse one of :data:`BUNDLED` (with or without the ``.qtm`` suffix)."""
    return parse_machine(bundled_text(name))
