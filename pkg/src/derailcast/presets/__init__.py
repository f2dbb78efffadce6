"""Named configuration presets for users running real LLM backends.

None of the toy backends read these; they document the full-scale settings.
"""

from __future__ import annotations

from importlib import resources

import yaml


def list_presets() -> list[str]:
    return sorted(
        p.name[: -len(".yaml")]
        for p in resources.files(__name__).iterdir()
        if p.name.endswith(".yaml")
    )


def load_preset(name: str) -> dict:
    path = resources.files(__name__) / f"{name}.yaml"
    if not path.is_file():
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return yaml.safe_load(path.read_text(encoding="utf-8"))
