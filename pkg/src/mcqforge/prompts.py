"""Loading of the prompt templates shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Return the text of templates/<name>.txt."""
    return (
        resources.files("mcqforge")
        .joinpath("templates", f"{name}.txt")
        .read_text(encoding="utf-8")
    )


def render(template: str, **slots) -> str:
    return template.format(**slots)
