"""Paths to the assets bundled with the package.

Hands, styles, demos, and the PLY exports of the toy suite live under
fungrasp/assets/; scripts/make_assets.py regenerates them.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

DEFAULT_HAND = "inspire_like"

__all__ = [
    "asset_dir",
    "default_hand_path",
    "default_styles_path",
    "default_demo_path",
    "default_objects_dir",
    "DEFAULT_HAND",
]


def asset_dir() -> Path:
    return Path(str(resources.files("fungrasp").joinpath("assets")))


def default_hand_path(name: str = DEFAULT_HAND) -> Path:
    return asset_dir() / "hands" / f"{name}.json"


def default_styles_path(name: str = DEFAULT_HAND) -> Path:
    return asset_dir() / "styles" / f"{name}_styles.json"


def default_demo_path(name: str = DEFAULT_HAND) -> Path:
    return asset_dir() / "demos" / f"{name}_box_demo.json"


def default_objects_dir() -> Path:
    return asset_dir() / "objects"
