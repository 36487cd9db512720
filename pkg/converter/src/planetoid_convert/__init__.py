"""Converter from the distributed citation-network files to the plain-text
dataset format consumed by the gden package."""

from .convert import (
    DATASET_NAMES,
    ConvertError,
    ConvertReport,
    PlanetoidSource,
    assemble_bundle,
    convert_planetoid,
    read_planetoid,
)
from .cli import run_cli

__all__ = [
    "DATASET_NAMES",
    "ConvertError",
    "ConvertReport",
    "PlanetoidSource",
    "assemble_bundle",
    "convert_planetoid",
    "read_planetoid",
    "run_cli",
]

__version__ = "0.1.0"
