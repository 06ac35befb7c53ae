"""Tools for building style-tagged speech datasets: taxonomy, tagging stages, splits and evaluation."""

from stylecaps.corpus import SpeakerRecord, StylePromptSet, UtteranceRecord, read_manifest, write_manifest
from stylecaps.taxonomy import load_taxonomy

__version__ = "0.1.0"

__all__ = [
    "SpeakerRecord",
    "StylePromptSet",
    "UtteranceRecord",
    "load_taxonomy",
    "read_manifest",
    "write_manifest",
]
