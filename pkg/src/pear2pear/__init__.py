"""Pear2Pear-On-Wifi: hybrid peer-to-peer file sharing over simulated wifi
hotspots, with content-addressed catalogs and courier-based inter-subnet
retrieval."""

from .core import FileId, FileMeta, compute_file_id, derive_passphrase, parse_ssid, render_ssid
from .params import Params
from .scenario import Scenario, ScenarioError, load_scenario, run_scenario
from .sim import World

__version__ = "0.1.0"

__all__ = [
    "FileId", "FileMeta", "Params", "Scenario", "ScenarioError", "World",
    "compute_file_id", "derive_passphrase", "load_scenario", "parse_ssid",
    "render_ssid", "run_scenario",
]
