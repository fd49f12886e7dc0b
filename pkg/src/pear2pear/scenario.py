"""Scenario files: load, validate, and build a runnable world.

A scenario is one JSON document with the device table, the visibility edge
list, a time-ordered action script, parameter overrides and a seed. File
contents are either inline ("text"/"hex") or generator-specified
("seed" + "size") so large-file tests need no binary fixtures.
"""

import json
import random
from dataclasses import dataclass, field

from .core import FileId, compute_file_id
from .params import Params
from .sim import World


class ScenarioError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Scenario:
    seed: int = 0
    params: Params = field(default_factory=Params)
    devices: list = field(default_factory=list)   # (device_id, [(name, bytes)])
    edges: list = field(default_factory=list)
    script: list = field(default_factory=list)
    until: float = 60.0


def _content_of(raw: dict, path: str) -> bytes:
    has_text = "text" in raw
    has_hex = "hex" in raw
    has_gen = "seed" in raw or "size" in raw
    if sum([has_text, has_hex, has_gen]) != 1:
        raise ScenarioError(path, "file needs exactly one of: text, hex, seed+size")
    if has_text:
        return raw["text"].encode("utf-8")
    if has_hex:
        try:
            return bytes.fromhex(raw["hex"])
        except ValueError:
            raise ScenarioError(path, "invalid hex content")
    if "seed" not in raw or "size" not in raw:
        raise ScenarioError(path, "generated content needs both seed and size")
    size = raw["size"]
    if not isinstance(size, int) or size < 0:
        raise ScenarioError(path, "size must be a non-negative integer")
    return random.Random(raw["seed"]).randbytes(size)


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    sc = Scenario()
    sc.seed = doc.get("seed", 0)
    if not isinstance(sc.seed, int):
        raise ScenarioError("$.seed", "seed must be an integer")
    try:
        sc.params = Params().override(**doc.get("params", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError("$.params", str(exc))

    ids = set()
    names: dict[str, set] = {}
    for i, dev in enumerate(doc.get("devices", [])):
        path = f"$.devices[{i}]"
        if not isinstance(dev, dict) or "id" not in dev:
            raise ScenarioError(path, "device needs an integer id")
        device = dev["id"]
        if not isinstance(device, int) or device < 0:
            raise ScenarioError(path, "device id must be a non-negative integer")
        if device in ids:
            raise ScenarioError(path, f"duplicate device id {device}")
        ids.add(device)
        files = []
        for j, raw in enumerate(dev.get("files", [])):
            fpath = f"{path}.files[{j}]"
            if not isinstance(raw, dict) or "name" not in raw:
                raise ScenarioError(fpath, "file needs a name")
            content = _content_of(raw, fpath)
            files.append((raw["name"], content))
            names.setdefault(raw["name"], set()).add(compute_file_id(content))
        sc.devices.append((device, files))

    for i, edge in enumerate(doc.get("visibility", [])):
        path = f"$.visibility[{i}]"
        if (not isinstance(edge, list) or len(edge) != 2
                or not all(isinstance(e, int) for e in edge)):
            raise ScenarioError(path, "edge must be a pair of device ids")
        if edge[0] not in ids or edge[1] not in ids:
            raise ScenarioError(path, f"edge references undeclared device: {edge}")
        if edge[0] == edge[1]:
            raise ScenarioError(path, "no self edges")
        sc.edges.append((edge[0], edge[1]))

    last_time = None
    max_time = 0.0
    for i, row in enumerate(doc.get("script", [])):
        path = f"$.script[{i}]"
        if not isinstance(row, dict) or "time" not in row or "action" not in row:
            raise ScenarioError(path, "script row needs time and action")
        t = float(row["time"])
        if last_time is not None and t < last_time:
            raise ScenarioError(path, "script times must be nondecreasing")
        last_time = t
        max_time = max(max_time, t)
        action = row["action"]
        device = row.get("device")
        if device not in ids:
            raise ScenarioError(path, f"undeclared device: {device}")
        if action == "arrive":
            sc.script.append({"time": t, "action": "arrive", "device": device})
        elif action == "depart":
            sc.script.append({"time": t, "action": "depart", "device": device,
                              "silent": bool(row.get("silent", False))})
        elif action == "search":
            if "query" not in row:
                raise ScenarioError(path, "search needs a query")
            sc.script.append({"time": t, "action": "search", "device": device,
                              "query": row["query"], "by": row.get("by", "name")})
        elif action == "download":
            ref = row.get("file")
            if not isinstance(ref, str):
                raise ScenarioError(path, "download needs a file reference")
            file_id = _resolve_file(ref, names, path)
            sc.script.append({"time": t, "action": "download", "device": device,
                              "file_id": file_id})
        else:
            raise ScenarioError(path, f"unknown action: {action}")

    sc.until = float(doc.get("until", max_time + 60.0))
    return sc


def _resolve_file(ref: str, names: dict, path: str) -> FileId:
    if ref.startswith("id:"):
        try:
            return FileId.from_hex(ref[3:])
        except ValueError:
            raise ScenarioError(path, f"bad file id: {ref}")
    fids = names.get(ref)
    if not fids:
        raise ScenarioError(path, f"file reference matches nothing: {ref}")
    if len(fids) > 1:
        raise ScenarioError(path, f"file reference is ambiguous: {ref}")
    return next(iter(fids))


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}:{exc.lineno}", exc.msg)
    return parse_scenario(doc)


def build_world(sc: Scenario, seed: int | None = None) -> World:
    world = World(params=sc.params, seed=sc.seed if seed is None else seed)
    scripted_arrivals = {row["device"] for row in sc.script
                        if row["action"] == "arrive"}
    for device, files in sc.devices:
        world.add_device(device, files)
        if device not in scripted_arrivals:
            world.schedule(0.0, "arrive", device=device)
    for a, b in sc.edges:
        world.add_edge(a, b)
    for row in sc.script:
        data = {k: v for k, v in row.items() if k not in ("time", "action")}
        world.schedule(row["time"], row["action"], **data)
    return world


def run_scenario(sc: Scenario, seed: int | None = None,
                 until: float | None = None) -> World:
    world = build_world(sc, seed=seed)
    world.run_until(sc.until if until is None else until)
    return world
