"""Block-level transfer sessions and courier mission records.

A TransferSession tracks per-block state for one retrieval: either pulling
blocks from a set of same-subnet holders, or waiting for couriers to push
blocks in. Reassembled content is always verified against the FileId.
"""

from dataclasses import dataclass, field

from .core import FileId, FileMeta, compute_file_id
from .routing import assign_block_source

MISSING = "missing"
HELD = "held"

PHASE_INIT = "init"        # waiting for the root's SourceList
PHASE_PULL = "pull"        # requesting blocks from holders
PHASE_PUSH = "push"        # waiting for courier-delivered blocks
PHASE_DONE = "done"
PHASE_FAILED = "failed"


@dataclass
class TransferSession:
    session_id: str
    requester: int
    file_id: FileId
    started_at: float
    user: bool = True                    # scripted download vs courier sub-fetch
    meta: FileMeta | None = None
    phase: str = PHASE_INIT
    sources: list = field(default_factory=list)      # sorted holder ids (pull)
    wanted: list = field(default_factory=list)       # block indices needed
    block_state: dict = field(default_factory=dict)  # idx -> MISSING|HELD|(src, since)
    buffers: dict = field(default_factory=dict)      # idx -> bytes
    hops_used: int = 0
    hash_retry_used: bool = False
    reassign_used: bool = False

    def begin_pull(self, meta: FileMeta, sources, block_range, now: float) -> None:
        self.meta = meta
        self.sources = sorted(sources)
        self._set_range(block_range)
        self.phase = PHASE_PULL

    def begin_push(self, meta: FileMeta, block_range=None) -> None:
        self.meta = meta
        self.sources = []
        self._set_range(block_range)
        self.phase = PHASE_PUSH

    def _set_range(self, block_range) -> None:
        if block_range is None:
            self.wanted = list(range(self.meta.block_count))
        else:
            self.wanted = list(range(block_range[0], block_range[1]))
        self.block_state = {i: MISSING for i in self.wanted}
        self.buffers = {}

    def next_requests(self, now: float) -> list:
        """(source, index) pairs to request now: every missing block, assigned
        round-robin by index over the sorted sources."""
        out = []
        for idx in self.wanted:
            if self.block_state[idx] == MISSING and self.sources:
                src = assign_block_source(idx, self.sources)
                self.block_state[idx] = (src, now)
                out.append((src, idx))
        return out

    def on_block(self, idx: int, data: bytes) -> bool:
        if idx not in self.block_state or self.block_state[idx] == HELD:
            return False
        self.block_state[idx] = HELD
        self.buffers[idx] = data
        return True

    def drop_source(self, src: int) -> None:
        """Remove a dead source; its in-flight blocks go back to missing."""
        self.sources = [s for s in self.sources if s != src]
        for idx, state in self.block_state.items():
            if isinstance(state, tuple) and state[0] == src:
                self.block_state[idx] = MISSING

    def overdue_sources(self, now: float, timeout: float) -> list:
        dead = set()
        for state in self.block_state.values():
            if isinstance(state, tuple) and now - state[1] >= timeout:
                dead.add(state[0])
        return sorted(dead)

    def complete(self) -> bool:
        return bool(self.wanted) and all(self.block_state[i] == HELD for i in self.wanted)

    def assemble(self) -> bytes:
        return b"".join(self.buffers[i] for i in sorted(self.buffers))

    def verify(self) -> bool:
        """Full-file sessions only; partial block ranges are verified by the
        final requester once every range has landed."""
        return compute_file_id(self.assemble()) == self.file_id

    def reset_for_retry(self) -> None:
        self.hash_retry_used = True
        self.block_state = {i: MISSING for i in self.wanted}
        self.buffers = {}


# Courier mission phases
M_OUTBOUND = "outbound"            # ordered, hopping toward the target subnet
M_JOINING_TARGET = "joining_target"
M_WORKING = "working"              # fetching catalog/blocks inside the target
M_HOMEBOUND = "homebound"
M_REJOINING_HOME = "rejoining_home"


@dataclass
class CourierMission:
    mission_id: str
    kind: str                      # "catalog" | "file"
    target: str                    # rendered SSID to visit
    home: str                      # rendered SSID to return to
    home_root: int
    ttl: int = 1
    phase: str = M_OUTBOUND
    failed: bool = False
    fail_reason: str = ""
    join_retried: bool = False
    # catalog missions
    snapshot: dict | None = None
    # file missions
    file_id: FileId | None = None
    block_range: tuple | None = None
    requester: int | None = None
    session_id: str | None = None
    origin: str = ""               # user session this mission ultimately serves
    sub_session: TransferSession | None = None
    path_taken: list = field(default_factory=list)
