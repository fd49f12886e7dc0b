"""Root-held catalogs: which content exists where, and which neighbor subnets
are reachable through which members.

Remote knowledge arrives as courier-fetched snapshots and is merged with a
minimum-hop rule; stale records age out by TTL.
"""

from dataclasses import dataclass, field

from .core import FileId, FileMeta


@dataclass
class RemoteRecord:
    subnet: str          # rendered SSID of the subnet holding copies
    hops: int            # inter-subnet distance from here (>= 1)
    gateway: str         # adjacent subnet on the shortest known path
    holder_count: int
    last_refresh: float


@dataclass
class CatalogEntry:
    meta: FileMeta
    holders: set = field(default_factory=set)            # local member DeviceIds
    remote: dict = field(default_factory=dict)           # subnet ssid -> RemoteRecord


class NetworkFileCatalog:
    def __init__(self):
        self.entries: dict[FileId, CatalogEntry] = {}

    @classmethod
    def init_from(cls, root_id: int, metas) -> "NetworkFileCatalog":
        cat = cls()
        cat.register_files(root_id, metas)
        return cat

    def _entry(self, meta: FileMeta) -> CatalogEntry:
        entry = self.entries.get(meta.file_id)
        if entry is None:
            entry = CatalogEntry(meta=FileMeta(meta.file_id, set(meta.names), meta.size, meta.block_count))
            self.entries[meta.file_id] = entry
        else:
            entry.meta.names |= meta.names
        return entry

    def register_files(self, peer: int, metas) -> None:
        for meta in metas:
            self._entry(meta).holders.add(peer)

    def apply_file_change(self, peer: int, added, removed) -> None:
        self.register_files(peer, added)
        for file_id in removed:
            entry = self.entries.get(file_id)
            if entry is None:
                continue
            entry.holders.discard(peer)
            if not entry.holders and not entry.remote:
                del self.entries[file_id]

    def drop_holder(self, peer: int) -> None:
        for file_id in list(self.entries):
            entry = self.entries[file_id]
            entry.holders.discard(peer)
            if not entry.holders and not entry.remote:
                del self.entries[file_id]

    def expire_remote(self, now: float, ttl: float) -> None:
        for file_id in list(self.entries):
            entry = self.entries[file_id]
            for subnet in list(entry.remote):
                if now - entry.remote[subnet].last_refresh >= ttl:
                    del entry.remote[subnet]
            if not entry.holders and not entry.remote:
                del self.entries[file_id]

    def lookup_name(self, name: str) -> list:
        return sorted(fid for fid, e in self.entries.items() if name in e.meta.names)

    def snapshot(self, home_ssid: str) -> dict:
        """Wire-encodable snapshot of the whole catalog, deterministically sorted."""
        entries = []
        for file_id in sorted(self.entries):
            e = self.entries[file_id]
            entries.append({
                "file_id": file_id.digest,
                "names": sorted(e.meta.names),
                "size": e.meta.size,
                "block_count": e.meta.block_count,
                "holders": len(e.holders),
                "remote": [
                    {"subnet": s, "hops": r.hops, "holders": r.holder_count}
                    for s, r in sorted(e.remote.items())
                ],
            })
        return {"subnet": home_ssid, "entries": entries}

    def merge_snapshot(self, snap: dict, via_gateway: str, home_ssid: str, now: float) -> None:
        """Fold a courier-fetched snapshot in, adding one hop per jump and
        keeping the minimum-hop record per (file, subnet). Local holders are
        never touched."""
        origin = snap["subnet"]
        for raw in snap["entries"]:
            meta = FileMeta(FileId(raw["file_id"]), set(raw["names"]),
                            raw["size"], raw["block_count"])
            candidates = []
            if raw["holders"] > 0:
                candidates.append((origin, 1, raw["holders"]))
            for rec in raw["remote"]:
                candidates.append((rec["subnet"], rec["hops"] + 1, rec["holders"]))
            candidates = [c for c in candidates if c[0] != home_ssid]
            if not candidates:
                continue
            entry = self._entry(meta)
            for subnet, hops, holders in candidates:
                existing = entry.remote.get(subnet)
                if existing is None or hops < existing.hops:
                    entry.remote[subnet] = RemoteRecord(subnet, hops, via_gateway, holders, now)
                elif hops == existing.hops:
                    existing.holder_count = holders
                    existing.gateway = via_gateway
                    existing.last_refresh = now
                # hops > existing.hops: minimum retained, not refreshed

    def drop_via_gateways(self, gateways: set) -> None:
        """Remove remote records routed through now-unreachable gateways."""
        for file_id in list(self.entries):
            entry = self.entries[file_id]
            for subnet in list(entry.remote):
                if entry.remote[subnet].gateway in gateways:
                    del entry.remote[subnet]
            if not entry.holders and not entry.remote:
                del self.entries[file_id]

    def drop_subnet(self, subnet: str) -> None:
        for file_id in list(self.entries):
            entry = self.entries[file_id]
            entry.remote.pop(subnet, None)
            if not entry.holders and not entry.remote:
                del self.entries[file_id]


@dataclass
class NeighborInfo:
    reachable_by: set = field(default_factory=set)
    last_seen: float = 0.0
    assigned: dict = field(default_factory=dict)  # peer -> missions handed out


class SubnetCatalog:
    def __init__(self):
        self.neighbors: dict[str, NeighborInfo] = {}

    def report_scan(self, peer: int, visible, now: float) -> None:
        """Record which foreign subnets `peer` can currently reach; subnets it
        no longer reports lose it from reachable_by."""
        visible = set(visible)
        for ssid in visible:
            info = self.neighbors.setdefault(ssid, NeighborInfo())
            info.reachable_by.add(peer)
            info.last_seen = now
        for ssid, info in self.neighbors.items():
            if ssid not in visible:
                info.reachable_by.discard(peer)

    def drop_peer(self, peer: int) -> None:
        for info in self.neighbors.values():
            info.reachable_by.discard(peer)

    def expire(self, now: float, ttl: float) -> list:
        """Purge neighbors unseen for `ttl`; returns the purged SSIDs."""
        gone = [s for s, info in self.neighbors.items() if now - info.last_seen >= ttl]
        for ssid in gone:
            del self.neighbors[ssid]
        return gone
