"""Per-device protocol state machine.

One Node instance drives one device through every role: scanning, joining,
subnet member, or hotspot root. Handlers receive an event plus the current
simulation time and return a list of actions (frames to send, hops, timers,
trace notes) for the host to execute; nodes never touch the world directly.
"""

from dataclasses import dataclass

from . import core, routing, transfer
from .actions import HopTo, Note, RequestScan, Send, StartTimer
from .catalog import NetworkFileCatalog, SubnetCatalog
from .core import FileId, FileMeta, parse_ssid, render_ssid
from .frames import PROTOCOL_VERSION, Frame, FrameKind as K
from .params import Params

SCANNING = "scanning"
JOINING = "joining"
MEMBER = "member"
ROOT = "root"


@dataclass
class MembershipRecord:
    peer: int
    last_seen: float
    leaving_since: float | None = None


@dataclass
class OutstandingOrder:
    mission_id: str
    courier: int
    target: str
    kind: str                      # "catalog" | "file"
    issued_at: float
    ttl: int = 1
    session_id: str = ""
    origin: str = ""
    requester: int | None = None
    file_id: FileId | None = None
    block_range: tuple | None = None


@dataclass
class WantedEntry:
    key: str
    query: str
    by: str
    requester: int
    emitted: int = 0


class Node:
    def __init__(self, device: int, params: Params, shared_files=()):
        self.device = device
        self.p = params
        self.files: dict[FileId, bytes] = {}
        self.metas: dict[FileId, FileMeta] = {}
        for name, content in shared_files:
            self.store_file(name, content)

        self.role = SCANNING
        self.attached: str | None = None
        self.active = True
        self.generation = 0
        self._counter = 0

        # joining
        self.join_target: str | None = None
        self.join_candidates: list = []
        self.join_tried: set = set()
        self.join_retried = False

        # member
        self.home_root: int | None = None
        self.last_root_seen = 0.0

        # root
        self.ssid: str | None = None
        self.members: dict[int, MembershipRecord] = {}
        self.catalog: NetworkFileCatalog | None = None
        self.subnets: SubnetCatalog | None = None
        self.outstanding: dict[str, OutstandingOrder] = {}
        self.wanted: dict[str, WantedEntry] = {}
        self.swarm: dict[str, dict] = {}
        self._courier_cycle_n = 0

        # courier / transfer
        self.mission: transfer.CourierMission | None = None
        self.sessions: dict[str, transfer.TransferSession] = {}

    # ------------------------------------------------------------------ utils

    def store_file(self, name: str, content: bytes) -> FileMeta:
        meta = core.make_meta(name, content, self.p.block_size)
        if meta.file_id in self.metas:
            self.metas[meta.file_id].names |= meta.names
        else:
            self.files[meta.file_id] = content
            self.metas[meta.file_id] = meta
        return self.metas[meta.file_id]

    def _new_id(self) -> str:
        self._counter += 1
        return f"{self.device}-{self._counter}"

    def _meta_payload(self, meta: FileMeta) -> dict:
        return {"file_id": meta.file_id.digest, "names": sorted(meta.names),
                "size": meta.size, "block_count": meta.block_count}

    @staticmethod
    def _meta_from_payload(raw: dict) -> FileMeta:
        return FileMeta(FileId(raw["file_id"]), set(raw["names"]),
                        raw["size"], raw["block_count"])

    def _send(self, out, kind, dst, payload, now):
        """Send a frame, or dispatch internally when the destination is this
        device (a root talking to itself never crosses the radio)."""
        frame = Frame(kind=kind, src=self.device, dst=dst, payload=payload)
        if dst == self.device:
            self._dispatch_frame(now, frame, out)
        else:
            out.append(Send(frame))

    def detach(self):
        """Called by the world when a hop physically leaves the hotspot."""
        self.attached = None

    # --------------------------------------------------------------- arrivals

    def on_arrive(self, now: float) -> list:
        out = [Note("arrive", {})]
        self.role = SCANNING
        out.append(RequestScan(0.0))
        return out

    def on_depart(self, now: float, silent: bool) -> list:
        out = [Note("depart", {"silent": silent})]
        if not silent and self.role == MEMBER and self.attached and self.home_root is not None:
            self._send(out, K.LEAVE_NOTICE, self.home_root, {}, now)
        return out

    # ------------------------------------------------------------------- scan

    def on_scan(self, now: float, ssids: list) -> list:
        out = []
        if self.role == SCANNING:
            candidates = [s for s in ssids if parse_ssid(s) is not None]
            self.join_candidates = candidates
            self.join_tried = set()
            self.join_retried = False
            if candidates:
                self._begin_join(now, candidates[0], out)
            else:
                self._become_root(now, out)
        elif self.role == MEMBER and self.mission is None and self.home_root is not None:
            foreign = [s for s in ssids if parse_ssid(s) is not None and s != self.attached]
            self._send(out, K.SCAN_REPORT, self.home_root, {"visible": foreign}, now)
        return out

    def _begin_join(self, now, ssid, out):
        self.role = JOINING
        self.join_target = ssid
        self.join_tried.add(ssid)
        root_id = parse_ssid(ssid).root_id
        self._send(out, K.JOIN_REQUEST, root_id,
                   {"ssid": ssid, "wants_catalog": False}, now)
        out.append(StartTimer(self.p.join_timeout, f"jointo:{ssid}"))

    def _become_root(self, now, out):
        self.generation += 1
        nonce = core.allocate_nonce(self.device, self.generation)
        self.ssid = render_ssid(core.Ssid(self.device, nonce))
        self.role = ROOT
        self.attached = self.ssid
        self.home_root = None
        self.members = {}
        self.catalog = NetworkFileCatalog.init_from(self.device, self.metas.values())
        self.subnets = SubnetCatalog()
        self.outstanding = {}
        self.wanted = {}
        self.swarm = {}
        self._courier_cycle_n = 0
        out.append(StartTimer(self.p.ping_interval, "ping"))
        out.append(StartTimer(self.p.courier_period, "courier"))
        out.append(Note("role", {"role": ROOT, "ssid": self.ssid}))

    def _become_member(self, now, ssid, root_id, out):
        self.role = MEMBER
        self.attached = ssid
        self.home_root = root_id
        self.last_root_seen = now
        self.join_target = None
        files = [self._meta_payload(m) for m in
                 sorted(self.metas.values(), key=lambda m: m.file_id)]
        self._send(out, K.FILE_LIST, root_id, {"files": files, "removed": []}, now)
        out.append(RequestScan(0.0))
        out.append(StartTimer(self.p.scan_period, "scanreport"))
        out.append(StartTimer(self.p.ping_interval, "rootcheck"))
        out.append(Note("role", {"role": MEMBER, "ssid": ssid}))

    def _to_scanning(self, now, out, reason):
        out.append(Note("root-lost", {"reason": reason}))
        self.role = SCANNING
        self.attached = None
        self.home_root = None
        self.mission = None
        for sid in sorted(self.sessions):
            sess = self.sessions[sid]
            if sess.phase not in (transfer.PHASE_DONE, transfer.PHASE_FAILED):
                sess.phase = transfer.PHASE_FAILED
                out.append(Note("download-failed", {"session": sid, "reason": reason}))
        out.append(RequestScan(0.0))

    # ------------------------------------------------------------------ frames

    def on_frame(self, now: float, frame: Frame) -> list:
        out = []
        if frame.version != PROTOCOL_VERSION:
            out.append(Note("bad-version", {"version": frame.version}))
            return out
        self._dispatch_frame(now, frame, out)
        return out

    def _dispatch_frame(self, now, frame, out):
        src = frame.src
        if self.role == ROOT and src in self.members:
            self.members[src].last_seen = now
        if self.role == MEMBER and src == self.home_root:
            self.last_root_seen = now

        handler = {
            K.JOIN_REQUEST: self._h_join_request,
            K.JOIN_ACCEPT: self._h_join_accept,
            K.JOIN_REJECT: self._h_join_reject,
            K.FILE_LIST: self._h_file_list,
            K.SCAN_REPORT: self._h_scan_report,
            K.LEAVE_NOTICE: self._h_leave_notice,
            K.PING: self._h_ping,
            K.PONG: self._h_pong,
            K.SEARCH_REQUEST: self._h_search_request,
            K.SEARCH_RESPONSE: self._h_search_response,
            K.DOWNLOAD_REQUEST: self._h_download_request,
            K.SOURCE_LIST: self._h_source_list,
            K.BLOCK_REQUEST: self._h_block_request,
            K.BLOCK_RESPONSE: self._h_block_response,
            K.CATALOG_SNAPSHOT: self._h_catalog_snapshot,
            K.COURIER_ORDER: self._h_courier_order,
            K.WANTED_FILE: self._h_wanted_file,
        }[frame.kind]
        handler(now, src, frame.payload, out)

    # kernel: membership ----------------------------------------------------

    def _active_members(self):
        return [p for p, r in sorted(self.members.items()) if r.leaving_since is None]

    def _h_join_request(self, now, src, payload, out):
        if self.role != ROOT or payload.get("ssid") != self.ssid:
            return
        wants_catalog = bool(payload.get("wants_catalog"))
        rec = self.members.get(src)
        if rec is not None:
            rec.leaving_since = None
            rec.last_seen = now
        elif len(self._active_members()) < self.p.max_members:
            self.members[src] = MembershipRecord(src, now)
            out.append(Note("admit", {"peer": src}))
        else:
            self._send(out, K.JOIN_REJECT, src, {"ssid": self.ssid}, now)
            out.append(Note("reject", {"peer": src}))
            return
        self._send(out, K.JOIN_ACCEPT, src, {"ssid": self.ssid, "root": self.device}, now)
        if wants_catalog:
            # the joiner only attaches once the accept lands; send the
            # snapshot after that round trip so it is deliverable
            out.append(StartTimer(2 * self.p.link_latency, f"snap:{src}"))

    def _h_join_accept(self, now, src, payload, out):
        m = self.mission
        if m is not None and m.phase == transfer.M_JOINING_TARGET \
                and payload.get("ssid") == m.target:
            self.attached = m.target
            m.path_taken.append(m.target)
            m.phase = transfer.M_WORKING
            if m.kind == "file":
                m.sub_session = transfer.TransferSession(
                    session_id=f"{m.mission_id}/sub", requester=self.device,
                    file_id=m.file_id, started_at=now, user=False)
                self._send(out, K.DOWNLOAD_REQUEST, src,
                           {"file_id": m.file_id.digest,
                            "session_id": m.sub_session.session_id,
                            "origin": m.origin,
                            "ttl": m.ttl - 1, "user": False}, now)
            out.append(StartTimer(self.p.mission_timeout, f"mwork:{m.mission_id}"))
            return
        if m is not None and m.phase == transfer.M_REJOINING_HOME \
                and payload.get("ssid") == m.home:
            self.attached = m.home
            self._deliver_mission(now, out)
            return
        if self.role == JOINING and payload.get("ssid") == self.join_target:
            self._become_member(now, self.join_target, src, out)

    def _h_join_reject(self, now, src, payload, out):
        m = self.mission
        if m is not None and m.phase == transfer.M_JOINING_TARGET:
            if not m.join_retried:
                m.join_retried = True
                out.append(StartTimer(self.p.hop_latency, f"mretry:{m.mission_id}"))
            else:
                self._mission_abort(now, out, "join-rejected")
            return
        if m is not None and m.phase == transfer.M_REJOINING_HOME:
            self._to_scanning(now, out, "rejoin-rejected")
            return
        if self.role == JOINING and payload.get("ssid") == self.join_target:
            untried = [s for s in self.join_candidates if s not in self.join_tried]
            if not self.join_retried and untried:
                self.join_retried = True
                self._begin_join(now, untried[0], out)
            else:
                self._become_root(now, out)

    def _h_leave_notice(self, now, src, payload, out):
        if self.role != ROOT:
            return
        rec = self.members.get(src)
        if rec is None or rec.leaving_since is not None:
            return
        rec.leaving_since = now
        self.subnets.drop_peer(src)
        out.append(StartTimer(self.p.leave_countdown, f"leavep:{src}:{now:.6f}"))
        out.append(Note("leaving", {"peer": src}))

    def _purge_member(self, now, peer, reason, out):
        self.members.pop(peer, None)
        self.catalog.drop_holder(peer)
        self.subnets.drop_peer(peer)
        out.append(Note("purge", {"peer": peer, "reason": reason}))

    def _h_ping(self, now, src, payload, out):
        if self.role in (MEMBER, JOINING) or self.mission is not None:
            self._send(out, K.PONG, src, {}, now)

    def _h_pong(self, now, src, payload, out):
        pass  # last_seen already refreshed in the dispatch preamble

    # catalogs --------------------------------------------------------------

    def _h_file_list(self, now, src, payload, out):
        if self.role != ROOT or src not in self.members:
            return
        added = [self._meta_from_payload(raw) for raw in payload.get("files", [])]
        removed = [FileId(d) for d in payload.get("removed", [])]
        self.catalog.apply_file_change(src, added, removed)
        self._check_wanted(now, added, out)

    def _h_scan_report(self, now, src, payload, out):
        if self.role != ROOT or src not in self.members:
            return
        if self.members[src].leaving_since is not None:
            return
        self.subnets.report_scan(src, payload.get("visible", []), now)

    def _h_catalog_snapshot(self, now, src, payload, out):
        m = self.mission
        if m is not None and m.kind == "catalog" and m.phase == transfer.M_WORKING:
            m.snapshot = payload["snapshot"]
            self._leave_target(now, src, out)
            return
        if self.role == ROOT:
            mid = payload.get("mission_id", "")
            order = self.outstanding.pop(mid, None)
            if order is None:
                return
            self.catalog.merge_snapshot(payload["snapshot"], payload["via"],
                                        self.ssid, now)
            out.append(Note("catalog-merge", {"via": payload["via"]}))

    # search and wanted -----------------------------------------------------

    def on_user_search(self, now: float, query: str, by: str = "name") -> list:
        out = [Note("search", {"query": query, "by": by})]
        if self.role == ROOT:
            self._h_search_request(now, self.device, {"query": query, "by": by}, out)
        elif self.role == MEMBER and self.home_root is not None:
            self._send(out, K.SEARCH_REQUEST, self.home_root,
                       {"query": query, "by": by}, now)
        else:
            out.append(Note("search-result", {"ok": False, "count": 0, "query": query}))
        return out

    def _search_results(self, query, by):
        if by == "id":
            try:
                fids = [FileId.from_hex(query)]
            except ValueError:
                fids = []
            fids = [f for f in fids if f in self.catalog.entries]
        else:
            fids = self.catalog.lookup_name(query)
        results = []
        for fid in fids:
            entry = self.catalog.entries[fid]
            if entry.holders:
                locality, hops = "local", 0
            elif entry.remote:
                hops = min(r.hops for r in entry.remote.values())
                locality = "remote"
            else:
                continue
            results.append({"file_id": fid.digest, "names": sorted(entry.meta.names),
                            "size": entry.meta.size,
                            "block_count": entry.meta.block_count,
                            "locality": locality, "hops": hops})
        return results

    def _h_search_request(self, now, src, payload, out):
        if self.role != ROOT:
            return
        query = payload.get("query", "")
        by = payload.get("by", "name")
        results = self._search_results(query, by)
        self._send(out, K.SEARCH_RESPONSE, src,
                   {"ok": bool(results), "results": results,
                    "query": query, "by": by}, now)
        if not results:
            self._start_wanted(now, query, by, src, out)

    def _h_search_response(self, now, src, payload, out):
        out.append(Note("search-result", {"ok": payload.get("ok", False),
                                          "count": len(payload.get("results", [])),
                                          "query": payload.get("query", "")}))

    def _start_wanted(self, now, query, by, requester, out):
        key = f"{by}:{query}"
        if key in self.wanted:
            return
        self.wanted[key] = WantedEntry(key=key, query=query, by=by, requester=requester)
        self._emit_wanted(now, key, out)

    def _emit_wanted(self, now, key, out):
        entry = self.wanted.get(key)
        if entry is None:
            return
        entry.emitted += 1
        out.append(Note("wanted-emit", {"key": key, "n": entry.emitted}))
        for peer in self._active_members():
            self._send(out, K.WANTED_FILE, peer,
                       {"query": entry.query, "by": entry.by}, now)
        if entry.emitted >= self.p.wanted_max + 1:
            del self.wanted[key]
            out.append(Note("wanted-dead", {"key": key}))
        else:
            out.append(StartTimer(self.p.wanted_repeat, f"wanted:{key}"))

    def _check_wanted(self, now, added_metas, out):
        for key in sorted(self.wanted):
            entry = self.wanted[key]
            hit = None
            for meta in added_metas:
                if entry.by == "name" and entry.query in meta.names:
                    hit = meta
                elif entry.by == "id" and entry.query == meta.file_id.hex:
                    hit = meta
            if hit is None:
                continue
            results = self._search_results(entry.query, entry.by)
            self._send(out, K.SEARCH_RESPONSE, entry.requester,
                       {"ok": True, "results": results,
                        "query": entry.query, "by": entry.by}, now)
            del self.wanted[key]
            out.append(Note("wanted-resolved", {"key": key}))

    def _h_wanted_file(self, now, src, payload, out):
        out.append(Note("wanted-seen", {"query": payload.get("query", "")}))

    # download orchestration ------------------------------------------------

    def on_user_download(self, now: float, file_id: FileId) -> list:
        out = []
        sid = self._new_id()
        out.append(Note("download-start", {"session": sid, "file": file_id.short}))
        if file_id in self.files:
            # Already holding identical content: complete with zero frames.
            out.append(Note("download-source", {"session": sid, "mode": "duplicate",
                                                "hops": 0}))
            out.append(Note("download-complete", {"session": sid,
                                                  "file": file_id.short,
                                                  "duplicate": True}))
            return out
        if self.role not in (MEMBER, ROOT):
            out.append(Note("download-failed", {"session": sid, "reason": "unattached"}))
            return out
        sess = transfer.TransferSession(session_id=sid, requester=self.device,
                                        file_id=file_id, started_at=now)
        self.sessions[sid] = sess
        target = self.device if self.role == ROOT else self.home_root
        self._send(out, K.DOWNLOAD_REQUEST, target,
                   {"file_id": file_id.digest, "session_id": sid, "user": True}, now)
        out.append(StartTimer(self.p.session_timeout, f"sessdl:{sid}"))
        return out

    def _eligible_couriers(self, gateway, exclude=()):
        busy = {o.courier for o in self.outstanding.values()}
        info = self.subnets.neighbors.get(gateway)
        if info is None:
            return set()
        ok = set()
        for peer in info.reachable_by:
            rec = self.members.get(peer)
            if rec is None or rec.leaving_since is not None:
                continue
            if peer in busy or peer in exclude:
                continue
            ok.add(peer)
        return ok

    def _issue_order(self, now, courier, target, kind, out, ttl=1, session_id="",
                     origin="", requester=None, file_id=None, block_range=None):
        mid = self._new_id()
        order = OutstandingOrder(mission_id=mid, courier=courier, target=target,
                                 kind=kind, issued_at=now, ttl=ttl,
                                 session_id=session_id, origin=origin or session_id,
                                 requester=requester,
                                 file_id=file_id, block_range=block_range)
        self.outstanding[mid] = order
        payload = {"mission": kind, "target": target, "mission_id": mid, "ttl": ttl,
                   "session_id": session_id, "origin": order.origin}
        if file_id is not None:
            payload["file_id"] = file_id.digest
            payload["requester"] = requester
        if block_range is not None:
            payload["range"] = [block_range[0], block_range[1]]
        self._send(out, K.COURIER_ORDER, courier, payload, now)
        out.append(StartTimer(self.p.mission_timeout, f"mdeadline:{mid}"))
        out.append(Note("courier-assign", {"courier": courier, "target": target,
                                           "mission": kind, "session": session_id}))
        return order

    def _h_download_request(self, now, src, payload, out):
        if self.role != ROOT:
            return
        if src != self.device and src not in self.members:
            return
        file_id = FileId(payload["file_id"])
        sid = payload["session_id"]
        origin = payload.get("origin") or sid
        req_ttl = payload.get("ttl", self.p.courier_ttl)
        is_user = payload.get("user", True)
        sel = routing.select_source(self.catalog, file_id)

        if isinstance(sel, routing.Local):
            holders = [h for h in sel.holders if h != src]
            meta = self.catalog.entries[file_id].meta
            if not holders:
                self._send(out, K.SOURCE_LIST, src,
                           {"ok": False, "session_id": sid, "reason": "no-source"}, now)
                return
            self._send(out, K.SOURCE_LIST, src,
                       {"ok": True, "mode": "pull", "session_id": sid,
                        "file_id": file_id.digest, "sources": holders, "hops": 0,
                        "meta": self._meta_payload(meta)}, now)
            return

        if isinstance(sel, routing.Remote):
            meta = self.catalog.entries[file_id].meta
            if req_ttl < 1:
                self._send(out, K.SOURCE_LIST, src,
                           {"ok": False, "session_id": sid, "reason": "ttl"}, now)
                return
            eligible = self._eligible_couriers(sel.gateway, exclude={src})
            swarm_ok = (is_user and sel.hops == 1 and
                        meta.block_count >= self.p.swarm_threshold and len(eligible) >= 2)
            if swarm_ok:
                k = min(len(eligible), self.p.max_swarm)
                ranges = routing.partition_blocks(meta.block_count, k)
                group = {"reassigned": False, "requester": src, "pending": set(),
                         "gateway": sel.gateway, "file_id": file_id}
                self.swarm[sid] = group
                for rng in ranges:
                    courier = routing.designate_courier(
                        self.subnets, sel.gateway,
                        eligible=self._eligible_couriers(sel.gateway, exclude={src}))
                    if courier is None:
                        continue
                    order = self._issue_order(now, courier, sel.gateway, "file", out,
                                              ttl=req_ttl, session_id=sid,
                                              origin=origin, requester=src,
                                              file_id=file_id, block_range=rng)
                    group["pending"].add(order.mission_id)
            else:
                courier = routing.designate_courier(self.subnets, sel.gateway,
                                                    eligible=eligible)
                if courier is None:
                    self._send(out, K.SOURCE_LIST, src,
                               {"ok": False, "session_id": sid,
                                "reason": "no-courier"}, now)
                    return
                self._issue_order(now, courier, sel.gateway, "file", out,
                                  ttl=req_ttl, session_id=sid, origin=origin,
                                  requester=src, file_id=file_id)
            self._send(out, K.SOURCE_LIST, src,
                       {"ok": True, "mode": "push", "session_id": sid,
                        "file_id": file_id.digest, "hops": sel.hops,
                        "meta": self._meta_payload(meta)}, now)
            return

        self._send(out, K.SOURCE_LIST, src,
                   {"ok": False, "session_id": sid, "reason": "notfound"}, now)
        if is_user:
            self._start_wanted(now, file_id.hex, "id", src, out)

    # requester / courier reception of SourceList ---------------------------

    def _h_source_list(self, now, src, payload, out):
        sid = payload.get("session_id", "")
        sess = self.sessions.get(sid)
        if sess is not None and sess.phase == transfer.PHASE_INIT:
            self._session_source_list(now, sess, payload, out, user=True)
            return
        m = self.mission
        if m is not None and m.sub_session is not None \
                and m.sub_session.session_id == sid \
                and m.sub_session.phase == transfer.PHASE_INIT:
            self._session_source_list(now, m.sub_session, payload, out, user=False)

    def _session_source_list(self, now, sess, payload, out, user):
        if not payload.get("ok"):
            self._session_fail(now, sess, payload.get("reason", "refused"), out)
            return
        meta = self._meta_from_payload(payload["meta"])
        sess.hops_used = payload.get("hops", 0)
        block_range = None if user else (self.mission.block_range if self.mission else None)
        out.append(Note("download-source", {"session": sess.session_id,
                                            "mode": payload["mode"],
                                            "hops": sess.hops_used}))
        if payload["mode"] == "pull":
            sess.begin_pull(meta, payload["sources"], block_range, now)
            self._session_pump(now, sess, out)
            out.append(StartTimer(self.p.block_timeout, f"sess:{sess.session_id}"))
        else:
            sess.begin_push(meta, block_range)

    def _session_pump(self, now, sess, out):
        for src, idx in sess.next_requests(now):
            self._send(out, K.BLOCK_REQUEST, src,
                       {"file_id": sess.file_id.digest, "index": idx,
                        "session_id": sess.session_id}, now)

    # block plane -----------------------------------------------------------

    def _h_block_request(self, now, src, payload, out):
        file_id = FileId(payload["file_id"])
        idx = payload["index"]
        sid = payload.get("session_id", "")
        content = self.files.get(file_id)
        if content is None or not 0 <= idx < core.block_count_for(len(content), self.p.block_size):
            self._send(out, K.BLOCK_RESPONSE, src,
                       {"ok": False, "file_id": file_id.digest, "index": idx,
                        "session_id": sid}, now)
            return
        data = core.block_payload(content, idx, self.p.block_size)
        self._send(out, K.BLOCK_RESPONSE, src,
                   {"ok": True, "file_id": file_id.digest, "index": idx,
                    "data": data, "session_id": sid}, now)

    def _h_block_response(self, now, src, payload, out):
        sid = payload.get("session_id", "")
        sess = self.sessions.get(sid)
        user = sess is not None
        if sess is None:
            m = self.mission
            if m is not None and m.sub_session is not None \
                    and m.sub_session.session_id == sid:
                sess = m.sub_session
        if sess is None or sess.phase not in (transfer.PHASE_PULL, transfer.PHASE_PUSH):
            return
        if not payload.get("ok"):
            self._session_drop_source(now, sess, src, out)
            return
        sess.on_block(payload["index"], payload.get("data", b""))
        if sess.complete():
            self._session_complete(now, sess, out, user=user)

    def _session_drop_source(self, now, sess, src, out):
        if sess.phase != transfer.PHASE_PULL:
            return
        sess.drop_source(src)
        if sess.reassign_used or not sess.sources:
            self._session_fail(now, sess, "sources-exhausted", out)
            return
        sess.reassign_used = True
        out.append(Note("reassign", {"session": sess.session_id, "dropped": src}))
        self._session_pump(now, sess, out)

    def _session_complete(self, now, sess, out, user):
        partial = len(sess.wanted) != (sess.meta.block_count if sess.meta else 0)
        if not partial and not sess.verify():
            if sess.phase == transfer.PHASE_PULL and not sess.hash_retry_used:
                out.append(Note("hash-retry", {"session": sess.session_id}))
                sess.reset_for_retry()
                self._session_pump(now, sess, out)
                return
            self._session_fail(now, sess, "hash-mismatch", out)
            return
        sess.phase = transfer.PHASE_DONE
        if user:
            content = sess.assemble()
            if sess.file_id not in self.files:
                name = sorted(sess.meta.names)[0] if sess.meta.names else sess.file_id.short
                meta = self.store_file(name, content)
                if self.role == MEMBER and self.home_root is not None:
                    self._send(out, K.FILE_LIST, self.home_root,
                               {"files": [self._meta_payload(meta)], "removed": []}, now)
                elif self.role == ROOT:
                    self.catalog.register_files(self.device, [meta])
                    self._check_wanted(now, [meta], out)
            out.append(Note("download-complete", {"session": sess.session_id,
                                                  "file": sess.file_id.short,
                                                  "hops": sess.hops_used}))
            self.sessions.pop(sess.session_id, None)
        else:
            # courier sub-fetch finished: head home with the goods
            m = self.mission
            self._leave_target(now, parse_ssid(m.target).root_id, out)

    def _session_fail(self, now, sess, reason, out):
        sess.phase = transfer.PHASE_FAILED
        if sess.session_id in self.sessions:
            out.append(Note("download-failed", {"session": sess.session_id,
                                                "reason": reason}))
            self.sessions.pop(sess.session_id, None)
        elif self.mission is not None and self.mission.sub_session is sess:
            self.mission.failed = True
            self.mission.fail_reason = reason
            self._leave_target(now, parse_ssid(self.mission.target).root_id, out)

    # courier missions ------------------------------------------------------

    def _h_courier_order(self, now, src, payload, out):
        status = payload.get("status")
        if status is not None:
            self._h_courier_report(now, src, payload, out)
            return
        if self.role != MEMBER or src != self.home_root or self.mission is not None:
            self._send(out, K.COURIER_ORDER, src,
                       {"status": "refused", "mission_id": payload["mission_id"]}, now)
            return
        rng = payload.get("range")
        m = transfer.CourierMission(
            mission_id=payload["mission_id"], kind=payload["mission"],
            target=payload["target"], home=self.attached, home_root=src,
            ttl=payload.get("ttl", 1),
            file_id=FileId(payload["file_id"]) if "file_id" in payload else None,
            block_range=(rng[0], rng[1]) if rng else None,
            requester=payload.get("requester"),
            session_id=payload.get("session_id", ""))
        m.origin = payload.get("origin", "") or m.session_id
        self.mission = m
        out.append(HopTo(m.target, label="forward", mission_id=m.mission_id,
                         session_id=m.origin or ""))

    def _leave_target(self, now, target_root, out):
        m = self.mission
        self._send(out, K.LEAVE_NOTICE, target_root, {}, now)
        out.append(StartTimer(2 * self.p.link_latency, f"mhome:{m.mission_id}"))

    def _mission_abort(self, now, out, reason):
        m = self.mission
        m.failed = True
        m.fail_reason = reason
        m.phase = transfer.M_HOMEBOUND
        out.append(HopTo(m.home, label="return", mission_id=m.mission_id,
                         session_id=m.origin or ""))

    def _deliver_mission(self, now, out):
        m = self.mission
        if m.kind == "catalog" and not m.failed and m.snapshot is not None:
            self._send(out, K.CATALOG_SNAPSHOT, m.home_root,
                       {"snapshot": m.snapshot, "via": m.target,
                        "mission_id": m.mission_id}, now)
        elif m.kind == "file" and not m.failed and m.sub_session is not None:
            sub = m.sub_session
            for idx in sorted(sub.buffers):
                self._send(out, K.BLOCK_RESPONSE, m.requester,
                           {"ok": True, "file_id": m.file_id.digest, "index": idx,
                            "data": sub.buffers[idx], "session_id": m.session_id}, now)
            self._send(out, K.COURIER_ORDER, m.home_root,
                       {"status": "done", "mission_id": m.mission_id}, now)
        else:
            self._send(out, K.COURIER_ORDER, m.home_root,
                       {"status": "failed", "mission_id": m.mission_id,
                        "reason": m.fail_reason or "unknown"}, now)
        self.mission = None

    def _h_courier_report(self, now, src, payload, out):
        if self.role != ROOT:
            return
        mid = payload.get("mission_id", "")
        order = self.outstanding.pop(mid, None)
        if order is None:
            return
        status = payload["status"]
        if status == "done":
            group = self.swarm.get(order.session_id)
            if group is not None:
                group["pending"].discard(mid)
                if not group["pending"]:
                    del self.swarm[order.session_id]
            return
        out.append(Note("mission-failed", {"mission": mid, "status": status,
                                           "kind": order.kind}))
        if order.kind == "catalog":
            return  # the next courier period retries
        group = self.swarm.get(order.session_id)
        if group is not None:
            group["pending"].discard(mid)
            if not group["reassigned"]:
                eligible = self._eligible_couriers(
                    order.target, exclude={order.courier, group["requester"]})
                courier = routing.designate_courier(self.subnets, order.target,
                                                    eligible=eligible)
                if courier is not None:
                    group["reassigned"] = True
                    replacement = self._issue_order(
                        now, courier, order.target, "file", out, ttl=order.ttl,
                        session_id=order.session_id, origin=order.origin,
                        requester=group["requester"],
                        file_id=order.file_id, block_range=order.block_range)
                    group["pending"].add(replacement.mission_id)
                    return
            # no replacement available (or already used): the session fails
            del self.swarm[order.session_id]
            self._send(out, K.SOURCE_LIST, group["requester"],
                       {"ok": False, "session_id": order.session_id,
                        "reason": "courier-failed"}, now)
            return
        if order.requester is not None:
            self._send(out, K.SOURCE_LIST, order.requester,
                       {"ok": False, "session_id": order.session_id,
                        "reason": "courier-failed"}, now)

    # physical hop callbacks ------------------------------------------------

    def on_hop_complete(self, now: float, target: str) -> list:
        out = []
        m = self.mission
        if m is None:
            self._to_scanning(now, out, "stray-hop")
            return out
        if m.phase == transfer.M_OUTBOUND and target == m.target:
            m.phase = transfer.M_JOINING_TARGET
            self._send(out, K.JOIN_REQUEST, parse_ssid(target).root_id,
                       {"ssid": target, "wants_catalog": m.kind == "catalog"}, now)
            out.append(StartTimer(self.p.join_timeout, f"mjoin:{m.mission_id}:t"))
        elif m.phase == transfer.M_HOMEBOUND and target == m.home:
            m.phase = transfer.M_REJOINING_HOME
            self._send(out, K.JOIN_REQUEST, parse_ssid(target).root_id,
                       {"ssid": target, "wants_catalog": False}, now)
            out.append(StartTimer(self.p.join_timeout, f"mjoin:{m.mission_id}:h"))
        return out

    def on_hop_failed(self, now: float, target: str) -> list:
        out = []
        m = self.mission
        if m is None:
            self._to_scanning(now, out, "hop-failed")
            return out
        if self.attached is not None:
            # validated before leaving: still home, report and stand down
            self._send(out, K.COURIER_ORDER, m.home_root,
                       {"status": "failed", "mission_id": m.mission_id,
                        "reason": "hop-failed"}, now)
            self.mission = None
            return out
        if target != m.home:
            self._mission_abort(now, out, "hop-failed")
        else:
            self.mission = None
            self._to_scanning(now, out, "home-gone")
        return out

    # timers ----------------------------------------------------------------

    def on_timer(self, now: float, tag: str) -> list:
        out = []
        kind, _, rest = tag.partition(":")
        m = self.mission

        if kind == "jointo":
            if self.role == JOINING and self.join_target == rest:
                self._become_root(now, out)

        elif kind == "ping":
            if self.role == ROOT:
                out.append(StartTimer(self.p.ping_interval, "ping"))
                self._ping_cycle(now, out)

        elif kind == "courier":
            if self.role == ROOT:
                out.append(StartTimer(self.p.courier_period, "courier"))
                self._courier_cycle(now, out)

        elif kind == "scanreport":
            if self.role == MEMBER:
                out.append(StartTimer(self.p.scan_period, "scanreport"))
                if self.mission is None:
                    out.append(RequestScan(0.0))

        elif kind == "rootcheck":
            if self.role == MEMBER:
                out.append(StartTimer(self.p.ping_interval, "rootcheck"))
                if self.mission is None and now - self.last_root_seen >= self.p.silent_timeout:
                    self._to_scanning(now, out, "root-silent")

        elif kind == "leavep":
            peer_s, _, stamp = rest.partition(":")
            peer = int(peer_s)
            rec = self.members.get(peer) if self.role == ROOT else None
            if rec is not None and rec.leaving_since is not None \
                    and f"{rec.leaving_since:.6f}" == stamp:
                self._purge_member(now, peer, "leave", out)

        elif kind == "snap":
            peer = int(rest)
            if self.role == ROOT and peer in self.members \
                    and self.members[peer].leaving_since is None:
                self._send(out, K.CATALOG_SNAPSHOT, peer,
                           {"snapshot": self.catalog.snapshot(self.ssid),
                            "via": self.ssid, "mission_id": ""}, now)

        elif kind == "wanted":
            if self.role == ROOT and rest in self.wanted:
                self._emit_wanted(now, rest, out)

        elif kind == "mdeadline":
            if self.role == ROOT and rest in self.outstanding:
                order = self.outstanding[rest]
                out.append(Note("mission-timeout", {"mission": rest}))
                self._h_courier_report(now, order.courier,
                                       {"status": "timeout", "mission_id": rest}, out)

        elif kind == "sessdl":
            sess = self.sessions.get(rest)
            if sess is not None and sess.phase not in (transfer.PHASE_DONE,
                                                       transfer.PHASE_FAILED):
                self._session_fail(now, sess, "timeout", out)

        elif kind == "sess":
            sess = self.sessions.get(rest)
            if sess is None and m is not None and m.sub_session is not None \
                    and m.sub_session.session_id == rest:
                sess = m.sub_session
            if sess is not None and sess.phase == transfer.PHASE_PULL:
                overdue = sess.overdue_sources(now, self.p.block_timeout)
                if overdue:
                    if sess.reassign_used:
                        self._session_fail(now, sess, "sources-timeout", out)
                    else:
                        sess.reassign_used = True
                        for srcdev in overdue:
                            sess.drop_source(srcdev)
                        out.append(Note("reassign", {"session": rest,
                                                     "dropped": overdue[0]}))
                        if not sess.sources:
                            self._session_fail(now, sess, "sources-exhausted", out)
                        else:
                            self._session_pump(now, sess, out)
                if sess.phase == transfer.PHASE_PULL:
                    out.append(StartTimer(self.p.block_timeout, f"sess:{rest}"))

        elif kind == "mretry":
            if m is not None and m.mission_id == rest \
                    and m.phase == transfer.M_JOINING_TARGET:
                self._send(out, K.JOIN_REQUEST, parse_ssid(m.target).root_id,
                           {"ssid": m.target, "wants_catalog": m.kind == "catalog"},
                           now)
                out.append(StartTimer(self.p.join_timeout, f"mjoin:{m.mission_id}:t"))

        elif kind == "mjoin":
            mid, _, leg = rest.partition(":")
            if m is not None and m.mission_id == mid:
                if leg == "t" and m.phase == transfer.M_JOINING_TARGET:
                    self._mission_abort(now, out, "join-timeout")
                elif leg == "h" and m.phase == transfer.M_REJOINING_HOME:
                    self.mission = None
                    self._to_scanning(now, out, "home-unreachable")

        elif kind == "mhome":
            if m is not None and m.mission_id == rest \
                    and m.phase == transfer.M_WORKING:
                m.phase = transfer.M_HOMEBOUND
                out.append(HopTo(m.home, label="return", mission_id=m.mission_id,
                                 session_id=m.origin or ""))

        elif kind == "mwork":
            if m is not None and m.mission_id == rest \
                    and m.phase == transfer.M_WORKING:
                m.failed = True
                m.fail_reason = "work-timeout"
                if m.sub_session is not None:
                    m.sub_session.phase = transfer.PHASE_FAILED
                self._leave_target(now, parse_ssid(m.target).root_id, out)

        return out

    # root periodic cycles --------------------------------------------------

    def _ping_cycle(self, now, out):
        self.catalog.expire_remote(now, self.p.catalog_ttl)
        gone = self.subnets.expire(now, self.p.neighbor_ttl)
        if gone:
            self.catalog.drop_via_gateways(set(gone))
        exempt = {o.courier for o in self.outstanding.values()}
        for peer in sorted(self.members):
            rec = self.members[peer]
            if rec.leaving_since is not None:
                continue
            if now - rec.last_seen >= self.p.silent_timeout and peer not in exempt:
                self._purge_member(now, peer, "silent", out)
            else:
                self._send(out, K.PING, peer, {}, now)

    def _courier_cycle(self, now, out):
        busy_targets = {o.target for o in self.outstanding.values()
                        if o.kind == "catalog"}
        # Rotate which neighbor gets first claim each cycle, otherwise a
        # member that is the only gateway to several subnets would always be
        # grabbed by the lexicographically first target and starve the rest.
        targets = sorted(self.subnets.neighbors)
        if targets:
            self._courier_cycle_n += 1
            off = self._courier_cycle_n % len(targets)
            targets = targets[off:] + targets[:off]
        for target in targets:
            if target in busy_targets:
                continue
            eligible = self._eligible_couriers(target)
            courier = routing.designate_courier(self.subnets, target, eligible=eligible)
            if courier is None:
                continue
            self._issue_order(now, courier, target, "catalog", out, ttl=1)
