"""Sharded in-memory storage for DNS answers.

Two families of maps are kept: address -> name (from A/AAAA answers) and
name -> alias (from CNAME answers, keyed by the canonical name so the walk
goes from a CDN hostname back toward the queried service name). Each family
has ``num_split`` shards in three tiers:

* active: receives new short-lived answers;
* inactive: a snapshot of active taken at the last rotation;
* long: answers whose TTL exceeds the rotation interval.

Rotation runs on the fill path and is driven by record timestamps, never by
the wall clock, so an offline replay is deterministic.
"""

from __future__ import annotations

import threading
import zlib
from typing import Optional

from dnsflow.counters import Counters
from dnsflow.model import DnsRecord, EngineConfig, RType, Variant

TIERS = ("active", "inactive", "long")


def label(key: str, num_split: int) -> int:
    """Shard index of ``key``: CRC-32 of its UTF-8 bytes modulo ``num_split``."""
    if num_split == 1:
        return 0
    return zlib.crc32(key.encode()) % num_split


class MapFamily:
    """One family of sharded maps with its own rotation interval.

    Under the exact-TTL variant values are lists of ``(name, expiry)`` pairs,
    newest last, and plain names otherwise.
    """

    def __init__(
        self,
        name: str,
        num_split: int,
        clear_up_interval: int,
        variant: Variant = Variant.MAIN,
        long_clear_up_interval: Optional[int] = None,
    ) -> None:
        self.name = name
        self.num_split = num_split
        self.clear_up_interval = clear_up_interval
        self.variant = variant
        self.long_clear_up_interval = long_clear_up_interval
        self.active: list[dict] = [{} for _ in range(num_split)]
        self.inactive: list[dict] = [{} for _ in range(num_split)]
        self.long: list[dict] = [{} for _ in range(num_split)]
        self.last_clear_up_ts: Optional[int] = None
        self.last_long_clear_up_ts: Optional[int] = None
        self.rotations = 0
        self._lock = threading.Lock()

    def tier(self, name: str) -> list[dict]:
        return getattr(self, name)

    def entry_count(self) -> int:
        return sum(len(d) for tier in (self.active, self.inactive, self.long) for d in tier)

    def due(self, ts: int) -> bool:
        last = self.last_clear_up_ts
        return last is None or ts - last >= self.clear_up_interval

    def check(self, ts: int) -> bool:
        """Rotate if ``ts`` has crossed the interval boundary; True if it did.

        The first record seen only starts the clock. Concurrent callers
        crossing the same boundary rotate once.
        """
        if not self.due(ts) and not self._long_due(ts):
            return False
        with self._lock:
            if self._long_due(ts):
                self.long = [{} for _ in range(self.num_split)]
                self.last_long_clear_up_ts = ts
            if self.last_clear_up_ts is None:
                self.last_clear_up_ts = ts
                if self.last_long_clear_up_ts is None:
                    self.last_long_clear_up_ts = ts
                return False
            if ts - self.last_clear_up_ts < self.clear_up_interval:
                return False
            return rotate(self, ts)

    def _long_due(self, ts: int) -> bool:
        last = self.last_long_clear_up_ts
        return (
            self.long_clear_up_interval is not None
            and self.variant not in (Variant.NO_CLEAR_UP, Variant.EXACT_TTL)
            and last is not None
            and ts - last >= self.long_clear_up_interval
        )


def rotate(family: MapFamily, now_ts: int) -> bool:
    """Apply the variant's clear-up to ``family`` at logical time ``now_ts``.

    Returns whether any map was touched. Callers are expected to hold the
    family lock when other threads are active.
    """
    variant = family.variant
    if variant in (Variant.NO_CLEAR_UP, Variant.EXACT_TTL):
        # maps untouched; the boundary is still recorded so the fill path
        # does not re-check on every record
        family.last_clear_up_ts = now_ts
        return False
    fresh = [{} for _ in range(family.num_split)]
    if variant is Variant.NO_ROTATION:
        family.active = fresh
    else:
        # publish the snapshot before swapping active so readers never see
        # an entry vanish from both tiers at once
        family.inactive = family.active
        family.active = fresh
    family.last_clear_up_ts = now_ts
    family.rotations += 1
    return True


class MemoName(str):
    """A name stored by chain memoisation rather than by a DNS answer."""

    __slots__ = ()


def _value(entry, now_ts: Optional[int]):
    """``(name, expiry)`` visible at ``now_ts``, or None if every answer expired.

    Plain entries never expire and report expiry None.
    """
    if type(entry) is list:
        if now_ts is None:
            return entry[-1]
        for pair in reversed(entry):
            if pair[1] >= now_ts:
                return pair
        return None
    return entry, None


def _add_answer(entry: Optional[list], name: str, expiry: int) -> list:
    """New exact-TTL answer list: older answers survive only while they
    outlive every newer one, so the newest unexpired answer is always
    found by scanning from the end."""
    if entry is None:
        return [(name, expiry)]
    return [p for p in entry if p[1] > expiry] + [(name, expiry)]


def deep_look_up(
    key: str, family: MapFamily, shard: int, now_ts: Optional[int] = None
) -> Optional[str]:
    """First value for ``key`` in tier order active, inactive, long."""
    hit = _deep_look_up(key, family, shard, now_ts)
    return None if hit is None else hit[0]


def _deep_look_up(key, family, shard, now_ts):
    """``(value, tier, expiry)`` of the first visible answer, or None."""
    for tier_name in TIERS:
        maps = family.tier(tier_name)[shard]
        entry = maps.get(key)
        if entry is None:
            continue
        hit = _value(entry, now_ts)
        if hit is None:
            # every answer expired (exact-TTL only); older tiers are never
            # consulted for a key whose answers all expired
            if maps.get(key) is entry:
                maps.pop(key, None)
            return None
        return hit[0], tier_name, hit[1]
    return None


class MapStore:
    """Both map families plus counters and entry-count samples."""

    def __init__(self, config: Optional[EngineConfig] = None) -> None:
        self.config = config = config or EngineConfig()
        v = config.variant
        self.variant = v
        self.ip_name = MapFamily(
            "ip_name", config.num_split, config.a_clear_up_interval, v,
            config.long_clear_up_interval,
        )
        self.name_cname = MapFamily(
            "name_cname", config.num_split, config.c_clear_up_interval, v,
            config.long_clear_up_interval,
        )
        self.counters = Counters()
        self.samples: list[tuple[int, int]] = []
        self._next_sample_ts: Optional[int] = None
        self._sweep_every = max(1, config.a_clear_up_interval // 10)
        self._next_sweep_ts: Optional[int] = None
        self._aux_lock = threading.Lock()

    def family_for(self, rtype: RType) -> Optional[MapFamily]:
        if rtype is RType.A or rtype is RType.AAAA:
            return self.ip_name
        if rtype is RType.CNAME:
            return self.name_cname
        return None

    def fill(self, rec: DnsRecord) -> None:
        """Insert one answer: key = answer, value = query name."""
        family = self.family_for(rec.rtype)
        count = self.counters.incr
        if family is None:
            count("fill_other")
            return
        ts = rec.ts
        if (family.due(ts) or family.long_clear_up_interval is not None) and family.check(ts):
            count(f"rotations_{family.name}")
        self._housekeeping(ts)
        shard = label(rec.answer, family.num_split)
        if self.variant is Variant.EXACT_TTL:
            maps = family.active[shard]
            maps[rec.answer] = _add_answer(maps.get(rec.answer), rec.qname, ts + rec.ttl)
            count("inserts_active")
        elif rec.ttl > family.clear_up_interval and self.variant is not Variant.NO_LONG_MAPS:
            family.long[shard][rec.answer] = rec.qname
            count("inserts_long")
        else:
            family.active[shard][rec.answer] = rec.qname
            count("inserts_active")

    def _housekeeping(self, ts: int) -> None:
        nxt = self._next_sample_ts
        if nxt is not None and ts < nxt and (
            self._next_sweep_ts is None or ts < self._next_sweep_ts
        ):
            return
        with self._aux_lock:
            if self._next_sample_ts is None:
                self._next_sample_ts = ts
            if ts >= self._next_sample_ts:
                self.samples.append((ts, self.entry_count()))
                step = self.config.sample_interval
                self._next_sample_ts = ts - ts % step + step
            if self.variant is Variant.EXACT_TTL:
                if self._next_sweep_ts is None:
                    self._next_sweep_ts = ts + self._sweep_every
                elif ts >= self._next_sweep_ts:
                    self.sweep(ts)
                    self._next_sweep_ts = ts + self._sweep_every

    def sweep(self, now_ts: int) -> int:
        """Drop exact-TTL entries that expired before ``now_ts``."""
        evicted = 0
        for family in (self.ip_name, self.name_cname):
            for tier_name in TIERS:
                for shard in family.tier(tier_name):
                    for key, entry in list(shard.items()):
                        if type(entry) is not list:
                            continue
                        live = [p for p in entry if p[1] >= now_ts]
                        if len(live) == len(entry) or shard.get(key) is not entry:
                            continue
                        if live:
                            shard[key] = live
                        else:
                            shard.pop(key, None)
                        evicted += len(entry) - len(live)
        if evicted:
            self.counters.incr("evictions", evicted)
        return evicted

    def _lookup(self, family: MapFamily, key: str, now_ts: Optional[int]):
        count = self.counters.incr
        count(f"lookups_{family.name}")
        hit = _deep_look_up(key, family, label(key, family.num_split), now_ts)
        if hit is None:
            return None
        count(f"hits_{family.name}_{hit[1]}")
        if type(hit[0]) is MemoName:
            count("memo_hits")
            return str(hit[0]), hit[1], hit[2], True
        return hit + (False,)

    def lookup_ip(self, ip: str, now_ts: Optional[int] = None) -> Optional[str]:
        hit = self._lookup(self.ip_name, ip, now_ts)
        return None if hit is None else hit[0]

    def lookup_cname(self, name: str, now_ts: Optional[int] = None) -> Optional[str]:
        hit = self._lookup(self.name_cname, name, now_ts)
        return None if hit is None else hit[0]

    def lookup_cname_entry(self, name: str, now_ts: Optional[int] = None):
        """Like ``lookup_cname`` but returns ``(name, expiry, memoised)``;
        expiry is None outside the exact-TTL variant."""
        hit = self._lookup(self.name_cname, name, now_ts)
        if hit is None:
            return None
        return hit[0], hit[2], hit[3]

    def memoize_chain(
        self, first_name: str, final_result: str, expiry: Optional[int] = None
    ) -> None:
        """Map ``first_name`` straight to ``final_result`` in the active tier."""
        family = self.name_cname
        shard = label(first_name, family.num_split)
        memo = MemoName(final_result)
        value = memo if expiry is None else [(memo, expiry)]
        family.active[shard][first_name] = value
        self.counters.incr("memoizations")

    def entry_count(self) -> int:
        return self.ip_name.entry_count() + self.name_cname.entry_count()

    def tier_contents(self, family: str = "ip_name") -> dict[str, dict[str, str]]:
        """Merged {tier: {key: value}} view, for inspection and tests."""
        fam = self.ip_name if family == "ip_name" else self.name_cname
        out: dict[str, dict[str, str]] = {}
        for tier_name in TIERS:
            merged: dict[str, str] = {}
            for shard in fam.tier(tier_name):
                for key, entry in shard.items():
                    merged[key] = str(entry[-1][0] if type(entry) is list else entry)
            out[tier_name] = merged
        return out

    def triples(self) -> set[tuple[str, str, str, str]]:
        """Every stored (family, tier, key, value), ignoring shard placement."""
        out = set()
        for fam in ("ip_name", "name_cname"):
            for tier_name, content in self.tier_contents(fam).items():
                out.update((fam, tier_name, k, v) for k, v in content.items())
        return out

    def peak_entries(self) -> int:
        current = self.entry_count()
        return max([current] + [n for _, n in self.samples])
