"""Least-requests balancing across the local proxy servers.

The table mirrors what the forwarder would keep in memory: one row per
proxy with its live request count and the exact set of clients it is
serving. Counts and sets are kept in lock step; every mutation either
fully applies or raises without touching the table.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field


class BalancerError(ValueError):
    pass


class EmptyTableError(BalancerError):
    pass


class UnknownLpsError(BalancerError):
    pass


class UnknownClientError(BalancerError):
    pass


class DuplicateClientError(BalancerError):
    pass


@dataclass
class LpsEntry:
    lps_id: int
    name: str
    address: str
    request_count: int = 0
    client_ids: set[str] = field(default_factory=set)


@dataclass
class LpsTable:
    """Ordered collection of proxy entries with unique ids."""

    entries: list[LpsEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.lps_id in seen:
                raise BalancerError(f"duplicate lps_id {e.lps_id}")
            seen.add(e.lps_id)

    def entry(self, lps_id: int) -> LpsEntry:
        for e in self.entries:
            if e.lps_id == lps_id:
                return e
        raise UnknownLpsError(f"no LPS with id {lps_id}")

    def to_csv(self) -> str:
        """Dump the table; client ids are sorted and joined with ';'."""
        buf = io.StringIO()
        buf.write("lps_id,name,address,request_count,client_ids\n")
        for e in self.entries:
            ids = ";".join(sorted(e.client_ids))
            buf.write(f"{e.lps_id},{e.name},{e.address},{e.request_count},{ids}\n")
        return buf.getvalue()


def assign_lps(table: LpsTable) -> int:
    """Pick the proxy with the fewest live requests; ties go to the lowest id.

    Pure choice: the table is not modified. Call :func:`record_request`
    when the pick is actually granted.
    """
    if not table.entries:
        raise EmptyTableError("no LPS entries to assign from")
    best = min(table.entries, key=lambda e: (e.request_count, e.lps_id))
    return best.lps_id


def record_request(table: LpsTable, lps_id: int, client_id: str) -> LpsTable:
    """Register ``client_id`` on the given proxy and bump its count."""
    entry = table.entry(lps_id)
    if client_id in entry.client_ids:
        raise DuplicateClientError(
            f"client {client_id!r} already recorded on LPS {lps_id}"
        )
    entry.client_ids.add(client_id)
    entry.request_count += 1
    return table


def release_request(table: LpsTable, lps_id: int, client_id: str) -> LpsTable:
    """Drop ``client_id`` from the proxy once its first segment finished streaming."""
    entry = table.entry(lps_id)
    if client_id not in entry.client_ids:
        raise UnknownClientError(f"client {client_id!r} not recorded on LPS {lps_id}")
    entry.client_ids.discard(client_id)
    entry.request_count -= 1
    return table
