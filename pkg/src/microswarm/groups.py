"""Group allocation and PFSM-style group addressing.

Robots are assigned to overlapping groups so that every robot has a distinct
membership pattern.  Groups are numbered from 1, matching the ``g1, g2, ...``
naming used throughout the package.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GroupCode(NamedTuple):
    group: int
    symbols: str


@dataclass(frozen=True)
class GroupAllocation:
    """Binary ``m x n`` membership matrix; row ``i - 1`` is the activation vector of group ``i``."""

    membership: np.ndarray

    def __post_init__(self):
        mat = np.array(self.membership, dtype=np.int8)
        if mat.ndim != 2:
            raise ValueError("membership must be a 2-D matrix")
        if not np.isin(mat, (0, 1)).all():
            raise ValueError("membership entries must be 0 or 1")
        m, n = mat.shape
        if n < 2:
            raise ValueError("need at least 2 robots")
        colsum = mat.sum(axis=0)
        if (colsum == 0).any() or (colsum == m).any():
            raise ValueError("every robot must belong to at least one and not all groups")
        if len({tuple(c) for c in mat.T}) != n:
            raise ValueError("robot membership columns must be pairwise distinct")
        if m != num_groups(n):
            raise ValueError(f"{n} robots need exactly {num_groups(n)} groups, got {m}")
        mat.setflags(write=False)
        object.__setattr__(self, "membership", mat)

    @property
    def m(self) -> int:
        return self.membership.shape[0]

    @property
    def n(self) -> int:
        return self.membership.shape[1]

    def activation(self, group: int) -> np.ndarray:
        """Activation vector of ``group`` (1-based)."""
        check_group(group, self.m)
        return self.membership[group - 1]

    def active_counts(self) -> np.ndarray:
        """Number of member robots for each group, indexed ``group - 1``."""
        return self.membership.sum(axis=1)


def check_group(group, m: int) -> int:
    if isinstance(group, bool) or int(group) != group or not 1 <= group <= m:
        raise ValueError(f"group index must be an integer in 1..{m}, got {group!r}")
    return int(group)


def num_groups(n: int) -> int:
    """Smallest ``m`` with ``2**m - 2 >= n``, i.e. ``ceil(log2(n + 2))``."""
    if n < 2:
        raise ValueError("need at least 2 robots")
    return (n + 1).bit_length()


def allocate_groups(n: int) -> GroupAllocation:
    """Give robot ``j`` (1-based) the ``m``-bit binary code of ``j``.

    The most significant bit goes to group 1, so for six robots this yields
    ``G1 = [0,0,0,1,1,1]``, ``G2 = [0,1,1,0,0,1]``, ``G3 = [1,0,1,0,1,0]``.
    """
    m = num_groups(n)
    j = np.arange(1, n + 1)
    shifts = np.arange(m - 1, -1, -1)[:, None]
    return GroupAllocation((j[None, :] >> shifts) & 1)


def code_width(m: int) -> int:
    return max(1, (m - 1).bit_length())


def encode_group(i: int, m: int) -> GroupCode:
    """Fixed-width binary symbol string selecting group ``i`` out of ``m``."""
    check_group(i, m)
    return GroupCode(i, format(i - 1, f"0{code_width(m)}b"))


def pfsm_activate(code_stream: str, alloc: GroupAllocation) -> np.ndarray:
    """Activation vector selected by a broadcast symbol stream.

    Every robot's on-board machine reads the same stream; the robots that
    belong to the decoded group switch to forward motion, the rest rotate.
    """
    width = code_width(alloc.m)
    if len(code_stream) != width or set(code_stream) - {"0", "1"}:
        raise ValueError(f"expected a {width}-symbol binary stream, got {code_stream!r}")
    value = int(code_stream, 2)
    if value >= alloc.m:
        raise ValueError(f"code {code_stream!r} is not assigned to any group")
    return alloc.activation(value + 1)
