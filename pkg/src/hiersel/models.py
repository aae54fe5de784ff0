"""Candidate models under strong hierarchy and their search neighborhood.

Variables are 0-based column indices into the standardized design. A model
holds a set of main effects and a set of interaction pairs ``(j, k)`` with
``j < k``; it satisfies strong hierarchy when every pair has both parents
among the mains.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import InvalidMove

Pair = tuple[int, int]


def _pair(j: int, k: int) -> Pair:
    j, k = int(j), int(k)
    if j == k:
        raise ValueError(f"interaction needs two distinct variables, got ({j}, {k})")
    return (j, k) if j < k else (k, j)


@dataclass(frozen=True)
class ModelAlpha:
    """A candidate model: main-effect indices plus interaction pairs.

    Construction canonicalizes the content (mains ascending, pairs ordered
    lexicographically with ``j < k``) so equality and hashing depend only on
    the sets. Strong hierarchy is *not* enforced here; use
    :func:`check_strong_hierarchy`.
    """

    mains: tuple[int, ...] = ()
    interactions: tuple[Pair, ...] = ()

    def __post_init__(self):
        mains = tuple(sorted({int(j) for j in self.mains}))
        pairs = tuple(sorted({_pair(j, k) for j, k in self.interactions}))
        object.__setattr__(self, "mains", mains)
        object.__setattr__(self, "interactions", pairs)

    @property
    def size(self) -> int:
        """Number of penalized terms, ``|mains| + |interactions|``."""
        return len(self.mains) + len(self.interactions)

    def terms(self) -> list:
        """Mains followed by pairs, in the order used for design columns."""
        return list(self.mains) + list(self.interactions)

    def __contains__(self, term) -> bool:
        if isinstance(term, tuple):
            return _pair(*term) in self.interactions
        return int(term) in self.mains

    def __le__(self, other: "ModelAlpha") -> bool:
        return set(self.mains) <= set(other.mains) and set(self.interactions) <= set(
            other.interactions
        )

    def __lt__(self, other: "ModelAlpha") -> bool:
        return self <= other and self != other

    def __str__(self) -> str:
        mains = ",".join(str(j) for j in self.mains)
        pairs = ",".join(f"{j}:{k}" for j, k in self.interactions)
        return f"M{{{mains}}} I{{{pairs}}}"


EMPTY = ModelAlpha()


def check_strong_hierarchy(alpha: ModelAlpha) -> bool:
    """True iff every interaction has both endpoints among the mains."""
    mains = set(alpha.mains)
    return all(j in mains and k in mains for j, k in alpha.interactions)


class MoveKind(enum.Enum):
    ADD_MAIN = "add_main"
    REMOVE_MAIN = "remove_main"
    ADD_INTERACTION = "add_interaction"
    REMOVE_INTERACTION = "remove_interaction"


@dataclass(frozen=True)
class Move:
    kind: MoveKind
    j: int
    k: int | None = None

    def __post_init__(self):
        if self.kind in (MoveKind.ADD_INTERACTION, MoveKind.REMOVE_INTERACTION):
            if self.k is None:
                raise ValueError(f"{self.kind.value} needs a pair")
            j, k = _pair(self.j, self.k)
            object.__setattr__(self, "j", j)
            object.__setattr__(self, "k", k)
        elif self.k is not None:
            raise ValueError(f"{self.kind.value} takes a single index")

    @property
    def element(self):
        """The diff element: ``j`` for main moves, ``(j, k)`` for pair moves."""
        return self.j if self.k is None else (self.j, self.k)

    def __str__(self) -> str:
        target = self.j if self.k is None else f"{self.j}:{self.k}"
        return f"{self.kind.value}({target})"


def add_main(j: int) -> Move:
    return Move(MoveKind.ADD_MAIN, j)


def remove_main(j: int) -> Move:
    return Move(MoveKind.REMOVE_MAIN, j)


def add_interaction(j: int, k: int) -> Move:
    return Move(MoveKind.ADD_INTERACTION, j, k)


def remove_interaction(j: int, k: int) -> Move:
    return Move(MoveKind.REMOVE_INTERACTION, j, k)


def move_for_element(alpha: ModelAlpha, element) -> Move:
    """The unique move whose diff with ``alpha`` is ``element``.

    Present elements are removed, absent ones added.
    """
    if isinstance(element, tuple):
        j, k = element
        if _pair(j, k) in alpha.interactions:
            return remove_interaction(j, k)
        return add_interaction(j, k)
    if int(element) in alpha.mains:
        return remove_main(element)
    return add_main(element)


def apply_move(alpha: ModelAlpha, move: Move) -> ModelAlpha:
    """Apply one of the four add/remove scenarios.

    Removing a main also drops every interaction touching it; adding an
    interaction also adds whichever parents are missing. Raises
    :class:`InvalidMove` when the move does not apply to ``alpha``.
    """
    mains = set(alpha.mains)
    pairs = set(alpha.interactions)
    kind = move.kind
    if kind is MoveKind.ADD_MAIN:
        if move.j in mains:
            raise InvalidMove(f"{move}: main already present")
        mains.add(move.j)
    elif kind is MoveKind.REMOVE_MAIN:
        if move.j not in mains:
            raise InvalidMove(f"{move}: main not present")
        mains.discard(move.j)
        pairs = {pr for pr in pairs if move.j not in pr}
    elif kind is MoveKind.ADD_INTERACTION:
        pr = (move.j, move.k)
        if pr in pairs:
            raise InvalidMove(f"{move}: interaction already present")
        pairs.add(pr)
        mains.update(pr)
    else:
        pr = (move.j, move.k)
        if pr not in pairs:
            raise InvalidMove(f"{move}: interaction not present")
        pairs.discard(pr)
    if min(mains, default=0) < 0:
        raise InvalidMove(f"{move}: negative variable index")
    return ModelAlpha(tuple(mains), tuple(pairs))


def size_after(alpha: ModelAlpha, move: Move) -> int:
    """``apply_move(alpha, move).size`` without building the model."""
    kind = move.kind
    if kind is MoveKind.ADD_MAIN:
        return alpha.size + 1
    if kind is MoveKind.REMOVE_INTERACTION:
        return alpha.size - 1
    if kind is MoveKind.ADD_INTERACTION:
        return alpha.size + 1 + sum(v not in alpha.mains for v in (move.j, move.k))
    dropped = sum(move.j in pr for pr in alpha.interactions)
    return alpha.size - 1 - dropped


def search_elements(universe: Iterable[int]) -> list:
    """All diff elements over ``universe``: its variables, then its pairs."""
    uni = sorted({int(j) for j in universe})
    return list(uni) + list(itertools.combinations(uni, 2))


def neighborhood(
    alpha: ModelAlpha, universe: Iterable[int], max_size: int | None = None
) -> list[Move]:
    """Every move from ``alpha`` to a neighbor over the variables in ``universe``.

    One move per diff element, in canonical element order. Moves that would
    push the model above ``max_size`` terms are left out.
    """
    uni = set(int(j) for j in universe)
    missing = set(alpha.mains) - uni
    if missing:
        raise ValueError(f"universe must contain the model's mains; missing {sorted(missing)}")
    moves = [move_for_element(alpha, e) for e in search_elements(uni)]
    if max_size is not None:
        moves = [mv for mv in moves if size_after(alpha, mv) <= max_size]
    return moves


def enumerate_models(universe: Iterable[int]) -> Iterator[ModelAlpha]:
    """Every strong-hierarchy model over ``universe`` (brute force; keep it small)."""
    uni = sorted({int(j) for j in universe})
    for r in range(len(uni) + 1):
        for mains in itertools.combinations(uni, r):
            pairs = list(itertools.combinations(mains, 2))
            for mask in range(1 << len(pairs)):
                chosen = [pr for b, pr in enumerate(pairs) if mask >> b & 1]
                yield ModelAlpha(mains, tuple(chosen))
