"""Product commands: side tagging, the Comm swap and Part cuts."""
from __future__ import annotations

from dataclasses import dataclass

from . import lang
from .lang import SKIP, Command


@dataclass(frozen=True)
class Side:
    """One component of a product: a side tag and a non-empty command list."""
    tag: int
    cmds: tuple

    def __post_init__(self):
        if not self.cmds:
            object.__setattr__(self, "cmds", (SKIP,))

    @classmethod
    def of(cls, tag: int, cmd: Command) -> "Side":
        return cls(tag, tuple(lang.items(cmd)))

    @property
    def command(self) -> Command:
        return lang.seq(*self.cmds)

    @property
    def is_skip(self) -> bool:
        return self.cmds == (SKIP,)

    def __len__(self):
        return 0 if self.is_skip else len(self.cmds)

    def __str__(self):
        return "; ".join(str(c) for c in self.cmds)


@dataclass(frozen=True)
class ProductCommand:
    left: Side
    right: Side

    def __post_init__(self):
        if self.left.tag == self.right.tag:
            raise ValueError("product sides must carry different tags")

    @classmethod
    def of(cls, c0: Command, c1: Command) -> "ProductCommand":
        return cls(Side.of(0, c0), Side.of(1, c1))

    def side(self, tag: int) -> Side:
        return self.left if self.left.tag == tag else self.right

    @property
    def is_skip(self) -> bool:
        return self.left.is_skip and self.right.is_skip

    def __str__(self):
        return f"({self.left}) x ({self.right})"


def swap(pcd: ProductCommand) -> ProductCommand:
    return ProductCommand(pcd.right, pcd.left)


def permute(pcd: ProductCommand) -> set:
    """The Comm rule: the product itself and its side swap.

    Skip x Skip is symmetric up to tags, so only one ordering is kept.
    """
    if pcd.is_skip:
        return {pcd}
    return {pcd, swap(pcd)}


def concat(a: Side, b: Side) -> Side:
    assert a.tag == b.tag
    cmds = tuple(c for c in a.cmds + b.cmds if c != SKIP)
    return Side(a.tag, cmds)


def partition(pcd: ProductCommand) -> set:
    """All non-degenerate cuts of both sides into a prefix and a suffix."""
    l, r = pcd.left, pcd.right
    nl, nr = len(l), len(r)
    lc = () if l.is_skip else l.cmds
    rc = () if r.is_skip else r.cmds
    out = set()
    for i in range(nl + 1):
        for j in range(nr + 1):
            if (i, j) in ((0, 0), (nl, nr)):
                continue
            first = ProductCommand(Side(l.tag, lc[:i]), Side(r.tag, rc[:j]))
            second = ProductCommand(Side(l.tag, lc[i:]), Side(r.tag, rc[j:]))
            out.add((first, second))
    return out
