"""Stable subgame identifiers and Angel/Demon attribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Literal, Mapping

from dglpilot.core.ast import AssignAny, Choice, Dual, Game, Loop, Ode, Seq
from dglpilot.core.printer import print_game

Path = tuple[int, ...]
Player = Literal["angel", "demon"]
RootModality = Literal["diamond", "box"]


def letter_id(index: int) -> str:
    """0 -> a, 25 -> z, 26 -> aa, ..."""
    out = ""
    n = index + 1
    while n:
        n, rem = divmod(n - 1, 26)
        out = chr(ord("a") + rem) + out
    return out


def child(g: Game, k: int) -> Game:
    match g:
        case Seq(l, r) | Choice(l, r):
            return (l, r)[k]
        case Loop(b) | Dual(b):
            if k == 0:
                return b
    raise IndexError(f"no child {k} of {type(g).__name__}")


def node_at(g: Game, path: Path) -> Game:
    for k in path:
        g = child(g, k)
    return g


def dual_depth(g: Game, path: Path) -> int:
    """Number of dual nodes strictly above ``path``."""
    count = 0
    for k in path:
        if isinstance(g, Dual):
            count += 1
        g = child(g, k)
    return count


@dataclass(frozen=True)
class LabeledGame:
    game: Game
    labels: Mapping[Path, str]
    paths: Mapping[str, Path] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", MappingProxyType(dict(self.labels)))
        object.__setattr__(self, "paths", MappingProxyType({v: k for k, v in self.labels.items()}))

    def node(self, sid: str) -> Game:
        return node_at(self.game, self.paths[sid])

    def path_of(self, sid: str) -> Path:
        return self.paths[sid]

    def id_at(self, path: Path) -> str | None:
        return self.labels.get(path)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self.labels.values())

    def print_labeled(self) -> str:
        """Game text with loops, ODEs and `:=*` wrapped as ``{subgame_x: ...}``."""
        def ann(path: Path) -> str | None:
            sid = self.labels.get(path)
            if sid is None or not isinstance(node_at(self.game, path), (Loop, Ode, AssignAny)):
                return None
            return f"subgame_{sid}"

        return print_game(self.game, ann)


def _seq_chain(g: Game, path: Path, seqs: list[Path], items: list[tuple[Game, Path]]) -> None:
    if isinstance(g, Seq):
        seqs.append(path)
        _seq_chain(g.left, path + (0,), seqs, items)
        _seq_chain(g.right, path + (1,), seqs, items)
    else:
        items.append((g, path))


def label_subgames(g: Game) -> LabeledGame:
    """Pre-order letters for every non-dual node; a sequence chain labels its joints first."""
    labels: dict[Path, str] = {}

    def assign(path: Path) -> None:
        labels[path] = letter_id(len(labels))

    def visit(node: Game, path: Path) -> None:
        match node:
            case Dual(b):
                visit(b, path + (0,))
            case Seq():
                seqs: list[Path] = []
                items: list[tuple[Game, Path]] = []
                _seq_chain(node, path, seqs, items)
                for p in seqs:
                    assign(p)
                for item, p in items:
                    visit(item, p)
            case Choice(l, r):
                assign(path)
                visit(l, path + (0,))
                visit(r, path + (1,))
            case Loop(b):
                assign(path)
                visit(b, path + (0,))
            case _:
                assign(path)

    visit(g, ())
    return LabeledGame(g, labels)


@dataclass(frozen=True)
class PlayerMap:
    players: Mapping[str, Player]
    root: RootModality = "diamond"

    def __post_init__(self) -> None:
        object.__setattr__(self, "players", MappingProxyType(dict(self.players)))

    def __getitem__(self, sid: str) -> Player:
        return self.players[sid]

    def __iter__(self):
        return iter(self.players)

    def __len__(self) -> int:
        return len(self.players)

    def items(self):
        return self.players.items()


def attribute_players(lg: LabeledGame, root_modality: RootModality = "diamond") -> PlayerMap:
    """Even dual depth under a diamond is Angel; a box root flips the base."""
    if root_modality not in ("diamond", "box"):
        raise ValueError(f"unknown root modality {root_modality!r}")
    base = 0 if root_modality == "diamond" else 1
    players: dict[str, Player] = {}
    for path, sid in lg.labels.items():
        parity = (dual_depth(lg.game, path) + base) % 2
        players[sid] = "angel" if parity == 0 else "demon"
    return PlayerMap(players, root_modality)
