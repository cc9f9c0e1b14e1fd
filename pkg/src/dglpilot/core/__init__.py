"""dGL syntax: AST, parser, printer, labels, variable analysis."""

from __future__ import annotations

from dglpilot.core.analysis import bound_vars, free_vars, must_bound_vars, substitute, substitute_term
from dglpilot.core.ast import *  # noqa: F401,F403
from dglpilot.core.labels import LabeledGame, PlayerMap, attribute_players, label_subgames
from dglpilot.core.parser import DglSyntaxError, parse_formula, parse_game, parse_term
from dglpilot.core.printer import print_formula, print_game, print_term
from dglpilot.core.simplify import simplify

__all__ = [
    "DglSyntaxError",
    "LabeledGame",
    "PlayerMap",
    "attribute_players",
    "bound_vars",
    "free_vars",
    "label_subgames",
    "must_bound_vars",
    "parse_formula",
    "parse_game",
    "parse_term",
    "print_formula",
    "print_game",
    "print_term",
    "simplify",
    "substitute",
    "substitute_term",
]
