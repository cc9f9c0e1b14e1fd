"""Scripted subvalue guesses for the Lotka-Volterra synthesis variant."""

from __future__ import annotations

import re

CONST = "a>0 & b>0 & d>0 & g>0"
PRE = "xmin*d<=g & ymin*b<=a"
CONTRACT = "x>=xmin & y>=ymin"

GUESSES = {
    "c": f"{CONST} & {CONTRACT} & {PRE} & d*x<=g & b*y<=a & x>0 & y>0",
    "p": f"{CONST} & {PRE} & d*x=g & b*y=a",
    "l": f"{CONST} & {PRE} & d*(x+xadd)=g & b*y<=a",
    "j": f"{CONST} & {PRE} & d*x<=g & b*y<=a",
}

# loop invariant J implies the contract but is not itself a differential invariant
INVARIANT_J = GUESSES["c"]


def respond(guesses=GUESSES):
    """Scripted backend answering guess prompts from ``guesses`` and everything else with prose."""

    def answer(key, prompt):
        if key.template_id.startswith("guess"):
            sid = re.search(r"subgame_([a-z]+):", prompt.messages[-1]["content"]).group(1)
            return f"reasoning\n\n```\n{guesses[sid]}\n```"
        return "text"

    return answer
