"""Stand-in for the prover command line, used to test argument building and output handling."""

import sys

args = sys.argv[1:]
problem = open(args[args.index("-prove") + 1]).read()
tactic = args[args.index("-tactic") + 1]
assert "ArchiveEntry" in problem and "-verbose" in args and "-timeout" in args

if "lexfail" in tactic:
    print("Lexer does not recognize input at line 1 column 3")
    sys.exit(1)
print("auto... auto done (proved, 3ms)" if tactic == "auto" else f"{tactic.split(';')[0]}... done")
if "x > 0 -> x >= 0" in problem or tactic == "closeit":
    print("Done /tmp/problem.kyx#dglpilot/vc\n(proved)")
    print("PROVED dglpilot/vc: tactic=user,duration=3[ms]")
else:
    print("Done /tmp/problem.kyx#dglpilot/vc\n(failed)")
    print("FAILED dglpilot/vc: tactic=user,duration=3[ms]")
