"""Plain-text model dump for debugging.

Grammar (one item per line, ``#`` starts a comment)::

    dump     := "minimize" NL objline "subject to" NL row* "bounds" NL bound* kinds "end"
    objline  := "  obj: " expr [" + " CONST]
    row      := "  " NAME ": " expr SENSE RHS          SENSE in {<=, =, >=}
    expr     := COEF " " VAR (" + " | " - ") COEF " " VAR ...
    bound    := "  " LB " <= " VAR " <= " UB            (inf / -inf allowed)
    kinds    := "general" NL ("  " VAR NL)* "binary" NL ("  " VAR NL)*

Numbers are written with ``repr`` so a dump is exact.
"""

from __future__ import annotations

from .model import MilpModel, VarKind


def _expr(model: MilpModel, terms) -> str:
    parts = []
    for j, coef in terms:
        name = model.variables[j].name
        if not parts:
            parts.append(f"{coef!r} {name}")
        else:
            parts.append(f"{'-' if coef < 0 else '+'} {abs(coef)!r} {name}")
    return " ".join(parts) if parts else "0"


def dump_lp(model: MilpModel) -> str:
    lines = [f"# model {model.name}", "minimize"]
    obj = _expr(model, sorted(model.objective.items()))
    const = f" + {model.objective_constant!r}" if model.objective_constant else ""
    lines.append(f"  obj: {obj}{const}")
    lines.append("subject to")
    for r, con in enumerate(model.constraints):
        lines.append(f"  {con.name or f'r{r}'}: {_expr(model, con.terms)} {con.sense.value} {con.rhs!r}")
    lines.append("bounds")
    for v in model.variables:
        lines.append(f"  {v.lb!r} <= {v.name} <= {v.ub!r}")
    lines.append("general")
    lines.extend(f"  {v.name}" for v in model.variables if v.kind is VarKind.INTEGER)
    lines.append("binary")
    lines.extend(f"  {v.name}" for v in model.variables if v.kind is VarKind.BINARY)
    lines.append("end")
    return "\n".join(lines) + "\n"
