"""CPLEX-style LP file export and a reader for the same subset.

Names are restricted to ``[A-Za-z0-9_.]`` and may not start with a digit
or a period; anything else is escaped as ``~XX`` (two hex digits) or
``~uXXXXXX`` for code points above 255. Names that collide with section
keywords get their first character escaped. Escaping is reversible, so a
write/read round trip restores the original names.
"""

from __future__ import annotations

import math
import re

import numpy as np

from buq.errors import ParseError
from buq.optimizer.problem import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, OptProblem, ProblemBuilder

_SAFE = re.compile(r"[A-Za-z0-9_.]")
_KEYWORDS = {"minimize", "minimise", "minimum", "min", "maximize", "maximise", "maximum", "max",
             "subject", "st", "s.t.", "such", "bounds", "bound", "generals", "general", "gen",
             "integers", "binaries", "binary", "bin", "end", "free", "inf", "infinity"}
_TERMS_PER_LINE = 8


def _esc(ch: str) -> str:
    code = ord(ch)
    return f"~{code:02X}" if code < 256 else f"~u{code:06X}"


def escape_name(name: str) -> str:
    out = []
    for i, ch in enumerate(name):
        if not _SAFE.fullmatch(ch) or (i == 0 and (ch.isdigit() or ch == ".")):
            out.append(_esc(ch))
        else:
            out.append(ch)
    text = "".join(out)
    if not text:
        return "~"
    if text.lower() in _KEYWORDS:
        text = _esc(text[0]) + text[1:]
    return text


_UNESC = re.compile(r"~u([0-9A-F]{6})|~([0-9A-F]{2})")


def unescape_name(text: str) -> str:
    if text == "~":
        return ""
    return _UNESC.sub(lambda m: chr(int(m.group(1) or m.group(2), 16)), text)


def _num(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def _expr(coefs: np.ndarray, names: list[str]) -> str:
    parts = []
    for k, (a, nm) in enumerate(zip(coefs, names)):
        sign = "-" if a < 0 else "+"
        term = f"{_num(abs(a))} {nm}"
        if k == 0:
            parts.append(term if sign == "+" else f"- {term}")
        else:
            parts.append(f"{sign} {term}")
    lines = [" ".join(parts[i:i + _TERMS_PER_LINE]) for i in range(0, len(parts), _TERMS_PER_LINE)]
    return "\n   ".join(lines)


def export_lp_file(p: OptProblem) -> str:
    """Render ``p`` as LP-format text."""
    names = [escape_name(p.var_name(j)) for j in range(p.n_vars)]
    if len(set(names)) != len(names):
        raise ValueError("variable names are not unique")
    out = [f"\\ Problem: {escape_name(p.name)}", "Minimize"]
    nz = np.flatnonzero(p.c)
    if nz.size:
        out.append(" obj: " + _expr(p.c[nz], [names[j] for j in nz]))
    else:
        out.append(" obj: 0")
    out.append("Subject To")
    A = p.A.tocsr()
    rel = {LE: "<=", EQ: "=", GE: ">="}
    for i in range(p.n_cons):
        s, e = A.indptr[i], A.indptr[i + 1]
        cols, vals = A.indices[s:e], A.data[s:e]
        if cols.size == 0:
            cols, vals = np.array([0]), np.array([0.0])
        out.append(f" {escape_name(p.con_name(i))}: {_expr(vals, [names[j] for j in cols])} "
                   f"{rel[int(p.sense[i])]} {_num(p.rhs[i])}")
    bounds = []
    for j in range(p.n_vars):
        lo, hi, nm = p.lb[j], p.ub[j], names[j]
        if p.kind[j] == BINARY and lo == 0 and hi == 1:
            continue
        if lo == 0 and hi == math.inf:
            continue
        if lo == -math.inf and hi == math.inf:
            bounds.append(f" {nm} free")
        elif lo == hi:
            bounds.append(f" {nm} = {_num(lo)}")
        elif hi == math.inf:
            bounds.append(f" {nm} >= {_num(lo)}")
        else:
            bounds.append(f" {_num(lo)} <= {nm} <= {_num(hi)}")
    if bounds:
        out.append("Bounds")
        out.extend(bounds)
    generals = [names[j] for j in range(p.n_vars) if p.kind[j] == INTEGER]
    binaries = [names[j] for j in range(p.n_vars) if p.kind[j] == BINARY]
    if generals:
        out.append("Generals")
        out.extend(" " + " ".join(generals[i:i + 10]) for i in range(0, len(generals), 10))
    if binaries:
        out.append("Binaries")
        out.extend(" " + " ".join(binaries[i:i + 10]) for i in range(0, len(binaries), 10))
    out.append("End")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Reader

_TOKEN = re.compile(r"""
    (?P<rel><=|=<|>=|=>|<|>|=)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<sign>[+-])
  | (?P<label>[^\s:<>=+\-]+):
  | (?P<name>[^\s:<>=+\-]+)
""", re.VERBOSE)

_SECTIONS = {
    "minimize": "obj", "minimise": "obj", "minimum": "obj", "min": "obj",
    "maximize": "max", "maximise": "max", "maximum": "max", "max": "max",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "generals": "gen", "general": "gen", "gen": "gen", "integers": "gen",
    "binaries": "bin", "binary": "bin", "bin": "bin", "end": "end",
}


def _tokens(text: str, lineno: int) -> list[tuple[str, str]]:
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"line {lineno}: cannot tokenise {text[pos:]!r}")
        toks.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    return toks


def _parse_linear(toks, lineno):
    """Parse ``[label:] terms [rel rhs]`` -> (label, [(coef, name)], rel, rhs)."""
    label = None
    i = 0
    if toks and toks[0][0] == "label":
        label = toks[0][1]
        i = 1
    terms = []
    constant = 0.0
    sign = 1.0
    coef = None
    rel = rhs = None
    while i < len(toks):
        kind, val = toks[i]
        if kind == "sign":
            sign = -1.0 if val == "-" else 1.0
        elif kind == "num":
            if coef is not None:
                constant += sign * coef
                sign = 1.0
            coef = float(val)
        elif kind == "name":
            if val.lower() in ("inf", "infinity"):
                raise ParseError(f"line {lineno}: unexpected {val!r}")
            terms.append((sign * (1.0 if coef is None else coef), val))
            sign, coef = 1.0, None
        elif kind == "rel":
            if coef is not None:
                constant += sign * coef
                sign, coef = 1.0, None
            rel = {"<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE, "=": EQ}[val]
            rest = toks[i + 1:]
            rsign = 1.0
            if rest and rest[0][0] == "sign":
                rsign = -1.0 if rest[0][1] == "-" else 1.0
                rest = rest[1:]
            if len(rest) != 1 or rest[0][0] not in ("num", "name"):
                raise ParseError(f"line {lineno}: bad right-hand side")
            rhs = rsign * _parse_value(rest[0][1], lineno)
            break
        else:
            raise ParseError(f"line {lineno}: unexpected label {val!r}")
        i += 1
    if coef is not None:
        constant += sign * coef
    return label, terms, rel, rhs, constant


def _parse_value(text: str, lineno: int) -> float:
    low = text.lower()
    if low in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"line {lineno}: expected a number, got {text!r}") from None


def read_lp_file(text: str) -> OptProblem:
    """Parse LP-format text (the subset written by :func:`export_lp_file`)."""
    section = None
    obj_buf: list[tuple[int, str]] = []
    con_buf: list[tuple[int, str]] = []
    bound_lines: list[tuple[int, str]] = []
    generals: list[str] = []
    binaries: list[str] = []
    maximise = False
    name = "problem"
    for lineno, raw in enumerate(text.splitlines(), 1):
        if raw.lstrip().startswith("\\ Problem:"):
            name = unescape_name(raw.split(":", 1)[1].strip())
            continue
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = " ".join(line.lower().split())
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section == "max":
                maximise, section = True, "obj"
            if section == "end":
                break
            continue
        if section == "obj":
            obj_buf.append((lineno, line))
        elif section == "st":
            con_buf.append((lineno, line))
        elif section == "bounds":
            bound_lines.append((lineno, line))
        elif section == "gen":
            generals.extend(line.split())
        elif section == "bin":
            binaries.extend(line.split())
        else:
            raise ParseError(f"line {lineno}: content outside any section")

    var_order: dict[str, int] = {}

    def var(nm: str) -> int:
        if nm not in var_order:
            var_order[nm] = len(var_order)
        return var_order[nm]

    obj_toks = [t for ln, s in obj_buf for t in _tokens(s, ln)]
    _, obj_terms, rel, _, constant = _parse_linear(obj_toks, obj_buf[0][0] if obj_buf else 0)
    if rel is not None:
        raise ParseError("relation in objective")
    if constant != 0.0:
        raise ParseError("objective constants are not supported")
    obj = [(c, var(nm)) for c, nm in obj_terms]

    rows = []
    pending: list[tuple[str, str]] = []
    first_line = 0
    for ln, s in con_buf:
        if not pending:
            first_line = ln
        pending.extend(_tokens(s, ln))
        if any(k == "rel" for k, _ in pending):
            label, terms, rel, rhs, constant = _parse_linear(pending, first_line)
            rows.append((label or f"c{len(rows)}", [(c, var(nm)) for c, nm in terms], rel, rhs - constant))
            pending = []
    if pending:
        raise ParseError(f"line {first_line}: constraint without relation")

    lb: dict[int, float] = {}
    ub: dict[int, float] = {}
    for ln, s in bound_lines:
        toks = _tokens(s, ln)
        vals = [v for _, v in toks]
        low = [v.lower() for v in vals]
        if len(toks) == 2 and low[1] == "free":
            j = var(vals[0])
            lb[j], ub[j] = -math.inf, math.inf
            continue
        # Join signs onto numbers / inf.
        merged = []
        k = 0
        while k < len(toks):
            kind, v = toks[k]
            if kind == "sign" and k + 1 < len(toks):
                merged.append(("val", ("-" if v == "-" else "") + toks[k + 1][1]))
                k += 2
                continue
            if kind == "num" or (kind == "name" and v.lower() in ("inf", "infinity")):
                merged.append(("val", v))
            else:
                merged.append((kind, v))
            k += 1
        kinds = [k for k, _ in merged]
        if kinds == ["val", "rel", "name", "rel", "val"]:
            j = var(merged[2][1])
            lb[j] = _parse_signed(merged[0][1], ln)
            ub[j] = _parse_signed(merged[4][1], ln)
        elif kinds == ["name", "rel", "val"]:
            j = var(merged[0][1])
            v = _parse_signed(merged[2][1], ln)
            op = merged[1][1]
            if op in ("<=", "=<", "<"):
                ub[j] = v
            elif op in (">=", "=>", ">"):
                lb[j] = v
            else:
                lb[j] = ub[j] = v
        elif kinds == ["val", "rel", "name"]:
            j = var(merged[2][1])
            v = _parse_signed(merged[0][1], ln)
            op = merged[1][1]
            if op in ("<=", "=<", "<"):
                lb[j] = v
            elif op in (">=", "=>", ">"):
                ub[j] = v
            else:
                lb[j] = ub[j] = v
        else:
            raise ParseError(f"line {ln}: unrecognised bound {s!r}")

    kinds = {}
    for nm in generals:
        kinds[var(nm)] = INTEGER
    for nm in binaries:
        j = var(nm)
        kinds[j] = BINARY
        lb.setdefault(j, 0.0)
        ub.setdefault(j, 1.0)

    n = len(var_order)
    names = [unescape_name(nm) for nm in var_order]
    b = ProblemBuilder(name=name)
    b.add_vars(names, lb=[lb.get(j, 0.0) for j in range(n)], ub=[ub.get(j, math.inf) for j in range(n)],
               cost=_dense(obj, n, -1.0 if maximise else 1.0),
               kind=[kinds.get(j, CONTINUOUS) for j in range(n)])
    for label, terms, rel, rhs in rows:
        cols = [j for _, j in terms]
        vals = [c for c, _ in terms]
        b.add_row(unescape_name(label), cols, vals, rel, rhs)
    return b.build()


def _parse_signed(text: str, lineno: int) -> float:
    neg = text.startswith("-")
    v = _parse_value(text.lstrip("-"), lineno)
    return -v if neg else v


def _dense(terms, n, scale):
    c = np.zeros(n)
    for coef, j in terms:
        c[j] += scale * coef
    return c
