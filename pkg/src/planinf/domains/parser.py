"""Parser and serializer for the native line-oriented domain format.

The grammar is documented in docs/domain_format.md.  parse_domain turns a
UTF-8 document into a FactoredMDP and reports failures with a 1-based line
and column; serialize_domain writes a canonical flat-table document that
reparses to a structurally identical model.
"""

import re

import numpy as np

from ..mdp import (ACT, PREV, SAME, FactoredMDP, ModelError, Parent,
                   RewardFactor, TransitionCpt)

_NAME = r"[A-Za-z_][A-Za-z0-9_.-]*"
_NAME_RX = re.compile(_NAME)
_HEADERS = (
    ("statevars", re.compile(r"^statevars\s*:\s*(.*)$")),
    ("actionvars", re.compile(r"^actionvars\s*:\s*(.*)$")),
    ("enum", re.compile(r"^action\s+enum\s*:\s*(.*)$")),
    ("cpt", re.compile(rf"^cpt\s+({_NAME})\s*:\s*$")),
    ("reward", re.compile(rf"^reward\s+({_NAME})\s*\(([^()]*)\)\s*:\s*$")),
    ("init", re.compile(r"^init\s*:\s*$")),
    ("meta", re.compile(r"^meta\s*:\s*$")),
)
_RULE = re.compile(r"^if\s+(.+?)\s+then\s+([pv])\s*=\s*(\S+)\s*$")
_DEFAULT = re.compile(r"^default\s+([pv])\s*=\s*(\S+)\s*$")
_TABLE = re.compile(r"^table\b([^:]*):\s*(.*)$")
_LITERAL = re.compile(rf"^(!?)({_NAME})(')?$")


class DomainParseError(ValueError):
    """Malformed domain text; line and col are 1-based, 0 when global."""

    def __init__(self, message, line=0, col=0):
        self.line = line
        self.col = col
        where = f"line {line}, col {col}: " if line else ""
        super().__init__(where + message)


def _err(message, line=0, col=0):
    raise DomainParseError(message, line, col)


class _Row:
    """One non-header line: number, raw text, stripped text, left offset."""

    __slots__ = ("lineno", "raw", "text", "left")

    def __init__(self, lineno, raw):
        self.lineno = lineno
        self.raw = raw
        content = raw.split("#", 1)[0]
        self.text = content.strip()
        self.left = len(content) - len(content.lstrip())

    def col(self, pos):
        """1-based raw-line column for a position in the stripped text."""
        return self.left + pos + 1


class _Doc:
    """Raw sections of a document, before any semantic checking."""

    def __init__(self):
        self.state_vars = []
        self.action_vars = []
        self.enum_values = []
        self.decl_lines = {}
        self.meta_rows = []
        self.init_rows = []
        self.cpt_blocks = []       # (var, header _Row, rows)
        self.reward_blocks = []    # (name, parens text, header _Row, rows)


def _split_sections(text):
    doc = _Doc()
    block = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        row = _Row(lineno, raw)
        if not row.text:
            continue
        matched = None
        for kind, rx in _HEADERS:
            m = rx.match(row.text)
            if m:
                matched = (kind, m)
                break
        if matched is None:
            if block is None:
                _err(f"expected a section header, got {row.text!r}",
                     lineno, row.col(0))
            block.append(row)
            continue
        kind, m = matched
        if kind in ("statevars", "actionvars", "enum"):
            block = None
            names = m.group(1).split()
            if not names:
                _err("empty name list", lineno, row.col(0))
            target = {"statevars": doc.state_vars,
                      "actionvars": doc.action_vars,
                      "enum": doc.enum_values}[kind]
            for n in names:
                col = row.col(row.text.find(n))
                if not re.fullmatch(_NAME, n):
                    _err(f"bad name {n!r}", lineno, col)
                if n in doc.decl_lines:
                    _err(f"{n!r} already declared on line {doc.decl_lines[n]}",
                         lineno, col)
                doc.decl_lines[n] = lineno
                target.append(n)
        elif kind == "cpt":
            block = []
            doc.cpt_blocks.append((m.group(1), row, block))
        elif kind == "reward":
            block = []
            doc.reward_blocks.append((m.group(1), m.group(2), row, block))
        elif kind == "init":
            block = doc.init_rows
        else:
            block = doc.meta_rows
    return doc


class _Resolver:
    """Maps bare tokens to typed parent references with cardinalities."""

    def __init__(self, doc, action_name):
        self.states = set(doc.state_vars)
        self.actions = set(doc.action_vars)
        self.enum = {v: i for i, v in enumerate(doc.enum_values)}
        self.action_name = action_name
        self.enum_card = len(doc.enum_values)

    def literal(self, base, neg, prime, row, col):
        """Token of a rule conjunction -> (parent key, allowed values)."""
        if base in self.enum:
            if prime:
                _err(f"{base!r} is an action value; no same-slice form",
                     row.lineno, col)
            idx = self.enum[base]
            allowed = {idx} if not neg else set(range(self.enum_card)) - {idx}
            return (ACT, self.action_name), allowed
        if base == self.action_name and self.enum:
            _err(f"reference the action by one of its values, not by "
                 f"{base!r}", row.lineno, col)
        if base in self.actions:
            if prime:
                _err(f"action variable {base!r} has no same-slice form",
                     row.lineno, col)
            return (ACT, base), ({0} if neg else {1})
        if base in self.states:
            kind = SAME if prime else PREV
            return (kind, base), ({0} if neg else {1})
        _err(f"reference to undeclared variable {base!r}", row.lineno, col)

    def parent_token(self, tok, row, col, allow_same=True):
        """Token of a table row or reward signature -> parent key."""
        m = _LITERAL.fullmatch(tok)
        if m is None or m.group(1):
            _err(f"bad parent token {tok!r}", row.lineno, col)
        base, prime = m.group(2), bool(m.group(3))
        if base in self.enum:
            _err(f"{base!r} is an action value; use the action variable "
                 f"name {self.action_name!r} here", row.lineno, col)
        if base == self.action_name and self.enum:
            if prime:
                _err("the action has no same-slice form", row.lineno, col)
            return (ACT, base)
        if base in self.actions:
            if prime:
                _err(f"action variable {base!r} has no same-slice form",
                     row.lineno, col)
            return (ACT, base)
        if base in self.states:
            if prime and not allow_same:
                _err("same-slice reference not allowed here", row.lineno, col)
            return (SAME if prime else PREV, base)
        _err(f"reference to undeclared variable {base!r}", row.lineno, col)

    def card(self, key):
        kind, name = key
        if kind == ACT and self.enum and name == self.action_name:
            return self.enum_card
        return 2

    def describe(self, key, value):
        kind, name = key
        if kind == ACT and self.enum and name == self.action_name:
            return list(self.enum)[value]
        tick = "'" if kind == SAME else ""
        return f"{name}{tick}" if value else f"!{name}{tick}"


def _parse_number(tok, row, col, kind):
    try:
        val = float(tok)
    except ValueError:
        _err(f"bad number {tok!r}", row.lineno, col)
    if kind == "p" and not (0.0 <= val <= 1.0):
        _err(f"probability {tok} outside [0, 1]", row.lineno, col)
    return val


def _conjunction_literals(conj, conj_start, row, resolver):
    """Yield (key, allowed) for each `&`-separated literal."""
    out = []
    off = 0
    for part in conj.split("&"):
        tok = part.strip()
        col = row.col(conj_start + off + (part.index(tok) if tok else 0))
        if not tok:
            _err("empty literal in conjunction", row.lineno, col)
        m = _LITERAL.fullmatch(tok)
        if m is None:
            _err(f"bad literal {tok!r}", row.lineno, col)
        out.append(resolver.literal(m.group(2), bool(m.group(1)),
                                    bool(m.group(3)), row, col))
        off += len(part) + 1
    return out


def _build_block(rows, header, resolver, value_kind, fixed_parents=None,
                 what="CPT"):
    """Assemble one conditional table from rule rows or a flat table row.

    Returns (parent keys tuple, numpy table of shape cards).  value_kind is
    "p" (probability rows) or "v" (unrestricted reward values).
    fixed_parents pins the parent list (reward signatures); otherwise
    parents are collected from the rules in first-appearance order.
    """
    rules = []
    default = None
    table_spec = None
    order = list(fixed_parents) if fixed_parents else []
    seen = set(order)

    for row in rows:
        m = _RULE.match(row.text)
        if m:
            if table_spec is not None:
                _err("cannot mix rules with a flat table", row.lineno,
                     row.col(0))
            if m.group(2) != value_kind:
                _err(f"expected {value_kind}=, got {m.group(2)}=",
                     row.lineno, row.col(m.start(2)))
            lits = _conjunction_literals(m.group(1), m.start(1), row, resolver)
            merged = {}
            for key, allowed in lits:
                if fixed_parents is not None and key not in seen:
                    _err(f"{key[1]!r} is not in this factor's signature",
                         row.lineno, row.col(m.start(1)))
                if key not in seen:
                    seen.add(key)
                    order.append(key)
                merged[key] = merged.get(key, set(range(resolver.card(key)))) \
                    & allowed
            val = _parse_number(m.group(3), row, row.col(m.start(3)),
                                value_kind)
            rules.append((merged, val))
            continue
        m = _DEFAULT.match(row.text)
        if m:
            if table_spec is not None:
                _err("cannot mix rules with a flat table", row.lineno,
                     row.col(0))
            if m.group(1) != value_kind:
                _err(f"expected {value_kind}=, got {m.group(1)}=",
                     row.lineno, row.col(m.start(1)))
            if default is not None:
                _err("duplicate default row", row.lineno, row.col(0))
            default = _parse_number(m.group(2), row, row.col(m.start(2)),
                                    value_kind)
            continue
        m = _TABLE.match(row.text)
        if m:
            if rules or default is not None or table_spec is not None:
                _err("cannot mix a flat table with other rows", row.lineno,
                     row.col(0))
            table_spec = (m, row)
            continue
        _err(f"bad row {row.text!r}", row.lineno, row.col(0))

    if table_spec is not None:
        m, row = table_spec
        toks = m.group(1).split()
        if fixed_parents is not None:
            if toks:
                _err("reward tables take their parents from the signature",
                     row.lineno, row.col(m.start(1)))
        else:
            cursor = m.start(1)
            for tok in toks:
                pos = row.text.find(tok, cursor)
                cursor = pos + len(tok)
                key = resolver.parent_token(tok, row, row.col(pos))
                if key in seen:
                    _err(f"duplicate parent {tok!r}", row.lineno,
                         row.col(pos))
                seen.add(key)
                order.append(key)
        if not order:
            _err(f"{what} table needs at least one parent",
                 row.lineno, row.col(0))
        cards = tuple(resolver.card(k) for k in order)
        toks = m.group(2).split()
        need = int(np.prod(cards))
        if len(toks) != need:
            _err(f"expected {need} values for shape {cards}, got {len(toks)}",
                 row.lineno, row.col(m.start(2)))
        vals = []
        cursor = m.start(2)
        for tok in toks:
            pos = row.text.find(tok, cursor)
            cursor = pos + len(tok)
            vals.append(_parse_number(tok, row, row.col(pos), value_kind))
        return tuple(order), np.array(vals).reshape(cards)

    if not rules and default is None:
        _err(f"{what} block has no rows", header.lineno, header.col(0))
    if not order:
        _err(f"{what} needs at least one parent; reference a variable in "
             "some rule", header.lineno, header.col(0))
    cards = tuple(resolver.card(k) for k in order)
    table = np.zeros(cards)
    for cfg in np.ndindex(*cards):
        for merged, val in rules:
            if all(cfg[order.index(k)] in allowed
                   for k, allowed in merged.items()):
                table[cfg] = val
                break
        else:
            if default is None:
                missing = " & ".join(resolver.describe(k, cfg[i])
                                     for i, k in enumerate(order))
                _err(f"non-exhaustive {what}: no rule covers {missing} "
                     "(add a default row)", header.lineno, header.col(0))
            table[cfg] = default
    return tuple(order), table


def _check_synchronic_acyclic(doc, transitions):
    adj = {v: [p.name for p in cpt.parents if p.kind == SAME]
           for v, cpt in transitions.items()}
    indeg = {v: 0 for v in adj}
    for v, ps in adj.items():
        for p in ps:
            indeg[v] += 1
    order = [v for v, d in indeg.items() if d == 0]
    seen = 0
    queue = list(order)
    children = {v: [] for v in adj}
    for v, ps in adj.items():
        for p in ps:
            children[p].append(v)
    while queue:
        v = queue.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen == len(adj):
        return
    stuck = [v for v, d in indeg.items() if d > 0]
    lines = {var: hdr.lineno for var, hdr, _ in doc.cpt_blocks}
    var = min(stuck, key=lambda v: lines.get(v, 0))
    _err(f"cyclic same-slice dependency involving {var!r}",
         lines.get(var, 0), 1)


def parse_domain(text):
    """Parse a domain document (UTF-8 text) into a FactoredMDP."""
    doc = _split_sections(text)

    if doc.action_vars and doc.enum_values:
        _err("declare either actionvars or an action enum, not both")
    if not doc.action_vars and not doc.enum_values:
        _err("no action space: declare actionvars or an action enum")
    if doc.enum_values and len(doc.enum_values) < 2:
        _err("an action enum needs at least two values")
    if not doc.state_vars:
        _err("no state variables declared")

    meta = {"name": "domain", "horizon": 40, "action_name": "action"}
    for row in doc.meta_rows:
        parts = row.text.split(None, 1)
        if len(parts) != 2:
            _err(f"bad meta row {row.text!r}", row.lineno, row.col(0))
        key, value = parts
        vcol = row.col(row.text.find(value, len(key)))
        if key == "name" or key == "action_name":
            if not re.fullmatch(_NAME, value):
                _err(f"bad {key} {value!r}", row.lineno, vcol)
            meta[key] = value
        elif key == "horizon":
            try:
                h = int(value)
            except ValueError:
                h = 0
            if h < 1:
                _err(f"horizon must be a positive integer, got {value!r}",
                     row.lineno, vcol)
            meta[key] = h
        else:
            _err(f"unknown meta key {key!r}", row.lineno, row.col(0))

    resolver = _Resolver(doc, meta["action_name"])
    if doc.enum_values and meta["action_name"] in doc.decl_lines:
        _err(f"action name {meta['action_name']!r} collides with a "
             "declared variable")

    blocks = {}
    for var, hdr, rows in doc.cpt_blocks:
        if var not in resolver.states:
            _err(f"cpt for undeclared state variable {var!r}",
                 hdr.lineno, hdr.col(0))
        if var in blocks:
            _err(f"duplicate cpt for {var!r}", hdr.lineno, hdr.col(0))
        blocks[var] = (hdr, rows)
    missing = [v for v in doc.state_vars if v not in blocks]
    if missing:
        _err(f"no cpt block for state variable(s) {', '.join(missing)}")

    transitions = {}
    for var, (hdr, rows) in blocks.items():
        keys, table = _build_block(rows, hdr, resolver, "p", what="CPT")
        parents = tuple(Parent(name, kind) for kind, name in keys)
        transitions[var] = TransitionCpt(parents, table)

    if not doc.reward_blocks:
        _err("at least one reward factor is required")
    seen_rewards = set()
    rewards = []
    for name, parens, hdr, rows in doc.reward_blocks:
        if name in seen_rewards:
            _err(f"duplicate reward factor {name!r}", hdr.lineno, hdr.col(0))
        seen_rewards.add(name)
        sig = []
        for tok in [t.strip() for t in parens.split(",") if t.strip()]:
            col = hdr.col(hdr.text.find(tok))
            key = resolver.parent_token(tok, hdr, col, allow_same=False)
            if key in sig:
                _err(f"duplicate parent {tok!r}", hdr.lineno, col)
            sig.append(key)
        if not sig:
            _err("reward factor needs at least one parent",
                 hdr.lineno, hdr.col(0))
        keys, table = _build_block(rows, hdr, resolver, "v",
                                   fixed_parents=sig, what="reward factor")
        parents = tuple(Parent(name, kind) for kind, name in keys)
        rewards.append(RewardFactor(name, parents, table))

    initial = {}
    for row in doc.init_rows:
        parts = row.text.split()
        if len(parts) != 2:
            _err(f"bad init row {row.text!r}; expected `var probability`",
                 row.lineno, row.col(0))
        var, ptok = parts
        if var not in resolver.states:
            _err(f"init for undeclared state variable {var!r}",
                 row.lineno, row.col(0))
        if var in initial:
            _err(f"duplicate init for {var!r}", row.lineno, row.col(0))
        initial[var] = _parse_number(
            ptok, row, row.col(row.text.find(ptok, len(var))), "p")

    _check_synchronic_acyclic(doc, transitions)

    try:
        return FactoredMDP(
            doc.state_vars, transitions, rewards,
            action_vars=doc.action_vars or None,
            action_values=tuple(doc.enum_values) if doc.enum_values else None,
            action_name=meta["action_name"], initial=initial,
            horizon_default=meta["horizon"], name=meta["name"])
    except ModelError as e:
        raise DomainParseError(str(e)) from e


def load_domain(path):
    """Read and parse a domain file."""
    with open(path, encoding="utf-8") as fh:
        return parse_domain(fh.read())


def _parent_token(mdp, parent):
    if parent.kind == SAME:
        return parent.name + "'"
    return parent.name


def serialize_domain(mdp):
    """Canonical flat-table document; reparses structurally identical."""
    lines = ["meta:", f"  name {mdp.name}", f"  horizon {mdp.horizon_default}"]
    if mdp.action_name != "action":
        lines.append(f"  action_name {mdp.action_name}")
    lines.append("")
    lines.append("statevars: " + " ".join(mdp.state_vars))
    if mdp.enum_action:
        lines.append("action enum: " + " ".join(mdp.action_values))
    else:
        lines.append("actionvars: " + " ".join(mdp.action_vars))
    nonzero = [(v, p) for v, p in mdp.initial.items() if p != 0.0]
    if nonzero:
        lines.append("")
        lines.append("init:")
        for v, p in nonzero:
            lines.append(f"  {v} {p!r}")
    for v in mdp.state_vars:
        cpt = mdp.transitions[v]
        toks = " ".join(_parent_token(mdp, p) for p in cpt.parents)
        vals = " ".join(repr(float(x)) for x in np.ravel(cpt.table))
        lines.append("")
        lines.append(f"cpt {v}:")
        lines.append(f"  table {toks}: {vals}")
    for f in mdp.reward_factors:
        toks = ", ".join(_parent_token(mdp, p) for p in f.parents)
        vals = " ".join(repr(float(x)) for x in np.ravel(f.table))
        lines.append("")
        lines.append(f"reward {f.name}({toks}):")
        lines.append(f"  table: {vals}")
    return "\n".join(lines) + "\n"
