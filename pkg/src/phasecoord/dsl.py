"""Textual model format: parser and canonical serializer.

Surface syntax, one declaration per construct ("#" starts a line comment):

    version 0;
    component Worker[2] {            # [2] declares a family Worker1, Worker2
      states: OutCS, Waiting, InCS;
      initial: OutCS;
      transitions:
        OutCS - request -> Waiting;
        Waiting - enter -> InCS;
      partition CSRole {
        initial: Free;
        phase Free {
          states: OutCS, Waiting;
          transitions: OutCS - request -> Waiting;
          trap asking { Waiting }
        }
      }
    }
    rule admit[i]: Scheduler: Idle - grant[i] -> Busy[i]
        * Worker[i](CSRole): Free - asking -> Crit;
    var Migr = { add rule ...; remove rule old; set Crs = {}; };

Rules may use `[i]` indices; each such rule is expanded once per member of
the referenced family, `[i+1]` wrapping around the family bound, so the
engine itself never sees an index.  Changeset literals appear as variable
values and as `with` clauses on rules; a `with NAME` clause references a
variable declared anywhere in the file (declaration order carries no
meaning; only reference cycles are rejected).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .changeset import ChangeSet
from .model import (
    ConsistencyRule,
    Diagnostic,
    Partition,
    Phase,
    RoleTransfer,
    Std,
    StdModel,
    Transition,
    Trap,
    validate_model,
)

PUNCT = ("->", "{", "}", "(", ")", "[", "]", ":", ";", ",", ".", "=", "*", "-", "+")


@dataclass(frozen=True)
class SourceModel:
    text: str
    name: str = "<input>"


@dataclass(frozen=True)
class Token:
    kind: str  # "name" | "int" | punctuation literal | "eof"
    value: str
    line: int
    column: int


class ParseError(Exception):
    def __init__(self, message: str, token: Token):
        self.message = message
        self.token = token
        super().__init__(f"{token.line}:{token.column}: {message}")

    def diagnostic(self) -> Diagnostic:
        return Diagnostic(
            "syntax-error", "parse", self.token.value, self.message,
            line=self.token.line, column=self.token.column,
        )


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, col, i, n = 1, 1, 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("name", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        matched = False
        for p in PUNCT:
            if text.startswith(p, i):
                tokens.append(Token(p, p, line, col))
                i += len(p)
                col += len(p)
                matched = True
                break
        if not matched:
            raise ParseError(f"unexpected character {c!r}", Token("?", c, line, col))
    tokens.append(Token("eof", "", line, col))
    return tokens


# Indexable name: (base, None) plain, (base, int) literal index,
# (base, ("i", offset)) family index variable.
IName = tuple


@dataclass
class PTransfer:
    component: IName
    partition: IName
    source: IName
    trap: IName
    target: IName


@dataclass
class PRule:
    name: IName
    manager: IName
    step: tuple[IName, IName, IName]
    transfers: list[PTransfer]
    change: Optional[Union[str, "PChangeSet"]]
    token: Token


@dataclass
class PChangeSet:
    add_components: list = field(default_factory=list)
    add_partitions: list = field(default_factory=list)
    add_phases: list = field(default_factory=list)
    add_traps: list = field(default_factory=list)
    add_rules: list = field(default_factory=list)
    remove_rules: list = field(default_factory=list)
    set_variables: list = field(default_factory=list)
    remove_phases: list = field(default_factory=list)
    remove_partitions: list = field(default_factory=list)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, value: Optional[str] = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value or kind
            raise ParseError(f"expected {want!r}, found {tok.value!r}", tok)
        return self.next()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "name" and tok.value == word

    def expect_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            tok = self.peek()
            raise ParseError(f"expected {word!r}, found {tok.value!r}", tok)
        return self.next()

    def name(self) -> str:
        return self.expect("name").value

    def integer(self) -> int:
        return int(self.expect("int").value)

    def iname(self) -> IName:
        base = self.name()
        if self.peek().kind != "[":
            return (base, None)
        self.next()
        tok = self.peek()
        if tok.kind == "int":
            idx: object = int(self.next().value)
        elif tok.kind == "name" and tok.value == "i":
            self.next()
            offset = 0
            if self.peek().kind == "+":
                self.next()
                offset = self.integer()
            idx = ("i", offset)
        else:
            raise ParseError("expected index: an integer, i, or i+K", tok)
        self.expect("]")
        return (base, idx)

    def name_list(self, stop: str) -> list[str]:
        out: list[str] = []
        if self.peek().kind == stop:
            return out
        out.append(self.name())
        while self.peek().kind == ",":
            self.next()
            out.append(self.name())
        return out

    def plain_transition(self) -> tuple[str, str, str]:
        src = self.name()
        self.expect("-")
        act = self.name()
        self.expect("->")
        tgt = self.name()
        return (src, act, tgt)

    def indexed_transition(self) -> tuple[IName, IName, IName]:
        src = self.iname()
        self.expect("-")
        act = self.iname()
        self.expect("->")
        tgt = self.iname()
        return (src, act, tgt)

    def dotted(self, parts: int) -> list[str]:
        out = [self.name()]
        for _ in range(parts - 1):
            self.expect(".")
            out.append(self.name())
        return out

    # -- bodies --------------------------------------------------------------

    def component_inner(self) -> dict:
        self.expect_keyword("states")
        self.expect(":")
        states = self.name_list(";")
        self.expect(";")
        self.expect_keyword("initial")
        self.expect(":")
        initial = self.name()
        self.expect(";")
        self.expect_keyword("transitions")
        self.expect(":")
        transitions = []
        while self.peek().kind == "name" and not self.at_keyword("partition"):
            transitions.append(self.plain_transition())
            self.expect(";")
        partitions = []
        while self.at_keyword("partition"):
            self.next()
            tok = self.peek()
            pname = self.name()
            self.expect("{")
            partitions.append(self.partition_inner(pname, tok))
            self.expect("}")
        return {"states": states, "initial": initial,
                "transitions": transitions, "partitions": partitions}

    def partition_inner(self, name: str, token: Token) -> dict:
        self.expect_keyword("initial")
        self.expect(":")
        initial = self.name()
        self.expect(";")
        phases = []
        while self.at_keyword("phase"):
            self.next()
            tok = self.peek()
            phname = self.name()
            self.expect("{")
            phases.append(self.phase_inner(phname, tok))
            self.expect("}")
        return {"name": name, "initial": initial, "phases": phases, "token": token}

    def phase_inner(self, name: str, token: Token) -> dict:
        self.expect_keyword("states")
        self.expect(":")
        states = self.name_list(";")
        self.expect(";")
        self.expect_keyword("transitions")
        self.expect(":")
        transitions = []
        if self.peek().kind == "name":
            transitions.append(self.plain_transition())
            while self.peek().kind == ",":
                self.next()
                transitions.append(self.plain_transition())
        self.expect(";")
        traps = []
        while self.at_keyword("trap"):
            self.next()
            trap_tok = self.peek()
            tname = self.name()
            self.expect("{")
            tstates = self.name_list("}")
            self.expect("}")
            traps.append({"name": tname, "states": tstates, "token": trap_tok})
        return {"name": name, "states": states, "transitions": transitions,
                "traps": traps, "token": token}

    # -- declarations ----------------------------------------------------------

    def rule_decl(self) -> PRule:
        self.expect_keyword("rule")
        tok = self.peek()
        name = self.iname()
        self.expect(":")
        manager = self.iname()
        self.expect(":")
        step = self.indexed_transition()
        transfers = []
        while self.peek().kind == "*":
            self.next()
            comp = self.iname()
            self.expect("(")
            part = self.iname()
            self.expect(")")
            self.expect(":")
            source = self.iname()
            self.expect("-")
            trap = self.iname()
            self.expect("->")
            target = self.iname()
            transfers.append(PTransfer(comp, part, source, trap, target))
        change: Optional[Union[str, PChangeSet]] = None
        if self.at_keyword("with"):
            self.next()
            if self.peek().kind == "{":
                change = self.changeset_literal()
            else:
                change = self.name()
        self.expect(";")
        return PRule(name=name, manager=manager, step=step, transfers=transfers,
                     change=change, token=tok)

    def changeset_literal(self) -> PChangeSet:
        self.expect("{")
        cs = PChangeSet()
        while self.peek().kind != "}":
            tok = self.peek()
            if self.at_keyword("add"):
                self.next()
                kind = self.name()
                if kind == "component":
                    cname = self.name()
                    bound = None
                    if self.peek().kind == "[":
                        self.next()
                        bound = self.integer()
                        self.expect("]")
                    self.expect("{")
                    body = self.component_inner()
                    self.expect("}")
                    cs.add_components.append((cname, bound, body, tok))
                elif kind == "partition":
                    comp, pname = self.dotted(2)
                    self.expect("{")
                    body = self.partition_inner(pname, tok)
                    self.expect("}")
                    cs.add_partitions.append((comp, body))
                elif kind == "phase":
                    comp, part, phname = self.dotted(3)
                    self.expect("{")
                    body = self.phase_inner(phname, tok)
                    self.expect("}")
                    cs.add_phases.append((comp, part, body))
                elif kind == "trap":
                    comp, part, phname, tname = self.dotted(4)
                    self.expect("{")
                    tstates = self.name_list("}")
                    self.expect("}")
                    cs.add_traps.append(
                        (comp, part, phname, {"name": tname, "states": tstates, "token": tok})
                    )
                elif kind == "rule":
                    self.pos -= 1  # hand the 'rule' keyword back to rule_decl
                    cs.add_rules.append(self.rule_decl())
                else:
                    raise ParseError(f"cannot add {kind!r}", tok)
            elif self.at_keyword("remove"):
                self.next()
                kind = self.name()
                if kind == "rule":
                    cs.remove_rules.append(self.iname())
                elif kind == "phase":
                    cs.remove_phases.append(tuple(self.dotted(3)))
                elif kind == "partition":
                    cs.remove_partitions.append(tuple(self.dotted(2)))
                else:
                    raise ParseError(f"cannot remove {kind!r}", tok)
                self.expect(";")
            elif self.at_keyword("set"):
                self.next()
                vname = self.name()
                self.expect("=")
                if self.peek().kind == "{":
                    value: object = self.changeset_literal()
                else:
                    value = self.integer()
                self.expect(";")
                cs.set_variables.append((vname, value))
            else:
                raise ParseError(f"expected add/remove/set, found {tok.value!r}", tok)
        self.expect("}")
        return cs

    def document(self) -> dict:
        """Declarations in document order; later declarations may reference
        earlier ones (family bounds, changeset variables) but not vice versa."""
        version = None
        decls: list[tuple[str, object]] = []
        while self.peek().kind != "eof":
            if self.at_keyword("version"):
                tok = self.next()
                if version is not None:
                    raise ParseError("duplicate version directive", tok)
                version = self.integer()
                self.expect(";")
            elif self.at_keyword("component"):
                self.next()
                tok = self.peek()
                name = self.name()
                bound = None
                if self.peek().kind == "[":
                    self.next()
                    bound = self.integer()
                    self.expect("]")
                self.expect("{")
                body = self.component_inner()
                self.expect("}")
                decls.append(("component", (name, bound, body, tok)))
            elif self.at_keyword("rule"):
                decls.append(("rule", self.rule_decl()))
            elif self.at_keyword("var"):
                self.next()
                tok = self.peek()
                name = self.name()
                self.expect("=")
                if self.peek().kind == "{":
                    value: object = self.changeset_literal()
                else:
                    value = self.integer()
                self.expect(";")
                decls.append(("var", (name, value, tok)))
            else:
                tok = self.peek()
                raise ParseError(f"expected a declaration, found {tok.value!r}", tok)
        return {"version": version or 0, "decls": decls}


# -- expansion and model building ---------------------------------------------


class _Builder:
    """Turns the parse forms into domain values, expanding family indices."""

    def __init__(self, source_name: str):
        self.source_name = source_name
        self.diags: list[Diagnostic] = []
        self.spans: dict[str, tuple[int, int]] = {}
        self.families: dict[str, int] = {}
        self.variables: dict[str, object] = {}

    def error(self, code: str, owner: str, element: str, token: Token, detail: str = ""):
        self.diags.append(
            Diagnostic(code, owner, element, detail, line=token.line, column=token.column)
        )

    def resolve_iname(self, iname: IName, index: Optional[int], bound: Optional[int],
                      token: Token) -> str:
        base, idx = iname
        if idx is None:
            return base
        if isinstance(idx, int):
            return f"{base}{idx}"
        _, offset = idx
        if index is None or bound is None:
            self.error("unbound-index", "rule", base, token,
                       "index variable used in a rule that references no family")
            return base
        resolved = ((index - 1 + offset) % bound) + 1
        return f"{base}{resolved}"

    def rule_bound(self, prule: PRule) -> Optional[int]:
        """Family bound for a rule using [i]: taken from the family the rule
        itself references; mixed bounds are rejected."""
        inames = [prule.name, prule.manager, *prule.step]
        for tr in prule.transfers:
            inames += [tr.component, tr.partition, tr.source, tr.trap, tr.target]
        uses_var = any(isinstance(idx, tuple) for _, idx in inames)
        if not uses_var:
            return None
        bounds = {self.families[base] for base, idx in inames
                  if isinstance(idx, tuple) and base in self.families}
        if len(bounds) != 1:
            self.error("unbound-index", "rule", prule.name[0], prule.token,
                       "cannot determine a unique family bound")
            return None
        return bounds.pop()

    def build_trap(self, body: dict, owner: str) -> Trap:
        self.spans[f"trap:{owner}.{body['name']}"] = (body["token"].line, body["token"].column)
        return Trap(body["name"], frozenset(body["states"]))

    def build_phase(self, body: dict, owner: str) -> Phase:
        where = f"{owner}.{body['name']}"
        self.spans[f"phase:{where}"] = (body["token"].line, body["token"].column)
        return Phase(
            name=body["name"],
            states=frozenset(body["states"]),
            transitions=frozenset(Transition(*t) for t in body["transitions"]),
            traps=tuple(self.build_trap(t, where) for t in body["traps"]),
        )

    def build_partition(self, body: dict, owner: str) -> Partition:
        where = f"{owner}.{body['name']}"
        self.spans[f"partition:{where}"] = (body["token"].line, body["token"].column)
        return Partition(
            name=body["name"],
            initial=body["initial"],
            phases=tuple(self.build_phase(p, where) for p in body["phases"]),
        )

    def build_std(self, name: str, body: dict, token: Token) -> Std:
        self.spans[f"component:{name}"] = (token.line, token.column)
        transitions = frozenset(Transition(*t) for t in body["transitions"])
        return Std(
            name=name,
            states=frozenset(body["states"]),
            actions=frozenset(t.action for t in transitions),
            transitions=transitions,
            initial=body["initial"],
            partitions=tuple(self.build_partition(p, name) for p in body["partitions"]),
        )

    def add_component_decl(self, out: dict[str, Std], decl) -> None:
        name, bound, body, token = decl
        names = [name] if bound is None else [f"{name}{k}" for k in range(1, bound + 1)]
        if bound is not None:
            self.families[name] = bound
        for n in names:
            if n in out:
                self.error("duplicate-name", "component", n, token)
                continue
            out[n] = self.build_std(n, body, token)

    def add_rule_decl(self, out: dict[str, ConsistencyRule], prule: PRule) -> None:
        bound = self.rule_bound(prule)
        indices = [None] if bound is None else list(range(1, bound + 1))
        for k in indices:
            rule = self.build_rule(prule, k, bound)
            if rule.name in out:
                self.error("duplicate-name", "rule", rule.name, prule.token)
                continue
            out[rule.name] = rule

    def build_rule(self, prule: PRule, index: Optional[int], bound: Optional[int]) -> ConsistencyRule:
        tok = prule.token

        def res(iname: IName) -> str:
            return self.resolve_iname(iname, index, bound, tok)

        name = res(prule.name)
        self.spans[f"rule:{name}"] = (tok.line, tok.column)
        change = None
        if prule.change is not None:
            if isinstance(prule.change, str):
                value = self.variables.get(prule.change)
                if not isinstance(value, ChangeSet):
                    self.error("unresolved-reference", "rule", prule.change, tok,
                               "with-clause names no changeset variable declared above")
                else:
                    change = value
            else:
                change = self.build_changeset(prule.change, index, bound)
        return ConsistencyRule(
            name=name,
            manager=res(prule.manager),
            manager_step=Transition(*(res(p) for p in prule.step)),
            transfers=tuple(
                RoleTransfer(res(t.component), res(t.partition), res(t.source),
                             res(t.trap), res(t.target))
                for t in prule.transfers
            ),
            change=change,
        )

    def build_changeset(self, pcs: PChangeSet, index: Optional[int] = None,
                        bound: Optional[int] = None) -> ChangeSet:
        add_components = []
        for name, fam_bound, body, token in pcs.add_components:
            names = [name] if fam_bound is None else [f"{name}{k}" for k in range(1, fam_bound + 1)]
            for n in names:
                add_components.append(self.build_std(n, body, token))
        add_rules = []
        for prule in pcs.add_rules:
            inner_bound = self.rule_bound(prule)
            if inner_bound is not None and index is None:
                for k in range(1, inner_bound + 1):
                    add_rules.append(self.build_rule(prule, k, inner_bound))
            else:
                add_rules.append(self.build_rule(prule, index, bound))
        return ChangeSet(
            add_components=tuple(add_components),
            add_partitions=tuple(
                (comp, self.build_partition(body, comp)) for comp, body in pcs.add_partitions
            ),
            add_phases=tuple(
                (comp, part, self.build_phase(body, f"{comp}.{part}"))
                for comp, part, body in pcs.add_phases
            ),
            add_traps=tuple(
                (comp, part, ph, self.build_trap(body, f"{comp}.{part}.{ph}"))
                for comp, part, ph, body in pcs.add_traps
            ),
            add_rules=tuple(add_rules),
            remove_rules=tuple(
                self.resolve_iname(n, index, bound, Token("name", n[0], 0, 0))
                for n in pcs.remove_rules
            ),
            set_variables=tuple(
                (name, self.build_changeset(v, index, bound) if isinstance(v, PChangeSet) else v)
                for name, v in pcs.set_variables
            ),
            remove_phases=tuple(pcs.remove_phases),
            remove_partitions=tuple(pcs.remove_partitions),
        )


def _var_references(value) -> set[str]:
    """Names of variables a changeset body refers to via rule with-clauses."""
    if not isinstance(value, PChangeSet):
        return set()
    out: set[str] = set()
    for prule in value.add_rules:
        if isinstance(prule.change, str):
            out.add(prule.change)
        elif prule.change is not None:
            out |= _var_references(prule.change)
    for _, nested in value.set_variables:
        out |= _var_references(nested)
    return out


def _dependency_order(var_decls: list, builder: "_Builder") -> list:
    """Variables sorted so every reference is built before its referrer;
    members of reference cycles are dropped with a diagnostic."""
    pending = {name: (value, token) for name, value, token in var_decls}
    deps = {name: _var_references(value) & set(pending) for name, value, _ in var_decls}
    ordered = []
    while pending:
        ready = [n for n in pending if not (deps[n] & set(pending))]
        if not ready:
            for name in sorted(pending):
                builder.error("circular-reference", "var", name, pending[name][1])
            break
        for name, _, token in var_decls:
            if name in ready:
                value, token = pending.pop(name)
                ordered.append((name, value, token))
    return ordered


@dataclass
class ParseResult:
    model: Optional[StdModel]
    diagnostics: list[Diagnostic]
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.model is not None and not self.diagnostics


def _locate(diag: Diagnostic, spans: dict[str, tuple[int, int]]) -> Diagnostic:
    """Best-effort source span for a validator diagnostic."""
    candidates = [
        f"trap:{diag.owner}.{diag.element.split('.')[0]}",
        f"phase:{diag.owner}",
        f"partition:{diag.owner}",
        f"rule:{diag.owner}",
        f"component:{diag.owner}",
        f"var:{diag.owner}",
        f"component:{diag.owner.split('.')[0]}",
    ]
    for key in candidates:
        if key in spans:
            line, col = spans[key]
            return Diagnostic(diag.code, diag.owner, diag.element, diag.detail, line, col)
    return diag


def parse_model(source: Union[str, SourceModel]) -> ParseResult:
    """Parse a document; on grammatical success the model is also validated
    and any validator diagnostics are attached with source spans."""
    if isinstance(source, str):
        source = SourceModel(source)
    try:
        tokens = tokenize(source.text)
        doc = _Parser(tokens).document()
    except ParseError as exc:
        return ParseResult(model=None, diagnostics=[exc.diagnostic()])
    builder = _Builder(source.name)
    components: dict[str, Std] = {}
    rules: dict[str, ConsistencyRule] = {}
    # declaration order is not semantic: components (and family bounds) are
    # registered first, then variables in reference-dependency order, then
    # rules, so any declaration may reference any other
    for kind, payload in doc["decls"]:
        if kind == "component":
            builder.add_component_decl(components, payload)
    var_decls = []
    seen_vars = set()
    for kind, payload in doc["decls"]:
        if kind != "var":
            continue
        name, value, token = payload
        if name in seen_vars:
            builder.error("duplicate-name", "var", name, token)
            continue
        seen_vars.add(name)
        builder.spans[f"var:{name}"] = (token.line, token.column)
        var_decls.append((name, value, token))
    for name, value, token in _dependency_order(var_decls, builder):
        builder.variables[name] = (
            builder.build_changeset(value) if isinstance(value, PChangeSet) else value
        )
    for kind, payload in doc["decls"]:
        if kind == "rule":
            builder.add_rule_decl(rules, payload)
    model = StdModel(
        components=components,
        rules=rules,
        variables=dict(builder.variables),
        version=doc["version"],
    )
    diags = list(builder.diags)
    diags.extend(_locate(d, builder.spans) for d in validate_model(model))
    return ParseResult(model=model, diagnostics=diags, spans=builder.spans)


# -- serialization ---------------------------------------------------------


def _fmt_transition(t: Transition) -> str:
    return f"{t.source} - {t.action} -> {t.target}"


def _serialize_phase(phase: Phase, indent: str) -> list[str]:
    lines = [f"{indent}phase {phase.name} {{"]
    lines.append(f"{indent}  states: {', '.join(sorted(phase.states))};")
    trans = ", ".join(_fmt_transition(t) for t in sorted(phase.transitions))
    lines.append(f"{indent}  transitions: {trans};" if trans else f"{indent}  transitions: ;")
    for trap in sorted(phase.traps, key=lambda t: t.name):
        lines.append(f"{indent}  trap {trap.name} {{ {', '.join(sorted(trap.states))} }}")
    lines.append(f"{indent}}}")
    return lines


def _serialize_partition(part: Partition, indent: str) -> list[str]:
    lines = [f"{indent}partition {part.name} {{", f"{indent}  initial: {part.initial};"]
    for phase in sorted(part.phases, key=lambda p: p.name):
        lines.extend(_serialize_phase(phase, indent + "  "))
    lines.append(f"{indent}}}")
    return lines


def _serialize_component_body(std: Std, indent: str) -> list[str]:
    lines = [f"{indent}states: {', '.join(sorted(std.states))};"]
    lines.append(f"{indent}initial: {std.initial};")
    lines.append(f"{indent}transitions:")
    for t in sorted(std.transitions):
        lines.append(f"{indent}  {_fmt_transition(t)};")
    for part in sorted(std.partitions, key=lambda p: p.name):
        lines.extend(_serialize_partition(part, indent))
    return lines


def _serialize_rule(rule: ConsistencyRule, indent: str = "") -> str:
    parts = [f"{indent}rule {rule.name}: {rule.manager}: {_fmt_transition(rule.manager_step)}"]
    for tr in rule.transfers:
        parts.append(
            f"    * {tr.component}({tr.partition}): {tr.source} - {tr.trap} -> {tr.target}"
        )
    text = "\n".join(parts)
    if rule.change is not None:
        text += f"\n    with {_serialize_changeset(rule.change, indent + '    ')}"
    return text + ";"


def _serialize_changeset(cs: ChangeSet, indent: str) -> str:
    inner = indent + "  "
    lines = ["{"]
    for std in sorted(cs.add_components, key=lambda s: s.name):
        lines.append(f"{inner}add component {std.name} {{")
        lines.extend(_serialize_component_body(std, inner + "  "))
        lines.append(f"{inner}}}")
    for comp, part in sorted(cs.add_partitions, key=lambda x: (x[0], x[1].name)):
        lines.append(f"{inner}add partition {comp}.{part.name} {{")
        lines.append(f"{inner}  initial: {part.initial};")
        for phase in sorted(part.phases, key=lambda p: p.name):
            lines.extend(_serialize_phase(phase, inner + "  "))
        lines.append(f"{inner}}}")
    for comp, pname, phase in sorted(cs.add_phases, key=lambda x: (x[0], x[1], x[2].name)):
        lines.append(f"{inner}add phase {comp}.{pname}.{phase.name} {{")
        body = _serialize_phase(phase, inner)[1:-1]  # reuse inner lines only
        lines.extend(body)
        lines.append(f"{inner}}}")
    for comp, pname, phname, trap in sorted(cs.add_traps, key=lambda x: (x[0], x[1], x[2], x[3].name)):
        lines.append(
            f"{inner}add trap {comp}.{pname}.{phname}.{trap.name}"
            f" {{ {', '.join(sorted(trap.states))} }}"
        )
    for name, value in sorted(cs.set_variables):
        if isinstance(value, ChangeSet):
            lines.append(f"{inner}set {name} = {_serialize_changeset(value, inner)};")
        else:
            lines.append(f"{inner}set {name} = {value};")
    for rule in sorted(cs.add_rules, key=lambda r: r.name):
        lines.append(f"{inner}add {_serialize_rule(rule).lstrip()}")
    for name in sorted(cs.remove_rules):
        lines.append(f"{inner}remove rule {name};")
    for comp, pname, phname in sorted(cs.remove_phases):
        lines.append(f"{inner}remove phase {comp}.{pname}.{phname};")
    for comp, pname in sorted(cs.remove_partitions):
        lines.append(f"{inner}remove partition {comp}.{pname};")
    lines.append(f"{indent}}}")
    return "\n".join(lines)


def serialize_model(model: StdModel) -> str:
    """Canonical text: sorted declarations, expanded families, inlined
    clauses.  parse_model(serialize_model(m)) is structurally equal to m."""
    lines = [f"version {model.version};", ""]
    for name in sorted(model.components):
        std = model.components[name]
        lines.append(f"component {name} {{")
        lines.extend(_serialize_component_body(std, "  "))
        lines.append("}")
        lines.append("")
    for name in sorted(model.rules):
        lines.append(_serialize_rule(model.rules[name]))
        lines.append("")
    for name in sorted(model.variables):
        value = model.variables[name]
        if isinstance(value, ChangeSet):
            lines.append(f"var {name} = {_serialize_changeset(value, '')};")
        else:
            lines.append(f"var {name} = {value};")
        lines.append("")
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines) + "\n"
