"""
Line-oriented netlist front end.

Grammar (one statement per line, tokens separated by whitespace)::

    * comment
    .title <free text>
    <KIND> <name> <node> <node> ... [positional values] [key=value ...]
    .tran <dt0> <tstop> [dtmin=<v>] [dtmax=<v>] [ltetol=<v>]
    .end

Device kinds::

    R     <name> n+ n- <ohms>
    L     <name> n+ n- <henries> [ic=<amps>]
    C     <name> n+ n- <farads> [ic=<volts>]
    K     <name> a+ a- b+ b- L1=<H> L2=<H> M=<H> [ic1=<A>] [ic2=<A>]
    VSIN  <name> n+ n- <Vm> <freq> [<phase_deg>]    v = Vm*cos(2*pi*f*t + phase)
    VDC   <name> n+ n- <volts>
    IDC   <name> n+ n- <amps>                        flows n+ -> source -> n-
    IM    <name> a b c Rs= Rr= Lls= Llr= Lm= J= Np= [D=] [TL0=] [TL1=] [TL2=]
                       [pbeta=] [wr0=]

Numbers accept the engineering suffixes t, g, meg, k, m, u, n, p, f
(case-insensitive). Node ``0`` is ground.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

GROUND = "0"

SUFFIXES: Dict[str, float] = {
    "t": 1e12,
    "g": 1e9,
    "meg": 1e6,
    "k": 1e3,
    "m": 1e-3,
    "u": 1e-6,
    "n": 1e-9,
    "p": 1e-12,
    "f": 1e-15,
}

_NUMBER_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[tgkmunpf])?$",
    re.IGNORECASE,
)


class DeviceKind(enum.Enum):
    ResistorR = "R"
    InductorL = "L"
    CapacitorC = "C"
    MutualK = "K"
    VsourceSin = "VSIN"
    VsourceDc = "VDC"
    IsourceDc = "IDC"
    InductionMotor = "IM"


# kind -> (node count, positional parameter names, required keywords, optional keywords with defaults)
_LAYOUT: Dict[DeviceKind, Tuple[int, Tuple[str, ...], Tuple[str, ...], Dict[str, float]]] = {
    DeviceKind.ResistorR: (2, ("R",), (), {}),
    DeviceKind.InductorL: (2, ("L",), (), {}),
    DeviceKind.CapacitorC: (2, ("C",), (), {}),
    DeviceKind.MutualK: (4, (), ("L1", "L2", "M"), {}),
    DeviceKind.VsourceSin: (2, ("Vm", "freq", "phase"), (), {}),
    DeviceKind.VsourceDc: (2, ("V",), (), {}),
    DeviceKind.IsourceDc: (2, ("I",), (), {}),
    DeviceKind.InductionMotor: (
        3,
        (),
        ("Rs", "Rr", "Lls", "Llr", "Lm", "J", "Np"),
        {"D": 0.0, "TL0": 0.0, "TL1": 0.0, "TL2": 0.0, "pbeta": -1.0},
    ),
}

# keywords that set initial conditions rather than parameters
_IC_KEYS: Dict[DeviceKind, Tuple[str, ...]] = {
    DeviceKind.InductorL: ("ic",),
    DeviceKind.CapacitorC: ("ic",),
    DeviceKind.MutualK: ("ic1", "ic2"),
    DeviceKind.InductionMotor: ("wr0",),
}


class NetlistError(ValueError):
    """Base class for every netlist diagnostic."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        self.message = message
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class NetlistSyntaxError(NetlistError):
    pass


class DuplicateDeviceError(NetlistError):
    pass


class UnknownDeviceKindError(NetlistError):
    pass


class MissingTranDirective(NetlistError):
    pass


class MissingEndDirective(NetlistError):
    pass


@dataclass(frozen=True)
class Issue:
    code: str
    device: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}({self.device}): {self.message}"


class ValidationError(NetlistError):
    """Raised by :func:`validate`; ``issues`` holds one entry per violated invariant."""

    def __init__(self, issues: List[Issue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class TranDirective:
    dt0: float
    t_stop: float
    dt_min: float
    dt_max: float
    lte_tol: float = 1e-4

    @property
    def fixed_step(self) -> bool:
        return self.dt_min == self.dt_max


@dataclass(frozen=True)
class Device:
    kind: DeviceKind
    name: str
    nodes: Tuple[str, ...]
    params: Dict[str, float]
    ic: Optional[Union[float, Tuple[Optional[float], Optional[float]]]] = None
    lineno: Optional[int] = field(default=None, compare=False)

    def __getitem__(self, key: str) -> float:
        return self.params[key]


@dataclass(frozen=True)
class Circuit:
    devices: Tuple[Device, ...]
    node_names: Tuple[str, ...]
    tran: TranDirective
    title: str = ""

    def device(self, name: str) -> Device:
        key = name.lower()
        for dev in self.devices:
            if dev.name.lower() == key:
                return dev
        raise KeyError(name)

    def with_tran(self, **changes) -> "Circuit":
        return replace(self, tran=replace(self.tran, **changes))


def parse_value(text: str) -> float:
    """Parse a number with an optional engineering suffix.

    The result is ``float(mantissa) * SUFFIXES[suffix]`` so that the
    suffix scaling is a single floating-point multiplication.
    """
    m = _NUMBER_RE.match(text.strip())
    if not m:
        raise NetlistSyntaxError(f"invalid number {text!r}")
    value = float(m.group(1))
    if m.group(2):
        value = value * SUFFIXES[m.group(2).lower()]
    return value


def _canonical_key(kind: DeviceKind, key: str, lineno: int) -> str:
    n_nodes, positional, required, optional = _LAYOUT[kind]
    allowed = list(positional) + list(required) + list(optional) + list(_IC_KEYS.get(kind, ()))
    for name in allowed:
        if name.lower() == key.lower():
            return name
    raise NetlistSyntaxError(f"unknown parameter {key!r} for {kind.value}", lineno)


def _parse_device(tokens: List[str], lineno: int) -> Device:
    try:
        kind = DeviceKind(tokens[0].upper())
    except ValueError:
        raise UnknownDeviceKindError(f"unknown device kind {tokens[0]!r}", lineno) from None
    n_nodes, positional, required, optional = _LAYOUT[kind]
    if len(tokens) < 2 + n_nodes:
        raise NetlistSyntaxError(
            f"{kind.value} needs a name and {n_nodes} nodes", lineno
        )
    name = tokens[1]
    nodes = tuple(tokens[2 : 2 + n_nodes])
    rest = tokens[2 + n_nodes :]

    pos_values: List[float] = []
    keywords: Dict[str, float] = {}
    for tok in rest:
        if "=" in tok:
            key, _, raw = tok.partition("=")
            key = _canonical_key(kind, key, lineno)
            if key in keywords:
                raise NetlistSyntaxError(f"parameter {key!r} given twice", lineno)
            try:
                keywords[key] = parse_value(raw)
            except NetlistSyntaxError as exc:
                raise NetlistSyntaxError(exc.message, lineno) from None
        else:
            if keywords:
                raise NetlistSyntaxError("positional value after keyword", lineno)
            try:
                pos_values.append(parse_value(tok))
            except NetlistSyntaxError as exc:
                raise NetlistSyntaxError(exc.message, lineno) from None

    params: Dict[str, float] = {}
    min_pos = len(positional) - (1 if kind is DeviceKind.VsourceSin else 0)
    if not (min_pos <= len(pos_values) <= len(positional)):
        raise NetlistSyntaxError(
            f"{kind.value} expects {len(positional)} value(s), got {len(pos_values)}", lineno
        )
    for key, value in zip(positional, pos_values):
        params[key] = value
    if kind is DeviceKind.VsourceSin:
        params.setdefault("phase", 0.0)

    ic_keys = _IC_KEYS.get(kind, ())
    for key, value in keywords.items():
        if key in positional:
            raise NetlistSyntaxError(f"{key!r} must be given positionally", lineno)
        if key not in ic_keys:
            params[key] = value
    missing = [k for k in required if k not in params]
    if missing:
        raise NetlistSyntaxError(f"missing parameter(s) {', '.join(missing)}", lineno)
    for key, default in optional.items():
        params.setdefault(key, default)

    ic: Optional[Union[float, Tuple[Optional[float], Optional[float]]]] = None
    if kind is DeviceKind.MutualK:
        if "ic1" in keywords or "ic2" in keywords:
            ic = (keywords.get("ic1"), keywords.get("ic2"))
    elif ic_keys and ic_keys[0] in keywords:
        ic = keywords[ic_keys[0]]

    return Device(kind=kind, name=name, nodes=nodes, params=params, ic=ic, lineno=lineno)


def _parse_tran(tokens: List[str], lineno: int) -> TranDirective:
    args = tokens[1:]
    positional = [t for t in args if "=" not in t]
    keywords = [t for t in args if "=" in t]
    if len(positional) != 2:
        raise NetlistSyntaxError(".tran expects <dt0> <tstop>", lineno)
    try:
        dt0 = parse_value(positional[0])
        t_stop = parse_value(positional[1])
        opts: Dict[str, float] = {}
        for tok in keywords:
            key, _, raw = tok.partition("=")
            key = key.lower()
            if key not in ("dtmin", "dtmax", "ltetol"):
                raise NetlistSyntaxError(f"unknown .tran option {key!r}", lineno)
            opts[key] = parse_value(raw)
    except NetlistSyntaxError as exc:
        raise NetlistSyntaxError(exc.message, lineno) from None
    return TranDirective(
        dt0=dt0,
        t_stop=t_stop,
        dt_min=opts.get("dtmin", dt0),
        dt_max=opts.get("dtmax", dt0),
        lte_tol=opts.get("ltetol", 1e-4),
    )


def parse_netlist(text: str) -> Circuit:
    """Parse netlist text into a :class:`Circuit` (devices in file order)."""
    devices: List[Device] = []
    seen: Dict[str, int] = {}
    nodes: Dict[str, None] = {}
    tran: Optional[TranDirective] = None
    title = ""
    ended = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        tokens = line.split()
        head = tokens[0].lower()
        if head == ".end":
            ended = True
            break
        if head == ".title":
            title = line[len(tokens[0]) :].strip()
            continue
        if head == ".tran":
            if tran is not None:
                raise NetlistSyntaxError("duplicate .tran directive", lineno)
            tran = _parse_tran(tokens, lineno)
            continue
        if head.startswith("."):
            raise NetlistSyntaxError(f"unsupported directive {tokens[0]!r}", lineno)
        dev = _parse_device(tokens, lineno)
        key = dev.name.lower()
        if key in seen:
            raise DuplicateDeviceError(
                f"device {dev.name!r} already defined on line {seen[key]}", lineno
            )
        seen[key] = lineno
        devices.append(dev)
        for node in dev.nodes:
            nodes.setdefault(node, None)

    if tran is None:
        raise MissingTranDirective("missing .tran directive")
    if not ended:
        raise MissingEndDirective("missing .end directive")
    return Circuit(devices=tuple(devices), node_names=tuple(nodes), tran=tran, title=title)


def _fmt(value: float) -> str:
    return repr(float(value))


def unparse(circuit: Circuit) -> str:
    """Render a circuit in normal form; ``parse_netlist(unparse(c)) == c``."""
    lines = []
    if circuit.title:
        lines.append(f".title {circuit.title}")
    for dev in circuit.devices:
        n_nodes, positional, required, optional = _LAYOUT[dev.kind]
        parts = [dev.kind.value, dev.name, *dev.nodes]
        parts += [_fmt(dev.params[k]) for k in positional]
        parts += [f"{k}={_fmt(dev.params[k])}" for k in required]
        parts += [f"{k}={_fmt(dev.params[k])}" for k in optional]
        if dev.kind is DeviceKind.MutualK and dev.ic is not None:
            for key, value in zip(("ic1", "ic2"), dev.ic):
                if value is not None:
                    parts.append(f"{key}={_fmt(value)}")
        elif dev.ic is not None:
            parts.append(f"{_IC_KEYS[dev.kind][0]}={_fmt(dev.ic)}")
        lines.append(" ".join(parts))
    tr = circuit.tran
    lines.append(
        f".tran {_fmt(tr.dt0)} {_fmt(tr.t_stop)} dtmin={_fmt(tr.dt_min)} "
        f"dtmax={_fmt(tr.dt_max)} ltetol={_fmt(tr.lte_tol)}"
    )
    lines.append(".end")
    return "\n".join(lines) + "\n"


def _check_tran(tran: TranDirective, issues: List[Issue]) -> None:
    values = (tran.dt0, tran.t_stop, tran.dt_min, tran.dt_max, tran.lte_tol)
    if not all(math.isfinite(v) for v in values):
        issues.append(Issue("InvalidTranDirective", ".tran", "non-finite value"))
        return
    if not (0 < tran.dt_min <= tran.dt0 <= tran.dt_max < tran.t_stop):
        issues.append(
            Issue("InvalidTranDirective", ".tran", "need 0 < dtmin <= dt0 <= dtmax < tstop")
        )
    if tran.lte_tol <= 0:
        issues.append(Issue("InvalidTranDirective", ".tran", "ltetol must be positive"))


_POSITIVE = {
    DeviceKind.ResistorR: ("R",),
    DeviceKind.InductorL: ("L",),
    DeviceKind.CapacitorC: ("C",),
    DeviceKind.MutualK: ("L1", "L2"),
    DeviceKind.InductionMotor: ("Rs", "Rr", "Lls", "Llr", "Lm", "J", "Np"),
}


def check(circuit: Circuit) -> List[Issue]:
    """Return every invariant violation in ``circuit`` (empty list when valid)."""
    issues: List[Issue] = []
    _check_tran(circuit.tran, issues)

    users: Dict[str, List[str]] = {}
    for dev in circuit.devices:
        for node in dev.nodes:
            users.setdefault(node, []).append(dev.name)

        for key, value in dev.params.items():
            if not math.isfinite(value):
                issues.append(Issue("NonFiniteValue", dev.name, f"{key} = {value}"))
        for key in _POSITIVE.get(dev.kind, ()):
            if not dev.params[key] > 0:
                issues.append(Issue("NonPositiveValue", dev.name, f"{key} = {dev.params[key]}"))

        if dev.kind is DeviceKind.MutualK:
            l1, l2, m = dev["L1"], dev["L2"], dev["M"]
            if m * m > l1 * l2:
                issues.append(
                    Issue("PassivityViolation", dev.name, f"M^2 = {m * m} exceeds L1*L2 = {l1 * l2}")
                )
        elif dev.kind is DeviceKind.VsourceSin:
            if dev["freq"] < 0:
                issues.append(Issue("NegativeValue", dev.name, f"freq = {dev['freq']}"))
        elif dev.kind is DeviceKind.InductionMotor:
            for key in ("D", "TL0", "TL1", "TL2"):
                if dev[key] < 0:
                    issues.append(Issue("NegativeValue", dev.name, f"{key} = {dev[key]}"))
            np_ = dev["Np"]
            if not (np_ > 0 and np_ == int(np_) and int(np_) % 2 == 0):
                issues.append(Issue("InvalidPoleCount", dev.name, f"Np = {np_}"))
            if dev["pbeta"] not in (1.0, -1.0):
                issues.append(Issue("InvalidConvention", dev.name, "pbeta must be +1 or -1"))

        if dev.ic is not None:
            ics = dev.ic if isinstance(dev.ic, tuple) else (dev.ic,)
            if not all(v is None or math.isfinite(v) for v in ics):
                issues.append(Issue("NonFiniteValue", dev.name, "initial condition"))

    for node, names in users.items():
        if node != GROUND and len(names) < 2:
            issues.append(Issue("DanglingNode", names[0], f"node {node!r} has no other connection"))
    return issues


def validate(circuit: Circuit) -> Circuit:
    """Return ``circuit`` unchanged if valid, else raise :class:`ValidationError`."""
    issues = check(circuit)
    if issues:
        raise ValidationError(issues)
    return circuit


def load_netlist(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return validate(parse_netlist(fh.read()))
