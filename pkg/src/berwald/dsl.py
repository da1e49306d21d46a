"""A small expression language for the velocity-dependent scalar factor phi.

Grammar (highest precedence first)::

    ^        integer exponent only, binds to an atom:  thetaA^2, x^-1
    unary -  -x^2 parses as -(x^2)
    * /      left associative
    + -      left associative

Atoms are numbers, identifiers, ``f(expr)`` for f in {exp, log, sqrt} and
parenthesised expressions.  phi may use ``chi`` (h(v, v)), ``thetaA``,
``thetaB`` (h(v, A), h(v, B)), extra ``thetaC``, ``thetaD``... declared with
the binding, ``curv`` (l^2 times the base scalar curvature) and parameters
``p0 .. pN``.

The same parser reads vector-field component expressions, where the
identifiers are chart coordinates and base-metric parameters.
"""
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dual as ad
from .errors import (
    NonFinite,
    NonRealValue,
    ParseError,
    SingularArgument,
    SingularEvaluation,
    UnknownIdentifier,
)

PHI_FUNCTIONS = ("exp", "log", "sqrt")
COMPONENT_FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos")
# names a base metric may expose to component expressions
CONTEXT_NAMES = ("eps", "a", "adot", "H", "p", "c")
SINGULAR_REL_TOL = 1e-12
HOMOGENEITY_TOL = 1e-10


# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


def children(node):
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, (Neg,)):
        return (node.operand,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, Call):
        return (node.arg,)
    return ()


def variables(node):
    if isinstance(node, Var):
        return {node.name}
    out = set()
    for c in children(node):
        out |= variables(c)
    return out


def operator_depth(node):
    """Number of arithmetic operators on the longest root-to-leaf path.

    Function applications are transparent: exp(x^2) has depth 1.
    """
    sub = max((operator_depth(c) for c in children(node)), default=0)
    return sub if isinstance(node, Call) else sub + (0 if not children(node) else 1)


def denominator_variables(node):
    """Variables whose vanishing can make the expression singular."""
    out = set()
    if isinstance(node, BinOp) and node.op == "/":
        out |= variables(node.right)
    if isinstance(node, Pow) and node.exponent < 0:
        out |= variables(node.base)
    if isinstance(node, Call) and node.func == "log":
        out |= variables(node.arg)
    for c in children(node):
        out |= denominator_variables(c)
    return out


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def to_source(node):
    """Pretty-print with the minimal parentheses that reparse to the same tree."""

    def wrap(child, need):
        s = to_source(child)
        return f"({s})" if _prec(child) < need else s

    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        return "-" + wrap(node.operand, 3)
    if isinstance(node, Pow):
        return f"{wrap(node.base, 5)}^{node.exponent}"
    p = _PREC[node.op]
    return f"{wrap(node.left, p)} {node.op} {wrap(node.right, p + 1)}"


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)
_OPERAND = ("number", "identifier", "(", "-")
_AFTER_OPERAND = ("+", "-", "*", "/", "^", ")", "end of input")


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def _byte_offset(source, index):
    return len(source[:index].encode("utf-8"))


def tokenize(source):
    toks = []
    pos = 0
    while True:
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos >= len(source):
            break
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {source[pos]!r}", _byte_offset(source, pos))
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), _byte_offset(source, start)))
        pos = m.end()
    toks.append(_Tok("end", "", _byte_offset(source, len(source))))
    return toks


class _Parser:
    def __init__(self, source, is_variable, functions):
        self.source = source
        self.toks = tokenize(source)
        self.i = 0
        self.is_variable = is_variable
        self.functions = functions

    @property
    def tok(self):
        return self.toks[self.i]

    def advance(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def at_op(self, *ops):
        return self.tok.kind == "op" and self.tok.text in ops

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.offset, expected)

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(_AFTER_OPERAND)
        return node

    def expr(self):
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.at_op("-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.at_op("^"):
            self.advance()
            sign = 1
            if self.at_op("-"):
                self.advance()
                sign = -1
            t = self.tok
            if t.kind != "num" or not t.text.isdigit():
                raise ParseError("exponent must be an integer literal", t.offset, ("integer",))
            self.advance()
            node = Pow(node, sign * int(t.text))
        return node

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "id":
            self.advance()
            if self.at_op("("):
                if t.text not in self.functions:
                    raise UnknownIdentifier(f"unknown function {t.text!r}", t.offset, self.functions)
                self.advance()
                arg = self.expr()
                if not self.at_op(")"):
                    self.fail((")",))
                self.advance()
                return Call(t.text, arg)
            if t.text in self.functions:
                raise ParseError(f"function {t.text!r} needs an argument", self.tok.offset, ("(",))
            if not self.is_variable(t.text):
                raise UnknownIdentifier(f"unknown identifier {t.text!r}", t.offset)
            return Var(t.text)
        if self.at_op("("):
            self.advance()
            node = self.expr()
            if not self.at_op(")"):
                self.fail((")",))
            self.advance()
            return node
        self.fail(_OPERAND)


def parse_ast(source, is_variable, functions):
    if not source or not source.strip():
        raise ParseError("empty expression", 0, _OPERAND)
    return _Parser(source, is_variable, tuple(functions)).parse()


# ---------------------------------------------------------------- evaluation


def eval_ast(node, env, functions=ad.FUNCTIONS):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnknownIdentifier(f"no value bound for {node.name!r}", 0) from None
    if isinstance(node, Neg):
        return -eval_ast(node.operand, env, functions)
    if isinstance(node, Pow):
        b = eval_ast(node.base, env, functions)
        if node.exponent < 0 and ad.value(b) == 0.0:
            raise SingularArgument("negative power of zero")
        return b**node.exponent
    if isinstance(node, Call):
        a = eval_ast(node.arg, env, functions)
        av = ad.value(a)
        if node.func == "log" and av <= 0.0:
            if av == 0.0:
                raise SingularArgument("log(0)")
            raise NonRealValue(f"log of negative argument {av}")
        if node.func == "sqrt" and av < 0.0:
            raise NonRealValue(f"sqrt of negative argument {av}")
        try:
            return functions[node.func](a)
        except OverflowError:
            raise NonFinite(f"{node.func} overflowed") from None
    left = eval_ast(node.left, env, functions)
    right = eval_ast(node.right, env, functions)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if ad.value(right) == 0.0:
        raise SingularArgument("division by zero")
    return left / right


# ---------------------------------------------------------------- scalar factor

_THETA = re.compile(r"theta([A-Z])$")
_PARAM = re.compile(r"p(\d+)$")


@dataclass(frozen=True)
class ScalarFactorExpr:
    ast: object
    params: tuple = ()
    length_scale: float = 0.0
    source: str = ""
    extra_fields: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.length_scale < 0:
            raise ValueError("length scale must be non-negative")
        missing = [i for i in self.param_indices if i >= len(self.params)]
        if missing:
            raise ValueError(f"no value for parameter(s) {['p%d' % i for i in missing]}")

    @property
    def variables(self):
        return variables(self.ast)

    @property
    def param_indices(self):
        return sorted(int(_PARAM.match(n).group(1)) for n in self.variables if _PARAM.match(n))

    @property
    def param_names(self):
        return {f"p{i}" for i in self.param_indices}

    @property
    def arguments(self):
        return sorted(n for n in self.variables if not _PARAM.match(n))

    @property
    def depth(self):
        return operator_depth(self.ast)

    @property
    def singular_arguments(self):
        return sorted(n for n in denominator_variables(self.ast) if not _PARAM.match(n))

    def is_constant(self):
        return not self.arguments

    def with_params(self, params):
        return ScalarFactorExpr(self.ast, tuple(params), self.length_scale, self.source, self.extra_fields)

    def to_source(self):
        return to_source(self.ast)

    def __call__(self, args):
        """Evaluate from a mapping of argument values (floats or Duals)."""
        env = dict(args)
        env.update({f"p{i}": p for i, p in enumerate(self.params)})
        out = eval_ast(self.ast, env)
        if not math.isfinite(ad.value(out)):
            raise NonFinite(f"phi evaluated to {ad.value(out)}")
        return out


def _phi_variable_policy(extra_fields):
    allowed = {"chi", "curv", "thetaA", "thetaB"} | {f"theta{c}" for c in extra_fields}

    def is_var(name):
        return name in allowed or bool(_PARAM.match(name))

    return is_var


def parse(source, params=None, length_scale=0.0, extra_fields=()):
    """Parse scalar-factor source text.

    Parameters referenced as ``pK`` take their values from ``params``; when
    ``params`` is omitted they default to zero.
    """
    ast = parse_ast(source, _phi_variable_policy(extra_fields), PHI_FUNCTIONS)
    idx = [int(_PARAM.match(n).group(1)) for n in variables(ast) if _PARAM.match(n)]
    if params is None:
        params = [0.0] * (max(idx) + 1 if idx else 0)
    return ScalarFactorExpr(ast, tuple(params), float(length_scale), source, tuple(extra_fields))


# ---------------------------------------------------------------- vector fields


@dataclass(frozen=True)
class VectorField:
    """Vector field given by per-chart component expressions or a callable."""

    chart: str
    exprs: tuple = ()
    sources: tuple = ()
    fn: Optional[Callable] = None

    @classmethod
    def from_strings(cls, chart, components):
        from .charts import get_chart

        names = set(get_chart(chart).names) | set(CONTEXT_NAMES)
        if len(components) != 4:
            raise ValueError("a vector field needs 4 component expressions")
        exprs = tuple(
            parse_ast(str(c), names.__contains__, COMPONENT_FUNCTIONS) for c in components
        )
        return cls(chart, exprs, tuple(str(c) for c in components))

    @classmethod
    def constant(cls, chart, comps):
        return cls.from_strings(chart, [repr(float(c)) for c in comps])

    def components(self, x, base=None):
        if self.fn is not None:
            return list(self.fn(x))
        from .charts import get_chart

        env = dict(zip(get_chart(self.chart).names, x))
        if base is not None:
            env.update(base.expression_env(x))
        return [eval_ast(e, env) for e in self.exprs]


@dataclass(frozen=True)
class ArgumentBinding:
    A: Optional[VectorField] = None
    B: Optional[VectorField] = None
    extra: dict = field(default_factory=dict)
    curvature_mode: str = "zero"
    curvature_value: float = 0.0

    def __post_init__(self):
        if self.curvature_mode not in ("zero", "constant"):
            raise ValueError(f"curvature_mode must be 'zero' or 'constant', got {self.curvature_mode!r}")
        for name in self.extra:
            if not re.fullmatch(r"[C-Z]", name):
                raise ValueError(f"extra field names are single capitals C..Z, got {name!r}")

    def field_for(self, name):
        letter = _THETA.match(name).group(1)
        fld = {"A": self.A, "B": self.B}.get(letter, self.extra.get(letter))
        if fld is None:
            raise UnknownIdentifier(f"{name} used but vector field {letter} is not bound", 0)
        return fld

    def causal_types(self, base, x):
        """Causal character of each bound field with respect to the base metric at x."""
        h = base.values(x)
        out = {}
        for letter, fld in [("A", self.A), ("B", self.B), *sorted(self.extra.items())]:
            if fld is None:
                continue
            f = np.array([ad.value(c) for c in fld.components(list(x), base)])
            n = f @ h @ f
            scale = np.abs(h).max() * (f @ f)
            out[letter] = "lightlike" if abs(n) <= 1e-12 * scale else ("timelike" if n < 0 else "spacelike")
        return out


def _contract(h, a, b):
    total = 0.0
    for i in range(4):
        for j in range(4):
            hij = h[i][j]
            if isinstance(hij, float) and hij == 0.0:
                continue
            total = total + hij * a[i] * b[j]
    return total


def compute_arguments(expr, binding, base, x, v, h=None):
    """Argument values of phi at (x, v); raises SingularArgument on the singular locus."""
    if h is None:
        h = base.components(x)
    args = {}
    singular = set(expr.singular_arguments)
    hscale = max(abs(ad.value(h[i][j])) for i in range(4) for j in range(4))
    vnorm = math.sqrt(sum(ad.value(c) ** 2 for c in v))
    for name in expr.arguments:
        if name == "chi":
            args[name] = _contract(h, v, v)
            ref = vnorm * vnorm
        elif name == "curv":
            r = binding.curvature_value if binding.curvature_mode == "constant" else 0.0
            args[name] = expr.length_scale**2 * r
            continue
        else:
            comps = binding.field_for(name).components(x, base)
            args[name] = _contract(h, v, comps)
            ref = vnorm * math.sqrt(sum(ad.value(c) ** 2 for c in comps))
        if name in singular and abs(ad.value(args[name])) <= SINGULAR_REL_TOL * hscale * ref:
            raise SingularArgument(f"{name} vanishes at v={[ad.value(c) for c in v]}")
    return args


def evaluate(expr, x, v, binding, base):
    """phi at (x, v) as a float."""
    from .tensor import as_coords

    x, v = as_coords(x), as_coords(v)
    return ad.value(expr(compute_arguments(expr, binding, base, x, v)))


def gradient_v(expr, x, v, binding, base):
    """d phi / d v^mu by the chain rule through chi and the theta arguments."""
    from .tensor import as_coords

    x, v = as_coords(x), as_coords(v)
    h = base.values(x)
    args = compute_arguments(expr, binding, base, x, v, h.tolist())
    names = list(args)
    seeded = dict(zip(names, ad.seed([args[n] for n in names])))
    out = expr(seeded)
    dphi = ad.gradient(out, len(names))
    vv = np.array(v)
    grad = np.zeros(4)
    for k, name in enumerate(names):
        if name == "chi":
            grad += dphi[k] * 2.0 * (h @ vv)
        elif name.startswith("theta"):
            comps = np.array([ad.value(c) for c in binding.field_for(name).components(x, base)])
            grad += dphi[k] * (h @ comps)
    if not np.all(np.isfinite(grad)):
        raise NonFinite("phi gradient is not finite")
    return grad


def derivative_v(expr, x, v, binding, base, mu):
    return float(gradient_v(expr, x, v, binding, base)[mu])


# ---------------------------------------------------------------- homogeneity


@dataclass
class HomogeneityReport:
    passed: bool
    max_deviation: float
    max_normalized: float
    tolerance: float
    samples: int
    scales: tuple
    resampled: int
    degree_estimate: float
    seed: int
    worst: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__, scales=list(self.scales))


def random_direction(rng):
    d = rng.normal(size=4)
    return d / np.linalg.norm(d)


def homogeneity_check(expr, binding, base, samples=100, scales=(0.5, 2.0, 10.0), seed=0,
                      points=None, max_resample=None):
    """Numerical 0-homogeneity test of phi in the velocity.

    Passes iff |phi(lambda v) - phi(v)| <= 1e-10 (1 + |phi(v)|) at every sample.
    Samples that land on the singular locus are redrawn and counted.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    rng = np.random.default_rng(seed)
    pts = list(points) if points is not None else base.sample_points(rng, samples)
    max_resample = 50 * samples if max_resample is None else max_resample
    worst_norm, worst_dev, resampled, worst = 0.0, 0.0, 0, {}
    degrees = []
    done = 0
    while done < samples:
        x = list(pts[done % len(pts)])
        v = list(random_direction(rng))
        h = base.values(x).tolist()
        try:
            phi0 = ad.value(expr(compute_arguments(expr, binding, base, x, v, h)))
            scaled = [
                ad.value(expr(compute_arguments(expr, binding, base, x, [s * c for c in v], h)))
                for s in scales
            ]
        except (SingularEvaluation, NonFinite):
            resampled += 1
            if resampled > max_resample:
                raise
            continue
        done += 1
        for s, phis in zip(scales, scaled):
            dev = abs(phis - phi0)
            norm = dev / (1.0 + abs(phi0))
            if phi0 != 0.0 and phis != 0.0 and phis / phi0 > 0:
                degrees.append(math.log(phis / phi0) / math.log(s))
            if norm > worst_norm or not worst:
                worst_norm = max(worst_norm, norm)
                worst = {"x": x, "v": v, "scale": s, "phi": phi0, "phi_scaled": phis}
            worst_dev = max(worst_dev, dev)
    degree = float(np.median(degrees)) if degrees else 0.0
    return HomogeneityReport(
        passed=worst_norm <= HOMOGENEITY_TOL,
        max_deviation=worst_dev,
        max_normalized=worst_norm,
        tolerance=HOMOGENEITY_TOL,
        samples=samples,
        scales=tuple(scales),
        resampled=resampled,
        degree_estimate=degree,
        seed=seed,
        worst=worst,
    )
