"""Run configuration: a TOML file flattened to dotted keys, defaults, validation."""
import math
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

RW_PHI = "exp(p0 * thetaA^2 / thetaB^2) - 1"

# key -> (default, kind)
SCHEMA = {
    "seed": (0, "int"),
    "metric.base": ("robertson_walker", ("minkowski", "robertson_walker")),
    "metric.chart": ("", "str"),
    "metric.eps": (0.1, "float"),
    "metric.scale_factor": ("power", ("constant", "power", "exponential")),
    "metric.scale_param": (1.0, "float"),
    "metric.phi": (RW_PHI, "str"),
    "metric.params": ([1.0], "floats"),
    "metric.length_scale": (0.0, "float"),
    "metric.curvature_mode": ("zero", ("zero", "constant")),
    "metric.curvature_value": (0.0, "float"),
    "metric.field_A": (None, "strings4"),
    "metric.field_B": (None, "strings4"),
    "metric.time_orientation": (["1", "0", "0", "0"], "strings4"),
    "verify.points": (20, "int"),
    "verify.directions": (500, "int"),
    "verify.null_directions": (1000, "int"),
    "verify.berwald_points": (20, "int"),
    "verify.berwald_velocities": (8, "int"),
    "verify.cartan_points": (10, "int"),
    "verify.theorem_c_points": (50, "int"),
    "verify.flat_points": (20, "int"),
    "geodesic.x0": (None, "floats4"),
    "geodesic.v0": (None, "floats4"),
    "geodesic.t_end": (10.0, "float"),
    "geodesic.step": (0.05, "float"),
    "geodesic.tol": (1e-9, "float"),
    "curvature.points": ([], "points"),
    "curvature.velocity": (None, "floats4"),
    "curvature.samples": (5, "int"),
    "cones.samples": (1000, "int"),
    "cones.points": (20, "int"),
    "lambda.phi": (0.1, "float"),
    "lambda.lambda": (2.0, "float"),
    "lambda.order": (1, "int"),
    "lambda.length_scale": (None, "float"),
    "lambda.eps": (None, "float"),
    "output.path": ("", "str"),
    "output.csv": ("", "str"),
    "tolerance.scale": (1.0, "float"),
}

_EXTRA_FIELD = "metric.field_"


def flatten(tree, prefix=""):
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _is_extra_field(key):
    return key.startswith(_EXTRA_FIELD) and len(key) == len(_EXTRA_FIELD) + 1 and key[-1] in "CDEFGHIJKLMNOPQRSTUVWXYZ"


def _coerce(key, value, kind):
    if value is None:
        return None
    try:
        if isinstance(kind, tuple):
            if value not in kind:
                raise ConfigError(f"{key}: expected one of {list(kind)}, got {value!r}")
            return value
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if not math.isfinite(out):
                raise TypeError
            return out
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == "floats":
            return [float(c) for c in value]
        if kind == "floats4":
            out = [float(c) for c in value]
            if len(out) != 4:
                raise TypeError
            return out
        if kind == "strings4":
            out = [str(c) for c in value]
            if len(out) != 4:
                raise TypeError
            return out
        if kind == "points":
            out = [[float(c) for c in p] for p in value]
            if any(len(p) != 4 for p in out):
                raise TypeError
            return out
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: invalid value {value!r} (expected {kind})") from None
    raise AssertionError(kind)


def resolve(flat):
    """Validate a flat key -> value mapping and fill in defaults."""
    out = {}
    for key, value in flat.items():
        if key in SCHEMA:
            out[key] = _coerce(key, value, SCHEMA[key][1])
        elif _is_extra_field(key):
            out[key] = _coerce(key, value, "strings4")
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key, (default, _) in SCHEMA.items():
        out.setdefault(key, default)
    if out["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    if out["tolerance.scale"] <= 0:
        raise ConfigError("tolerance.scale must be positive")
    return dict(sorted(out.items()))


def load(path=None, overrides=None):
    flat = {}
    if path:
        try:
            with open(path, "rb") as fh:
                flat = flatten(tomllib.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path} is not valid TOML: {exc}") from None
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return resolve(flat)


def build_tensor(cfg):
    """FundamentalTensor (or charted view) described by a resolved config."""
    from .charts import get_chart
    from .dsl import ArgumentBinding, VectorField, parse
    from .metrics import FundamentalTensor, Minkowski, RobertsonWalker, ScaleFactor, in_chart

    if cfg["metric.base"] == "minkowski":
        base = Minkowski()
        A_default = ["0", "1", "0", "0"]
    else:
        base = RobertsonWalker(cfg["metric.eps"], ScaleFactor(cfg["metric.scale_factor"], cfg["metric.scale_param"]))
        A_default = ["0", "(1 - eps*r^2)/a^2", "0", "0"]
    chart = base.chart
    extra_letters = sorted(k[-1] for k in cfg if _is_extra_field(k))

    def field(key, default):
        comps = cfg.get(key) or default
        return VectorField.from_strings(chart, comps)

    binding = ArgumentBinding(
        A=field("metric.field_A", A_default),
        B=field("metric.field_B", ["1", "0", "0", "0"]),
        extra={c: field(_EXTRA_FIELD + c, None) for c in extra_letters},
        curvature_mode=cfg["metric.curvature_mode"],
        curvature_value=cfg["metric.curvature_value"],
    )
    phi = parse(cfg["metric.phi"], cfg["metric.params"], cfg["metric.length_scale"], tuple(extra_letters))
    F = FundamentalTensor(base, phi, binding, time_orientation=field("metric.time_orientation", None))
    target = cfg["metric.chart"] or chart
    get_chart(target)
    return in_chart(F, target)
