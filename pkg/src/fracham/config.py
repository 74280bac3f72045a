"""INI problem configuration for the command-line front end.

Example::

    [problem]
    N = 1
    lagrangian = 0.5*v1^2 - 0.5*q1^2

    [orders]
    alpha1 = 0.5
    beta1 = 0.5
    gamma1 = 0.5

    [grid]
    a = 0
    b = 1
    n = 256

    [boundary]
    qa = 0
    qb = 0.8

The optional ``[solver]`` section holds solver settings; ``[checks]`` holds the
tolerance constants used by the residual checks, and ``[output]`` names the
output directory.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .dynamics import hamiltonian_symbolic
from .fracops import FracOrder
from .grid import UniformGrid
from .model import HamiltonianSpec, LagrangianSpec
from .report import ALGEBRAIC_TOL
from .solver import BoundaryData, SolverConfig

__all__ = ["ConfigError", "ProblemConfig", "ChecksConfig", "load_config", "parse_config"]

SECTIONS = ("problem", "orders", "grid", "boundary", "solver", "checks", "output")
REQUIRED = ("problem", "orders", "grid")
KNOWN_KEYS = {
    "problem": {"n", "lagrangian", "hamiltonian"},
    "grid": {"a", "b", "n"},
    "boundary": {"qa", "qb"},
    "solver": {
        "method",
        "max_iterations",
        "gradient_tolerance",
        "residual_tolerance",
        "initial_guess",
        "seed",
        "restarts",
    },
    "checks": {
        "discretization_constant",
        "algebraic_tolerance",
        "gauge_constant",
        "constant_tolerance",
    },
    "output": {"directory"},
}
SEED_ENV = "FRACVAR_SEED"


class ConfigError(ValueError):
    """Invalid configuration; the message names the file and line where possible."""


@dataclass(frozen=True)
class ChecksConfig:
    discretization_constant: float = 10.0
    algebraic_tolerance: float = ALGEBRAIC_TOL
    gauge_constant: float = 10.0
    # None means 10x the solver's gradient tolerance
    constant_tolerance: float | None = None


@dataclass(frozen=True)
class ProblemConfig:
    n_coords: int
    orders: tuple[FracOrder, ...]
    grid: UniformGrid
    lagrangian: LagrangianSpec | None
    hamiltonian: HamiltonianSpec | None
    boundary: BoundaryData | None
    solver: SolverConfig
    method: str
    checks: ChecksConfig
    output_dir: Path
    echo: str
    source: str = "<string>"

    def require_lagrangian(self) -> LagrangianSpec:
        if self.lagrangian is None:
            raise ConfigError(f"{self.source}: this command needs [problem] lagrangian")
        return self.lagrangian

    def require_hamiltonian(self) -> HamiltonianSpec:
        """The configured Hamiltonian, or the one derived from the Lagrangian."""
        if self.hamiltonian is not None:
            return self.hamiltonian
        if self.lagrangian is not None:
            H = hamiltonian_symbolic(self.lagrangian)
            if H is not None:
                return H
            raise ConfigError(
                f"{self.source}: no [problem] hamiltonian and the Lagrangian's momenta are not quadratic"
            )
        raise ConfigError(f"{self.source}: this command needs a Hamiltonian")

    def require_boundary(self) -> BoundaryData:
        if self.boundary is None:
            raise ConfigError(f"{self.source}: this command needs a [boundary] section")
        return self.boundary


def _line_index(text: str) -> dict:
    """Map ``section`` and ``(section, key)`` to 1-based line numbers."""
    index: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            index.setdefault(section, lineno)
            continue
        if section is not None and "=" in line:
            key = line.split("=", 1)[0].strip().lower()
            index.setdefault((section, key), lineno)
    return index


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict, source: str):
        self.parser = parser
        self.lines = lines
        self.source = source

    def where(self, section: str, key: str | None = None) -> str:
        line = self.lines.get((section, key)) if key else None
        if line is None:
            line = self.lines.get(section)
        return f"{self.source}:{line}" if line else self.source

    def fail(self, section: str, key: str | None, message: str):
        raise ConfigError(f"{self.where(section, key)}: {message}")

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section: str, key: str, default=None, required: bool = False):
        if not self.parser.has_section(section):
            if required:
                raise ConfigError(f"{self.source}: missing section [{section}]")
            return default
        if not self.parser.has_option(section, key):
            if required:
                self.fail(section, None, f"missing key {key!r} in section [{section}]")
            return default
        return self.parser.get(section, key).strip()

    def number(self, section, key, kind=float, default=None, required=False):
        text = self.raw(section, key, required=required)
        if text is None:
            return default
        try:
            return kind(text)
        except ValueError:
            self.fail(section, key, f"{key} = {text!r} is not a valid {kind.__name__}")

    def numbers(self, section, key, count: int, required=False):
        text = self.raw(section, key, required=required)
        if text is None:
            return None
        try:
            values = [float(x) for x in text.split(",") if x.strip()]
        except ValueError:
            self.fail(section, key, f"{key} = {text!r} is not a comma-separated list of numbers")
        if len(values) != count:
            self.fail(section, key, f"{key} has {len(values)} values, expected N = {count}")
        return tuple(values)

    def expression(self, section, key, n_coords, build):
        text = self.raw(section, key)
        if text is None:
            return None
        try:
            return build(text)
        except ex.ExprSyntaxError as err:
            self.fail(section, key, f"{key}: {err}")
        except ValueError as err:
            self.fail(section, key, f"{key}: {err}")


def _apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> list[str]:
    applied = []
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = (s.strip().lower() for s in lhs.split(".", 1))
        if section not in SECTIONS:
            raise ConfigError(f"override {item!r}: unknown section [{section}]")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())
        applied.append(f"{section}.{key} = {value.strip()}")
    return applied


def _echo(parser: configparser.ConfigParser, notes: Sequence[str]) -> str:
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        for key, value in parser.items(section):
            lines.append(f"{key} = {value}")
    lines.extend(f"# {n}" for n in notes)
    return "\n".join(lines)


def _cross_validate(L: LagrangianSpec, H: HamiltonianSpec, reader: _Reader, seed: int):
    derived = hamiltonian_symbolic(L)
    if derived is None:
        reader.fail(
            "problem",
            "hamiltonian",
            "both lagrangian and hamiltonian given, but the Lagrangian's momenta are not quadratic",
        )
    rng = np.random.default_rng(seed)
    n = L.n_coords
    for _ in range(16):
        b = {"t": float(rng.uniform(-1, 1))}
        for i in range(1, n + 1):
            b[f"q{i}"] = float(rng.uniform(-1, 1))
            b[f"p{i}"] = float(rng.uniform(-1, 1))
        try:
            x = float(ex.evaluate(H.body, b))
            y = float(ex.evaluate(derived.body, b))
        except ex.EvalDomainError:
            continue
        if abs(x - y) > 1e-9 * max(1.0, abs(x), abs(y)):
            reader.fail(
                "problem",
                "hamiltonian",
                f"hamiltonian disagrees with the Legendre transform of the lagrangian "
                f"({ex.to_string(derived.body)})",
            )


def parse_config(
    text: str,
    source: str = "<string>",
    overrides: Sequence[str] = (),
    environ: Mapping[str, str] | None = None,
) -> ProblemConfig:
    """Parse and validate configuration text; see :func:`load_config`."""
    parser = configparser.ConfigParser(
        comment_prefixes=("#", ";"), inline_comment_prefixes=("#",), interpolation=None
    )
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    lines = _line_index(text)
    reader = _Reader(parser, lines, source)
    for section in parser.sections():
        if section not in SECTIONS:
            reader.fail(section, None, f"unknown section [{section}]")
        allowed = KNOWN_KEYS.get(section)
        for key in parser.options(section):
            if allowed is not None and key not in allowed:
                reader.fail(section, key, f"unknown key {key!r} in section [{section}]")
    notes = _apply_overrides(parser, overrides)
    notes = [f"command-line override {n}" for n in notes]
    for section in REQUIRED:
        if not parser.has_section(section):
            raise ConfigError(f"{source}: missing section [{section}]")

    n_coords = reader.number("problem", "n", int, required=True)
    if n_coords < 1:
        reader.fail("problem", "n", "N must be >= 1")

    orders = []
    for i in range(1, n_coords + 1):
        vals = [reader.number("orders", f"{name}{i}", required=True) for name in ("alpha", "beta", "gamma")]
        try:
            orders.append(FracOrder(*vals))
        except ValueError as err:
            reader.fail("orders", f"alpha{i}", f"coordinate {i}: {err}")
    for key in parser.options("orders"):
        m = re.fullmatch(r"(alpha|beta|gamma)([1-9][0-9]*)", key)
        if not m:
            reader.fail("orders", key, f"unknown key {key!r} in section [orders]")
        if int(m.group(2)) > n_coords:
            reader.fail("orders", key, f"{key} given but N = {n_coords}")
    orders = tuple(orders)

    a = reader.number("grid", "a", required=True)
    b = reader.number("grid", "b", required=True)
    n = reader.number("grid", "n", int, required=True)
    try:
        grid = UniformGrid(a, b, n)
    except ValueError as err:
        reader.fail("grid", None, str(err))

    L = reader.expression(
        "problem", "lagrangian", n_coords, lambda s: LagrangianSpec.from_text(s, orders)
    )
    H = reader.expression(
        "problem", "hamiltonian", n_coords, lambda s: HamiltonianSpec.from_text(s, orders)
    )
    if L is None and H is None:
        reader.fail("problem", None, "at least one of lagrangian or hamiltonian is required")

    boundary = None
    if parser.has_section("boundary"):
        qa = reader.numbers("boundary", "qa", n_coords, required=True)
        qb = reader.numbers("boundary", "qb", n_coords, required=True)
        try:
            boundary = BoundaryData(qa, qb)
        except ValueError as err:
            reader.fail("boundary", None, str(err))

    seed = reader.number("solver", "seed", int, default=0)
    env = {} if environ is None else environ
    if env.get(SEED_ENV, "").strip():
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
        notes.append(f"seed overridden by {SEED_ENV} = {seed}")
    guess = reader.raw("solver", "initial_guess", default="linear")
    if guess != "linear":
        try:
            guess_expr = ex.parse(guess, n_coords)
        except ex.ExprError as err:
            reader.fail("solver", "initial_guess", f"initial_guess: {err}")
        extra = {v for v in ex.free_vars(guess_expr) if v != "t"}
        if extra:
            reader.fail("solver", "initial_guess", f"initial_guess may only use t, found {sorted(extra)}")
        guess = guess_expr
    try:
        solver = SolverConfig(
            max_iterations=reader.number("solver", "max_iterations", int, default=500),
            gradient_tolerance=reader.number("solver", "gradient_tolerance", default=1e-9),
            residual_tolerance=reader.number("solver", "residual_tolerance", default=1e-9),
            initial_guess=guess,
            seed=seed,
            restarts=reader.number("solver", "restarts", int, default=0),
        )
    except ValueError as err:
        reader.fail("solver", None, str(err))
    method = reader.raw("solver", "method", default="direct").lower()
    if method not in ("direct", "canonical"):
        reader.fail("solver", "method", f"method must be 'direct' or 'canonical', got {method!r}")

    constant_tol = reader.number("checks", "constant_tolerance")
    checks = ChecksConfig(
        discretization_constant=reader.number("checks", "discretization_constant", default=10.0),
        algebraic_tolerance=reader.number("checks", "algebraic_tolerance", default=ALGEBRAIC_TOL),
        gauge_constant=reader.number("checks", "gauge_constant", default=10.0),
        constant_tolerance=constant_tol,
    )
    for name in ("discretization_constant", "algebraic_tolerance", "gauge_constant"):
        if not getattr(checks, name) > 0:
            reader.fail("checks", name, f"{name} must be positive")

    if L is not None and H is not None:
        _cross_validate(L, H, reader, seed)

    out = reader.raw("output", "directory", default="fracham_out")
    return ProblemConfig(
        n_coords=n_coords,
        orders=orders,
        grid=grid,
        lagrangian=L,
        hamiltonian=H,
        boundary=boundary,
        solver=solver,
        method=method,
        checks=checks,
        output_dir=Path(out),
        echo=_echo(parser, notes),
        source=source,
    )


def load_config(
    path: str | Path,
    overrides: Sequence[str] = (),
    environ: Mapping[str, str] | None = None,
) -> ProblemConfig:
    """Load and validate an INI problem file.

    ``overrides`` are ``section.key=value`` strings applied after the file
    (last one wins).  ``environ`` supplies ``FRACVAR_SEED``; pass
    ``os.environ`` to honour the process environment.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, str(path), overrides, environ)
