"""Polynomial model structure selection and linearization.

Candidate terms are power-form monomials over lagged signals, optionally
wrapped in ``sin`` or ``signum``; selection is greedy forward orthogonal
regression ranked by the error reduction ratio (ERR), with coefficients
recovered from the unit upper-triangular system of the orthogonalization.

Continuous-time models ("derivative" form) regress a finite-difference
estimate of the state derivative on current-time regressors, matching the
identification pipeline; discrete models iterate their own predictions in
free run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg

from . import lti
from .errors import DivergenceError, NumericalError

WRAPPERS = ("none", "sin", "signum")
SIGNUM_KINK_TOL = 1e-9


@dataclass(frozen=True)
class TermSpec:
    """One candidate regressor: a monomial with an optional wrapper.

    ``factors`` is a tuple of ``(signal, lag, exponent)`` with signals named
    "z", "u1", "u2", ... or "e"; an empty tuple is the constant term.
    """

    factors: tuple = ()
    wrapper: str = "none"

    def __post_init__(self):
        if self.wrapper not in WRAPPERS:
            raise ValueError(f"unknown wrapper {self.wrapper!r}")

    @property
    def degree(self) -> int:
        return sum(exp for _, _, exp in self.factors)

    def label(self) -> str:
        if not self.factors:
            return "1"
        parts = []
        for signal, lag, exp in self.factors:
            base = f"{signal}(k-{lag})" if lag else f"{signal}(k)"
            parts.append(base if exp == 1 else f"{base}^{exp}")
        body = "*".join(parts)
        return body if self.wrapper == "none" else f"{self.wrapper}({body})"

    def _raw(self, values: dict) -> float:
        out = 1.0
        for signal, _, exp in self.factors:
            out *= values[signal] ** exp
        return out

    def evaluate_point(self, values: dict) -> float:
        """Evaluate at a single operating point (lags collapse to 'now')."""
        raw = self._raw(values)
        if self.wrapper == "sin":
            return math.sin(raw)
        if self.wrapper == "signum":
            return float(np.sign(raw))
        return raw

    def derivative_point(self, values: dict, signal: str) -> float:
        """Analytic partial derivative at an operating point."""
        inner = 0.0
        raw = 1.0
        for sig, _, exp in self.factors:
            raw *= values[sig] ** exp
        for sig, _, exp in self.factors:
            if sig != signal:
                continue
            rest = 1.0
            for sig2, _, exp2 in self.factors:
                e = exp2 - 1 if sig2 == sig else exp2
                rest *= values[sig2] ** e
            inner += exp * rest
        if self.wrapper == "none":
            return inner
        if self.wrapper == "sin":
            return math.cos(raw) * inner
        if abs(raw) < SIGNUM_KINK_TOL and inner != 0.0:
            raise NumericalError(f"signum term {self.label()} sits on its kink at the operating point")
        return 0.0

    def evaluate_series(self, series: dict, rows: np.ndarray) -> np.ndarray:
        col = np.ones(rows.size)
        for signal, lag, exp in self.factors:
            col = col * series[signal][rows - lag] ** exp
        if self.wrapper == "sin":
            return np.sin(col)
        if self.wrapper == "signum":
            return np.sign(col)
        return col

    def sort_key(self):
        order = {"z": 0, "u": 1, "e": 2}
        factors = tuple(
            (order[s[0]], int(s[1:]) if len(s) > 1 else 0, lag, exp) for s, lag, exp in self.factors
        )
        return (self.degree, factors, WRAPPERS.index(self.wrapper))

    def to_dict(self) -> dict:
        return {"factors": [list(f) for f in self.factors], "wrapper": self.wrapper}

    @classmethod
    def from_dict(cls, data: dict) -> "TermSpec":
        return cls(
            factors=tuple((str(s), int(l), int(e)) for s, l, e in data["factors"]),
            wrapper=data["wrapper"],
        )


@dataclass(frozen=True)
class RegressorSpec:
    """Lag structure, polynomial degree and wrapper menu for candidates."""

    z_lags: tuple = (1,)
    u_lags: tuple = ()          # one lag tuple per input channel
    e_lags: tuple = ()
    degree: int = 1
    wrappers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "z_lags", tuple(int(l) for l in self.z_lags))
        object.__setattr__(self, "u_lags", tuple(tuple(int(l) for l in ch) for ch in self.u_lags))
        object.__setattr__(self, "e_lags", tuple(int(l) for l in self.e_lags))
        if self.degree < 1:
            raise ValueError("degree must be at least 1")
        for w in self.wrappers:
            if w not in WRAPPERS[1:]:
                raise ValueError(f"unknown wrapper {w!r}")

    @property
    def max_lag(self) -> int:
        lags = list(self.z_lags) + [l for ch in self.u_lags for l in ch] + list(self.e_lags)
        return max(lags, default=0)

    def base_variables(self):
        out = [("z", lag) for lag in self.z_lags]
        for c, ch in enumerate(self.u_lags, start=1):
            out.extend((f"u{c}", lag) for lag in ch)
        out.extend(("e", lag) for lag in self.e_lags)
        return out

    def to_dict(self) -> dict:
        return {
            "z_lags": list(self.z_lags),
            "u_lags": [list(ch) for ch in self.u_lags],
            "e_lags": list(self.e_lags),
            "degree": self.degree,
            "wrappers": list(self.wrappers),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegressorSpec":
        return cls(
            z_lags=tuple(data["z_lags"]),
            u_lags=tuple(tuple(ch) for ch in data["u_lags"]),
            e_lags=tuple(data["e_lags"]),
            degree=int(data["degree"]),
            wrappers=tuple(data["wrappers"]),
        )


def candidate_terms(spec: RegressorSpec):
    """Deterministic candidate list: constant, monomials by degree, wrappers.

    Wrapped variants are generated for single-variable exponent-1 terms only,
    which is where the benchmark's sin/signum physics lives.
    """
    variables = spec.base_variables()
    if not variables:
        raise ValueError("candidate set is empty: no lagged variables declared")
    terms = [TermSpec()]
    for deg in range(1, spec.degree + 1):
        for combo in combinations_with_replacement(range(len(variables)), deg):
            factors = []
            for idx in sorted(set(combo)):
                signal, lag = variables[idx]
                factors.append((signal, lag, combo.count(idx)))
            terms.append(TermSpec(factors=tuple(factors)))
    for wrapper in spec.wrappers:
        for signal, lag in variables:
            terms.append(TermSpec(factors=((signal, lag, 1),), wrapper=wrapper))
    return terms


def build_regressors(z: np.ndarray, u: np.ndarray | None, spec: RegressorSpec, e: np.ndarray | None = None):
    """Evaluate every candidate term on the valid rows of the data.

    Returns ``(design, terms, first_row)`` where rows are aligned to sample
    indices ``first_row .. N-1``.
    """
    z = np.asarray(z, dtype=float).ravel()
    series = {"z": z}
    if spec.u_lags:
        if u is None:
            raise ValueError("spec declares input lags but no input data given")
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape[0] != z.size:
            u = u.T
        if u.shape[0] != z.size or u.shape[1] != len(spec.u_lags):
            raise ValueError("input data must be (N, n_channels)")
        for c in range(u.shape[1]):
            series[f"u{c + 1}"] = u[:, c]
    if spec.e_lags:
        if e is None:
            raise ValueError("spec declares noise lags but no noise data given")
        series["e"] = np.asarray(e, dtype=float).ravel()

    first_row = spec.max_lag
    if z.size <= first_row:
        raise ValueError("data is shorter than the maximum lag")
    rows = np.arange(first_row, z.size)
    terms = candidate_terms(spec)
    design = np.column_stack([t.evaluate_series(series, rows) for t in terms])
    return design, terms, first_row


@dataclass
class SelectedTerm:
    term: TermSpec
    coefficient: float
    err: float


@dataclass
class NarmaxModel:
    """Selected terms with coefficients and per-term error reduction ratios."""

    terms: list
    degree: int
    lags: RegressorSpec
    form: str = "discrete"      # "discrete" | "derivative"

    @property
    def err_total(self) -> float:
        return float(sum(t.err for t in self.terms))

    def contains(self, predicate) -> bool:
        return any(predicate(t.term) for t in self.terms)

    def rhs_point(self, x: float, u) -> float:
        """Evaluate the model right-hand side at one operating point."""
        u = np.asarray(u, dtype=float).ravel()
        values = {"z": float(x), "e": 0.0}
        for c, val in enumerate(u, start=1):
            values[f"u{c}"] = float(val)
        return float(sum(t.coefficient * t.term.evaluate_point(values) for t in self.terms))

    def rhs_gradient(self, x: float, u, signal: str) -> float:
        u = np.asarray(u, dtype=float).ravel()
        values = {"z": float(x), "e": 0.0}
        for c, val in enumerate(u, start=1):
            values[f"u{c}"] = float(val)
        return float(sum(t.coefficient * t.term.derivative_point(values, signal) for t in self.terms))

    def to_json(self, path) -> None:
        payload = {
            "form": self.form,
            "degree": self.degree,
            "lags": self.lags.to_dict(),
            "terms": [
                {"term": st.term.to_dict(), "coefficient": st.coefficient, "err": st.err}
                for st in self.terms
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "NarmaxModel":
        with open(path) as fh:
            payload = json.load(fh)
        terms = [
            SelectedTerm(
                term=TermSpec.from_dict(item["term"]),
                coefficient=float(item["coefficient"]),
                err=float(item["err"]),
            )
            for item in payload["terms"]
        ]
        return cls(
            terms=terms,
            degree=int(payload["degree"]),
            lags=RegressorSpec.from_dict(payload["lags"]),
            form=payload["form"],
        )


def frols_fit(
    design: np.ndarray,
    target: np.ndarray,
    terms,
    err_threshold: float = 1e-4,
    max_terms: int = 10,
    spec: RegressorSpec | None = None,
    form: str = "discrete",
) -> NarmaxModel:
    """Greedy forward orthogonal selection by maximal error reduction ratio.

    Stops once the cumulative ERR reaches ``1 - err_threshold`` or
    ``max_terms`` terms are in; coefficients come from back-substitution of
    the unit upper-triangular orthogonalization system.  Exact ERR ties are
    broken toward the canonically smallest term.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(target, dtype=float).ravel()
    if design.shape[0] != y.size:
        raise ValueError("design and target row counts differ")
    syy = float(y @ y)
    if syy == 0.0:
        raise ValueError("target is identically zero")
    if not 0.0 < err_threshold < 1.0:
        raise ValueError("err_threshold must lie in (0, 1)")
    if len(terms) != design.shape[1]:
        raise ValueError("terms must label every design column")

    n_cols = design.shape[1]
    work = design.copy()
    col_scale = np.sum(design**2, axis=0)
    usable = col_scale > 0.0
    selected: list[int] = []
    w_columns = []
    g_coeffs = []
    err_values = []
    deflations = []
    keys = [t.sort_key() for t in terms]

    cumulative = 0.0
    for _ in range(min(max_terms, n_cols)):
        ss = np.sum(work**2, axis=0)
        alive = usable & (ss > 1e-12 * np.maximum(col_scale, 1e-300))
        if not np.any(alive):
            break
        wy = work.T @ y
        errs = np.where(alive, wy**2 / np.where(ss > 0, ss, 1.0) / syy, -np.inf)
        best = int(np.argmax(errs))
        top = errs[best]
        if top <= 0:
            break
        tied = np.nonzero(errs == top)[0]
        if tied.size > 1:
            best = int(min(tied, key=lambda i: keys[i]))
        w = work[:, best].copy()
        ssw = float(w @ w)
        coeffs = (work.T @ w) / ssw
        deflations.append(coeffs)
        work = work - np.outer(w, coeffs)
        usable[best] = False

        selected.append(best)
        w_columns.append(w)
        g_coeffs.append(float(wy[best]) / ssw)
        err_values.append(float(top))
        cumulative += float(top)
        if cumulative >= 1.0 - err_threshold:
            break

    if not selected:
        raise NumericalError("no candidate explained any target variance")

    k = len(selected)
    alpha = np.eye(k)
    for row in range(k):
        for col in range(row + 1, k):
            alpha[row, col] = deflations[row][selected[col]]
    theta = scipy.linalg.solve_triangular(alpha, np.asarray(g_coeffs), lower=False)

    chosen = [
        SelectedTerm(term=terms[idx], coefficient=float(th), err=err)
        for idx, th, err in zip(selected, theta, err_values)
    ]
    chosen.sort(key=lambda st: st.term.sort_key())
    degree = spec.degree if spec is not None else max((st.term.degree for st in chosen), default=1)
    lags = spec if spec is not None else RegressorSpec(z_lags=(), u_lags=(), degree=max(degree, 1))
    return NarmaxModel(terms=chosen, degree=degree, lags=lags, form=form)


def free_run_predict(model: NarmaxModel, inputs, x0, z_true, dt: float | None = None):
    """Simulate the model on its own outputs and score against held-out data.

    Derivative-form models are integrated with RK4 under zero-order-hold
    inputs (``dt`` required); discrete models iterate the one-step map.
    Returns ``(prediction, rrse)`` with
    ``rrse = ||pred - true|| / ||true - mean(true)||``.
    """
    z_true = np.asarray(z_true, dtype=float).ravel()
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    if u.shape[0] != z_true.size:
        u = u.T
    n_samples = z_true.size

    if model.form == "derivative":
        if dt is None:
            raise ValueError("derivative-form free run needs the sampling period dt")
        pred = np.empty(n_samples)
        x = float(np.asarray(x0, dtype=float).ravel()[0])
        pred[0] = x
        for k in range(n_samples - 1):
            uk = u[k]
            k1 = model.rhs_point(x, uk)
            k2 = model.rhs_point(x + 0.5 * dt * k1, uk)
            k3 = model.rhs_point(x + 0.5 * dt * k2, uk)
            k4 = model.rhs_point(x + dt * k3, uk)
            x = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            if not np.isfinite(x) or abs(x) > 1e9:
                raise DivergenceError(f"free-run prediction diverged at sample {k + 1}")
            pred[k + 1] = x
    else:
        lag = max(model.lags.max_lag, 1)
        hist = np.asarray(x0, dtype=float).ravel()
        if hist.size < lag:
            raise ValueError(f"discrete free run needs {lag} initial output values")
        pred = np.empty(n_samples)
        pred[:lag] = hist[-lag:]
        series = {"z": pred}
        for c in range(u.shape[1]):
            series[f"u{c + 1}"] = u[:, c]
        series["e"] = np.zeros(n_samples)
        for k in range(lag, n_samples):
            row = np.array([k])
            val = sum(
                st.coefficient * st.term.evaluate_series(series, row)[0] for st in model.terms
            )
            if not np.isfinite(val) or abs(val) > 1e9:
                raise DivergenceError(f"free-run prediction diverged at sample {k}")
            pred[k] = val

    denom = np.linalg.norm(z_true - z_true.mean())
    if denom == 0.0:
        raise ValueError("held-out data is constant; RRSE undefined")
    rrse = float(np.linalg.norm(pred - z_true) / denom)
    return pred, rrse


@dataclass(frozen=True)
class EquilibriumPoint:
    """Operating point with ``f(x_eq, u_eq) = 0`` to the stated residual."""

    x_eq: float
    u_eq: np.ndarray
    z_eq: float
    residual: float


def find_equilibrium(
    model: NarmaxModel,
    x_guess: float,
    u_guess,
    fixed: dict | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> EquilibriumPoint:
    """Gauss–Newton search for a root of the model right-hand side.

    ``fixed`` maps variable names ("z", "u1", ...) to frozen values; the
    remaining variables are adjusted with minimum-norm Newton steps.
    """
    if model.form != "derivative":
        raise ValueError("equilibria are defined for derivative-form models only")
    u = np.asarray(u_guess, dtype=float).ravel().copy()
    fixed = dict(fixed or {})
    names = ["z"] + [f"u{c + 1}" for c in range(u.size)]
    values = {"z": float(x_guess)}
    for c in range(u.size):
        values[f"u{c + 1}"] = float(u[c])
    for name, val in fixed.items():
        if name not in values:
            raise ValueError(f"unknown fixed variable {name!r}")
        values[name] = float(val)
    free = [name for name in names if name not in fixed]
    if not free:
        raise ValueError("at least one variable must stay free")

    residual = np.inf
    for _ in range(max_iter):
        x = values["z"]
        uvec = np.array([values[f"u{c + 1}"] for c in range(u.size)])
        f = model.rhs_point(x, uvec)
        residual = abs(f)
        if residual <= tol:
            return EquilibriumPoint(x_eq=x, u_eq=uvec, z_eq=x, residual=residual)
        jac = np.array([[model.rhs_gradient(x, uvec, name) for name in free]])
        step, *_ = np.linalg.lstsq(jac, np.array([-f]), rcond=None)
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) == 0.0:
            break
        for name, delta in zip(free, step):
            values[name] += float(delta)
    raise NumericalError(f"equilibrium search stalled with residual {residual:.3e}")


def linearize(
    model: NarmaxModel,
    eq: EquilibriumPoint,
    channel_roles,
    output_map: tuple | None = None,
) -> lti.LtiPlant:
    """Jacobian linearization of a derivative-form model at an equilibrium.

    ``channel_roles`` lists "control"/"disturbance" per input channel; the
    default output map stacks the state over the control channels
    (``C = [I; 0]``, ``D = [0; I]``), which keeps ``DᵀC = 0`` and ``R = I``.
    """
    if model.form != "derivative":
        raise ValueError("linearization is defined for derivative-form models only")
    if eq.residual > 1e-8:
        raise ValueError("equilibrium residual too large for linearization")
    roles = list(channel_roles)
    if any(r not in ("control", "disturbance") for r in roles):
        raise ValueError("channel roles must be 'control' or 'disturbance'")
    u = np.asarray(eq.u_eq, dtype=float).ravel()
    if len(roles) != u.size:
        raise ValueError("one role per input channel required")

    a = np.array([[model.rhs_gradient(eq.x_eq, u, "z")]])
    cols = [model.rhs_gradient(eq.x_eq, u, f"u{c + 1}") for c in range(u.size)]
    b1 = np.array([[cols[c] for c in range(u.size) if roles[c] == "control"]])
    b2 = np.array([[cols[c] for c in range(u.size) if roles[c] == "disturbance"]])
    if b1.size == 0 or b2.size == 0:
        raise ValueError("need at least one control and one disturbance channel")

    m = b1.shape[1]
    if output_map is not None:
        c_mat, d_mat = (np.atleast_2d(np.asarray(x, dtype=float)) for x in output_map)
    else:
        c_mat = np.vstack([np.eye(1), np.zeros((m, 1))])
        d_mat = np.vstack([np.zeros((1, m)), np.eye(m)])
    return lti.LtiPlant(A=a, B1=b1, B2=b2, C=c_mat, D=d_mat)
