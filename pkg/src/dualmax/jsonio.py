"""JSON files for models, utilities, claims, reports and decompositions.

Floats are written with ``repr``, the shortest text that reads back to the
same double, so every file round-trips bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .dual_domain import DualMeasure
from .duality import SolveReport
from .errors import ModelError, ParseError
from .market import ScenarioTree, Strategy, TradingCone, build_market
from .superhedge import DecompositionResult
from .utility import PiecewiseUtility


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2)


def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def write_json(path, obj, inputs=()) -> Path:
    """Write ``obj``; refuses to overwrite any of the ``inputs``."""
    path = Path(path)
    for src in inputs:
        if src is not None and path.resolve() == Path(src).resolve():
            raise ParseError(f"{path}: output would overwrite an input file")
    path.write_text(dumps(obj) + "\n")
    return path


def _parsed(what: str, path, fn, raw):
    try:
        return fn(raw)
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        where = f"{path}: " if path else ""
        raise ParseError(f"{where}malformed {what}: {exc!r}") from exc


# -- model -----------------------------------------------------------------


def model_to_raw(tree: ScenarioTree, cone: TradingCone | None) -> dict:
    nodes = []
    for n in range(tree.n_nodes):
        p = int(tree.parent[n])
        nodes.append({
            "id": n,
            "parent": None if p < 0 else p,
            "t": int(tree.t[n]),
            "prob": float(tree.prob[n]),
            "prices": [float(v) for v in tree.prices[n]],
        })
    raw = {"d": tree.d, "T": tree.T, "nodes": nodes}
    if cone is not None:
        raw["cone"] = {"generators": cone.generators.tolist()}
    return raw


def parse_model(raw, path=None) -> tuple[ScenarioTree, TradingCone | None]:
    return _parsed("model", path, build_market, raw)


def load_model(path) -> tuple[ScenarioTree, TradingCone | None]:
    return parse_model(read_json(path), path)


# -- utility ---------------------------------------------------------------


def utility_to_raw(U: PiecewiseUtility) -> dict:
    raw = {"pieces": U.to_specs()}
    if U.name:
        raw["name"] = U.name
    return raw


def parse_utility(raw, path=None) -> PiecewiseUtility:
    return _parsed("utility", path, lambda r: PiecewiseUtility.from_pieces(r["pieces"], name=r.get("name", "")), raw)


def load_utility(path) -> PiecewiseUtility:
    return parse_utility(read_json(path), path)


# -- claims ----------------------------------------------------------------


def claim_to_raw(tree: ScenarioTree, values) -> dict:
    values = np.asarray(values, dtype=float)
    return {"values": {str(int(leaf)): float(values[i]) for i, leaf in enumerate(tree.leaves)}}


def parse_claim(raw, tree: ScenarioTree, path=None) -> np.ndarray:
    return _parsed("claim", path, lambda r: tree.claim(r["values"]), raw)


def load_claim(path, tree: ScenarioTree) -> np.ndarray:
    return parse_claim(read_json(path), tree, path)


# -- reports ---------------------------------------------------------------


def _leaf_map(tree_leaves, values) -> dict:
    return {str(int(leaf)): float(v) for leaf, v in zip(tree_leaves, values)}


def report_to_raw(report: SolveReport, inputs: dict | None = None) -> dict:
    """The report schema, with the inputs embedded so it can be re-verified."""
    leaves = report.leaf_ids
    raw = {
        "x": report.x,
        "u": report.u_value,
        "w": report.w_value,
        "gap": report.gap,
        "backend": report.backend,
        "iterations": report.iterations,
        "X_star": _leaf_map(leaves, report.X_star),
        "nu_star": _leaf_map(leaves, report.nu_star.density),
        "y_star": report.y_star,
        "residuals": dict(report.residuals),
        "assumptions": report.assumptions,
    }
    if report.H_star is not None:
        H = np.asarray(report.H_star.holdings, dtype=float)
        raw["H_star"] = {str(n): [float(v) for v in H[n]] for n in range(len(H)) if np.all(np.isfinite(H[n]))}
    if inputs:
        raw["inputs"] = inputs
    return raw


def report_from_raw(raw: dict, tree: ScenarioTree) -> SolveReport:
    """Rebuild a report against ``tree``; densities become leaf weights."""

    def build(r):
        leaves = [int(v) for v in tree.leaves]
        X = tree.claim(r["X_star"])
        density = tree.claim(r["nu_star"])
        nu = DualMeasure.from_density(density, tree.path_prob)
        H = None
        if "H_star" in r:
            H = Strategy.from_mapping(tree, {int(k): v for k, v in r["H_star"].items()})
        return SolveReport(
            x=float(r["x"]), u_value=float(r["u"]), w_value=float(r["w"]), gap=float(r["gap"]),
            X_star=X, H_star=H, nu_star=nu, y_star=float(r["y_star"]),
            residuals=dict(r.get("residuals", {})), backend=str(r.get("backend", "")),
            iterations=int(r.get("iterations", 0)), leaf_ids=leaves,
            assumptions=r.get("assumptions", {}),
        )

    return _parsed("report", None, build, raw)


def decomposition_to_raw(dec: DecompositionResult, tree: ScenarioTree) -> dict:
    H = np.asarray(dec.H.holdings, dtype=float)
    nodes = {}
    for n in range(tree.n_nodes):
        entry = {"V": float(dec.V[n]), "C": float(dec.C[n])}
        if tree.children[n]:
            entry["H"] = [float(v) for v in H[n]]
        nodes[str(n)] = entry
    return {"V0": dec.V0, "nodes": nodes}

