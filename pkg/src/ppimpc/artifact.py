"""JSON persistence of synthesis results and re-verification from the file alone."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .geometry import Polytope, linear_map_support, polytope_support
from .invariance import CERTIFICATE_TOL, PpiSet, compute_dstar, confidence_ellipsoid, ppi_certificate
from .synthesis import (
    DECREASE_TOL,
    SynthesisResult,
    SystemModel,
    TerminalIngredients,
    terminal_decrease_gap,
    terminal_set_certificates,
)

SCHEMA_VERSION = 1
ARTIFACT_KIND = "ppimpc.synthesis"


def _poly(P: Polytope) -> dict:
    return {"directions": P.directions.tolist(), "offsets": P.offsets.tolist()}


def _ppi(S: PpiSet) -> dict:
    return {
        "directions": S.polytope.directions.tolist(),
        "qstar": S.qstar.tolist(),
        "dstar": S.dstar.tolist(),
        "cstar": S.cstar.tolist(),
        "epsilon": S.epsilon,
        "certificate_slack": S.certificate_slack.tolist(),
    }


def result_to_dict(res: SynthesisResult, checks: dict | None = None) -> dict:
    m, t = res.model, res.terminal
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": ARTIFACT_KIND,
        "model": {
            "A": m.A.tolist(), "B": m.B.tolist(), "mu_w": m.mu_w.tolist(), "Sigma_w": m.Sigma_w.tolist(),
            "X": _poly(m.X), "U": _poly(m.U), "eps_x": m.eps_x, "eps_u": m.eps_u,
        },
        "terminal": {"K": t.K.tolist(), "K_f": t.K_f.tolist(), "P": t.P.tolist(), "Q": t.Q.tolist(),
                     "R": t.R.tolist()},
        "N": res.N,
        "R_x": _ppi(res.R_x),
        "R_u": _ppi(res.R_u),
        "Z": _poly(res.Z),
        "V": _poly(res.V),
        "Z_f": _poly(res.Z_f),
    }
    if checks is not None:
        doc["certificates"] = checks
    return doc


def _get(doc, key, where):
    if key not in doc:
        raise InvalidArgumentError(f"artifact is missing {where}{key}")
    return doc[key]


def _arr(x):
    return np.asarray(x, dtype=float)


def _poly_from(d) -> Polytope:
    return Polytope(_arr(d["directions"]), _arr(d["offsets"]))


def _ppi_from(d) -> PpiSet:
    return PpiSet(Polytope(_arr(d["directions"]), _arr(d["qstar"])), _arr(d["dstar"]), _arr(d["cstar"]),
                  float(d["epsilon"]), _arr(d["certificate_slack"]))


def result_from_dict(doc: dict) -> SynthesisResult:
    if doc.get("kind") != ARTIFACT_KIND:
        raise InvalidArgumentError(f"not a synthesis artifact (kind={doc.get('kind')!r})")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InvalidArgumentError(f"unsupported schema_version {doc.get('schema_version')!r}")
    try:
        md = _get(doc, "model", "")
        model = SystemModel(_arr(md["A"]), _arr(md["B"]), _arr(md["mu_w"]), _arr(md["Sigma_w"]),
                            _poly_from(md["X"]), _poly_from(md["U"]), md["eps_x"], md["eps_u"])
        td = _get(doc, "terminal", "")
        term = TerminalIngredients(*(np.atleast_2d(_arr(td[k])) for k in ("K", "K_f", "P", "Q", "R")))
        return SynthesisResult(model, term, _ppi_from(doc["R_x"]), _ppi_from(doc["R_u"]), _poly_from(doc["Z"]),
                               _poly_from(doc["V"]), _poly_from(doc["Z_f"]), int(doc["N"]))
    except KeyError as exc:
        raise InvalidArgumentError(f"artifact is missing field {exc}") from None


def save_result(res: SynthesisResult, path, checks: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result_to_dict(res, checks), indent=1) + "\n", encoding="utf-8")
    return path


def load_result(path) -> SynthesisResult:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"artifact is not valid JSON: {exc}") from None
    return result_from_dict(doc)


def _check(slack, tol=CERTIFICATE_TOL) -> dict:
    slack = np.atleast_1d(np.asarray(slack, dtype=float))
    return {"passed": bool(np.all(slack >= -tol)), "min_slack": float(slack.min()), "slack": slack.tolist()}


def verify_result(res: SynthesisResult) -> dict:
    """Recompute every certificate of a (possibly deserialized) result.

    Each entry maps a check name to ``{"passed", "min_slack", "slack"}``;
    non-negative slack (down to ``-1e-8``) means the check holds.
    """
    m, t = res.model, res.terminal
    out = {}
    for name, S, eps in (("R_x", res.R_x, m.eps_x), ("R_u", res.R_u, m.eps_u)):
        E = confidence_ellipsoid(m.mu_w, m.Sigma_w, m.n, eps)
        out[f"{name}_ppi_inclusion"] = _check(ppi_certificate(S.polytope, res.A_K, E).slack)
        d = compute_dstar(S.polytope.directions, m.mu_w, m.Sigma_w, m.n, eps)
        out[f"{name}_dstar"] = _check(-np.abs(d - S.dstar), tol=1e-10)
        out[f"{name}_q_is_d_plus_c"] = _check(-np.abs(S.qstar - S.dstar - S.cstar), tol=1e-10)
        out[f"{name}_epsilon"] = _check([0.0 if S.epsilon == eps else -1.0], tol=0.0)

    for name, M in (("A_K", res.A_K), ("A_Kf", res.A_Kf)):
        rho = float(np.abs(np.linalg.eigvals(M)).max())
        out[f"{name}_strictly_stable"] = _check([1.0 - rho], tol=0.0)
    out["terminal_decrease"] = _check([-terminal_decrease_gap(m.A, m.B, t.K_f, t.P, t.Q, t.R)], tol=DECREASE_TOL)
    Psym = (t.P + t.P.T) / 2
    out["P_positive_definite"] = _check([float(np.linalg.eigvalsh(Psym).min())], tol=0.0)

    hRx = lambda y: polytope_support(res.R_x.polytope, y)  # noqa: E731
    zt = np.array([1.0 - hRx(f) for f in m.X.directions])
    same_rows = res.Z.directions.shape == m.X.directions.shape and np.allclose(res.Z.directions, m.X.directions)
    out["Z_tightening"] = _check(zt - res.Z.offsets if same_rows else [-1.0])
    hKRu = linear_map_support(lambda y: polytope_support(res.R_u.polytope, y), t.K)
    vt = np.array([1.0 - hKRu(g) for g in m.U.directions])
    same_rows = res.V.directions.shape == m.U.directions.shape and np.allclose(res.V.directions, m.U.directions)
    out["V_tightening"] = _check(vt - res.V.offsets if same_rows else [-1.0])
    out["Z_origin_interior"] = _check([res.Z.offsets.min()], tol=0.0)
    out["V_origin_interior"] = _check([res.V.offsets.min()], tol=0.0)
    for name, cert in terminal_set_certificates(res).items():
        out[name] = _check(cert.slack)
    return out


def all_passed(checks: dict) -> bool:
    return all(c["passed"] for c in checks.values())

