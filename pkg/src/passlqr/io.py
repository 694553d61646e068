"""Artifact file formats.

Plants, polytopes and run ledgers use a human-editable `key = value` text
format with nested bracketed arrays; atlases and trajectories use columnar
comma-separated text with `#`-prefixed metadata headers.  All floating-point
numbers are written with 17 significant digits so every artifact round-trips
bit for bit.
"""

import ast

import numpy as np

from .certify import PassivityCertificate, PassivityMode
from .errors import PlantFormatError
from .plant import LtiPlant
from .polytope import GainPolytope
from .region import GainCube, RejectedCube, VerifiedRegion


def format_float(x):
    return f"{float(x):.17g}"


def format_array(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return format_float(a)
    if a.ndim == 1:
        return "[" + ", ".join(format_float(x) for x in a) + "]"
    return "[" + ", ".join(format_array(row) for row in a) + "]"


def parse_array(text, field=None, line=None):
    """Nested bracketed list -> float ndarray; raises PlantFormatError."""
    try:
        value = ast.literal_eval(text.strip())
        arr = np.asarray(value, dtype=float)
    except (ValueError, SyntaxError, TypeError) as exc:
        raise PlantFormatError(f"cannot parse array: {exc}", line=line, field=field) from exc
    return arr


def parse_gain_text(text, m=None, n=None):
    """Inline gain from the command line; 1-D input is taken as a single row."""
    arr = parse_array(text, field="gain")
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if m is not None and arr.shape != (m, n):
        raise PlantFormatError(f"gain must have shape {(m, n)}, got {arr.shape}", field="gain")
    return arr


def parse_keyvals(text):
    """`key = value` lines -> ordered dict; values may continue across lines
    while brackets are unbalanced.  Full-line comments (#) and blanks skipped."""
    entries = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = lines[i]
        stripped = raw.strip()
        i += 1
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise PlantFormatError("expected 'key = value'", line=i)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        start_line = i
        while value.count("[") > value.count("]") and i < len(lines):
            value += " " + lines[i].strip()
            i += 1
        if value.count("[") != value.count("]"):
            raise PlantFormatError("unbalanced brackets", line=start_line, field=key)
        if key in entries:
            raise PlantFormatError(f"duplicate key {key!r}", line=start_line, field=key)
        entries[key] = (value, start_line)
    return entries


def dump_keyvals(pairs, header=None):
    out = []
    if header:
        out.append(f"# {header}")
    for key, value in pairs.items():
        if isinstance(value, np.ndarray):
            value = format_array(value)
        elif isinstance(value, float):
            value = format_float(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- plants

_PLANT_FIELDS = ("A", "B_u", "B_d", "C", "D", "Q", "R")


def plant_to_text(plant, mode=None):
    pairs = {}
    if plant.name:
        pairs["name"] = plant.name
    if mode is not None:
        pairs["mode"] = mode.kind
    for f in _PLANT_FIELDS:
        pairs[f] = format_array(getattr(plant, f))
    return dump_keyvals(pairs, header="passlqr plant")


def plant_from_text(text):
    """Returns (plant, mode); mode defaults to nonstrict when absent."""
    entries = parse_keyvals(text)
    missing = [f for f in _PLANT_FIELDS if f not in entries]
    if missing:
        raise PlantFormatError(f"missing plant fields: {', '.join(missing)}")
    kwargs = {}
    for f in _PLANT_FIELDS:
        value, line = entries[f]
        kwargs[f] = parse_array(value, field=f, line=line)
    name = entries.get("name", ("", None))[0]
    mode_kind = entries.get("mode", ("nonstrict", None))[0]
    if mode_kind not in ("strict", "nonstrict"):
        raise PlantFormatError(f"mode must be strict or nonstrict, got {mode_kind!r}",
                               line=entries["mode"][1], field="mode")
    mode = PassivityMode(kind=mode_kind)
    return LtiPlant(name=name, **kwargs), mode


def load_plant(path):
    with open(path, "r", encoding="utf-8") as fh:
        return plant_from_text(fh.read())


def save_plant(path, plant, mode=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plant_to_text(plant, mode))


# ---------------------------------------------------------------- atlases

def region_to_text(region, mode):
    n = int(round(np.sqrt(region.cubes[0].certificate.P.size))) if region.cubes else 0
    d = region.grid_anchor.size
    head = [
        "# passlqr atlas",
        f"# anchor = {format_array(region.grid_anchor)}",
        f"# edge = {format_float(region.edge)}",
        f"# mode = {mode.kind}",
        f"# strict_margin = {format_float(mode.strict_margin)}",
        f"# nonstrict_slack = {format_float(mode.nonstrict_slack)}",
        f"# n = {n}",
    ]
    cols = (["status"] + [f"c{i}" for i in range(d)] + [f"center{i}" for i in range(d)]
            + ["edge", "lambda_max", "lambda_min_P", "equality_residual", "scale"]
            + [f"P{i}{j}" for i in range(n) for j in range(n)])
    rows = [",".join(cols)]
    for cube in region.cubes:
        cert = cube.certificate
        rows.append(",".join(
            ["verified"] + [str(c) for c in cube.coord]
            + [format_float(x) for x in cube.center]
            + [format_float(cube.edge), format_float(cert.lambda_max_constraint),
               format_float(cert.lambda_min_P), format_float(cert.equality_residual),
               format_float(cert.scale)]
            + [format_float(x) for x in cert.P.ravel()]))
    for rej in region.rejected:
        coord = np.round((rej.center - region.grid_anchor) / region.edge).astype(int)
        rows.append(",".join(
            ["rejected"] + [str(int(c)) for c in coord]
            + [format_float(x) for x in rej.center]
            + [format_float(region.edge), format_float(rej.best_lambda_max)]
            + [""] * (3 + n * n)))
    return "\n".join(head + rows) + "\n"


def _parse_meta(lines):
    meta = {}
    body = []
    for ln in lines:
        if ln.startswith("#"):
            stripped = ln.lstrip("#").strip()
            if "=" in stripped:
                key, _, value = stripped.partition("=")
                meta[key.strip()] = value.strip()
        elif ln.strip():
            body.append(ln)
    return meta, body


def region_from_text(text):
    meta, body = _parse_meta(text.splitlines())
    anchor = parse_array(meta["anchor"], field="anchor")
    edge = float(meta["edge"])
    mode = PassivityMode(kind=meta["mode"], strict_margin=float(meta["strict_margin"]),
                         nonstrict_slack=float(meta["nonstrict_slack"]))
    n = int(meta["n"])
    d = anchor.size
    cubes, rejected = [], []
    for row in body[1:]:
        parts = row.split(",")
        status = parts[0]
        coord = tuple(int(x) for x in parts[1:1 + d])
        center = np.array([float(x) for x in parts[1 + d:1 + 2 * d]])
        cube_edge = float(parts[1 + 2 * d])
        lam = float(parts[2 + 2 * d])
        if status == "verified":
            lam_min, eq_res, scale = (float(x) for x in parts[3 + 2 * d:6 + 2 * d])
            P = np.array([float(x) for x in parts[6 + 2 * d:6 + 2 * d + n * n]]).reshape(n, n)
            cert = PassivityCertificate(P=P, mode=mode, lambda_max_constraint=lam,
                                        lambda_min_P=lam_min, equality_residual=eq_res,
                                        scale=scale)
            cubes.append(GainCube(center=center, edge=cube_edge, certificate=cert, coord=coord))
        else:
            rejected.append(RejectedCube(center=center, best_lambda_max=lam))
    return VerifiedRegion(cubes=cubes, grid_anchor=anchor, edge=edge, rejected=rejected), mode


def save_region(path, region, mode):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(region_to_text(region, mode))


def load_region(path):
    with open(path, "r", encoding="utf-8") as fh:
        return region_from_text(fh.read())


# ---------------------------------------------------------------- polytopes

def polytope_to_text(polytope):
    return dump_keyvals({
        "G": format_array(polytope.G),
        "h": format_array(polytope.h),
        "chebyshev_center": format_array(polytope.chebyshev_center),
    }, header="passlqr polytope")


def polytope_from_text(text):
    entries = parse_keyvals(text)
    try:
        G = parse_array(entries["G"][0], field="G")
        h = parse_array(entries["h"][0], field="h")
        center = parse_array(entries["chebyshev_center"][0], field="chebyshev_center")
    except KeyError as exc:
        raise PlantFormatError(f"missing polytope field {exc}") from exc
    return GainPolytope(G=G, h=h, chebyshev_center=center)


def save_polytope(path, polytope):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(polytope_to_text(polytope))


def load_polytope(path):
    with open(path, "r", encoding="utf-8") as fh:
        return polytope_from_text(fh.read())


# ---------------------------------------------------------------- trajectories

def trajectory_to_text(traj, m, n):
    d = m * n
    head = [
        "# passlqr trajectory",
        f"# m = {m}",
        f"# n = {n}",
        f"# termination = {traj.termination}",
        f"# terminal_gain = {format_array(traj.terminal_gain)}",
    ]
    cols = ["t"] + [f"k{i}" for i in range(d)] + ["f", "proj_grad_norm", "min_g"]
    rows = [",".join(cols)]
    for s in traj.samples:
        rows.append(",".join([format_float(s.t)] + [format_float(x) for x in s.k]
                             + [format_float(s.f), format_float(s.proj_grad_norm),
                                format_float(s.min_g)]))
    return "\n".join(head + rows) + "\n"


def trajectory_from_text(text):
    from .flow import FlowSample, FlowTrajectory
    meta, body = _parse_meta(text.splitlines())
    m, n = int(meta["m"]), int(meta["n"])
    d = m * n
    samples = []
    for row in body[1:]:
        parts = [float(x) for x in row.split(",")]
        samples.append(FlowSample(t=parts[0], k=np.array(parts[1:1 + d]), f=parts[1 + d],
                                  proj_grad_norm=parts[2 + d], min_g=parts[3 + d]))
    terminal = parse_array(meta["terminal_gain"], field="terminal_gain").reshape(m, n)
    return FlowTrajectory(samples=samples, terminal_gain=terminal,
                          termination=meta["termination"])


def save_trajectory(path, traj, m, n):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trajectory_to_text(traj, m, n))


def load_trajectory(path):
    with open(path, "r", encoding="utf-8") as fh:
        return trajectory_from_text(fh.read())


# ---------------------------------------------------------------- ledgers

def ledger_to_text(ledger):
    """RunLedger dataclass -> key = value text (see pipeline.RunLedger)."""
    pairs = {}
    for key, value in ledger.as_pairs():
        pairs[key] = value
    return dump_keyvals(pairs, header="passlqr run ledger")


def ledger_from_text(text):
    entries = parse_keyvals(text)
    return {key: value for key, (value, _) in entries.items()}


def load_ledger(path):
    with open(path, "r", encoding="utf-8") as fh:
        return ledger_from_text(fh.read())
