"""Trajectory scoring: time sync, scale anchoring, RMSE, report emission.

Trajectories are timestamped body poses in the ENU world frame with a
per-sample tracking status (I initializing, T tracking, L lost). The
trajectory file format is text:

    TRAJ v1 <label>
    <t_us> <px> <py> <pz> <qw> <qx> <qy> <qz> <status>

A run is failed when it never tracked or ended lost; failed runs carry
no RMSE numbers and render as the literal 'X' in sweep matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateAnchorError,
    DegenerateConfigurationError,
    InvalidArgumentError,
    NoOverlapError,
    ParseError,
)
from .geometry import (
    Pose,
    matrix_from_quat,
    pose_interpolate,
    quat_from_matrix,
    quat_mul,
    quat_normalize,
    quat_rotate,
    rotation_angle_deg,
)

STATUS_INITIALIZING = "I"
STATUS_TRACKING = "T"
STATUS_LOST = "L"
_STATUSES = (STATUS_INITIALIZING, STATUS_TRACKING, STATUS_LOST)


@dataclass
class TrajectorySample:
    t_us: int
    pose: Pose
    status: str = STATUS_TRACKING

    def __post_init__(self):
        if self.status not in _STATUSES:
            raise InvalidArgumentError(f"unknown status '{self.status}'")


@dataclass
class Trajectory:
    samples: list[TrajectorySample] = field(default_factory=list)
    label: str = "trajectory"

    def __post_init__(self):
        ts = [s.t_us for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidArgumentError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.samples)

    def tracked_fraction(self) -> float:
        if not self.samples:
            return 0.0
        return sum(s.status == STATUS_TRACKING for s in self.samples) / len(self.samples)

    def failed(self) -> bool:
        """Never tracked, or ended in a terminal lost state."""
        if not self.samples:
            return True
        return self.samples[-1].status != STATUS_TRACKING

    def first_tracking_index(self) -> int | None:
        for i, s in enumerate(self.samples):
            if s.status == STATUS_TRACKING:
                return i
        return None

    def positions(self) -> np.ndarray:
        return np.array([s.pose.t for s in self.samples])

    def transformed(self, scale: float, q_align, t_align, label: str | None = None
                    ) -> "Trajectory":
        """Apply the similarity x -> R (s x) + t to every sample."""
        out = []
        for s in self.samples:
            out.append(
                TrajectorySample(
                    t_us=s.t_us,
                    pose=Pose(
                        t_us=s.t_us,
                        q=quat_normalize(quat_mul(q_align, s.pose.q)),
                        t=quat_rotate(q_align, scale * s.pose.t) + np.asarray(t_align),
                    ),
                    status=s.status,
                )
            )
        return Trajectory(samples=out, label=label or self.label)


def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w") as f:
        f.write(f"TRAJ v1 {traj.label}\n")
        for s in traj.samples:
            q = s.pose.q
            t = s.pose.t
            f.write(
                f"{s.t_us} {t[0]!r} {t[1]!r} {t[2]!r} "
                f"{q[0]!r} {q[1]!r} {q[2]!r} {q[3]!r} {s.status}\n"
            )


def load_trajectory(path) -> Trajectory:
    with open(path, "rb") as f:
        data = f.read()
    text = data.decode("utf-8", errors="replace")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("TRAJ v1 "):
        raise ParseError("missing 'TRAJ v1 <label>' header", offset=0)
    label = lines[0][len("TRAJ v1 "):].strip()
    samples = []
    offset = len(lines[0]) + 1
    for line in lines[1:]:
        stripped = line.strip()
        if stripped:
            parts = stripped.split()
            if len(parts) != 9:
                raise ParseError(f"expected 9 fields, got {len(parts)}", offset=offset)
            try:
                t_us = int(parts[0])
                vals = [float(v) for v in parts[1:8]]
            except ValueError:
                raise ParseError("non-numeric trajectory field", offset=offset)
            if parts[8] not in _STATUSES:
                raise ParseError(f"unknown status '{parts[8]}'", offset=offset)
            samples.append(
                TrajectorySample(
                    t_us=t_us,
                    pose=Pose(t_us=t_us, q=np.array(vals[3:7]), t=np.array(vals[0:3])),
                    status=parts[8],
                )
            )
        offset += len(line) + 1
    return Trajectory(samples=samples, label=label)


# ---------------------------------------------------------------------------
# Time synchronization
# ---------------------------------------------------------------------------


def time_sync(truth: Trajectory, est: Trajectory) -> list[tuple[TrajectorySample, TrajectorySample]]:
    """Interpolate truth at each estimate timestamp inside the overlap.

    Linear in translation, spherical-linear in rotation. Returns
    (truth_sample, estimate_sample) pairs.
    """
    if not truth.samples or not est.samples:
        raise NoOverlapError("empty trajectory")
    t0 = truth.samples[0].t_us
    t1 = truth.samples[-1].t_us
    inside = [s for s in est.samples if t0 <= s.t_us <= t1]
    if not inside:
        raise NoOverlapError("no estimate samples inside the truth time range")
    truth_ts = np.array([s.t_us for s in truth.samples])
    pairs = []
    for s in inside:
        j = int(np.searchsorted(truth_ts, s.t_us, side="right")) - 1
        j = max(0, min(j, len(truth.samples) - 2)) if len(truth.samples) > 1 else 0
        a = truth.samples[j]
        b = truth.samples[min(j + 1, len(truth.samples) - 1)]
        interp = a.pose if b.t_us == a.t_us else pose_interpolate(a.pose, b.pose, s.t_us)
        pairs.append((TrajectorySample(t_us=s.t_us, pose=interp, status=a.status), s))
    return pairs


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------


@dataclass
class AlignmentResult:
    scale: float
    q: np.ndarray  # rotation applied to the estimate
    t: np.ndarray  # translation applied after rotation and scale
    method: str
    residual_rmse_m: float = 0.0

    def apply(self, est: Trajectory, label=None) -> Trajectory:
        return est.transformed(self.scale, self.q, self.t, label=label)


def anchor_alignment(truth: Trajectory, est: Trajectory,
                     ground_elevation: float = 0.0) -> AlignmentResult:
    """Scale from the known initialization altitude, pose from the
    initialization-completion sample.

    Scale = truth altitude above terrain at initialization completion
    divided by the estimate's altitude magnitude there; the rotation and
    translation then map the estimate's initialization pose exactly onto
    truth's.
    """
    idx = est.first_tracking_index()
    if idx is None:
        raise DegenerateAnchorError("estimate never reached tracking status")
    anchor_est = est.samples[idx]
    pairs = time_sync(truth, est)
    est_ts = [p[1].t_us for p in pairs]
    if anchor_est.t_us not in est_ts:
        raise NoOverlapError("initialization sample outside the truth time range")
    anchor_truth = pairs[est_ts.index(anchor_est.t_us)][0]

    alt_truth = float(anchor_truth.pose.t[2]) - ground_elevation
    alt_est = abs(float(anchor_est.pose.t[2]))
    if alt_est < 1e-9:
        raise DegenerateAnchorError("estimate altitude magnitude below 1e-9")
    scale = alt_truth / alt_est

    q_align = quat_normalize(quat_mul(anchor_truth.pose.q, _quat_conj(anchor_est.pose.q)))
    t_align = anchor_truth.pose.t - quat_rotate(q_align, scale * anchor_est.pose.t)
    aligned = est.transformed(scale, q_align, t_align)
    residual = _pair_rmse_positions(truth, aligned)
    return AlignmentResult(scale=scale, q=q_align, t=t_align,
                           method="altitude_anchor", residual_rmse_m=residual)


def _quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def sim3_alignment(truth: Trajectory, est: Trajectory) -> AlignmentResult:
    """Closed-form least-squares similarity over paired positions."""
    pairs = time_sync(truth, est)
    P_est = np.array([p[1].pose.t for p in pairs])
    P_tru = np.array([p[0].pose.t for p in pairs])
    if len(P_est) < 3:
        raise DegenerateConfigurationError("similarity alignment needs >= 3 pairs")
    mu_e = P_est.mean(axis=0)
    mu_t = P_tru.mean(axis=0)
    Ec = P_est - mu_e
    Tc = P_tru - mu_t
    if np.linalg.matrix_rank(Ec, tol=1e-9 * max(1.0, np.abs(Ec).max())) < 2:
        raise DegenerateConfigurationError("paired positions are collinear")
    W = Tc.T @ Ec
    U, d, Vt = np.linalg.svd(W)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_e = (Ec ** 2).sum() / len(Ec)
    scale = float((d * np.diag(S)).sum() / (len(Ec) * var_e))
    t = mu_t - scale * (R @ mu_e)
    q = quat_from_matrix(R)
    aligned = est.transformed(scale, q, t)
    residual = _pair_rmse_positions(truth, aligned)
    return AlignmentResult(scale=scale, q=q, t=t, method="sim3_lsq",
                           residual_rmse_m=residual)


def _pair_rmse_positions(truth: Trajectory, est: Trajectory) -> float:
    pairs = time_sync(truth, est)
    d = np.array([p[0].pose.t - p[1].pose.t for p in pairs])
    return float(np.sqrt((d ** 2).sum(axis=1).mean()))


# ---------------------------------------------------------------------------
# RMSE report
# ---------------------------------------------------------------------------


@dataclass
class ErrorReport:
    label: str
    pos_rmse_m: float | None
    rot_rmse_deg: float | None
    tracked_fraction: float
    failed: bool
    series: dict = field(default_factory=dict)  # per-axis time series


def rmse(pairs, label: str = "estimate", failed: bool = False,
         tracked_fraction: float = 1.0) -> ErrorReport:
    """Position/rotation RMSE over (truth, estimate) sample pairs.

    Only tracking-status estimate samples contribute. A failed run
    reports absent RMSE fields (the table 'X').
    """
    if failed:
        return ErrorReport(label=label, pos_rmse_m=None, rot_rmse_deg=None,
                           tracked_fraction=tracked_fraction, failed=True)
    used = [(t, e) for t, e in pairs if e.status == STATUS_TRACKING]
    if not used:
        return ErrorReport(label=label, pos_rmse_m=None, rot_rmse_deg=None,
                           tracked_fraction=tracked_fraction, failed=True)
    pos_sq = 0.0
    rot_sq = 0.0
    for t, e in used:
        d = t.pose.t - e.pose.t
        pos_sq += float(d @ d)
        ang = rotation_angle_deg(t.pose.q, e.pose.q)
        rot_sq += ang * ang
    n = len(used)
    series = _pose_series(used)
    return ErrorReport(
        label=label,
        pos_rmse_m=math.sqrt(pos_sq / n),
        rot_rmse_deg=math.sqrt(rot_sq / n),
        tracked_fraction=tracked_fraction,
        failed=False,
        series=series,
    )


_ENU_FROM_NED = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])


def _euler_zyx_deg(q) -> tuple[float, float, float]:
    """Aerospace yaw-pitch-roll of a world<-body pose (NED sense)."""
    m = _ENU_FROM_NED @ matrix_from_quat(q)
    pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
    if abs(m[2, 0]) < 1.0 - 1e-9:
        yaw = math.atan2(m[1, 0], m[0, 0])
        roll = math.atan2(m[2, 1], m[2, 2])
    else:
        yaw = math.atan2(-m[0, 1], m[1, 1])
        roll = 0.0
    return math.degrees(yaw), math.degrees(pitch), math.degrees(roll)


def _pose_series(pairs) -> dict:
    t = [e.t_us for _, e in pairs]
    series = {"t_us": t}
    for name, idx in (("x", 0), ("y", 1), ("z", 2)):
        series[f"truth_{name}"] = [float(tr.pose.t[idx]) for tr, _ in pairs]
        series[f"est_{name}"] = [float(e.pose.t[idx]) for _, e in pairs]
    tr_euler = [_euler_zyx_deg(tr.pose.q) for tr, _ in pairs]
    est_euler = [_euler_zyx_deg(e.pose.q) for _, e in pairs]
    for name, idx in (("yaw", 0), ("pitch", 1), ("roll", 2)):
        series[f"truth_{name}"] = [v[idx] for v in tr_euler]
        series[f"est_{name}"] = [v[idx] for v in est_euler]
    return series


def evaluate_trajectory(truth: Trajectory, est: Trajectory,
                        ground_elevation: float = 0.0,
                        alignment: str = "altitude_anchor") -> ErrorReport:
    """Anchor-align an estimate to truth, then score it."""
    if est.failed():
        return ErrorReport(label=est.label, pos_rmse_m=None, rot_rmse_deg=None,
                           tracked_fraction=est.tracked_fraction(), failed=True)
    if alignment == "altitude_anchor":
        al = anchor_alignment(truth, est, ground_elevation)
    elif alignment == "sim3_lsq":
        al = sim3_alignment(truth, est)
    else:
        raise InvalidArgumentError(f"unknown alignment method '{alignment}'")
    aligned = al.apply(est)
    pairs = time_sync(truth, aligned)
    return rmse(pairs, label=est.label, failed=False,
                tracked_fraction=est.tracked_fraction())


# ---------------------------------------------------------------------------
# Report files: CSV series, SVG plots, sweep matrix
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return "X" if v is None else f"{v:.3f}"


def emit_report(reports: list[ErrorReport], out_dir,
                matrix_rows: list[dict] | None = None) -> list[Path]:
    """Write per-trajectory CSV series, per-axis SVG plots, a top-down
    path plot, and (optionally) the sweep matrix CSV.

    matrix_rows: dicts with keys airspeed, roll_rate, altitude and one
    ErrorReport per policy under 'policies'.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rep in reports:
        if rep.series:
            csv_path = out / f"{rep.label}_series.csv"
            _write_series_csv(rep.series, csv_path)
            written.append(csv_path)
            for axis in ("x", "y", "z", "roll", "pitch", "yaw"):
                svg = out / f"{rep.label}_{axis}.svg"
                _write_line_svg(
                    svg,
                    rep.series["t_us"],
                    [rep.series[f"truth_{axis}"], rep.series[f"est_{axis}"]],
                    ["truth", rep.label],
                    title=axis,
                )
                written.append(svg)
            svg = out / f"{rep.label}_path.svg"
            _write_path_svg(svg, rep.series, rep.label)
            written.append(svg)
    if matrix_rows is not None:
        mpath = out / "sweep_matrix.csv"
        _write_matrix_csv(matrix_rows, mpath)
        written.append(mpath)
    return written


def _write_series_csv(series: dict, path: Path) -> None:
    keys = ["t_us"] + [k for k in series if k != "t_us"]
    with open(path, "w") as f:
        f.write(",".join(keys) + "\n")
        for i in range(len(series["t_us"])):
            f.write(",".join(repr(series[k][i]) for k in keys) + "\n")


def _svg_scale(vals, lo, hi, out_lo, out_hi):
    if hi - lo < 1e-12:
        return [0.5 * (out_lo + out_hi)] * len(vals)
    return [out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo) for v in vals]


_SVG_COLORS = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"]


def _write_line_svg(path: Path, xs, y_lists, labels, title="", w=640, h=360) -> None:
    lo_x, hi_x = min(xs), max(xs)
    all_y = [v for ys in y_lists for v in ys]
    lo_y, hi_y = min(all_y), max(all_y)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="8" y="16" font-family="sans-serif" font-size="13">{title}</text>',
    ]
    for i, (ys, label) in enumerate(zip(y_lists, labels)):
        px = _svg_scale(xs, lo_x, hi_x, 40, w - 10)
        py = _svg_scale(ys, lo_y, hi_y, h - 24, 24)  # y axis up
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(px, py))
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>'
        )
        parts.append(
            f'<text x="{48 + 90 * i}" y="{h - 6}" font-family="sans-serif" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts))


def _write_path_svg(path: Path, series: dict, label: str, w=480, h=480) -> None:
    tx, ty = series["truth_x"], series["truth_y"]
    ex, ey = series["est_x"], series["est_y"]
    lo_x, hi_x = min(min(tx), min(ex)), max(max(tx), max(ex))
    lo_y, hi_y = min(min(ty), min(ey)), max(max(ty), max(ey))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        '<text x="8" y="16" font-family="sans-serif" font-size="13">top-down path (east vs north)</text>',
    ]
    for (xs, ys), color, name in (((tx, ty), _SVG_COLORS[0], "truth"),
                                  ((ex, ey), _SVG_COLORS[1], label)):
        px = _svg_scale(xs, lo_x, hi_x, 30, w - 10)
        py = _svg_scale(ys, lo_y, hi_y, h - 30, 24)
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(px, py))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts))


def _write_matrix_csv(rows: list[dict], path: Path) -> None:
    """Sweep matrix: one row per (airspeed, roll_rate, altitude), one
    RMSE column pair per policy, failures as 'X', row minima flagged."""
    policy_names: list[str] = []
    for row in rows:
        for name in row["policies"]:
            if name not in policy_names:
                policy_names.append(name)
    header = ["airspeed_mps", "roll_rate_dps", "altitude_m"]
    for name in policy_names:
        header += [f"pos_rmse_{name}", f"rot_rmse_{name}"]
    header += ["min_pos", "min_rot"]
    lines = [",".join(header)]
    for row in rows:
        cells = [repr(row["airspeed"]), repr(row["roll_rate"]), repr(row["altitude"])]
        best_pos, best_rot = None, None
        for name in policy_names:
            rep = row["policies"].get(name)
            pos = rep.pos_rmse_m if rep and not rep.failed else None
            rot = rep.rot_rmse_deg if rep and not rep.failed else None
            cells += [_fmt(pos), _fmt(rot)]
            if pos is not None and (best_pos is None or pos < best_pos[1]):
                best_pos = (name, pos)
            if rot is not None and (best_rot is None or rot < best_rot[1]):
                best_rot = (name, rot)
        cells += [best_pos[0] if best_pos else "", best_rot[0] if best_rot else ""]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
