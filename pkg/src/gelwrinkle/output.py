"""
Writers for field snapshots (legacy ASCII VTK), time series and sweep tables
(CSV) and the stability report (versioned YAML text).
"""

import csv
import io
import math
from pathlib import Path

import numpy as np
import yaml

from . import __version__

REPORT_VERSION = 1

# pinned CSV schemas; bump the version when a column changes
TIMESERIES_VERSION = 1
TIMESERIES_COLUMNS = ("step", "t", "tau", "g_um", "fluid_volume", "residual_norm",
                      "newton_iterations", "n_negative", "lambda_min", "balance_error")
SWEEP_VERSION = 1
SWEEP_COLUMNS = ("parameter", "value", "g_c", "N_c", "t_c", "bracket_width", "status")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(path, columns, rows, version):
    """Write rows with a ``# schema vN`` comment line followed by a header."""
    buf = io.StringIO()
    buf.write(f"# schema v{version}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) if isinstance(row, dict) else _fmt(getattr(row, c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
    return Path(path)


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns (version, list of dict rows)."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        version = int(first.split("v")[-1])
        rows = list(csv.DictReader(fh))
    return version, rows


def timeseries_rows(records):
    for r in records:
        yield {
            "step": r.step, "t": r.t, "tau": r.tau, "g_um": r.g, "fluid_volume": r.fluid_volume,
            "residual_norm": r.residual, "newton_iterations": r.iterations,
            "n_negative": r.n_negative, "lambda_min": r.lambda_min,
            "balance_error": r.balance_error,
        }


def write_timeseries(path, records):
    return write_csv(path, TIMESERIES_COLUMNS, timeseries_rows(records), TIMESERIES_VERSION)


def write_sweep_table(path, rows):
    return write_csv(path, SWEEP_COLUMNS, rows, SWEEP_VERSION)


# -- nodal projection ----------------------------------------------------------


def project_to_nodes(qp_field, mesh, weights):
    """Lumped L2 projection of a quadrature-point scalar to the nodes.

    ``qp_field`` and ``weights`` have shape (n_el, 4) with the quadrature
    points ordered like the element's local nodes; each quadrature value is
    distributed to the nodes with weight ``N_a(xi_q) * dV_q``.  The result is
    for visualisation only and is never fed back into the solver.
    """
    from .elements import gauss_rule, q1_shape

    xi, _ = gauss_rule(2)
    N, _ = q1_shape(xi)  # (nq, 4)
    f = np.asarray(qp_field, dtype=float)
    w = np.asarray(weights, dtype=float)
    num = np.einsum("qa,eq->ea", N, f * w)
    den = np.einsum("qa,eq->ea", N, w)
    el = mesh.elements.ravel()
    top = np.bincount(el, weights=num.ravel(), minlength=mesh.n_nodes)
    bot = np.bincount(el, weights=den.ravel(), minlength=mesh.n_nodes)
    return top / bot


# -- VTK -----------------------------------------------------------------------


def write_vtk(path, mesh, point_scalars=None, point_vectors=None, cell_scalars=None,
              cell_vectors=None, title="gelwrinkle snapshot"):
    """Legacy ASCII VTK unstructured grid of QUAD cells (type 9)."""
    n, ne = mesh.n_nodes, mesh.n_elements
    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\n")
    out.write(title.replace("\n", " ")[:255] + "\n")
    out.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {n} double\n")
    for x, y in mesh.nodes:
        out.write(f"{x:.12g} {y:.12g} 0\n")
    out.write(f"CELLS {ne} {5 * ne}\n")
    for e in mesh.elements:
        out.write("4 {} {} {} {}\n".format(*e))
    out.write(f"CELL_TYPES {ne}\n")
    out.write("9\n" * ne)

    def block(kind, count, scalars, vectors):
        if not scalars and not vectors:
            return
        out.write(f"{kind} {count}\n")
        for name, vals in (scalars or {}).items():
            vals = np.asarray(vals, dtype=float).reshape(count)
            out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            out.write("\n".join(f"{v:.12g}" for v in vals) + "\n")
        for name, vals in (vectors or {}).items():
            vals = np.asarray(vals, dtype=float).reshape(count, 2)
            out.write(f"VECTORS {name} double\n")
            out.write("\n".join(f"{a:.12g} {b:.12g} 0" for a, b in vals) + "\n")

    block("POINT_DATA", n, point_scalars, point_vectors)
    cell_scalars = dict(cell_scalars or {})
    cell_scalars.setdefault("region", mesh.regions)
    block("CELL_DATA", ne, cell_scalars, cell_vectors)
    Path(path).write_text(out.getvalue(), encoding="utf-8")
    return Path(path)


def read_vtk_points(path):
    """Minimal reader used in tests: returns (points (n,2), cells (ne,4))."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("POINTS"))
    n = int(lines[i].split()[1])
    pts = np.array([list(map(float, l.split()[:2])) for l in lines[i + 1:i + 1 + n]])
    j = next(k for k, l in enumerate(lines) if l.startswith("CELLS"))
    ne = int(lines[j].split()[1])
    cells = np.array([list(map(int, l.split()[1:])) for l in lines[j + 1:j + 1 + ne]])
    return pts, cells


def displacement_field(d, mesh):
    return d[: 2 * mesh.n_nodes].reshape(mesh.n_nodes, 2)


def write_state_vtk(path, model, d, history, tau, title="state"):
    """Snapshot of displacement, s, projected mu (nodal) and element-mean H (cell)."""
    mesh = model.mesh
    f = model.qp_fields(d, history, tau)
    w = model.dV
    s_nodal = project_to_nodes(f["s"], mesh, w)
    mu_nodal = project_to_nodes(f["mu"], mesh, w)
    H_cell = np.einsum("eqi,eq->ei", f["H"], w) / w.sum(axis=1)[:, None]
    s_cell = np.sum(f["s"] * w, axis=1) / w.sum(axis=1)
    return write_vtk(
        path, mesh,
        point_scalars={"s": s_nodal, "mu_projected": mu_nodal},
        point_vectors={"displacement": displacement_field(d, mesh)},
        cell_scalars={"s_cell": s_cell},
        cell_vectors={"H": H_cell},
        title=title,
    )


def write_mode_vtk(path, mesh, mode, title="critical mode"):
    """The critical eigenvector: displacement part as point vectors, flux dofs as edge-sum cell data."""
    u = displacement_field(mode, mesh)
    h = mode[2 * mesh.n_nodes:]
    et = mesh.edges
    cell_flux = np.sum(h[et.elem_edges] * et.elem_signs, axis=1)
    return write_vtk(path, mesh, point_vectors={"mode_displacement": u},
                     cell_scalars={"mode_net_outflux": cell_flux}, title=title)


# -- report --------------------------------------------------------------------


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else v
    return v


def write_report(path, report, extra=None):
    """Versioned YAML summary of a :class:`StabilityReport`."""
    body = {"report_version": REPORT_VERSION, "code_version": __version__}
    body.update(extra or {})
    body["stability"] = _plain(report.summary())
    text = yaml.safe_dump(_plain(body), sort_keys=False, default_flow_style=False)
    Path(path).write_text(text, encoding="utf-8")
    return Path(path)


def read_report(path):
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if data.get("report_version") != REPORT_VERSION:
        raise ValueError(f"unsupported report version {data.get('report_version')!r}")
    return data


def write_resolved_config(path, cfg):
    body = {"code_version": __version__, **_plain(cfg.resolved())}
    Path(path).write_text(yaml.safe_dump(body, sort_keys=False), encoding="utf-8")
    return Path(path)
