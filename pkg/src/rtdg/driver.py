"""Run orchestration: the solve/move alternation, persistence, and the
convergence harness.

A run alternates, per time step, between generating the next mesh from
the current solution (moving mode) and taking one implicit transport
step onto it.  Everything a run produces is written under one output
directory and inventoried, with content hashes, in a manifest; rerunning
the same configuration reproduces the hashes bit for bit.
"""

import configparser
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .dg import (DGField, SolverOptions, advance_step, build_step_system,
                 project_initial, refresh_step_system)
from .mesh import (MovingMesh, SimplicialMesh, build_uniform, validate,
                   write_unstructured_grid, write_vertex_csv)
from .metric import HessianRecovery, is_spd, metric_from_solution, det_sym
from .mmpde import move_mesh
from .norms import ErrorReport, convergence_order, spatial_norms
from .problems import ProblemSpec, catalog, custom_problem
from .quadrature import (AngularQuadrature, gauss_legendre_1d,
                         legendre_chebyshev_2d)

__all__ = ["RunConfig", "RunManifest", "load_config", "run", "converge",
           "cut", "meshdump", "load_checkpoint"]


@dataclass
class RunConfig:
    """Resolved run settings; defaults follow the reference setup
    (dt = 1e-3, T = 0.1, P8 / P8-T8 angular rules, SI tolerance 1e-12)."""

    problem: str = "ex1-1d"
    # settings for problem = "custom" (tabulated external data)
    custom_dim: int = 1
    custom_domain: str = "0 1"
    custom_c: float = 3.0e8
    custom_sigma_t: float = 1.0
    custom_sigma_s: float = 0.0
    custom_q: float = 0.0
    custom_smooth: bool = False
    custom_ic_csv: str = None
    custom_bc_csv: str = None
    custom_ic_value: float = 0.0
    custom_bc_value: float = 0.0
    degree: int = 1
    n: int = 20
    mesh_mode: str = "fixed"            # fixed | moving
    dt: float = 1e-3
    t_final: float = 0.1
    si_tol: float = 1e-12
    si_max_iters: int = 200
    sweep: str = "centroid"
    si_mode: str = "gauss_seidel"
    corrected_classification: bool = False
    si_predictor: bool = True
    order_1d: int = 8
    n_polar: int = 8
    n_azimuthal: int = 8
    tau: float = None                   # None -> 0.1 smooth, 0.01 otherwise
    smoothing_passes: int = 2
    init_adapt: int = 5
    substeps: int = 5
    max_substeps: int = 2000
    cap_total: float = 1.0e5
    cap_ratio: float = 1.0e4
    outdir: str = None
    checkpoint_every: int = 20
    dump_metric: bool = False
    trace_energy: bool = False
    seed: int = 0

    def resolved_tau(self, spec: ProblemSpec) -> float:
        if self.tau is not None:
            return self.tau
        return 0.1 if spec.smooth else 0.01

    def n_steps(self) -> int:
        n = int(round(self.t_final / self.dt))
        if abs(n * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ValueError("t_final must be a multiple of dt")
        return n

    def default_outdir(self) -> str:
        return os.path.join(
            "runs", f"{self.problem}_P{self.degree}_{self.mesh_mode}_n{self.n}")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(self.si_tol, self.si_max_iters, self.sweep,
                             self.si_mode, self.corrected_classification,
                             self.si_predictor)


_SECTION_KEYS = {
    "problem": {
        "name": ("problem", str), "dim": ("custom_dim", int),
        "domain": ("custom_domain", str), "c": ("custom_c", float),
        "sigma_t": ("custom_sigma_t", float),
        "sigma_s": ("custom_sigma_s", float), "q": ("custom_q", float),
        "smooth": ("custom_smooth", bool), "ic_csv": ("custom_ic_csv", str),
        "bc_csv": ("custom_bc_csv", str),
        "ic_value": ("custom_ic_value", float),
        "bc_value": ("custom_bc_value", float),
    },
    "discretization": {
        "degree": ("degree", int), "dt": ("dt", float),
        "t_final": ("t_final", float), "si_tol": ("si_tol", float),
        "si_max_iters": ("si_max_iters", int), "sweep": ("sweep", str),
        "si_mode": ("si_mode", str),
        "corrected_classification": ("corrected_classification", bool),
        "si_predictor": ("si_predictor", bool),
    },
    "angular": {
        "order_1d": ("order_1d", int), "n_polar": ("n_polar", int),
        "n_azimuthal": ("n_azimuthal", int),
    },
    "mesh": {"n": ("n", int), "mode": ("mesh_mode", str)},
    "mmpde": {
        "tau": ("tau", float), "smoothing_passes": ("smoothing_passes", int),
        "init_adapt": ("init_adapt", int), "substeps": ("substeps", int),
        "max_substeps": ("max_substeps", int),
        "cap_total": ("cap_total", float),
        "cap_ratio": ("cap_ratio", float),
    },
    "output": {
        "directory": ("outdir", str),
        "checkpoint_every": ("checkpoint_every", int),
        "dump_metric": ("dump_metric", bool),
        "trace_energy": ("trace_energy", bool), "seed": ("seed", int),
    },
}


def _coerce(value: str, typ):
    if typ is bool:
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return typ(value)


def load_config(path: str = None, overrides=()) -> RunConfig:
    """Read a sectioned key-value config file plus ``section.key=value``
    command-line overrides."""
    cfg = RunConfig()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        with open(path) as f:
            parser.read_file(f)
        for section in parser.sections():
            if section not in _SECTION_KEYS:
                raise ValueError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if key not in _SECTION_KEYS[section]:
                    raise ValueError(f"unknown config key {section}.{key}")
                attr, typ = _SECTION_KEYS[section][key]
                setattr(cfg, attr, _coerce(value, typ))
    for ov in overrides:
        if "=" not in ov:
            raise ValueError(f"override must look like section.key=value: {ov!r}")
        dotted, value = ov.split("=", 1)
        if "." not in dotted:
            raise ValueError(f"override key needs a section: {ov!r}")
        section, key = dotted.split(".", 1)
        if section not in _SECTION_KEYS or key not in _SECTION_KEYS[section]:
            raise ValueError(f"unknown config key {dotted!r}")
        attr, typ = _SECTION_KEYS[section][key]
        setattr(cfg, attr, _coerce(value, typ))
    return cfg


def build_quadrature(spec: ProblemSpec, cfg: RunConfig) -> AngularQuadrature:
    if spec.fixed_directions is not None:
        n = spec.fixed_directions.shape[0]
        return AngularQuadrature(spec.dim, spec.fixed_directions,
                                 np.full(n, 1.0 / n))
    if spec.dim == 1:
        return gauss_legendre_1d(cfg.order_1d)
    return legendre_chebyshev_2d(cfg.n_polar, cfg.n_azimuthal)


@dataclass
class RunManifest:
    config: dict
    version: str
    mesh_meta: dict
    diagnostics: list
    global_norms: dict
    cpu_seconds: float
    files: dict

    def save(self, path):
        tmp = path + ".tmp"
        with open(tmp, "w") as f:
            json.dump(asdict(self), f, indent=1, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_checkpoint(outdir, step, field: DGField, quad, files):
    base = f"checkpoint_{step:06d}"
    npz = os.path.join(outdir, base + ".npz")
    mesh = field.mesh
    np.savez(npz, dim=mesh.dim, degree=field.degree, time=field.time,
             vertices=mesh.vertices, elements=mesh.elements,
             lo=mesh.lo, hi=mesh.hi, coeffs=field.coeffs,
             directions=quad.directions, weights=quad.weights)
    files.append(npz)

    means = field.cell_means()
    cell_data = {"intensity_mean": quad.weights @ means}
    show = range(quad.count) if quad.count <= 4 else (0, quad.count // 2,
                                                      quad.count - 1)
    for m in show:
        cell_data[f"intensity_dir{m}"] = means[m]
    vtk = os.path.join(outdir, base + ".vtk")
    write_unstructured_grid(vtk, mesh, cell_data,
                            title=f"solution at t={field.time:.6g}")
    files.append(vtk)


def _dump_metric(outdir, step, mesh, tensors, files):
    path = os.path.join(outdir, f"metric_{step:06d}.csv")
    with open(path, "w") as f:
        if tensors.shape[-1] == 1:
            f.write("element_id,m11,det\n")
            for k in range(tensors.shape[0]):
                f.write(f"{k},{tensors[k,0,0]:.16g},{tensors[k,0,0]:.16g}\n")
        else:
            f.write("element_id,m11,m12,m22,det\n")
            d = det_sym(tensors)
            for k in range(tensors.shape[0]):
                f.write(f"{k},{tensors[k,0,0]:.16g},{tensors[k,0,1]:.16g},"
                        f"{tensors[k,1,1]:.16g},{d[k]:.16g}\n")
    files.append(path)


def _resolve_problem(cfg: RunConfig) -> ProblemSpec:
    if cfg.problem == "custom":
        domain = [float(v) for v in cfg.custom_domain.split()]
        return custom_problem(
            dim=cfg.custom_dim, domain=domain, c=cfg.custom_c,
            sigma_t=cfg.custom_sigma_t, sigma_s=cfg.custom_sigma_s,
            q=cfg.custom_q, smooth=cfg.custom_smooth,
            ic_csv=cfg.custom_ic_csv, bc_csv=cfg.custom_bc_csv,
            ic_value=cfg.custom_ic_value, bc_value=cfg.custom_bc_value)
    return catalog(cfg.problem)


def run(cfg: RunConfig, spec: ProblemSpec = None) -> RunManifest:
    """Execute one configured run and write its outputs + manifest."""
    spec = spec or _resolve_problem(cfg)
    quad = build_quadrature(spec, cfg)
    outdir = cfg.outdir or cfg.default_outdir()
    os.makedirs(outdir, exist_ok=True)
    opts = cfg.solver_options()
    tau = cfg.resolved_tau(spec)
    moving = cfg.mesh_mode == "moving"
    if cfg.mesh_mode not in ("fixed", "moving"):
        raise ValueError(f"unknown mesh mode {cfg.mesh_mode!r}")

    t_start = time.perf_counter()
    mesh = build_uniform(spec.domain, cfg.n)
    rep = validate(mesh)
    if not rep.ok:
        raise RuntimeError(str(rep))
    field = project_initial(spec, quad, mesh, cfg.degree)
    ref_vertices = mesh.vertices.copy()   # the fixed reference computational mesh
    recovery = HessianRecovery(mesh, cfg.degree) if moving else None

    diagnostics = []
    energy_rows = []
    trajectory = [(0.0, mesh.vertices[:, 0].copy())] if mesh.dim == 1 else None

    # adapt the mesh to the initial data before stepping
    if moving:
        for it in range(cfg.init_adapt):
            mf = metric_from_solution(field, recovery, cfg.smoothing_passes,
                                      cfg.cap_total, cfg.cap_ratio)
            if not np.all(is_spd(mf.tensors)):
                raise RuntimeError("initial metric not positive definite")
            mesh, mdiag = move_mesh(mesh, mf.tensors, tau, cfg.dt,
                                    cfg.substeps, cfg.max_substeps,
                                    ref_xi=ref_vertices)
            field = project_initial(spec, quad, mesh, cfg.degree)
            if cfg.trace_energy:
                energy_rows += [(-cfg.init_adapt + it, s, e)
                                for s, e in enumerate(mdiag.energies)]

    report = ErrorReport(mesh.n_elements, cfg.degree, cfg.mesh_mode)
    error_rows = []
    dir_rows = []
    files = []
    n_steps = cfg.n_steps()
    system = None
    field_prev = None

    for step in range(n_steps):
        t_new = (step + 1) * cfg.dt
        step_diag = {"step": step + 1, "t": t_new}
        if moving:
            mf = metric_from_solution(field, recovery, cfg.smoothing_passes,
                                      cfg.cap_total, cfg.cap_ratio)
            if not np.all(is_spd(mf.tensors)):
                raise RuntimeError(f"metric lost positive definiteness at "
                                   f"step {step + 1}")
            mesh_new, mdiag = move_mesh(mesh, mf.tensors, tau, cfg.dt,
                                        cfg.substeps, cfg.max_substeps,
                                        ref_xi=ref_vertices)
            step_diag["mmpde_substeps"] = mdiag.substeps
            step_diag["mmpde_rejected"] = mdiag.rejected
            step_diag["energy_drop"] = float(mdiag.energies[0]
                                             - mdiag.energies[-1])
            if cfg.trace_energy:
                energy_rows += [(step + 1, s, e)
                                for s, e in enumerate(mdiag.energies)]
            if cfg.dump_metric:
                _dump_metric(outdir, step + 1, mesh, mf.tensors, files)
        else:
            mesh_new = mesh
        mm = MovingMesh(mesh, mesh_new, cfg.dt)
        step_diag["min_measure"] = float(mesh_new.areas().min())

        if moving or system is None:
            system = build_step_system(mm, spec, quad, field, cfg.dt, t_new,
                                       opts)
        else:
            refresh_step_system(system, spec, field, t_new)
        field_new, sdiag = advance_step(field, mm, spec, quad, cfg.dt, t_new,
                                        opts, system=system,
                                        field_prev=field_prev)
        field_prev = field
        field = field_new
        mesh = mesh_new
        step_diag["si_iters"] = sdiag.n_iters
        step_diag["si_final_delta"] = float(sdiag.deltas[-1])
        diagnostics.append(step_diag)

        if trajectory is not None:
            trajectory.append((t_new, mesh.vertices[:, 0].copy()))
        if spec.exact is not None:
            sn = spatial_norms(field, spec, quad, t_new)
            report.append(sn)
            error_rows.append((step + 1, t_new, sn.l1, sn.l2, sn.linf))
            for m in range(quad.count):
                dir_rows.append((step + 1, t_new, m, *sn.per_direction[m]))
        if cfg.checkpoint_every and ((step + 1) % cfg.checkpoint_every == 0
                                     or step + 1 == n_steps):
            _write_checkpoint(outdir, step + 1, field, quad, files)

    cpu = time.perf_counter() - t_start
    report.cpu_seconds = cpu

    if error_rows:
        path = os.path.join(outdir, "errors.csv")
        with open(path, "w") as f:
            f.write("step,t,L1,L2,Linf\n")
            for row in error_rows:
                f.write(",".join(f"{v:.16g}" for v in row) + "\n")
        files.append(path)
        path = os.path.join(outdir, "errors_by_direction.csv")
        with open(path, "w") as f:
            f.write("step,t,direction,L1,L2,Linf\n")
            for row in dir_rows:
                f.write(",".join(f"{v:.16g}" for v in row) + "\n")
        files.append(path)
    if trajectory is not None:
        path = os.path.join(outdir, "mesh_trajectory.csv")
        with open(path, "w") as f:
            nv = trajectory[0][1].size
            f.write("t," + ",".join(f"x_{j+1}" for j in range(nv)) + "\n")
            for t, xs in trajectory:
                f.write(f"{t:.16g}," + ",".join(f"{x:.16g}" for x in xs) + "\n")
        files.append(path)
    if energy_rows:
        path = os.path.join(outdir, "energy_trace.csv")
        with open(path, "w") as f:
            f.write("step,substep,energy\n")
            for row in energy_rows:
                f.write(f"{row[0]},{row[1]},{row[2]:.16g}\n")
        files.append(path)

    gl = {}
    if spec.exact is not None:
        l1, l2, linf = report.global_norms(cfg.dt)
        gl = {"L1": l1, "L2": l2, "Linf": linf}

    manifest = RunManifest(
        config=asdict(cfg), version=__version__,
        mesh_meta={"dim": mesh.dim, "n": cfg.n,
                   "n_elements": mesh.n_elements,
                   "n_vertices": mesh.n_vertices,
                   "uniform_diagonal": "bl-tr"},
        diagnostics=diagnostics, global_norms=gl, cpu_seconds=cpu,
        files={os.path.basename(p): _sha256(p) for p in sorted(files)})
    manifest.save(os.path.join(outdir, "manifest.json"))
    return manifest


def converge(base: RunConfig, degrees, ns, modes, csv_path=None):
    """Run the (degree x N x mode) ladder and fit convergence slopes.

    Returns (rows, slopes): rows carry the CSV columns
    problem,degree,mesh_mode,N,L1,L2,Linf,order_L1,order_L2,cpu_seconds
    (pairwise orders between consecutive rungs); slopes are the
    least-squares fits per (degree, mode) group, keyed for each norm.
    """
    spec = _resolve_problem(base)
    rows = []
    failures = []
    for mode in modes:
        for degree in degrees:
            prev = None
            for n in ns:
                cfg = replace(base, degree=degree, n=n, mesh_mode=mode)
                if base.outdir:
                    cfg = replace(cfg, outdir=os.path.join(
                        base.outdir, f"{base.problem}_P{degree}_{mode}_n{n}"))
                try:
                    manifest = run(cfg, spec)
                except Exception as exc:  # keep the ladder going
                    failures.append((mode, degree, n, repr(exc)))
                    prev = None
                    continue
                gl = manifest.global_norms
                N = manifest.mesh_meta["n_elements"]
                o1 = o2 = float("nan")
                if prev is not None:
                    ratio = np.log(N / prev["N"]) / spec.dim
                    o1 = float(np.log(prev["L1"] / gl["L1"]) / ratio)
                    o2 = float(np.log(prev["L2"] / gl["L2"]) / ratio)
                rows.append({
                    "problem": base.problem, "degree": degree,
                    "mesh_mode": mode, "N": N, "L1": gl["L1"], "L2": gl["L2"],
                    "Linf": gl["Linf"], "order_L1": o1, "order_L2": o2,
                    "cpu_seconds": manifest.cpu_seconds})
                prev = {"N": N, **gl}
    slopes = {}
    for mode in modes:
        for degree in degrees:
            sel = [r for r in rows
                   if r["degree"] == degree and r["mesh_mode"] == mode]
            if len(sel) >= 2:
                Ns = [r["N"] for r in sel]
                for norm in ("L1", "L2", "Linf"):
                    slopes[(degree, mode, norm)] = convergence_order(
                        Ns, [r[norm] for r in sel], spec.dim)
    if csv_path:
        with open(csv_path, "w") as f:
            f.write("problem,degree,mesh_mode,N,L1,L2,Linf,"
                    "order_L1,order_L2,cpu_seconds\n")
            for r in rows:
                f.write(f"{r['problem']},{r['degree']},{r['mesh_mode']},"
                        f"{r['N']},{r['L1']:.16g},{r['L2']:.16g},"
                        f"{r['Linf']:.16g},{r['order_L1']:.6g},"
                        f"{r['order_L2']:.6g},{r['cpu_seconds']:.3f}\n")
    return rows, slopes, failures


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------

def load_checkpoint(run_dir: str, step="last"):
    """Rebuild (field, quadrature) from a run checkpoint."""
    names = sorted(n for n in os.listdir(run_dir)
                   if n.startswith("checkpoint_") and n.endswith(".npz"))
    if not names:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    if step == "last":
        name = names[-1]
    else:
        name = f"checkpoint_{int(step):06d}.npz"
        if name not in names:
            raise FileNotFoundError(f"{name} not found; have {names}")
    data = np.load(os.path.join(run_dir, name))
    dim = int(data["dim"])
    mesh = SimplicialMesh(dim, data["vertices"], data["elements"],
                          data["lo"], data["hi"])
    field = DGField(int(data["degree"]), mesh, data["coeffs"],
                    float(data["time"]))
    quad = AngularQuadrature(dim, data["directions"], data["weights"])
    return field, quad


def _line_points(mesh, axis, value, slope, intercept, npoints):
    lo, hi = mesh.lo, mesh.hi
    eps = 1e-9
    if mesh.dim == 1:
        x = np.linspace(lo[0] + eps, hi[0] - eps, npoints)
        return x[:, None], x
    if axis == "y":   # horizontal cut y = value
        if not (lo[1] <= value <= hi[1]):
            raise ValueError(f"cut line y={value} outside the domain")
        x = np.linspace(lo[0] + eps, hi[0] - eps, npoints)
        return np.column_stack([x, np.full(npoints, value)]), x
    if axis == "x":
        if not (lo[0] <= value <= hi[0]):
            raise ValueError(f"cut line x={value} outside the domain")
        y = np.linspace(lo[1] + eps, hi[1] - eps, npoints)
        return np.column_stack([np.full(npoints, value), y]), y
    if axis == "slope":  # y = slope x + intercept, clipped to the box
        x = np.linspace(lo[0] + eps, hi[0] - eps, 8 * npoints)
        y = slope * x + intercept
        keep = (y >= lo[1] + eps) & (y <= hi[1] - eps)
        if not np.any(keep):
            raise ValueError("cut line misses the domain")
        x = np.linspace(x[keep].min(), x[keep].max(), npoints)
        y = slope * x + intercept
        return np.column_stack([x, y]), x
    raise ValueError(f"unknown cut axis {axis!r}")


def _field_at_points(field: DGField, pts):
    """Sample every direction of a DG field at arbitrary domain points."""
    mesh = field.mesh
    ref = field.ref
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        order = np.argsort(x, kind="stable")
        # elements are (j, j+1) on the sorted axis for builder meshes
        cell_of = np.full(mesh.n_vertices, -1, dtype=np.int64)
        left = mesh.elements[:, 0]
        cell_of[left] = np.arange(mesh.n_elements)
        idx = np.clip(np.searchsorted(x[order], pts[:, 0], side="right") - 1,
                      0, mesh.n_vertices - 2)
        elems = cell_of[order[idx]]
        xl = x[mesh.elements[elems, 0]]
        xr = x[mesh.elements[elems, 1]]
        s = ((pts[:, 0] - xl) / (xr - xl))[:, None]
        phi = ref.basis_at(s)
    else:
        from . import _kernels
        from .dg import _element_frames
        from .mmpde import _locate_bins
        x0, E, einv, _ = _element_frames(mesh)
        ptr, elems_b, nbins, inv_h = _locate_bins(mesh.vertices, mesh.elements,
                                                  mesh.lo, mesh.hi)
        elems, bary, worst = _kernels.locate_points(
            np.ascontiguousarray(pts), np.ascontiguousarray(x0),
            np.ascontiguousarray(einv), ptr, elems_b, nbins, nbins,
            mesh.lo[0], mesh.lo[1], inv_h[0], inv_h[1], 1e-12)
        phi = ref.basis_at(bary[:, 1:])
    vals = np.einsum("mpl,pl->mp", field.coeffs[:, elems, :], phi)
    return vals


def cut(run_dir: str, axis: str = "y", value: float = 0.0, direction: int = 0,
        step="last", npoints: int = 1000, slope: float = None,
        intercept: float = 0.0, out_path: str = None):
    """Sample a checkpointed solution along a line; CSV columns are the
    line parameter, the chosen direction's intensity, the angular mean,
    and the exact solution when available."""
    field, quad = load_checkpoint(run_dir, step)
    cfg_path = os.path.join(run_dir, "manifest.json")
    spec = None
    if os.path.exists(cfg_path):
        with open(cfg_path) as f:
            name = json.load(f)["config"]["problem"]
        spec = catalog(name)
    if slope is not None:
        axis = "slope"
    pts, param = _line_points(field.mesh, axis, value, slope, intercept,
                              npoints)
    vals = _field_at_points(field, pts)
    mean = quad.weights @ vals
    out_path = out_path or os.path.join(
        run_dir, f"cut_{axis}_{(value if slope is None else slope):g}_"
                 f"dir{direction}.csv")
    have_exact = spec is not None and spec.exact is not None
    with open(out_path, "w") as f:
        cols = "s,intensity,mean" + (",exact" if have_exact else "")
        f.write(cols + "\n")
        if have_exact:
            ex = spec.eval_exact(pts, quad.directions[direction], field.time)
        for i in range(pts.shape[0]):
            row = f"{param[i]:.16g},{vals[direction, i]:.16g},{mean[i]:.16g}"
            if have_exact:
                row += f",{ex[i]:.16g}"
            f.write(row + "\n")
    return out_path


def meshdump(run_dir: str, step="last", out_path: str = None):
    """Re-export the mesh of a checkpoint as a grid snapshot + CSV."""
    field, _ = load_checkpoint(run_dir, step)
    tag = "last" if step == "last" else f"{int(step):06d}"
    base = out_path or os.path.join(run_dir, f"meshdump_{tag}")
    write_unstructured_grid(base + ".vtk", field.mesh,
                            {"measure": field.mesh.areas()})
    write_vertex_csv(base + ".csv", field.mesh,
                     0 if step == "last" else int(step))
    return base + ".vtk"
