"""Configuration-driven pipeline runner.

Subcommands cover the full experiment life cycle: ``plan`` (measurement
bases), ``optimize`` (trial amplitudes), ``run`` (noisy sampling into a
counts archive), ``analyze`` (mitigation, moments, energies, bootstrap),
``fci`` (exact reference), and ``pipeline`` (all of the above). Every
random choice derives from the config's master seed, so a repeated run is
bit-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .config import ConfigError, PipelineConfig, derive_seed, load_config
from .conventions import interleaved_spins, sz_of
from .fermion import FermionOperator
from .integrals import (
    freeze_orbitals, load_fcidump, spin_orbital_hamiltonian,
)
from .mitigation import (
    AssignmentCalibration, apply_qrem, assemble_rdm, check_representability,
    clip_to_physical, mixed_state_value, rescale_rdm, symmetry_postselect,
)
from .planner import build_measurement_circuit, build_plan, \
    enumerate_elements, MeasurementPlan
from .qcm import (
    CumulantSet, EnergyEstimate, bootstrap, cumulants, hamiltonian_powers,
    lanczos_energy, moments_from_rdm,
)
from .rdm import rdm_from_determinant
from .simulator import (
    CountsTable, NoiseSpec, Statevector, exact_diagonalize, run, sample,
)
from .trial import Ansatz, Excitation, build_uccd, exact_trial_state, \
    spsa_minimize


# ---------------------------------------------------------------------------
# shared system construction


def _load_system(cfg: PipelineConfig):
    """Integrals (frozen), Hamiltonian, ansatz, and spin labels."""
    ints = freeze_orbitals(load_fcidump(cfg.integrals),
                           cfg.frozen_occupied, cfg.frozen_virtual)
    h = spin_orbital_hamiltonian(ints)
    n = ints.n_spin_orbitals
    ne = ints.n_electrons
    spins = interleaved_spins(n)
    excitations = [Excitation(tuple(e["creations"]),
                              tuple(e["annihilations"]),
                              float(e.get("theta", 0.0)))
                   for e in cfg.excitations]
    ansatz = Ansatz(n, (1 << ne) - 1, excitations, spins=spins)
    return ints, h, ansatz


def _noise_spec(cfg: PipelineConfig, n_qubits: int) -> NoiseSpec:
    return NoiseSpec.uniform_readout(
        n_qubits, cfg.noise["p01"], cfg.noise["p10"],
        q=cfg.noise["global_q"], cnot_q=cfg.noise["cnot_q"])


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# plan


def _plan_for(cfg_or_args) -> tuple:
    """Build a MeasurementPlan plus its summary dict."""
    if isinstance(cfg_or_args, PipelineConfig):
        cfg = cfg_or_args
        ints, _, ansatz = _load_system(cfg)
        n, order = ints.n_spin_orbitals, cfg.order
        spins = interleaved_spins(n)
        layout = build_uccd(ansatz).layout
        max_depth = cfg.routing_max_depth
    else:
        n, order = cfg_or_args.modes, cfg_or_args.order
        pattern = cfg_or_args.spin_pattern
        if pattern == "interleaved":
            spins = interleaved_spins(n)
        else:
            if len(pattern) != n or set(pattern) - {"u", "d"}:
                raise ConfigError(
                    f"spin pattern must be 'interleaved' or a length-{n} "
                    "string over u/d")
            spins = tuple(pattern)
        layout = tuple(range(n))
        max_depth = cfg_or_args.ilp_max_depth
    elements = enumerate_elements(n, order, spins=spins)
    plan = build_plan(elements, spins, route=True, max_depth=max_depth,
                      layout=layout)
    max_sched = max((b.schedule.depth for b in plan.level1 if b.schedule),
                    default=0)
    summary = {
        "n_modes": n,
        "order": order,
        "elements": len(elements),
        "level1_bases": len(plan.level1),
        "concrete_bases": len(plan.bases),
        "max_schedule_depth": max_sched,
        "layout": list(layout),
    }
    return plan, summary


def cmd_plan(args) -> int:
    source = load_config(args.config) if args.config else args
    plan, summary = _plan_for(source)
    with open(args.output, "w") as fh:
        fh.write(plan.dumps())
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# optimize


def _dense_hamiltonian(h: FermionOperator) -> np.ndarray:
    from .simulator import operator_matrix_in_sector
    return operator_matrix_in_sector(h, list(range(1 << h.n_modes)))


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    _, h, ansatz = _load_system(cfg)
    if not ansatz.excitations:
        raise ConfigError("optimize requires at least one excitation")
    hmat = _dense_hamiltonian(h)

    def objective(thetas):
        state = exact_trial_state(ansatz.with_thetas(thetas))
        return float(np.real(np.vdot(state.amplitudes,
                                     hmat @ state.amplitudes)))

    theta0 = ansatz.thetas
    n_seeds = int(cfg.spsa["seeds"])
    iters = int(cfg.spsa["iterations"])
    if iters == 0:
        best, info = theta0, {"traces": [[objective(theta0)]] * n_seeds,
                              "best_value": objective(theta0)}
    else:
        seeds = [derive_seed(cfg.master_seed, "optimize", i)
                 for i in range(n_seeds)]
        best, info = spsa_minimize(objective, len(theta0), seeds,
                                   max_iter=iters, theta0=theta0)
    _write_json(args.output, {
        "thetas": [float(t) for t in best],
        "energy": float(objective(best)),
        "traces": [[float(v) for v in tr] for tr in info["traces"]],
    })
    print(f"optimized energy {objective(best):.10f}")
    return 0


# ---------------------------------------------------------------------------
# run


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    ints, _, ansatz = _load_system(cfg)
    n, ne = ints.n_spin_orbitals, ints.n_electrons
    with open(args.plan) as fh:
        plan = MeasurementPlan.loads(fh.read())
    if plan.n_modes != n:
        raise ConfigError(
            f"plan covers {plan.n_modes} modes but the ansatz uses {n}")
    with open(args.thetas) as fh:
        thetas = json.load(fh)["thetas"]
    built_trial = build_uccd(ansatz.with_thetas(thetas))
    built_ref = build_uccd(ansatz.with_thetas([0.0] * len(thetas)))
    noise = _noise_spec(cfg, n)

    os.makedirs(args.output_dir, exist_ok=True)
    files = {}
    zero = Statevector.basis_state(0, n)
    ones = Statevector.basis_state((1 << n) - 1, n)
    # calibration preparations are gate-free, so they see readout noise only
    cal_noise = NoiseSpec(readout_flip=noise.readout_flip)
    for name, state in (("calibration_zeros", zero),
                        ("calibration_ones", ones)):
        counts = sample(state, cfg.shots, cal_noise,
                        seed=derive_seed(cfg.master_seed, "calibration",
                                         0 if name.endswith("zeros") else 1))
        files[name] = f"{name}.json"
        _write_json(os.path.join(args.output_dir, files[name]),
                    counts.to_json())

    total = 2 * cfg.shots
    for which, built, tag in (("trial", built_trial, "sample-trial"),
                              ("reference", built_ref, "sample-reference")):
        for i, basis in enumerate(plan.bases):
            mc = build_measurement_circuit(basis, built.layout)
            circ = built.circuit.__class__(n)
            circ.extend(built.circuit).extend(mc.circuit)
            state = run(circ, Statevector.basis_state(0, n))
            counts = sample(state, cfg.shots, noise,
                            n_cnots=circ.cnot_count(),
                            seed=derive_seed(cfg.master_seed, tag, i))
            name = f"basis_{i:04d}_{which}.json"
            files[f"{which}_{i}"] = name
            _write_json(os.path.join(args.output_dir, name), counts.to_json())
            total += cfg.shots

    with open(os.path.join(args.output_dir, "plan.json"), "w") as fh:
        fh.write(plan.dumps())
    _write_json(os.path.join(args.output_dir, "manifest.json"), {
        "schema": 1,
        "n_qubits": n,
        "n_electrons": ne,
        "n_bases": len(plan.bases),
        "shots_per_basis": cfg.shots,
        "total_shots": total,
        "layout": list(built_trial.layout),
        "thetas": [float(t) for t in thetas],
        "noise": cfg.noise,
        "master_seed": cfg.master_seed,
        "files": files,
    })
    print(f"archived {total} shots over {2 * len(plan.bases) + 2} circuits "
          f"in {args.output_dir}")
    return 0


# ---------------------------------------------------------------------------
# analyze


def _calibration_from_counts(zeros: CountsTable, ones: CountsTable,
                             n_qubits: int) -> AssignmentCalibration:
    p01 = np.zeros(n_qubits)
    p10 = np.zeros(n_qubits)
    for table, rates, flipped in ((zeros, p01, "1"), (ones, p10, "0")):
        for bits, c in table.counts.items():
            for q in range(n_qubits):
                if bits[-1 - q] == flipped:
                    rates[q] += c
        rates /= table.shots
    return AssignmentCalibration.from_flip_rates(p01, p10)


def _position_spins(mc, spins, n_qubits):
    """Spin label of each measured bit position after routing."""
    pos_spins = [None] * n_qubits
    for mode, pos in mc.mode_positions.items():
        pos_spins[pos] = spins[mode]
    for lo, hi, mode_lo in mc.site_positions.values():
        pos_spins[lo] = pos_spins[hi] = spins[mode_lo]  # same-spin pairs
    return pos_spins


def _mitigated_table(table: CountsTable, mc, mit, cal, n_electrons, sz,
                     spins, n_qubits):
    """Counts -> (probability dict, acceptance rate) per the toggles."""
    if mit.get("qrem"):
        probs = apply_qrem(table, cal)
        if mit.get("clip"):
            probs = clip_to_physical(probs)
    else:
        probs = table.probabilities()
    rate = 1.0
    if mit.get("postselect"):
        probs, rate = symmetry_postselect(
            probs, n_electrons, sz, _position_spins(mc, spins, n_qubits))
    return probs, rate


def _fit_white_noise_rate(noisy_rdm, ideal_rdm, mixed_values):
    """Least-squares fit of noisy = (1-q) ideal + q mixed over all elements."""
    num = den = 0.0
    for (sub, sup), mixed in mixed_values.items():
        ideal = ideal_rdm.get(sub, sup).real
        noisy = noisy_rdm.get(sub, sup).real
        num += (noisy - ideal) * (mixed - ideal)
        den += (mixed - ideal) ** 2
    if den <= 1e-12:
        raise ValueError("reference elements equal the mixed-state values; "
                         "white-noise rate is unresolvable")
    q_hat = num / den
    if q_hat >= 1.0:
        raise ValueError(f"estimated white-noise rate {q_hat} >= 1")
    return max(q_hat, 0.0)


class _Analyzer:
    """Counts -> energies pipeline, reusable for bootstrap resamples.

    The expected table order is [calibration zeros, calibration ones,
    trial basis 0..B-1, reference basis 0..B-1].
    """

    def __init__(self, cfg: PipelineConfig, plan: MeasurementPlan,
                 circuits, n_electrons: int, h_powers):
        self.cfg = cfg
        self.plan = plan
        self.circuits = circuits
        self.n_electrons = n_electrons
        self.h_powers = h_powers
        self.n_qubits = plan.n_modes
        self.spins = plan.spins
        occ = tuple(range(n_electrons))
        self.sz = sz_of(occ, self.spins)
        order = next(iter(plan.coverage)).order
        self.ideal_ref = rdm_from_determinant(occ, self.n_qubits, order)
        self.mixed_values = None

    def _mixed_element_values(self):
        if self.mixed_values is not None:
            return self.mixed_values
        vals = {}
        for e in self.plan.coverage:
            sub, sup = e.creations, e.annihilations
            ops = [(s, True) for s in sub] + \
                [(t, False) for t in reversed(sup)]
            op = FermionOperator.from_ops(self.n_qubits, ops)
            vals[(sub, sup)] = mixed_state_value(
                op, self.n_electrons, sz=self.sz, spins=self.spins)
        self.mixed_values = vals
        return vals

    def analyze(self, tables, mitigation=None, diagnostics=False):
        mit = dict(self.cfg.mitigation if mitigation is None else mitigation)
        cal = None
        if mit.get("qrem"):
            cal = _calibration_from_counts(tables[0], tables[1],
                                           self.n_qubits)
        n_bases = len(self.plan.bases)
        rdms = {}
        rates = {}
        for which, offset in (("trial", 2), ("reference", 2 + n_bases)):
            prob_tables = []
            acc = []
            for i in range(n_bases):
                probs, rate = _mitigated_table(
                    tables[offset + i], self.circuits[i], mit, cal,
                    self.n_electrons, self.sz, self.spins, self.n_qubits)
                prob_tables.append(probs)
                acc.append(rate)
            rdm = assemble_rdm(self.plan, self.circuits, prob_tables,
                               self.n_electrons)
            if mit.get("rescale"):
                rdm = rescale_rdm(rdm)
            rdms[which] = rdm
            rates[which] = float(np.mean(acc))
        q_hat = 0.0
        rdm = rdms["trial"]
        if mit.get("calibrate"):
            mixed = self._mixed_element_values()
            q_hat = _fit_white_noise_rate(rdms["reference"], self.ideal_ref,
                                          mixed)
            if q_hat > 0.0:
                corrected = rdm.copy()
                for e in self.plan.coverage:
                    sub, sup = e.creations, e.annihilations
                    v = (rdm.get(sub, sup).real
                         - q_hat * mixed[(sub, sup)]) / (1.0 - q_hat)
                    corrected.set(sub, sup, v)
                rdm = corrected
                if mit.get("rescale"):
                    rdm = rescale_rdm(rdm)
        m = moments_from_rdm(self.h_powers, rdm, self.n_electrons)
        c = cumulants(m)
        # a slightly negative variance is consistent with shot noise around
        # an (almost) exact trial state; clamp it and report E_L = <H>,
        # which is the correct zero-variance limit
        noise_floor = 3.0 / np.sqrt(self.cfg.shots)
        if -noise_floor < c.c2 < 0.0:
            c = CumulantSet(c.c1, 0.0, c.c3, c.c4)
        e_l = lanczos_energy(c)
        result = {"h": m.m1, "e_l": e_l}
        if diagnostics:
            report = check_representability(rdm)
            result.update(q_hat=q_hat, acceptance=rates,
                          representability=report.to_json())
        return result


def _load_archive(archive_dir):
    with open(os.path.join(archive_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    with open(os.path.join(archive_dir, "plan.json")) as fh:
        plan = MeasurementPlan.loads(fh.read())

    def table(name):
        with open(os.path.join(archive_dir, name)) as fh:
            return CountsTable.from_json(json.load(fh))

    files = manifest["files"]
    n_bases = manifest["n_bases"]
    tables = [table(files["calibration_zeros"]),
              table(files["calibration_ones"])]
    tables += [table(files[f"trial_{i}"]) for i in range(n_bases)]
    tables += [table(files[f"reference_{i}"]) for i in range(n_bases)]
    return manifest, plan, tables


ABLATION_STACKS = [
    ("raw", {}),
    ("qrem", {"qrem": True, "clip": True}),
    ("postselect", {"qrem": True, "clip": True, "postselect": True}),
    ("rescale", {"qrem": True, "clip": True, "postselect": True,
                 "rescale": True}),
    ("calibrated", {"qrem": True, "clip": True, "postselect": True,
                    "rescale": True, "calibrate": True}),
]


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    ints, h, _ = _load_system(cfg)
    manifest, plan, tables = _load_archive(args.archive)
    if plan.n_modes != ints.n_spin_orbitals:
        raise ConfigError("archive and config disagree on the mode count")
    layout = tuple(manifest["layout"])
    circuits = [build_measurement_circuit(b, layout) for b in plan.bases]
    h_powers = hamiltonian_powers(h)
    analyzer = _Analyzer(cfg, plan, circuits, ints.n_electrons, h_powers)

    e_fci, _ = exact_diagonalize(h, ints.n_electrons, sz=analyzer.sz)
    main = analyzer.analyze(tables, diagnostics=True)

    ablation = []
    for name, stack in ABLATION_STACKS:
        try:
            res = analyzer.analyze(tables, mitigation=stack)
            ablation.append({
                "technique": name,
                "h": res["h"], "e_l": res["e_l"],
                "h_error": res["h"] - e_fci,
                "e_l_error": res["e_l"] - e_fci,
            })
        except (ValueError, ArithmeticError) as exc:
            ablation.append({"technique": name, "failed": str(exc)})

    std_h = std_el = 0.0
    boot = None
    if cfg.bootstrap["enabled"]:
        boot = bootstrap(
            tables, lambda t: analyzer.analyze(t),
            resamples=int(cfg.bootstrap["resamples"]),
            seed=derive_seed(cfg.master_seed, "bootstrap"))
        std_h, std_el = boot.stds["h"], boot.stds["e_l"]

    estimate = EnergyEstimate(
        h_expect=main["h"], e_l=main["e_l"], std_h=std_h, std_el=std_el,
        q_hat=main["q_hat"],
        metadata={
            "mitigation": sorted(k for k, v in cfg.mitigation.items() if v),
            "acceptance": main["acceptance"],
            "resamples": int(cfg.bootstrap["resamples"])
            if cfg.bootstrap["enabled"] else 0,
        })
    report = {
        "schema": 1,
        "estimate": estimate.to_json(),
        "fci": e_fci,
        "h_error": main["h"] - e_fci,
        "e_l_error": main["e_l"] - e_fci,
        "representability": main["representability"],
        "ablation": ablation,
        "bootstrap": boot.to_json() if boot else None,
        "config": cfg.to_json(),
    }
    _write_json(args.output, report)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["technique", "h", "e_l", "h_error",
                                "e_l_error", "failed"])
            writer.writeheader()
            for row in ablation:
                writer.writerow(row)
    print(f"<H> = {main['h']:.6f}  E_L = {main['e_l']:.6f}  "
          f"FCI = {e_fci:.6f}")
    return 0


# ---------------------------------------------------------------------------
# fci and the combined pipeline


def cmd_fci(args) -> int:
    cfg = load_config(args.config)
    ints, h, _ = _load_system(cfg)
    spins = interleaved_spins(ints.n_spin_orbitals)
    sz = sz_of(range(ints.n_electrons), spins)
    energy, _ = exact_diagonalize(h, ints.n_electrons, sz=sz)
    print(f"{energy:.12f}")
    if args.output:
        _write_json(args.output, {"fci": energy,
                                  "n_electrons": ints.n_electrons,
                                  "s_z": sz})
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    ns = argparse.Namespace
    cmd_plan(ns(config=args.config, output=os.path.join(out, "plan.json")))
    cmd_optimize(ns(config=args.config,
                    output=os.path.join(out, "thetas.json")))
    cmd_run(ns(config=args.config, plan=os.path.join(out, "plan.json"),
               thetas=os.path.join(out, "thetas.json"),
               output_dir=os.path.join(out, "counts")))
    cmd_analyze(ns(config=args.config, archive=os.path.join(out, "counts"),
                   output=os.path.join(out, "report.json"),
                   csv=os.path.join(out, "ablation.csv")))
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcmoments",
        description="moment-based ground-state energy pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="build and route measurement bases")
    p.add_argument("--config", default=None)
    p.add_argument("--modes", type=int, default=None)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--spin-pattern", default="interleaved")
    p.add_argument("--ilp-max-depth", type=int, default=8)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("optimize", help="optimize trial amplitudes")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="sample all bases into a counts archive")
    p.add_argument("--config", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--thetas", required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="mitigate, estimate energies")
    p.add_argument("--config", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fci", help="exact sector ground-state energy")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_fci)

    p = sub.add_parser("pipeline", help="plan, optimize, run, and analyze")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plan" and (args.config is None) == \
                (args.modes is None):
            raise ConfigError("plan needs exactly one of --config/--modes")
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
