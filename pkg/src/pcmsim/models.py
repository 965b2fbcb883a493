"""Built-in test systems.

* a four-exponential analytic benchmark with time constants spanning
  10 s to 0.01 s,
* scalar linear systems x' = lambda*x for stability scans,
* a desk-scale multi-machine swing DAE (classical machine model: constant
  EMF behind transient reactance, constant-admittance loads) with
  three-phase fault events, built from plain-text fixture files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import newton
from .core import DaeState, DaeSystem, Event
from .newton import NewtonSettings

__all__ = [
    "AnalyticSystem",
    "analytic_system",
    "linear_system",
    "FaultSpec",
    "SwingFixture",
    "load_fixture",
    "SwingSystem",
    "swing_system",
    "EquilibriumNotFound",
]


# --- analytic benchmark ----------------------------------------------------


@dataclass
class AnalyticSystem(DaeSystem):
    """Four decoupled decays x_i' = -x_i / tau_i, x_i(0) = 1.

    The reported output is the sum of the components.
    """

    taus: tuple[float, ...] = (10.0, 1.0, 0.1, 0.01)

    def exact_solution(self, t: float) -> np.ndarray:
        return np.exp(-t / np.asarray(self.taus))

    def exact_sum(self, t: float) -> float:
        return float(np.sum(self.exact_solution(t)))


def analytic_system() -> AnalyticSystem:
    taus = np.array([10.0, 1.0, 0.1, 0.01])

    def f(x, y, t):
        return -x / taus

    def g(x, y, t):
        return np.empty(0)

    return AnalyticSystem(
        n_diff=4,
        n_alg=0,
        f=f,
        g=g,
        initial=DaeState(0.0, np.ones(4), np.empty(0)),
        name="analytic",
        x_labels=("tau10", "tau1", "tau0.1", "tau0.01"),
        taus=(10.0, 1.0, 0.1, 0.01),
    )


def linear_system(lam: float) -> DaeSystem:
    """Scalar x' = lambda*x with x(0) = 1, lambda real."""
    lam = float(lam)

    def f(x, y, t):
        return lam * x

    def g(x, y, t):
        return np.empty(0)

    return DaeSystem(
        n_diff=1,
        n_alg=0,
        f=f,
        g=g,
        initial=DaeState(0.0, np.ones(1), np.empty(0)),
        name=f"linear:{lam}",
        x_labels=("x",),
    )


# --- multi-machine swing DAE -----------------------------------------------


class EquilibriumNotFound(RuntimeError):
    """The pre-fault steady-state solve did not converge."""


@dataclass(frozen=True)
class FaultSpec:
    bus: int  # 1-based bus id, as in the fixture file
    start: float
    duration: float


@dataclass
class SwingFixture:
    """Parsed plain-text network description, all values p.u. on 100 MVA."""

    name: str
    omega_base: float
    # (id, kind in {slack, pv, pq}, vset or nan)
    buses: list[tuple[int, str, float]]
    # (from, to, r, x, b_total)
    lines: list[tuple[int, int, float, float, float]]
    # (bus, M, D, xdp, pgen)
    machines: list[tuple[int, float, float, float, float]]
    # (bus, p, q)
    loads: list[tuple[int, float, float]]


def _builtin_fixture_path(name: str):
    return resources.files("pcmsim").joinpath("fixtures", f"{name.replace('-', '_')}.txt")


def load_fixture(name: str) -> SwingFixture:
    """Load a bundled fixture by name, or any fixture file by path."""
    path = _builtin_fixture_path(name)
    if not path.is_file():
        import os

        if os.path.exists(name):
            path = name
        else:
            raise FileNotFoundError(f"no such fixture: {name!r}")
    omega_base = 2 * math.pi * 60.0
    buses, lines, machines, loads = [], [], [], []
    section = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                continue
            if "=" in line and section is None:
                key, value = (s.strip() for s in line.split("=", 1))
                if key == "omega_base":
                    omega_base = float(value)
                    continue
                raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
            tok = line.split()
            try:
                if section == "buses":
                    v = math.nan if tok[2] == "-" else float(tok[2])
                    buses.append((int(tok[0]), tok[1].lower(), v))
                elif section == "lines":
                    lines.append(
                        (int(tok[0]), int(tok[1]), float(tok[2]), float(tok[3]), float(tok[4]))
                    )
                elif section == "machines":
                    machines.append(
                        (int(tok[0]), float(tok[1]), float(tok[2]), float(tok[3]), float(tok[4]))
                    )
                elif section == "loads":
                    loads.append((int(tok[0]), float(tok[1]), float(tok[2])))
                else:
                    raise ValueError(f"data outside a known section: {section!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record {line!r}: {exc}") from exc
    if not buses or not machines:
        raise ValueError(f"{path}: fixture needs [buses] and [machines] sections")
    return SwingFixture(str(name), omega_base, buses, lines, machines, loads)


def _network_ybus(fix: SwingFixture, index: dict[int, int]) -> np.ndarray:
    n = len(fix.buses)
    ybus = np.zeros((n, n), dtype=complex)
    for i, j, r, x, b in fix.lines:
        a, c = index[i], index[j]
        y = 1.0 / complex(r, x)
        ybus[a, a] += y + 0.5j * b
        ybus[c, c] += y + 0.5j * b
        ybus[a, c] -= y
        ybus[c, a] -= y
    return ybus


def _solve_power_flow(fix: SwingFixture, ybus: np.ndarray, index: dict[int, int]):
    """AC power flow with loads as PQ injections; returns complex bus voltages."""
    n = len(fix.buses)
    kinds = [kind for _, kind, _ in fix.buses]
    vset = np.array([v for _, _, v in fix.buses])
    slack = [i for i, k in enumerate(kinds) if k == "slack"]
    if len(slack) != 1:
        raise ValueError("fixture must declare exactly one slack bus")
    pv = [i for i, k in enumerate(kinds) if k == "pv"]
    pq = [i for i, k in enumerate(kinds) if k == "pq"]
    ang_idx = pv + pq  # theta unknowns
    mag_idx = pq  # V unknowns

    p_sched = np.zeros(n)
    q_sched = np.zeros(n)
    for bus, _, _, _, pgen in fix.machines:
        if kinds[index[bus]] != "slack":
            p_sched[index[bus]] += pgen
    for bus, p, q in fix.loads:
        p_sched[index[bus]] -= p
        q_sched[index[bus]] -= q

    v0 = np.where(np.isnan(vset), 1.0, vset)

    def residual(u):
        theta = np.zeros(n)
        vmag = v0.copy()
        theta[ang_idx] = u[: len(ang_idx)]
        vmag[mag_idx] = u[len(ang_idx):]
        vc = vmag * np.exp(1j * theta)
        s = vc * np.conj(ybus @ vc)
        return np.concatenate(
            [s.real[ang_idx] - p_sched[ang_idx], s.imag[mag_idx] - q_sched[mag_idx]]
        )

    guess = np.concatenate([np.zeros(len(ang_idx)), np.ones(len(mag_idx))])
    try:
        result = newton.solve(
            residual, guess, NewtonSettings(tolerance=1e-11, max_iterations=40)
        )
    except (newton.NonConvergence, newton.SingularJacobian) as exc:
        raise EquilibriumNotFound(f"power flow failed: {exc}") from exc
    theta = np.zeros(n)
    vmag = v0.copy()
    theta[ang_idx] = result.solution[: len(ang_idx)]
    vmag[mag_idx] = result.solution[len(ang_idx):]
    return vmag * np.exp(1j * theta)


@dataclass
class SwingSystem(DaeSystem):
    """Classical-model multi-machine system.

    Differential states per machine i: rotor angle delta_i (rad) and speed
    omega_i (p.u.); algebraic variables per bus k: voltage magnitude V_k
    (p.u.) and angle theta_k (rad).  ``ybus`` includes loads as constant
    admittances and is mutated in place by fault events.
    """

    omega_base: float = 2 * math.pi * 60.0
    gen_bus: np.ndarray = None  # 0-based bus indices of the machines
    m_const: np.ndarray = None  # mechanical starting times (s)
    damping: np.ndarray = None
    xdp: np.ndarray = None  # transient reactances
    emf: np.ndarray = None  # constant internal EMF magnitudes
    pm: np.ndarray = None  # mechanical powers
    ybus: np.ndarray = None
    fault: Optional[FaultSpec] = None

    @property
    def n_gen(self) -> int:
        return len(self.gen_bus)

    @property
    def n_bus(self) -> int:
        return self.ybus.shape[0]

    def machine_currents(self, delta: np.ndarray, vc: np.ndarray) -> np.ndarray:
        e = self.emf * np.exp(1j * delta)
        return (e - vc[self.gen_bus]) / (1j * self.xdp)

    def electrical_power(self, delta: np.ndarray, vc: np.ndarray) -> np.ndarray:
        e = self.emf * np.exp(1j * delta)
        return np.real(e * np.conj(self.machine_currents(delta, vc)))


def swing_system(
    fixture: str | SwingFixture = "wscc9",
    fault: Optional[FaultSpec | Sequence] = None,
    fault_admittance: float = 1e4,
) -> SwingSystem:
    """Build a swing DAE from a fixture, with optional fault events.

    The initial state is the solved pre-fault equilibrium.  The fault is
    modelled as a large shunt admittance added at the faulted bus for the
    fault duration; applying and clearing it restores the admittance
    matrix bit-exactly.
    """
    fix = fixture if isinstance(fixture, SwingFixture) else load_fixture(fixture)
    if fault is not None and not isinstance(fault, FaultSpec):
        bus, start, duration = fault
        fault = FaultSpec(int(bus), float(start), float(duration))

    index = {bus_id: i for i, (bus_id, _, _) in enumerate(fix.buses)}
    ybus_net = _network_ybus(fix, index)
    vc = _solve_power_flow(fix, ybus_net, index)

    gen_bus = np.array([index[m[0]] for m in fix.machines])
    m_const = np.array([m[1] for m in fix.machines])
    damping = np.array([m[2] for m in fix.machines])
    xdp = np.array([m[3] for m in fix.machines])

    # machine initialization from the power-flow injections
    s_inj = vc * np.conj(ybus_net @ vc)
    s_load = np.zeros(len(fix.buses), dtype=complex)
    for bus, p, q in fix.loads:
        s_load[index[bus]] += complex(p, q)
    s_gen = s_inj[gen_bus] + s_load[gen_bus]
    i_gen = np.conj(s_gen / vc[gen_bus])
    e_c = vc[gen_bus] + 1j * xdp * i_gen
    emf = np.abs(e_c)
    delta0 = np.angle(e_c)
    pm = np.real(e_c * np.conj(i_gen))

    # dynamic admittance matrix: network plus constant-admittance loads
    ybus = ybus_net.copy()
    for bus, p, q in fix.loads:
        k = index[bus]
        ybus[k, k] += np.conj(complex(p, q)) / abs(vc[k]) ** 2

    n_gen, n_bus = len(gen_bus), len(fix.buses)
    x0 = np.concatenate([delta0, np.ones(n_gen)])
    y0 = np.concatenate([np.abs(vc), np.angle(vc)])

    sys = SwingSystem(
        n_diff=2 * n_gen,
        n_alg=2 * n_bus,
        f=None,
        g=None,
        initial=None,
        name=f"swing:{fix.name}",
        omega_base=fix.omega_base,
        gen_bus=gen_bus,
        m_const=m_const,
        damping=damping,
        xdp=xdp,
        emf=emf,
        pm=pm,
        ybus=ybus,
        fault=fault,
        x_labels=tuple(f"delta_{i+1}" for i in range(n_gen))
        + tuple(f"omega_{i+1}" for i in range(n_gen)),
        y_labels=tuple(f"V_{b}" for b, _, _ in fix.buses)
        + tuple(f"theta_{b}" for b, _, _ in fix.buses),
        var_classes={
            "delta": tuple(range(n_gen)),
            "omega": tuple(range(n_gen, 2 * n_gen)),
            "V": tuple(range(2 * n_gen, 2 * n_gen + n_bus)),
            "theta": tuple(range(2 * n_gen + n_bus, 2 * n_gen + 2 * n_bus)),
        },
    )

    def f(x, y, t):
        delta, omega = x[:n_gen], x[n_gen:]
        vcplx = y[:n_bus] * np.exp(1j * y[n_bus:])
        pe = sys.electrical_power(delta, vcplx)
        slip = omega - 1.0
        return np.concatenate(
            [sys.omega_base * slip, (sys.pm - pe - sys.damping * slip) / sys.m_const]
        )

    def g(x, y, t):
        delta = x[:n_gen]
        vcplx = y[:n_bus] * np.exp(1j * y[n_bus:])
        i_inj = np.zeros(n_bus, dtype=complex)
        np.add.at(i_inj, sys.gen_bus, sys.machine_currents(delta, vcplx))
        mismatch = sys.ybus @ vcplx - i_inj
        return np.concatenate([mismatch.real, mismatch.imag])

    sys.f = f
    sys.g = g
    sys.initial = DaeState(0.0, x0, y0)

    residual = np.max(np.abs(g(x0, y0, 0.0)))
    if residual > 1e-8:
        raise EquilibriumNotFound(
            f"initial algebraic residual {residual:.3e} exceeds 1e-8"
        )

    if fault is not None and fault.duration > 0:
        k = index[fault.bus]
        saved: list[complex] = []

        def apply_fault():
            saved.append(ybus[k, k])
            ybus[k, k] = ybus[k, k] + fault_admittance

        def clear_fault():
            ybus[k, k] = saved.pop()

        sys.events = [
            Event(fault.start, apply_fault, f"fault-on:bus{fault.bus}"),
            Event(fault.start + fault.duration, clear_fault, f"fault-off:bus{fault.bus}"),
        ]
    return sys
