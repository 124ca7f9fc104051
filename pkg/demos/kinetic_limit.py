"""Particles relaxing onto the two-phase fluid as the relaxation time shrinks.

A particle cloud with local alignment and noise of strength 1/eps is coupled
by drag to a Navier-Stokes fluid.  As eps -> 0 the particle moments should
follow the isothermal Euler phase of the coupled fluid system.  The sweep
prints, for each eps, the low-pass L2 errors of density and velocity against
that fluid solution, and the velocity variance of a uniform cloud against its
equilibrium value 1 / (1 + eps).

Run:  python demos/kinetic_limit.py      (about half a minute)
"""
from twophase.kinetic import SweepConfig, run_limit_sweep

cfg = SweepConfig(epsilons=(1.0, 0.3, 0.1), particles=40_000, t_end=0.5, samples=10,
                  uniform_t_end=1.5, uniform_average_from=0.75)
report = run_limit_sweep(cfg)
print(report.table())
