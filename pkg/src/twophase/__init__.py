"""Drag-coupled isothermal Euler / isentropic Navier-Stokes simulator on the torus."""
