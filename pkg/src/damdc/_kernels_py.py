"""Pure NumPy/SciPy network step kernels.

Reference backend for :mod:`damdc.kernels`; also the only backend that
handles complex data. The operation order mirrors ``_kernels.pyx`` so both
backends round identically wherever libm is not involved.
"""
import numpy as np

NAME = "python"

NO_ATTRACTOR, RZA, L0 = 0, 1, 2


def _gram(ops, v):
    return (ops.gram @ v.reshape(-1)).reshape(v.shape)


def damdc_step(ops, h, st, mu, eta, tau, literal, project, use_agg):
    W = st.aggregate if use_agg else st.omega
    gp = h - _gram(ops, st.omega * st.p_disc)
    base = st.p_disc if literal else st.p_cont
    if np.iscomplexobj(gp):
        grad = np.real(np.conj(W) * gp)
    else:
        grad = W * gp
    p_cont = base + (2.0 * eta) * grad
    p_disc = (p_cont >= tau).astype(float)
    if literal:
        p_cont = p_disc.copy()
    ge = h - _gram(ops, p_disc * st.omega)
    phi = st.omega + mu * p_disc * ge
    agg = ops.combine @ phi
    st.p_cont[...] = p_cont
    st.p_disc[...] = p_disc
    st.phi[...] = phi
    st.aggregate[...] = agg
    st.omega[...] = p_disc * agg if project else agg


def _sign(w):
    if np.iscomplexobj(w):
        mag = np.abs(w)
        return np.divide(w, mag, out=np.zeros_like(w), where=mag > 0)
    return np.sign(w)


def lms_step(ops, h, st, mask, mu, attractor, rho, shape):
    omega = st.omega
    ge = h - _gram(ops, omega * mask)
    phi = omega + mu * mask * ge
    if attractor == RZA:
        phi = phi - rho * _sign(omega) / (1.0 + shape * np.abs(omega))
    elif attractor == L0:
        phi = phi - rho * shape * _sign(omega) * np.exp(-shape * np.abs(omega))
    agg = ops.combine @ phi
    st.phi[...] = phi
    st.aggregate[...] = agg
    st.omega[...] = agg
