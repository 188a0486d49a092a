"""Unrolled ISTA networks."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from .base import UnrolledNetwork

FILTERS = 32


class ISTANet(UnrolledNetwork):
    """ISTA-net states I, II, III.

    I:   r = m - rho A^T (A m - f)
    II:  r = m - rho A^T Gamma(A m, f)
    III: r = Lambda(m, A^T Gamma(A m, f))
    then m = G_tilde(soft(G(r), theta)) in every state. ``G`` and
    ``G_tilde`` are residual two-convolution blocks, so both start near the
    identity and the symmetry penalty asks ``G_tilde(G(x)) ~ x``.
    """

    family = "ista"
    default_stages = 10

    def _build_stage(self, stage, rng):
        c = self.channels
        if self.state in ("I", "II"):
            self._add_scalar(stage, "rho_step")
        self._add_scalar(stage, "theta_shrink")
        if self.state in ("II", "III"):
            self._add_block(stage, "Gamma", [2 * c, FILTERS, c], False, rng)
        if self.state == "III":
            self._add_block(stage, "Lambda", [2 * c, FILTERS, FILTERS, c], True, rng)
        self._add_block(stage, "G", [c, FILTERS, c], True, rng)
        self._add_block(stage, "G_tilde", [c, FILTERS, c], True, rng)

    def _run(self, A, f, m0, iterates):
        m = m0
        for st in self.stages:
            if self.state == "I":
                r = m - st.scalar("rho_step") * self._At(A, self._A(A, m) - f)
            else:
                d = st.modules["Gamma"](ad.concat_channels([self._A(A, m), f]))
                if self.state == "II":
                    r = m - st.scalar("rho_step") * self._At(A, d)
                else:
                    r = st.modules["Lambda"](ad.concat_channels([m, self._At(A, d)]))
            g = st.modules["G"](r)
            m = st.modules["G_tilde"](ad.soft_threshold(g, st.scalar("theta_shrink")))
            iterates.append(m)
        return m

    def symmetry_residuals(self, m_hat, n_p=None):
        """``G_tilde_k(G_k(m_hat)) - m_hat`` for the first ``n_p`` stages."""
        m_hat = ad.as_tensor(m_hat)
        stages = self.stages if n_p is None else self.stages[:n_p]
        return [st.modules["G_tilde"](st.modules["G"](m_hat)) - m_hat for st in stages]


def freeze_fidelity_to_residual(net):
    """Set every ``Gamma`` to the analytic data residual ``A m - f``."""
    if net.family != "ista" or net.state != "II":
        raise ValueError("freeze_fidelity_to_residual needs a state-II ISTA-net")
    c = net.channels
    for st in net.stages:
        st.modules["Gamma"].set_linear(np.vstack([np.eye(c), -np.eye(c)]))


def set_scaling_pair(net, scale):
    """Make ``G(x) = scale * x`` and ``G_tilde(x) = x / scale`` exactly.

    Each body routes ``x`` through a positive/negative ReLU split, so the
    maps are linear and mutually inverse for any ``scale > 0``.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    c = net.channels
    for st in net.stages:
        st.modules["G"].set_linear((scale - 1.0) * np.eye(c))
        st.modules["G_tilde"].set_linear((1.0 / scale - 1.0) * np.eye(c))
