"""Unrolled primal-dual (Chambolle-Pock) networks."""
from __future__ import annotations

import itertools

import numpy as np

from .. import autodiff as ad
from ..nn import conv_parameter_count
from .base import UnrolledNetwork

HIDDEN = 32


def matched_primal_widths(c, target, max_width=64, max_extra=3):
    """Channel list ``[c, 32, 32, *extra, c]`` with exactly ``target`` parameters.

    Extra hidden layers are added one at a time; among exact solutions the
    one closest to uniform width 32 wins (ties broken lexicographically).
    """
    for n_extra in range(1, max_extra + 1):
        best = None
        for widths in itertools.product(range(1, max_width + 1), repeat=n_extra):
            ch = [c, HIDDEN, HIDDEN, *widths, c]
            if conv_parameter_count(ch) != target:
                continue
            key = (sum(abs(w - HIDDEN) for w in widths), widths)
            if best is None or key < best[0]:
                best = (key, ch)
        if best is not None:
            return best[1]
    raise ValueError(f"no primal block of up to {max_extra} extra layers has {target} parameters")


class PDHGNet(UnrolledNetwork):
    """PDHG-net states I, II, III and the parameter-matched control I*.

    I:   d = (d + sigma (A m_bar - f)) / (1 + sigma); m = Lambda(m - tau A^T d);
         m_bar = m + theta (m - m_old)
    II:  the dual update becomes Gamma(d + sigma A m_bar, f)
    III: d = Gamma(d, A m, f); m = Lambda(m, A^T d)
    I*:  state I with a deeper Lambda holding as many parameters as state II
    """

    family = "pdhg"
    default_stages = 10
    valid_states = ("I", "II", "III", "I_star")

    def _build_stage(self, stage, rng):
        c, h = self.channels, HIDDEN
        if self.state in ("I", "II", "I_star"):
            for name in ("sigma", "tau", "theta_pdhg"):
                self._add_scalar(stage, name)
        if self.state == "I":
            self._add_block(stage, "Lambda", [c, h, h, c], True, rng)
        elif self.state == "II":
            self._add_block(stage, "Gamma", [2 * c, h, h, c], True, rng)
            self._add_block(stage, "Lambda", [c, h, h, c], True, rng)
        elif self.state == "III":
            self._add_block(stage, "Gamma", [3 * c, h, h, c], True, rng)
            self._add_block(stage, "Lambda", [2 * c, h, h, c], True, rng)
        else:
            target = conv_parameter_count([2 * c, h, h, c]) + conv_parameter_count([c, h, h, c])
            self._add_block(stage, "Lambda", matched_primal_widths(c, target), True, rng)

    def _run(self, A, f, m0, iterates):
        m = m0
        m_bar = m0
        d = ad.Tensor(np.zeros(f.shape))
        for st in self.stages:
            lam = st.modules["Lambda"]
            if self.state == "III":
                d = st.modules["Gamma"](ad.concat_channels([d, self._A(A, m), f]))
                m = lam(ad.concat_channels([m, self._At(A, d)]))
                iterates.append(m)
                continue
            sigma, tau, theta = st.scalar("sigma"), st.scalar("tau"), st.scalar("theta_pdhg")
            if self.state == "II":
                d = st.modules["Gamma"](ad.concat_channels([d + sigma * self._A(A, m_bar), f]))
            else:
                d = (d + sigma * (self._A(A, m_bar) - f)) / (sigma + 1.0)
            m_new = lam(m - tau * self._At(A, d))
            m_bar = m_new + theta * (m_new - m)
            m = m_new
            iterates.append(m)
        return m


def freeze_dual_to_analytic(net):
    """Set every state-II ``Gamma`` to the closed-form dual update of state I.

    With input ``[x, f]``, ``x = d + sigma A m_bar``, the block then returns
    ``(x - sigma f) / (1 + sigma)`` using each stage's current ``sigma``.
    """
    if net.family != "pdhg" or net.state != "II":
        raise ValueError("freeze_dual_to_analytic needs a state-II PDHG-net")
    c = net.channels
    for k, st in enumerate(net.stages):
        sigma = net.get_scalar(k, "sigma")
        mat = np.vstack([(1.0 / (1.0 + sigma) - 1.0) * np.eye(c), -sigma / (1.0 + sigma) * np.eye(c)])
        st.modules["Gamma"].set_linear(mat)
