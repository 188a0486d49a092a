"""Unrolled ADMM networks."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from .base import UnrolledNetwork

TRANSFORM_FILTERS = 8
FIDELITY_FILTERS = 32
HIDDEN = 32


class ADMMNet(UnrolledNetwork):
    """ADMM-net states I, II, III with one inner step per stage.

    I:   m = (A^T A + rho I)^{-1} (A^T f + rho (z - beta))
         z = mu1 z + mu2 (m + beta) - sum_l lambda_l psi_T_l(relu(psi_l(z)))
         beta = beta + eta (m - z)
    II:  m = gamma1 m + gamma2 (z - beta) - A^T Gamma(A m, f)
    III: d = Gamma(A m, f); m = Pi(m, z - beta, A^T d); z = Lambda(m + beta);
         beta = beta + eta (m - z)
    """

    family = "admm"
    default_stages = 15

    def __init__(self, state="I", n_stages=None, channels=2, seed=0, L=1):
        if L < 1:
            raise ValueError("L must be >= 1")
        super().__init__(state, n_stages, channels, seed, L=int(L))

    @property
    def L(self):
        return self.options["L"]

    def _lambda_name(self, l):
        return "lambda_tilde" if self.L == 1 else f"lambda_tilde{l}"

    def _build_stage(self, stage, rng):
        c = self.channels
        if self.state in ("I", "II"):
            if self.state == "I":
                self._add_scalar(stage, "rho")
            else:
                self._add_scalar(stage, "gamma1")
                self._add_scalar(stage, "gamma2")
            self._add_scalar(stage, "mu1")
            self._add_scalar(stage, "mu2")
            for l in range(self.L):
                name = self._lambda_name(l)
                stage.scalars[name] = self.params.add(self._prefix(stage, name), 0.01)
                self._add_block(stage, f"psi{l}", [c, TRANSFORM_FILTERS], False, rng)
                self._add_block(stage, f"psi_T{l}", [TRANSFORM_FILTERS, c], False, rng)
            if self.state == "II":
                self._add_block(stage, "Gamma", [2 * c, FIDELITY_FILTERS, c], False, rng)
        else:
            self._add_block(stage, "Gamma", [2 * c, FIDELITY_FILTERS, c], False, rng)
            self._add_block(stage, "Pi", [3 * c, HIDDEN, HIDDEN, c], True, rng)
            self._add_block(stage, "Lambda", [c, HIDDEN, HIDDEN, c], True, rng)
        self._add_scalar(stage, "eta_tilde")

    def _z_update(self, st, z, m, beta):
        out = st.scalar("mu1") * z + st.scalar("mu2") * (m + beta)
        for l in range(self.L):
            reg = st.modules[f"psi_T{l}"](ad.relu(st.modules[f"psi{l}"](z)))
            out = out - st.scalars[self._lambda_name(l)] * reg
        return out

    def _run(self, A, f, m0, iterates):
        m = m0
        z = m0
        beta = ad.Tensor(np.zeros(m0.shape))
        atf = self._At(A, f)
        for st in self.stages:
            if self.state == "III":
                d = st.modules["Gamma"](ad.concat_channels([self._A(A, m), f]))
                m = st.modules["Pi"](ad.concat_channels([m, z - beta, self._At(A, d)]))
                z = st.modules["Lambda"](m + beta)
            else:
                if self.state == "I":
                    rho = st.scalar("rho")
                    m = ad.normal_solve(A, atf + rho * (z - beta), rho)
                else:
                    fid = st.modules["Gamma"](ad.concat_channels([self._A(A, m), f]))
                    m = st.scalar("gamma1") * m + st.scalar("gamma2") * (z - beta) - self._At(A, fid)
                z = self._z_update(st, z, m, beta)
            beta = beta + st.scalar("eta_tilde") * (m - z)
            iterates.append(m)
        return m


def freeze_fidelity_to_exact_solve(net):
    """Make state-II M-updates equal the exact state-I solve under full sampling.

    Sets ``Gamma(A m, f) = kappa (A m - f)``, ``gamma1 = kappa`` and
    ``gamma2 = rho kappa`` with ``kappa = 1 / (1 + rho)``, where ``rho`` is
    taken from the optional per-stage list ``net.frozen_rho`` (default 1).
    When ``A^T A = I`` this reproduces ``(A^T f + rho (z - beta)) / (1 + rho)``.
    """
    if net.family != "admm" or net.state != "II":
        raise ValueError("freeze_fidelity_to_exact_solve needs a state-II ADMM-net")
    c = net.channels
    rhos = getattr(net, "frozen_rho", [1.0] * net.n_stages)
    for k, st in enumerate(net.stages):
        kappa = 1.0 / (1.0 + rhos[k])
        st.modules["Gamma"].set_linear(np.vstack([kappa * np.eye(c), -kappa * np.eye(c)]))
        net.set_scalar("gamma1", kappa, [k])
        net.set_scalar("gamma2", rhos[k] * kappa, [k])
