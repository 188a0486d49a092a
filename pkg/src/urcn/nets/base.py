"""Shared machinery for unrolled networks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..errors import ShapeError
from ..nn import ConvBlock, ParameterStore

STATES = ("I", "II", "III")

# initial values of the learnable scalars
SCALAR_INIT = {
    "sigma": 0.5,
    "tau": 0.5,
    "theta_pdhg": 1.0,
    "rho": 1.0,
    "mu1": 0.0,
    "mu2": 1.0,
    "lambda_tilde": 0.01,
    "eta_tilde": 1.0,
    "gamma1": 0.0,
    "gamma2": 1.0,
    "rho_step": 1.0,
    "theta_shrink": 0.01,
}

# scalars stored through a softplus so the effective value stays >= 0
SOFTPLUS_SCALARS = ("theta_shrink",)


def softplus_inverse(value):
    value = float(value)
    if value < 0:
        raise ValueError("softplus-parameterized scalars must be >= 0")
    if value == 0.0:
        return -800.0  # exp(-800) underflows, so softplus gives exactly 0
    return float(value + np.log(-np.expm1(-value)))


@dataclass
class Stage:
    index: int
    scalars: dict = field(default_factory=dict)
    modules: dict = field(default_factory=dict)

    def scalar(self, name):
        """Effective scalar as a graph tensor."""
        if name in SOFTPLUS_SCALARS:
            return ad.softplus(self.scalars[name])
        return self.scalars[name]


class UnrolledNetwork:
    """A cascade of stages, each with its own parameters.

    Subclasses define ``family``, the per-stage layout in ``_build_stage`` and
    the recursion in ``_run``.
    """

    family = None
    default_stages = 10
    valid_states = STATES

    def __init__(self, state="I", n_stages=None, channels=2, seed=0, **options):
        if state not in self.valid_states:
            raise ValueError(f"unknown state {state!r} for {self.family}-net; choose from {self.valid_states}")
        self.state = state
        self.n_stages = self.default_stages if n_stages is None else int(n_stages)
        if self.n_stages < 0:
            raise ValueError("n_stages must be >= 0")
        if channels not in (1, 2):
            raise ValueError("channels must be 1 (CT) or 2 (MRI)")
        self.channels = channels
        self.seed = seed
        self.options = dict(options)
        self.params = ParameterStore()
        self.stages = []
        rng = np.random.default_rng(seed)
        for k in range(self.n_stages):
            stage = Stage(k)
            self._build_stage(stage, rng)
            self.stages.append(stage)

    # -- construction helpers -------------------------------------------------
    def _prefix(self, stage, name):
        return f"stage{stage.index:02d}.{name}"

    def _add_scalar(self, stage, name):
        value = SCALAR_INIT[name]
        if name in SOFTPLUS_SCALARS:
            value = softplus_inverse(value)
        stage.scalars[name] = self.params.add(self._prefix(stage, name), value)

    def _add_block(self, stage, name, channels, residual, rng):
        stage.modules[name] = ConvBlock(self.params, self._prefix(stage, name), channels, residual, rng)

    def _build_stage(self, stage, rng):
        raise NotImplementedError

    # -- scalar access ----------------------------------------------------------
    def get_scalar(self, k, name):
        t = self.stages[k].scalars[name]
        v = float(t.data)
        return float(np.logaddexp(0.0, v)) if name in SOFTPLUS_SCALARS else v

    def set_scalar(self, name, value, stages=None):
        """Set the effective value of a scalar in the given (default: all) stages."""
        for k in range(self.n_stages) if stages is None else stages:
            raw = softplus_inverse(value) if name in SOFTPLUS_SCALARS else float(value)
            self.stages[k].scalars[name].data = np.array(raw)

    # -- description -------------------------------------------------------------
    def parameter_count(self):
        return self.params.count()

    def stage_parameter_count(self, k=0, include_scalars=True):
        stage = self.stages[k]
        n = sum(b.parameter_count() for b in stage.modules.values())
        return n + (len(stage.scalars) if include_scalars else 0)

    def module_specs(self):
        if not self.stages:
            return {}
        return {name: {"channels": list(b.channels), "residual": b.residual}
                for name, b in self.stages[0].modules.items()}

    def scalar_names(self):
        return list(self.stages[0].scalars) if self.stages else []

    def manifest(self):
        return {
            "family": self.family,
            "state": self.state,
            "n_stages": self.n_stages,
            "channels": self.channels,
            "seed": self.seed,
            "options": self.options,
            "modules": self.module_specs(),
            "scalars": self.scalar_names(),
            "parameter_count": self.parameter_count(),
        }

    # -- execution ----------------------------------------------------------------
    def _check_inputs(self, A, f):
        if getattr(A, "channels", self.channels) != self.channels:
            raise ShapeError(
                f"{self.family}-net built for {self.channels} channel(s), operator has {A.channels}")
        if f.shape[-1] != self.channels:
            raise ShapeError(f"measurement has {f.shape[-1]} channels, network expects {self.channels}")

    def forward(self, A, f, m0=None, return_iterates=False):
        """Run all stages; returns the final image tensor.

        ``m0`` defaults to ``A^H f``. With ``return_iterates=True`` also
        returns the list of per-stage image iterates.
        """
        f = ad.as_tensor(f)
        self._check_inputs(A, f)
        if m0 is None:
            m0 = ad.Tensor(A.adjoint(f.data))
        m0 = ad.as_tensor(m0)
        iterates = []
        m = self._run(A, f, m0, iterates)
        return (m, iterates) if return_iterates else m

    __call__ = forward

    def _run(self, A, f, m0, iterates):
        raise NotImplementedError

    # helpers used by the recursions
    @staticmethod
    def _A(A, x):
        return ad.linear_op_apply(A, x)

    @staticmethod
    def _At(A, y):
        return ad.linear_op_adjoint(A, y)
