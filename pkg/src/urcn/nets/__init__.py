"""Builders for the unrolled PDHG, ADMM and ISTA networks."""
from .admm import ADMMNet, freeze_fidelity_to_exact_solve
from .base import Stage, UnrolledNetwork
from .ista import ISTANet, freeze_fidelity_to_residual, set_scaling_pair
from .pdhg import PDHGNet, freeze_dual_to_analytic, matched_primal_widths

FAMILIES = {"pdhg": PDHGNet, "admm": ADMMNet, "ista": ISTANet}


def build_pdhg_net(state="I", n_stages=10, channels=2, seed=0):
    return PDHGNet(state, n_stages, channels, seed)


def build_admm_net(state="I", n_stages=15, L=1, channels=2, seed=0):
    return ADMMNet(state, n_stages, channels, seed, L=L)


def build_ista_net(state="I", n_stages=10, channels=2, seed=0):
    return ISTANet(state, n_stages, channels, seed)


def build_network(family, state="I", n_stages=None, channels=2, seed=0, **options):
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None
    return cls(state, n_stages, channels, seed, **options)


def network_from_manifest(manifest):
    """Rebuild the network skeleton a checkpoint manifest describes."""
    return build_network(manifest["family"], manifest["state"], manifest["n_stages"],
                         manifest["channels"], manifest.get("seed", 0), **manifest.get("options", {}))


__all__ = [
    "ADMMNet", "ISTANet", "PDHGNet", "Stage", "UnrolledNetwork", "FAMILIES",
    "build_admm_net", "build_ista_net", "build_network", "build_pdhg_net",
    "freeze_dual_to_analytic", "freeze_fidelity_to_exact_solve", "freeze_fidelity_to_residual",
    "matched_primal_widths", "network_from_manifest", "set_scaling_pair",
]
