"""Registry of shipped models and their hand-written native kernels."""
from dataclasses import dataclass
from importlib import resources

from ..errors import DslError
from .model import parse_model

ASSETS = {
    "ReducedWongWang": "reduced_wong_wang.xml",
    "Kuramoto": "kuramoto.xml",
    "Epileptor": "epileptor.xml",
}

# native kernel ids understood by both kernel backends
NATIVE_RWW, NATIVE_KURAMOTO, NATIVE_EPILEPTOR = 1, 2, 3

# parameter order the native kernels index by position
_NATIVE_LAYOUT = {
    "ReducedWongWang": (NATIVE_RWW, ("a", "b", "d", "gamma", "tau_s", "J", "w", "I_o", "rate_unit")),
    "Kuramoto": (NATIVE_KURAMOTO, ("omega",)),
    "Epileptor": (NATIVE_EPILEPTOR, ("a", "b", "c", "d", "r", "s", "x0", "Iext", "slope",
                                     "Iext2", "tau", "aa", "bb", "Kvf", "Ks", "tt")),
}


@dataclass(frozen=True)
class NativeKernel:
    """Hand-written derivative function for a shipped model."""

    name: str
    kind: int
    param_names: tuple


def asset_path(name):
    return resources.files("neuroloom.assets.models").joinpath(ASSETS[name])


def asset_text(name):
    return asset_path(name).read_text(encoding="utf-8")


def available_models():
    return sorted(ASSETS)


def get_builtin(name):
    """Return ``(ModelSpec, NativeKernel)`` for a shipped model."""
    if name not in ASSETS:
        raise DslError(f"unknown model {name!r}; available models: {', '.join(available_models())}")
    spec = parse_model(asset_text(name))
    kind, layout = _NATIVE_LAYOUT[name]
    if tuple(spec.param_names) != layout:
        raise DslError(f"asset for {name} does not match the native parameter layout")
    return spec, NativeKernel(name, kind, layout)
