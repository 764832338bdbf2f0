"""Selection between the compiled marching kernel and the numpy fallback."""

from __future__ import annotations

import numpy as np

from . import _march_py

try:
    from . import _march as _compiled
except ImportError:  # extension not built
    _compiled = None

_IMPLS = {"python": _march_py.march_linear}
if _compiled is not None:
    _IMPLS["compiled"] = _compiled.march_linear

_active = "compiled" if _compiled is not None else "python"


def available() -> tuple[str, ...]:
    return tuple(_IMPLS)


def active() -> str:
    return _active


def use(name: str) -> None:
    """Switch the marching backend ("compiled" or "python")."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"backend {name!r} unavailable; have {available()}")
    _active = name


def march_linear(vn, en, p1, q1, p2, q2, F, G, X0, Y0, jstop, X, Y, backend: str | None = None) -> int:
    impl = _IMPLS[backend or _active]
    c = np.ascontiguousarray
    return impl(c(vn, dtype=float), c(en, dtype=float), p1, q1, p2, q2, F, G,
                c(X0, dtype=float), c(Y0, dtype=float), c(jstop, dtype=np.int64), X, Y)
