"""Named collection of parameter tensors — the single source of truth for a
model's weights. Iteration order is deterministic (lexicographic)."""

import numpy as np

from .autodiff import Tensor
from .errors import ContractError


class ParamStore:
    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(array, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ContractError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def subset(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.items() if n.startswith(prefix)]

    def set_data(self, name: str, array: np.ndarray) -> None:
        """Replace a parameter's values in place (shape must match)."""
        t = self[name]
        if t.data.shape != array.shape:
            raise ContractError(
                f"shape mismatch for {name!r}: have {t.data.shape}, got {array.shape}")
        t.data = np.ascontiguousarray(array, dtype=t.data.dtype)

    def count_params(self) -> int:
        """Exact count of all parameter elements."""
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self, prefix: str = "") -> None:
        for n, t in self._params.items():
            if n.startswith(prefix):
                t.grad = None

    def set_requires_grad(self, flag: bool, prefix: str = "") -> None:
        for n, t in self._params.items():
            if n.startswith(prefix):
                t.requires_grad = flag

    def freeze(self) -> "ParamStore":
        self.set_requires_grad(False)
        return self

    def detached_view(self) -> "DetachedView":
        """Read-only view whose tensors are detached from the autodiff graph;
        forwards through it never reach these parameters' gradient slots."""
        return DetachedView(self)

    def merge(self, other: "ParamStore") -> "ParamStore":
        for name, t in other.items():
            if name in self._params:
                raise ContractError(f"merge would duplicate parameter {name!r}")
            self._params[name] = t
        return self

    def astype(self, dtype) -> "ParamStore":
        """New store with the same names, values cast to ``dtype``."""
        out = ParamStore()
        for name, t in self.items():
            out.create(name, t.data.astype(dtype))
        return out

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, t in self.items():
            out.create(name, t.data.copy())
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.items()}


class DetachedView:
    def __init__(self, store: ParamStore):
        self._store = store

    def __getitem__(self, name: str) -> Tensor:
        return self._store[name].detach()
