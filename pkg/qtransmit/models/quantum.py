"""Pydantic models for finite-dimensional quantum states and operators."""

from __future__ import annotations

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

NORM_TOL = 1e-12
PSD_TOL = 1e-10
UNITARY_TOL = 1e-10


def _as_complex(value: Any) -> np.ndarray:
    return np.array(value, dtype=np.complex128, copy=True)


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @classmethod
    def trusted(cls, **fields):
        """Build without validation; for hot paths whose output is valid by construction."""
        for value in fields.values():
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
        return cls.model_construct(**fields)


class PureState(_ArrayModel):
    """A normalized state vector of a single qudit."""
    dim: int = Field(ge=2)
    amps: np.ndarray

    @field_validator("amps", mode="before")
    @classmethod
    def _coerce(cls, v):
        return _as_complex(v)

    @model_validator(mode="after")
    def _check(self) -> "PureState":
        if self.amps.shape != (self.dim,):
            raise ValueError(f"amps must have shape ({self.dim},), got {self.amps.shape}")
        norm = float(np.vdot(self.amps, self.amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        self.amps.setflags(write=False)
        return self

    @classmethod
    def from_amps(cls, amps) -> "PureState":
        amps = _as_complex(amps)
        return cls(dim=amps.shape[0], amps=amps)

    @classmethod
    def basis(cls, dim: int, j: int) -> "PureState":
        amps = np.zeros(dim, dtype=np.complex128)
        amps[j] = 1.0
        return cls(dim=dim, amps=amps)

    def projector(self) -> "DensityMatrix":
        return DensityMatrix.trusted(dim=self.dim, mat=np.outer(self.amps, self.amps.conj()))


class DensityMatrix(_ArrayModel):
    """A trace-one positive semidefinite operator on a single qudit."""
    dim: int = Field(ge=2)
    mat: np.ndarray

    @field_validator("mat", mode="before")
    @classmethod
    def _coerce(cls, v):
        return _as_complex(v)

    @model_validator(mode="after")
    def _check(self) -> "DensityMatrix":
        if self.mat.shape != (self.dim, self.dim):
            raise ValueError(f"mat must be {self.dim}x{self.dim}, got {self.mat.shape}")
        if np.max(np.abs(self.mat - self.mat.conj().T)) > NORM_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(self.mat)
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(self.mat).min() < -PSD_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        self.mat.setflags(write=False)
        return self

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls.trusted(dim=dim, mat=np.eye(dim, dtype=np.complex128) / dim)


class WeylIndex(BaseModel):
    """Label (a, b) of the Weyl operator X^a Z^b; flat value a*d + b is the wire encoding."""
    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=2)
    a: int
    b: int

    @model_validator(mode="after")
    def _check(self) -> "WeylIndex":
        if not (0 <= self.a < self.dim and 0 <= self.b < self.dim):
            raise ValueError(f"Weyl index ({self.a}, {self.b}) out of range for d={self.dim}")
        return self

    @property
    def flat(self) -> int:
        return self.a * self.dim + self.b

    @classmethod
    def from_flat(cls, flat: int, dim: int) -> "WeylIndex":
        if not 0 <= flat < dim * dim:
            raise ValueError(f"flat Weyl index {flat} out of range for d={dim}")
        return cls(dim=dim, a=flat // dim, b=flat % dim)


class Unitary(_ArrayModel):
    dim: int = Field(ge=2)
    mat: np.ndarray

    @field_validator("mat", mode="before")
    @classmethod
    def _coerce(cls, v):
        return _as_complex(v)

    @model_validator(mode="after")
    def _check(self) -> "Unitary":
        if self.mat.shape != (self.dim, self.dim):
            raise ValueError(f"mat must be {self.dim}x{self.dim}, got {self.mat.shape}")
        gram = self.mat.conj().T @ self.mat
        if np.max(np.abs(gram - np.eye(self.dim))) > UNITARY_TOL:
            raise ValueError("matrix is not unitary")
        self.mat.setflags(write=False)
        return self

    @property
    def dagger(self) -> "Unitary":
        return Unitary.trusted(dim=self.dim, mat=self.mat.conj().T.copy())


class BipartiteState(_ArrayModel):
    """Pure state on A (x) B, amplitudes row-major over (a, b) basis pairs."""
    dim_a: int = Field(ge=1)
    dim_b: int = Field(ge=1)
    amps: np.ndarray

    @field_validator("amps", mode="before")
    @classmethod
    def _coerce(cls, v):
        return _as_complex(v).reshape(-1)

    @model_validator(mode="after")
    def _check(self) -> "BipartiteState":
        if self.amps.shape != (self.dim_a * self.dim_b,):
            raise ValueError(
                f"amps must have length {self.dim_a * self.dim_b}, got {self.amps.shape[0]}"
            )
        norm = float(np.vdot(self.amps, self.amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        self.amps.setflags(write=False)
        return self

    def as_matrix(self) -> np.ndarray:
        """Coefficient matrix C[a, b]."""
        return self.amps.reshape(self.dim_a, self.dim_b)
