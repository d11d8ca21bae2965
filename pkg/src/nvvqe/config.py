"""JSON experiment configuration.

Layout (every section and key is optional except ``schema``)::

    {
      "schema": "nvvqe-config/1",
      "hamiltonian": [["XX", 1.0], ["ZI", 1.0], ["IZ", 1.0]],
      "ansatz": {"theta0": [...4 floats...], "layers": 1},
      "optimizer": {"alpha", "max_iters", "grad_tol", "backend", "trials",
                    "n_samples", "seed", "gradient_rule"},
      "hardware": {"hyperfine_A", "T2_star", "rabi_mw", "rabi_rf", "nuclear_T2_star"},
      "noise": {"p_init", "detuning_std_khz"},
      "readout": {"rates", "epsilon", "shot_noise", "normalization"}
    }

Frequencies are in MHz, times in microseconds. ``nuclear_T2_star`` may be
``null`` for no nuclear dephasing.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from . import readout as ro
from .ansatz import AnsatzParams
from .dynamics import HardwareParams, NoiseModel, default_noise
from .qcore import PauliSum, default_hamiltonian
from .vqe import DEFAULT_THETA0, Backend, OptimizerConfig

SCHEMA = "nvvqe-config/1"
SHIPPED_CONFIG = Path(__file__).parent / "configs" / "paper.json"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    hamiltonian: PauliSum = field(default_factory=default_hamiltonian)
    optimizer: OptimizerConfig = OptimizerConfig()
    hardware: HardwareParams = HardwareParams()
    p_init: float = 0.0
    detuning_std_khz: float = 0.0
    rates: ro.PLRates = ro.PLRates()
    epsilon: float = 0.0
    shot_noise: str = "poisson"
    normalization: str = "fixed"

    def backend(self, epsilon: float | None = None) -> Backend:
        noise: NoiseModel = default_noise(self.hardware, self.p_init, self.detuning_std_khz)
        return Backend(
            hamiltonian=self.hamiltonian,
            hw=self.hardware,
            noise=noise,
            rates=self.rates,
            error=ro.ReadoutErrorModel(self.epsilon if epsilon is None else epsilon),
            shot_noise=self.shot_noise,
            normalization=self.normalization,
        )

    def to_dict(self) -> dict:
        opt = self.optimizer
        hw = asdict(self.hardware)
        if math.isinf(hw["nuclear_T2_star"]):
            hw["nuclear_T2_star"] = None
        return {
            "schema": SCHEMA,
            "hamiltonian": self.hamiltonian.to_pairs(),
            "ansatz": {"theta0": list(opt.theta0.theta), "layers": opt.theta0.layers},
            "optimizer": {
                "alpha": opt.alpha,
                "max_iters": opt.max_iters,
                "grad_tol": opt.grad_tol,
                "backend": opt.backend,
                "trials": opt.trials,
                "n_samples": opt.n_samples,
                "seed": opt.seed,
                "gradient_rule": opt.gradient_rule,
            },
            "hardware": hw,
            "noise": {"p_init": self.p_init, "detuning_std_khz": self.detuning_std_khz},
            "readout": {
                "rates": list(self.rates.n),
                "epsilon": self.epsilon,
                "shot_noise": self.shot_noise,
                "normalization": self.normalization,
            },
        }


_SECTIONS = {
    "schema": None,
    "hamiltonian": None,
    "ansatz": {"theta0", "layers"},
    "optimizer": {"alpha", "max_iters", "grad_tol", "backend", "trials", "n_samples", "seed", "gradient_rule"},
    "hardware": {f.name for f in fields(HardwareParams)},
    "noise": {"p_init", "detuning_std_khz"},
    "readout": {"rates", "epsilon", "shot_noise", "normalization"},
}


def _check_keys(doc: dict) -> None:
    for key, value in doc.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown key {key!r}")
        allowed = _SECTIONS[key]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{key} must be an object")
        for sub in value:
            if sub not in allowed:
                raise ConfigError(f"unknown key {key}.{sub!r}")


def from_dict(doc: Any) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"schema must be {SCHEMA!r}, got {doc.get('schema')!r}")
    _check_keys(doc)
    try:
        pairs = doc.get("hamiltonian", default_hamiltonian().to_pairs())
        if not isinstance(pairs, list) or not pairs:
            raise ConfigError("hamiltonian: need at least one [label, coefficient] term")
        ham = PauliSum.from_pairs(pairs)

        ans = doc.get("ansatz", {})
        theta0 = AnsatzParams(tuple(ans.get("theta0", DEFAULT_THETA0)), ans.get("layers", 1))
        opt_doc = doc.get("optimizer", {})
        opt = OptimizerConfig(theta0=theta0, **opt_doc)
        if isinstance(opt.max_iters, bool) or not isinstance(opt.max_iters, int):
            raise ConfigError("optimizer.max_iters must be an integer")

        hw_doc = dict(doc.get("hardware", {}))
        if hw_doc.get("nuclear_T2_star", 0) is None:
            hw_doc["nuclear_T2_star"] = math.inf
        hw = HardwareParams(**hw_doc)

        noise = doc.get("noise", {})
        rd = doc.get("readout", {})
        cfg = ExperimentConfig(
            hamiltonian=ham,
            optimizer=opt,
            hardware=hw,
            p_init=float(noise.get("p_init", 0.0)),
            detuning_std_khz=float(noise.get("detuning_std_khz", 0.0)),
            rates=ro.PLRates(tuple(rd.get("rates", ro.DEFAULT_RATES))),
            epsilon=float(rd.get("epsilon", 0.0)),
            shot_noise=rd.get("shot_noise", "poisson"),
            normalization=rd.get("normalization", "fixed"),
        )
        # re-run the module invariants that live on other types
        NoiseModel((), cfg.p_init, cfg.detuning_std_khz)
        ro.ReadoutErrorModel(cfg.epsilon)
        ro.ReadoutSettings(shot_noise=cfg.shot_noise, normalization=cfg.normalization)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return from_dict(doc)


def dumps(cfg: ExperimentConfig) -> str:
    """Canonical JSON text of the resolved config."""
    return json.dumps(cfg.to_dict(), indent=2) + "\n"
