"""System configuration: every scalar cell parameter plus algorithm knobs.

Values default to the standard small-cell evaluation setting (26 dBm BS
budget, 23 dBm UL budget, -75 dB residual SI, 5+5 BS antennas, two DL and
two UL users per zone, two dual-antenna eavesdroppers, 100 m cell with a
50 m inner zone).  Config files are YAML with exactly these field names.
"""

from __future__ import annotations

import dataclasses
import io
import math

import yaml


class ConfigError(ValueError):
    """Raised when a configuration violates its schema or invariants."""


MODES = ("EWCI", "SCSI", "WCS")
OBJECTIVES = ("MAXMIN_ALL", "MAXMIN_DL")
SCHEMES = ("PROPOSED_FD", "CONVENTIONAL_FD", "HD")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclasses.dataclass(frozen=True)
class SystemConfig:
    # cell population
    k: int = 2                      # DL users per zone
    l: int = 2                      # UL users per zone
    m: int = 2                      # eavesdropper count
    nt: int = 5                     # BS transmit antennas
    nr: int = 5                     # BS receive antennas
    ne: tuple[int, ...] = (2, 2)    # antennas per eavesdropper
    # power and noise
    pbs_max_dbm: float = 26.0
    pu_max_dbm: float = 23.0
    sigma_si_db: float = -75.0      # residual self-interference power ratio
    noise_psd_dbm_hz: float = -174.0
    bandwidth_hz: float = 1.0e7
    # service constraints
    rbar_ul_bps: float = 2.0        # UL secrecy-rate floor (bits/s/Hz), MAXMIN_DL only
    eps_outage: float = 0.99        # SCSI outage level for every Eve constraint
    # geometry
    cell_radius_m: float = 100.0
    inner_radius_m: float = 50.0
    min_bs_distance_m: float = 10.0
    rician_k_si_db: float = 5.0
    # algorithm
    mode: str = "EWCI"
    objective: str = "MAXMIN_ALL"
    scheme: str = "PROPOSED_FD"
    sca_tol: float = 1.0e-3         # objective-difference stopping rule, nats/s/Hz
    max_iters: int = 50
    eta_bar_min: float = 0.05       # initialization target, nats/s/Hz
    max_init_passes: int = 30
    init_an_fraction: float = 0.1   # power share seeded into artificial noise
    # solver acceptance tolerances; the backend always aims for 1e-8 or
    # better, but 60+ dB SINRs put machine-precision cancellation in the
    # rate rows, so physical runs accept verifier-checked 1e-6 feasibility.
    # Claimed objectives are always achieved primal values, so the gap
    # bound only limits per-step suboptimality, not soundness.
    feas_tol: float = 1.0e-5
    gap_tol: float = 1.0e-2
    ipm_max_iters: int = 200

    # derived linear-scale quantities
    @property
    def pbs_max_w(self) -> float:
        return dbm_to_watts(self.pbs_max_dbm)

    @property
    def pu_max_w(self) -> float:
        return dbm_to_watts(self.pu_max_dbm)

    @property
    def sigma_si(self) -> float:
        return db_to_linear(self.sigma_si_db)

    @property
    def sigma2_w(self) -> float:
        from fdsec.scenario import noise_power

        return noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz)

    @property
    def rician_k_si(self) -> float:
        return db_to_linear(self.rician_k_si_db)

    @property
    def rbar_ul_nats(self) -> float:
        return self.rbar_ul_bps * math.log(2.0)

    def replace(self, **kw) -> "SystemConfig":
        cfg = dataclasses.replace(self, **kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if min(self.k, self.l, self.nt, self.nr) < 1:
            raise ConfigError("k, l, nt, nr must all be >= 1")
        if self.m < 0:
            raise ConfigError("m must be >= 0")
        if len(self.ne) != self.m or any(n < 1 for n in self.ne):
            raise ConfigError("ne must list one antenna count >= 1 per Eve")
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be positive")
        if not 0.0 <= self.sigma_si < 1.0:
            raise ConfigError("sigma_si must satisfy 0 <= sigma_si < 1")
        if not 0.0 < self.eps_outage < 1.0:
            raise ConfigError("eps_outage must lie strictly in (0, 1)")
        if not self.min_bs_distance_m < self.inner_radius_m < self.cell_radius_m:
            raise ConfigError("need min_bs_distance < inner_radius < cell_radius")
        if self.sca_tol <= 0:
            raise ConfigError("sca_tol must be positive")
        if self.max_iters < 1 or self.max_init_passes < 1:
            raise ConfigError("iteration caps must be >= 1")
        if not 0.0 < self.init_an_fraction < 1.0:
            raise ConfigError("init_an_fraction must lie in (0, 1)")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SystemConfig)}


def config_to_dict(cfg: SystemConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["ne"] = list(cfg.ne)
    return d


def config_from_dict(data: dict) -> SystemConfig:
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    unknown = set(data) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    kw = dict(data)
    if "ne" in kw:
        ne = kw["ne"]
        if isinstance(ne, int):
            m = kw.get("m", SystemConfig.m)
            ne = [ne] * m
        if not isinstance(ne, (list, tuple)):
            raise ConfigError("ne must be an integer or a list of integers")
        kw["ne"] = tuple(int(n) for n in ne)
    for name, val in kw.items():
        if name == "ne":
            continue
        want = _FIELD_TYPES[name]
        if want == "int" and not isinstance(val, int):
            raise ConfigError(f"field {name} must be an integer")
        if want == "float":
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"field {name} must be a number")
            kw[name] = float(val)
        if want == "str" and not isinstance(val, str):
            raise ConfigError(f"field {name} must be a string")
    cfg = SystemConfig(**kw)
    cfg.validate()
    return cfg


def load_config(path: str) -> SystemConfig:
    with open(path, "r") as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data if data is not None else {})


def save_config(cfg: SystemConfig, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(default_config_yaml(cfg))


def default_config_yaml(cfg: SystemConfig | None = None) -> str:
    cfg = cfg or SystemConfig()
    buf = io.StringIO()
    yaml.safe_dump(config_to_dict(cfg), buf, sort_keys=False)
    return buf.getvalue()
