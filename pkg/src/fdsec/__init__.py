"""fdsec: secure full-duplex multiuser cell simulator.

Library plus CLI for max-min secrecy-rate beamforming with artificial
noise, fractional-time user grouping, and three eavesdropper models
(exact CSI, statistical CSI, worst-case MMSE decoder), solved by
path-following conic programming, with a seeded Monte Carlo harness.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "SystemConfig": "fdsec.config",
    "load_config": "fdsec.config",
    "default_config_yaml": "fdsec.config",
    "Topology": "fdsec.scenario",
    "ChannelSet": "fdsec.scenario",
    "GroupedChannels": "fdsec.scenario",
    "sample_topology": "fdsec.scenario",
    "sample_channels": "fdsec.scenario",
    "derive_scsi": "fdsec.scenario",
    "pathloss_db": "fdsec.scenario",
    "noise_power": "fdsec.scenario",
    "DesignPoint": "fdsec.rates",
    "secrecy_rates": "fdsec.rates",
    "empirical_outage": "fdsec.rates",
    "RunTrace": "fdsec.algorithms",
    "solve_instance": "fdsec.algorithms",
    "run_experiment": "fdsec.harness",
    "ExperimentSpec": "fdsec.harness",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        mod = importlib.import_module(_EXPORTS[name])
        return getattr(mod, name)
    raise AttributeError(f"module 'fdsec' has no attribute {name!r}")
