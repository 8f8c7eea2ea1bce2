import os
import math
import yaml
from dotenv import load_dotenv

# Load env immediately so SAGO_LOG / SAGO_CONFIG are visible to logger.py
load_dotenv()

from logger import logger


DEFAULT_MOVE_PROBS = [0.4, 0.3, 0.15, 0.15]


def _as_float(value, default, name, positive=True):
    try:
        value = float(value)
    except (ValueError, TypeError):
        logger.warning(f"⚠️ Config Type Error: {name} -> defaulting to {default}")
        return float(default)
    if not math.isfinite(value) or (positive and value <= 0):
        logger.warning(f"⚠️ Config Error: {name} must be positive. Resetting to {default}.")
        return float(default)
    return value


def _as_int(value, default, name, minimum=1):
    try:
        value = int(value)
    except (ValueError, TypeError):
        logger.warning(f"⚠️ Config Type Error: {name} -> defaulting to {default}")
        return int(default)
    if value < minimum:
        logger.warning(f"⚠️ Config Error: {name} must be >= {minimum}. Resetting to {default}.")
        return int(default)
    return value


class Configuration:
    """
    Lazy Singleton Configuration Manager
    Loads config.yaml only on first access to 'get'.
    """
    _data = None

    @classmethod
    def _ensure_loaded(cls):
        if cls._data is None:
            cls._data = cls._load_from_file()

    @classmethod
    def _config_path(cls):
        return os.getenv("SAGO_CONFIG") or os.path.join(os.path.dirname(__file__), 'config.yaml')

    @classmethod
    def _load_from_file(cls):
        config = {}
        try:
            with open(cls._config_path(), 'r', encoding='utf-8') as f:
                config = yaml.safe_load(f) or {}
        except FileNotFoundError:
            logger.warning("⚠️ config.yaml not found, using defaults")
        return cls._normalize(config)

    @classmethod
    def _normalize(cls, config):
        system = config.get('system', {}) or {}
        grammar = config.get('grammar', {}) or {}
        sampler = dict(config.get('sampler', {}) or {})
        learning = dict(config.get('learning', {}) or {})

        # Sampler validation
        move_probs = sampler.get('move_probs', DEFAULT_MOVE_PROBS)
        try:
            move_probs = [float(p) for p in move_probs]
            if len(move_probs) != 4 or any(p < 0 for p in move_probs) or abs(sum(move_probs) - 1.0) > 1e-9:
                raise ValueError(move_probs)
        except (ValueError, TypeError):
            logger.warning(f"⚠️ Config Error: sampler.move_probs must be 4 probabilities summing to 1. Resetting to {DEFAULT_MOVE_PROBS}.")
            move_probs = list(DEFAULT_MOVE_PROBS)
        sampler['move_probs'] = move_probs
        sampler['beta'] = _as_float(sampler.get('beta', 1.0), 1.0, 'sampler.beta', positive=False)
        if sampler['beta'] < 0:
            logger.warning("⚠️ Config Error: sampler.beta must be >= 0. Resetting to 1.0.")
            sampler['beta'] = 1.0
        sampler['iter_max'] = _as_int(sampler.get('iter_max', 20000), 20000, 'sampler.iter_max', minimum=0)
        sampler['sigma_pos'] = _as_float(sampler.get('sigma_pos', 0.2), 0.2, 'sampler.sigma_pos', positive=False)
        sampler['sigma_theta'] = _as_float(sampler.get('sigma_theta', math.pi / 18), math.pi / 18, 'sampler.sigma_theta', positive=False)

        default_room = grammar.get('default_room', [4.0, 4.0, 2.8])
        try:
            default_room = [float(v) for v in default_room]
            if len(default_room) != 3 or min(default_room) <= 0:
                raise ValueError(default_room)
        except (ValueError, TypeError):
            logger.warning("⚠️ Config Error: grammar.default_room must be 3 positive numbers. Resetting to [4, 4, 2.8].")
            default_room = [4.0, 4.0, 2.8]

        learning['d_acc'] = _as_float(learning.get('d_acc', 0.8), 0.8, 'learning.d_acc')

        return {
            "SEED": _as_int(system.get('seed', 0), 0, 'system.seed', minimum=0),
            "JOBS": _as_int(system.get('jobs', 1), 1, 'system.jobs'),
            "OUTPUT_DIR": system.get('output_dir', 'output'),

            "MAX_OBJECTS": _as_int(grammar.get('max_objects', 256), 256, 'grammar.max_objects'),
            "DEFAULT_ROOM": default_room,

            # Complex Objects
            "SAMPLER": sampler,
            "LEARNING": learning,
            "ATTRIBUTES": config.get('attributes', {}) or {},
            "RENDER": config.get('render', {}) or {},

            "LOG_LEVEL": os.getenv("SAGO_LOG", "INFO"),
        }

    @classmethod
    def get(cls, key, default=None):
        """Get configuration value safe-ly"""
        cls._ensure_loaded()
        return cls._data.get(key, default)

    @classmethod
    def overlay(cls, overrides: dict):
        """Apply a run-level config (same section layout as config.yaml) on top of config.yaml."""
        merged = {}
        try:
            with open(cls._config_path(), 'r', encoding='utf-8') as f:
                merged = yaml.safe_load(f) or {}
        except FileNotFoundError:
            logger.warning("⚠️ config.yaml not found, overlaying on defaults")
        cls._data = cls._normalize(_deep_merge(merged, overrides or {}))

    @classmethod
    def reload(cls):
        """Force reload of configuration"""
        cls._data = cls._load_from_file()


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


# Expose as 'Config' matching existing interface
Config = Configuration
