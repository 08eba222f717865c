"""
Configuration management for the DocRE toolkit

Environment-level defaults loaded from .env / process environment.
Per-run settings live in schemas.RunConfig and override these.
"""
import os
from dotenv import load_dotenv
from src.docre.constants import (
    DEFAULT_API_BASE,
    DEFAULT_API_KEY_ENV,
    DEFAULT_MODEL,
    DEFAULT_TIMEOUT_S,
    DEFAULT_MAX_RETRIES,
    DEFAULT_RETRY_BASE_DELAY_S,
    DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_REQUESTS_PER_MINUTE,
    DEFAULT_ONTOLOGY_PATH,
    DEFAULT_LOG_LEVEL,
    DEFAULT_LOG_DIR,
    LOG_FORMAT_JSON,
    LOG_LEVELS,
)

load_dotenv()


class Config:
    """Environment configuration"""

    # Remote chat endpoint
    API_BASE = os.getenv("DOCRE_API_BASE", DEFAULT_API_BASE)
    # Name of the variable holding the API key (the key itself is never stored here)
    API_KEY_ENV = os.getenv("DOCRE_API_KEY_ENV", DEFAULT_API_KEY_ENV)
    MODEL = os.getenv("DOCRE_MODEL", DEFAULT_MODEL)
    TIMEOUT_S = float(os.getenv("DOCRE_TIMEOUT_S", DEFAULT_TIMEOUT_S))
    MAX_RETRIES = int(os.getenv("DOCRE_MAX_RETRIES", DEFAULT_MAX_RETRIES))
    RETRY_BASE_DELAY_S = float(os.getenv("DOCRE_RETRY_BASE_DELAY_S", DEFAULT_RETRY_BASE_DELAY_S))
    MAX_IN_FLIGHT = int(os.getenv("DOCRE_MAX_IN_FLIGHT", DEFAULT_MAX_IN_FLIGHT))
    REQUESTS_PER_MINUTE = int(os.getenv("DOCRE_REQUESTS_PER_MINUTE", DEFAULT_REQUESTS_PER_MINUTE))

    # Data
    ONTOLOGY_PATH = os.getenv("DOCRE_ONTOLOGY_PATH", str(DEFAULT_ONTOLOGY_PATH))
    CACHE_DIR = os.getenv("DOCRE_CACHE_DIR", "")
    REDOCRED_DIR = os.getenv("REDOCRED_DIR", "")

    # Logging
    LOG_LEVEL = os.getenv("DOCRE_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()
    LOG_DIR = os.getenv("DOCRE_LOG_DIR", DEFAULT_LOG_DIR)
    LOG_FORMAT = os.getenv("DOCRE_LOG_FORMAT", LOG_FORMAT_JSON)

    @classmethod
    def api_key(cls, env_name: str = None) -> str:
        """Read the API key from the configured environment variable ("" when unset)"""
        return os.getenv(env_name or cls.API_KEY_ENV, "")

    @classmethod
    def validated_log_level(cls) -> str:
        """Return LOG_LEVEL, falling back to the default when it is not a known level"""
        return cls.LOG_LEVEL if cls.LOG_LEVEL in LOG_LEVELS else DEFAULT_LOG_LEVEL

    @classmethod
    def get_config_info(cls) -> dict:
        """Get configuration info with secrets redacted"""
        return {
            "api_base": cls.API_BASE,
            "api_key_env": cls.API_KEY_ENV,
            "api_key": "***" if cls.api_key() else None,
            "model": cls.MODEL,
            "timeout_s": cls.TIMEOUT_S,
            "max_retries": cls.MAX_RETRIES,
            "max_in_flight": cls.MAX_IN_FLIGHT,
            "requests_per_minute": cls.REQUESTS_PER_MINUTE,
            "ontology_path": cls.ONTOLOGY_PATH,
            "cache_dir": cls.CACHE_DIR or None,
            "log_level": cls.validated_log_level(),
            "log_dir": cls.LOG_DIR,
        }


config = Config()
